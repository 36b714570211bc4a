use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Fraction of each row's deviation from the sequence mean removed after every
/// mixer layer. Zero contribution when the sequence has a single row.
pub const TOKEN_MIX: f64 = 0.5;

/// Std of the token embeddings. The mixer weights are scaled with it so that
/// the backbone is positively homogeneous in this constant: changing it rescales
/// every text embedding without changing any cosine.
pub const TOKEN_EMBED_STD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MixerLayer {
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// Frozen text backbone: token embedding table plus `L` residual mixer
/// layers, regenerated bit-exactly from `(vocab_size, hidden, layers, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    pub token_embedding: Array2<f64>,
    pub layers: Vec<MixerLayer>,
    pub seed: u64,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

fn normal_vector(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Array1<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array1::from_shape_simple_fn(len, || dist.sample(rng))
}

impl BackboneParams {
    pub fn new(vocab_size: usize, hidden: usize, layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = TOKEN_EMBED_STD;
        let token_embedding = normal_matrix(&mut rng, vocab_size, hidden, e);
        let scale = 1.0 / (hidden as f64).sqrt();
        let layers = (0..layers)
            .map(|_| MixerLayer {
                w_in: normal_matrix(&mut rng, hidden, hidden, scale / e),
                b_in: normal_vector(&mut rng, hidden, 0.1),
                w_out: normal_matrix(&mut rng, hidden, hidden, 0.5 * scale * e),
                b_out: normal_vector(&mut rng, hidden, 0.02 * e),
            })
            .collect();
        Self {
            token_embedding,
            layers,
            seed,
        }
    }

    pub fn hidden(&self) -> usize {
        self.token_embedding.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embedding.nrows()
    }

    /// SHA-256 over every parameter's little-endian bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |values: &mut dyn Iterator<Item = &f64>| {
            for v in values {
                h.update(v.to_le_bytes());
            }
        };
        feed(&mut self.token_embedding.iter());
        for l in &self.layers {
            feed(&mut l.w_in.iter());
            feed(&mut l.b_in.iter());
            feed(&mut l.w_out.iter());
            feed(&mut l.b_out.iter());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lookup(&self, ids: &[usize]) -> Result<Array2<f64>> {
        let v = self.vocab_size();
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::DimensionMismatch {
                context: "token id",
                expected: v,
                found: bad,
            });
        }
        Ok(self.token_embedding.select(Axis(0), ids))
    }

    fn check_width(&self, seq: &Array2<f64>) -> Result<()> {
        if seq.ncols() != self.hidden() {
            return Err(Error::DimensionMismatch {
                context: "backbone input width",
                expected: self.hidden(),
                found: seq.ncols(),
            });
        }
        Ok(())
    }

    /// Per layer, rowwise `r = x + tanh(x W_in + b_in) W_out + b_out`, then
    /// token mixing `x = r - TOKEN_MIX * (r - mean_rows(r))`.
    pub fn forward(&self, seq: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(seq)?.0)
    }

    pub(crate) fn forward_cached(&self, seq: &Array2<f64>) -> Result<(Array2<f64>, BackboneCache)> {
        self.check_width(seq)?;
        if seq.nrows() == 0 {
            return Err(Error::EmptyInput("backbone input sequence"));
        }
        let mut x = seq.clone();
        let mut cache = BackboneCache {
            hidden: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let h = (x.dot(&layer.w_in) + &layer.b_in).mapv(f64::tanh);
            let r = &x + &h.dot(&layer.w_out) + &layer.b_out;
            let mean = r.mean_axis(Axis(0)).expect("non-empty sequence");
            let mixed = &r * (1.0 - TOKEN_MIX) + &(mean * TOKEN_MIX);
            cache.hidden.push(h);
            x = mixed;
        }
        Ok((x, cache))
    }

    /// Gradient w.r.t. the backbone input only; the backbone itself is frozen.
    pub(crate) fn backward_input(&self, cache: &BackboneCache, d_out: &Array2<f64>) -> Array2<f64> {
        let mut dx = d_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let d_mean = dx.mean_axis(Axis(0)).expect("non-empty sequence");
            let dr = &dx * (1.0 - TOKEN_MIX) + &(d_mean * TOKEN_MIX);
            let h = &cache.hidden[i];
            let dh = dr.dot(&layer.w_out.t());
            let dz = dh * &h.mapv(|v| 1.0 - v * v);
            dx = &dr + &dz.dot(&layer.w_in.t());
        }
        dx
    }
}

/// Per-layer tanh activations, enough to backpropagate to the input.
pub(crate) struct BackboneCache {
    hidden: Vec<Array2<f64>>,
}
