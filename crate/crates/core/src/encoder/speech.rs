use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `d_in x d_out`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Trainable frame-level encoder: affine layers with tanh between them. The
/// last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechEncoderParams {
    pub layers: Vec<DenseLayer>,
}

impl SpeechEncoderParams {
    /// `dims = [n_mels, hidden..., d_enc]`. The first layer gets a further
    /// `input_gain` factor on its init scale.
    pub fn init<R: Rng>(dims: &[usize], input_gain: f64, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter(
                "speech encoder needs at least one layer".into(),
            ));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i == 0 { input_gain } else { 1.0 };
                let dist = Normal::new(0.0, gain / (w[0] as f64).sqrt()).expect("finite std");
                DenseLayer {
                    w: Array2::from_shape_simple_fn((w[0], w[1]), || dist.sample(rng)),
                    b: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.ncols())
    }

    pub fn forward(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(features)?.0)
    }

    /// Returns the output plus the input of every layer (post-activation).
    pub(crate) fn forward_cached(
        &self,
        features: &Array2<f64>,
    ) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
        if features.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "speech encoder input",
                expected: self.input_dim(),
                found: features.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = features.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.w) + &layer.b;
            inputs.push(x);
            x = if i == last { z } else { z.mapv(f64::tanh) };
        }
        Ok((x, inputs))
    }

    /// Accumulates parameter gradients into `grads`.
    pub(crate) fn backward(&self, inputs: &[Array2<f64>], d_out: Array2<f64>, grads: &mut Self) {
        let mut dz = d_out;
        for i in (0..self.layers.len()).rev() {
            let x = &inputs[i];
            grads.layers[i].w += &x.t().dot(&dz);
            grads.layers[i].b += &dz.sum_axis(Axis(0));
            if i > 0 {
                // x is tanh output of the previous layer
                let dx = dz.dot(&self.layers[i].w.t());
                dz = dx * &x.mapv(|v| 1.0 - v * v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_output() {
        let mut p = SpeechEncoderParams::init(&[3, 4, 2], 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        p = p.zeros_like();
        let out = p.forward(&array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_identity_layer() {
        let p = SpeechEncoderParams {
            layers: vec![DenseLayer {
                w: Array2::eye(3),
                b: Array1::zeros(3),
            }],
        };
        let x = array![[1.0, -2.0, 3.0]];
        assert_eq!(p.forward(&x).unwrap(), x);
    }

    #[test]
    fn preserves_frame_count() {
        let p = SpeechEncoderParams::init(&[5, 7, 3], 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let out = p.forward(&Array2::ones((11, 5))).unwrap();
        assert_eq!(out.dim(), (11, 3));
        assert!(p.forward(&Array2::ones((11, 4))).is_err());
    }

    #[test]
    fn weight_gradient_of_output_sum_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = SpeechEncoderParams::init(&[4, 5, 3], 1.0, &mut rng).unwrap();
        let x = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
        let (out, inputs) = p.forward_cached(&x).unwrap();
        let mut grads = p.zeros_like();
        p.backward(&inputs, Array2::ones(out.raw_dim()), &mut grads);
        let eps = 1e-5;
        for (li, layer) in p.layers.iter().enumerate() {
            for idx in ndarray::indices(layer.w.raw_dim()) {
                let mut plus = p.clone();
                plus.layers[li].w[idx] += eps;
                let mut minus = p.clone();
                minus.layers[li].w[idx] -= eps;
                let numeric =
                    (plus.forward(&x).unwrap().sum() - minus.forward(&x).unwrap().sum()) / (2.0 * eps);
                let analytic = grads.layers[li].w[idx];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(rel < 1e-4, "layer {li} {idx:?}: {numeric} vs {analytic}");
            }
        }
    }
}
