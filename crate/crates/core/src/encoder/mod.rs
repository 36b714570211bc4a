//! The two embedding branches over one frozen backbone.
//!
//! Text: tokens -> token embeddings -> backbone -> mean pool (`e_t`).
//! Speech: log-mel -> speech encoder -> adapter -> backbone -> mean pool (`e_s`).

mod backbone;
mod speech;
mod vocab;

pub use backbone::{BackboneParams, MixerLayer, TOKEN_EMBED_STD, TOKEN_MIX};
pub use speech::{DenseLayer, SpeechEncoderParams};
pub use vocab::{tokenize, words, Vocab, UNK};

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::{downsample, project, AdapterParams, DEFAULT_DOWNSAMPLE};
use crate::dsp::{AudioSignal, FeatureConfig, MelExtractor, SAMPLE_RATE};
use crate::error::{Error, Result};

/// A vector in the shared retrieval space.
pub type Embedding = Array1<f64>;

/// Arithmetic mean over rows.
pub fn pool(seq: &Array2<f64>) -> Result<Embedding> {
    seq.mean_axis(Axis(0)).ok_or(Error::EmptyInput("pool input"))
}

pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let denom = a.dot(a).sqrt() * b.dot(b).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(b) / denom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Backbone width `H`.
    pub hidden: usize,
    pub backbone_layers: usize,
    pub backbone_seed: u64,
    /// Speech encoder output width.
    pub enc_dim: usize,
    /// Number of affine layers in the speech encoder.
    pub enc_layers: usize,
    pub downsample_factor: usize,
    /// Init-scale multiplier for the first speech-encoder layer.
    pub input_gain: f64,
    /// Init-scale multiplier for the adapter projection.
    pub adapter_gain: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            backbone_layers: 2,
            backbone_seed: 1234,
            enc_dim: 64,
            enc_layers: 2,
            downsample_factor: DEFAULT_DOWNSAMPLE,
            input_gain: 1.0,
            adapter_gain: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn encoder_dims(&self, n_mels: usize) -> Vec<usize> {
        let mut dims = vec![n_mels];
        dims.extend(std::iter::repeat_n(self.enc_dim, self.enc_layers));
        dims
    }
}

/// Frozen backbone plus the trainable speech branch.
#[derive(Debug, Clone)]
pub struct Retriever {
    pub config: ModelConfig,
    pub features: FeatureConfig,
    pub vocab: Vocab,
    pub backbone: BackboneParams,
    pub speech: SpeechEncoderParams,
    pub adapter: AdapterParams,
    extractor: MelExtractor,
}

impl Retriever {
    /// Fresh model: backbone from `config.backbone_seed`, trainable parts
    /// from `init_seed`.
    pub fn new(
        vocab: Vocab,
        config: ModelConfig,
        features: FeatureConfig,
        init_seed: u64,
    ) -> Result<Self> {
        let backbone = BackboneParams::new(
            vocab.len(),
            config.hidden,
            config.backbone_layers,
            config.backbone_seed,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let speech = SpeechEncoderParams::init(
            &config.encoder_dims(features.n_mels),
            config.input_gain,
            &mut rng,
        )?;
        let adapter =
            AdapterParams::init(
            config.enc_dim,
            config.hidden,
            config.downsample_factor,
            config.adapter_gain,
            &mut rng,
        )?;
        Self::from_parts(config, features, vocab, backbone, speech, adapter)
    }

    pub fn from_parts(
        config: ModelConfig,
        features: FeatureConfig,
        vocab: Vocab,
        backbone: BackboneParams,
        speech: SpeechEncoderParams,
        adapter: AdapterParams,
    ) -> Result<Self> {
        if backbone.vocab_size() != vocab.len() {
            return Err(Error::DimensionMismatch {
                context: "vocab size vs token embedding rows",
                expected: vocab.len(),
                found: backbone.vocab_size(),
            });
        }
        if speech.input_dim() != features.n_mels {
            return Err(Error::DimensionMismatch {
                context: "speech encoder input vs n_mels",
                expected: features.n_mels,
                found: speech.input_dim(),
            });
        }
        if adapter.w_proj.nrows() != speech.output_dim() || adapter.w_proj.ncols() != backbone.hidden() {
            return Err(Error::DimensionMismatch {
                context: "adapter projection shape",
                expected: speech.output_dim(),
                found: adapter.w_proj.nrows(),
            });
        }
        let extractor = MelExtractor::new(&features, SAMPLE_RATE)?;
        Ok(Self {
            config,
            features,
            vocab,
            backbone,
            speech,
            adapter,
            extractor,
        })
    }

    pub fn hidden(&self) -> usize {
        self.backbone.hidden()
    }

    pub fn extractor(&self) -> &MelExtractor {
        &self.extractor
    }

    /// `pool(backbone(token_embeddings(tokenize(text))))`.
    pub fn embed_text(&self, text: &str) -> Result<Embedding> {
        self.embed_ids(&tokenize(text, &self.vocab))
    }

    /// Text-branch embedding of a token id sequence.
    pub fn embed_ids(&self, ids: &[usize]) -> Result<Embedding> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("text has no tokens"));
        }
        let seq = self.backbone.lookup(ids)?;
        pool(&self.backbone.forward(&seq)?)
    }

    pub fn features(&self, signal: &AudioSignal) -> Result<Array2<f64>> {
        Ok(self.extractor.extract(signal)?.rows)
    }

    /// Speech-branch embedding starting from precomputed log-mel frames.
    pub fn embed_features(&self, features: &Array2<f64>) -> Result<Embedding> {
        let enc = self.speech.forward(features)?;
        let pooled = downsample(&enc, self.adapter.downsample_factor)?;
        let projected = project(&pooled, &self.adapter)?;
        pool(&self.backbone.forward(&projected)?)
    }

    /// logmel -> speech encoder -> downsample -> project -> backbone -> pool.
    pub fn embed_speech(&self, signal: &AudioSignal) -> Result<Embedding> {
        self.embed_features(&self.features(signal)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pool_examples() {
        assert_eq!(pool(&array![[1.0, 3.0], [3.0, 5.0]]).unwrap(), array![2.0, 4.0]);
        assert_eq!(pool(&array![[7.0, -1.0]]).unwrap(), array![7.0, -1.0]);
        assert!(pool(&Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn pool_is_permutation_invariant_and_linear() {
        let a = array![[1.0, 2.0], [3.0, -4.0], [0.5, 0.25]];
        let perm = array![[0.5, 0.25], [1.0, 2.0], [3.0, -4.0]];
        assert_eq!(pool(&a).unwrap(), pool(&perm).unwrap());
        let b = array![[2.0, 0.0], [-1.0, 1.0], [4.0, 4.0]];
        let lhs = pool(&(&a * 2.0 + &(&b * -3.0))).unwrap();
        let rhs = pool(&a).unwrap() * 2.0 + pool(&b).unwrap() * -3.0;
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn model() -> Retriever {
        let vocab = Vocab::from_texts(["alpha beta gamma delta"]);
        Retriever::new(vocab, ModelConfig::default(), FeatureConfig::default(), 3).unwrap()
    }

    #[test]
    fn text_embedding_normalizes_case_and_punctuation() {
        let m = model();
        let a = m.embed_text("Alpha, beta!").unwrap();
        assert_eq!(a, m.embed_text("alpha beta").unwrap());
        assert_eq!(a, m.embed_text("alpha beta").unwrap());
        assert_ne!(a, m.embed_text("beta gamma").unwrap());
        assert!(m.embed_text("  ... ").is_err());
    }

    #[test]
    fn speech_embedding_is_deterministic_and_checks_length() {
        let m = model();
        let s = AudioSignal::new(
            (0..4000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect(),
            16_000,
        )
        .unwrap();
        let e = m.embed_speech(&s).unwrap();
        assert_eq!(e.len(), 64);
        assert_eq!(e, m.embed_speech(&s).unwrap());
        let short = AudioSignal::new(vec![0.1; 100], 16_000).unwrap();
        assert!(matches!(m.embed_speech(&short), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn shape_contract() {
        let m = model();
        for secs in [0.5f64, 1.0, 2.3] {
            let n = (secs * 16_000.0) as usize;
            let s = AudioSignal::new(vec![0.1; n], 16_000).unwrap();
            let t_feat = m.features(&s).unwrap().nrows();
            assert_eq!(t_feat, ((secs - 0.025) / 0.020 + 1e-9).floor() as usize + 1);
            let enc = m.speech.forward(&m.features(&s).unwrap()).unwrap();
            let t_adapter = downsample(&enc, 4).unwrap().nrows();
            assert_eq!(t_adapter, t_feat.div_ceil(4));
        }
    }
}
