use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use speechrag::corpus::SynthParams;
use speechrag::dsp::FeatureConfig;
use speechrag::encoder::ModelConfig;
use speechrag::ragpipe::EditMix;
use speechrag::training::TrainConfig;

pub const DATA_DIR_ENV: &str = "SPEECHRAG_DATA_DIR";

/// Directories under the data root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus: PathBuf,
    pub checkpoints: PathBuf,
    pub indexes: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus".into(),
            checkpoints: "checkpoints".into(),
            indexes: "indexes".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1 }
    }
}

/// Simulated-ASR settings for the cascaded systems: one run per target WER.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionSettings {
    pub target_wers: Vec<f64>,
    pub mix: EditMix,
}

impl Default for CorruptionSettings {
    fn default() -> Self {
        Self {
            target_wers: vec![0.185, 0.40],
            mix: EditMix::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSettings {
    /// Endpoint of an external generator; the oracle generator is used when unset.
    pub url: Option<String>,
    pub timeout_s: f64,
    pub concurrency: usize,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            url: None,
            timeout_s: 60.0,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Data root; falls back to `$SPEECHRAG_DATA_DIR`, then the working directory.
    pub data_dir: Option<PathBuf>,
    pub paths: Paths,
    /// Drives synthesis, splitting, initialization, shuffling, corruption and
    /// noise; copied over `synth.seed` and `train.seed` on load.
    pub seed: u64,
    pub synth: SynthParams,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub corruption: CorruptionSettings,
    pub k: Vec<usize>,
    pub snr_grid: Vec<f64>,
    pub top_k_context: usize,
    pub generator: GeneratorSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = 7;
        Self {
            data_dir: None,
            paths: Paths::default(),
            seed,
            synth: SynthParams { seed, ..Default::default() },
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig {
                max_epochs: 200,
                seed,
                ..Default::default()
            },
            corruption: CorruptionSettings::default(),
            k: vec![5, 10, 100],
            snr_grid: vec![-5.0, 0.0, 5.0, 10.0, 20.0, 30.0],
            top_k_context: 5,
            generator: GeneratorSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut value: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                if value.get("command").is_some() {
                    if let Some(inner) = value.get_mut("config") {
                        value = inner.take();
                    }
                }
                serde_json::from_value(value).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// Copies the global seed into every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.k.contains(&0) {
            bail!("k values must be positive, got {:?}", self.k);
        }
        if !self.k.windows(2).all(|w| w[0] < w[1]) {
            bail!("k values must be strictly ascending, got {:?}", self.k);
        }
        if self.top_k_context == 0 {
            bail!("top_k_context must be >= 1");
        }
        if self.snr_grid.iter().any(|s| !s.is_finite()) {
            bail!("snr grid must be finite, got {:?}", self.snr_grid);
        }
        if let Some(w) = self.corruption.target_wers.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            bail!("target WER {w} outside [0, 1]");
        }
        self.synth.validate()?;
        self.features.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn root(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root().join(&self.paths.corpus)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.corpus_dir().join("manifest.jsonl")
    }

    pub fn splits_path(&self) -> PathBuf {
        self.corpus_dir().join("splits.json")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root().join(&self.paths.checkpoints)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint_dir().join("model.ckpt")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.root().join(&self.paths.indexes)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root().join(&self.paths.reports)
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}
