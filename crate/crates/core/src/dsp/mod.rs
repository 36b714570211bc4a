//! Audio signals, WAV I/O, log-mel features and SNR-calibrated noise.

mod features;
mod noise;
mod wav;

pub use features::{logmel, mel_to_hz, hz_to_mel, FeatureConfig, FeatureMatrix, MelExtractor};
pub use noise::{add_noise_snr, measure_snr, signal_power};
pub use wav::{read_wav, read_wav_spec, write_wav};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate used throughout: 16 kHz mono.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono waveform. Samples are nominally in `[-1, 1]`, but noisy signals may
/// exceed that range since noise injection does not clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {pos}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}
