use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::AudioSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Analysis window length in seconds.
    pub frame_len: f64,
    /// Frame shift in seconds. 20 ms, so that a 4x temporal pool gives 80 ms frames.
    pub hop: f64,
    pub n_mels: usize,
    pub fft_size: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_len: 0.025,
            hop: 0.020,
            n_mels: 40,
            fft_size: 512,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_len > 0.0 && self.hop > 0.0 && self.hop <= self.frame_len) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < hop <= frame_len, got hop={} frame_len={}",
                self.hop, self.frame_len
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::InvalidParameter("n_mels must be >= 1".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidParameter("log_floor must be > 0".into()));
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_len * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop * sample_rate as f64).round() as usize
    }

    /// `floor((len - frame) / hop) + 1`, or 0 when the signal is shorter than one frame.
    pub fn frame_count(&self, n_samples: usize, sample_rate: u32) -> usize {
        let frame = self.frame_samples(sample_rate);
        if n_samples < frame {
            0
        } else {
            (n_samples - frame) / self.hop_samples(sample_rate) + 1
        }
    }
}

/// Time-major `T x n_mels` log-mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Array2<f64>,
    pub frame_hop: f64,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.rows.ncols()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Reusable log-mel extractor: holds the FFT plan, window and filterbank for
/// one (config, sample rate) pair.
#[derive(Clone)]
pub struct MelExtractor {
    cfg: FeatureConfig,
    sample_rate: u32,
    frame: usize,
    hop: usize,
    window: Vec<f64>,
    /// `n_mels x (fft_size/2 + 1)` triangular weights.
    filters: Array2<f64>,
    centers_hz: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelExtractor")
            .field("cfg", &self.cfg)
            .field("sample_rate", &self.sample_rate)
            .finish_non_exhaustive()
    }
}

impl MelExtractor {
    pub fn new(cfg: &FeatureConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate()?;
        let frame = cfg.frame_samples(sample_rate);
        let hop = cfg.hop_samples(sample_rate);
        if frame == 0 || hop == 0 {
            return Err(Error::InvalidParameter("frame or hop rounds to zero samples".into()));
        }
        if cfg.fft_size < frame {
            return Err(Error::InvalidParameter(format!(
                "fft_size {} smaller than frame length {frame}",
                cfg.fft_size
            )));
        }
        let window = (0..frame)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (frame - 1).max(1) as f64).cos())
            .collect();

        let n_bins = cfg.fft_size / 2 + 1;
        let mel_max = hz_to_mel(sample_rate as f64 / 2.0);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let mut filters = Array2::zeros((cfg.n_mels, n_bins));
        for m in 0..cfg.n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * sample_rate as f64 / cfg.fft_size as f64;
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                filters[[m, k]] = w;
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            frame,
            hop,
            window,
            filters,
            centers_hz: edges[1..=cfg.n_mels].to_vec(),
            fft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn extract(&self, signal: &AudioSignal) -> Result<FeatureMatrix> {
        if signal.sample_rate() != self.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate,
                found: signal.sample_rate(),
                context: "feature extraction".into(),
            });
        }
        let x = signal.samples();
        if x.len() < self.frame {
            return Err(Error::SignalTooShort {
                samples: x.len(),
                required: self.frame,
            });
        }
        let n_frames = (x.len() - self.frame) / self.hop + 1;
        let n_bins = self.cfg.fft_size / 2 + 1;
        let mut rows = Array2::zeros((n_frames, self.cfg.n_mels));
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        for t in 0..n_frames {
            let start = t * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < self.frame {
                    Complex::new(x[start + i] * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for m in 0..self.cfg.n_mels {
                let energy: f64 = self
                    .filters
                    .row(m)
                    .iter()
                    .zip(&power)
                    .map(|(w, p)| w * p)
                    .sum();
                rows[[t, m]] = (energy + self.cfg.log_floor).ln();
            }
        }
        Ok(FeatureMatrix {
            rows,
            frame_hop: self.cfg.hop,
        })
    }
}

/// Hann window, power spectrum, triangular mel filterbank, then
/// `ln(energy + log_floor)`.
pub fn logmel(signal: &AudioSignal, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    MelExtractor::new(cfg, signal.sample_rate())?.extract(signal)
}
