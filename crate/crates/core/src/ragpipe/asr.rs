use ndarray::{Array1, Axis};
use rayon::prelude::*;

use super::pipeline::NoiseSpec;
use crate::corpus::{Codebook, Corpus, WORD_SAMPLES};
use crate::dsp::{add_noise_snr, AudioSignal, FeatureConfig, MelExtractor, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Nearest-template word recognizer for codebook-rendered audio.
///
/// Audio is cut into consecutive word slots of `WORD_SAMPLES`; each slot is
/// summarized by its mean log-mel vector and labelled with the codebook word
/// whose clean summary is closest in Euclidean distance. Noise pushes slot
/// summaries away from the templates, so the transcript error grows as SNR
/// drops.
#[derive(Debug, Clone)]
pub struct TemplateAsr {
    words: Vec<String>,
    templates: Vec<Array1<f64>>,
    extractor: MelExtractor,
}

impl TemplateAsr {
    pub fn new(codebook: &Codebook, features: &FeatureConfig) -> Result<Self> {
        let extractor = MelExtractor::new(features, SAMPLE_RATE)?;
        let templates = (0..codebook.words().len())
            .map(|i| summarize(&extractor, codebook.waveform(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            words: codebook.words().to_vec(),
            templates,
            extractor,
        })
    }

    pub fn transcribe(&self, audio: &AudioSignal) -> Result<String> {
        if audio.sample_rate() != SAMPLE_RATE {
            return Err(Error::SampleRateMismatch {
                expected: SAMPLE_RATE,
                found: audio.sample_rate(),
                context: "template recognizer".into(),
            });
        }
        let slots = audio.samples().chunks_exact(WORD_SAMPLES);
        if slots.len() == 0 {
            return Err(Error::SignalTooShort {
                samples: audio.len(),
                required: WORD_SAMPLES,
            });
        }
        let mut out = Vec::with_capacity(slots.len());
        for slot in slots {
            let s = summarize(&self.extractor, slot)?;
            let best = self
                .templates
                .iter()
                .map(|t| (t - &s).mapv(|d| d * d).sum())
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .expect("codebook is non-empty");
            out.push(self.words[best].as_str());
        }
        Ok(out.join(" "))
    }
}

/// Transcribes every passage, in corpus order. With `noise`, passage `i` is
/// corrupted with seed `noise.seed + i` first, matching the noisy speech index.
pub fn transcribe_all(asr: &TemplateAsr, corpus: &Corpus, noise: Option<NoiseSpec>) -> Result<Vec<String>> {
    corpus
        .passages()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut audio = p.audio.load()?;
            if let Some(n) = noise {
                audio = add_noise_snr(&audio, n.snr_db, n.seed.wrapping_add(i as u64))?;
            }
            asr.transcribe(&audio)
        })
        .collect()
}

fn summarize(extractor: &MelExtractor, samples: &[f64]) -> Result<Array1<f64>> {
    let signal = AudioSignal::new(samples.to_vec(), SAMPLE_RATE)?;
    let rows = extractor.extract(&signal)?.rows;
    Ok(rows.mean_axis(Axis(0)).expect("at least one frame"))
}
