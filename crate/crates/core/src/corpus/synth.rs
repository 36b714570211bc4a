use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AudioSource, Corpus, Passage, Query};
use crate::dsp::{AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

/// 100 ms of audio per word at 16 kHz.
pub const WORD_SAMPLES: usize = 1600;

const FADE_SAMPLES: usize = 160;
const CODEBOOK_STREAM: u64 = 0x636f_6465_626f_6f6b;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_passages: usize,
    pub words_per_passage: RangeInclusive<usize>,
    pub vocabulary_size: usize,
    pub query_word_dropout: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_passages: 64,
            words_per_passage: 20..=40,
            vocabulary_size: 24,
            query_word_dropout: 0.5,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.vocabulary_size < 2 {
            return Err(Error::InvalidParameter("vocabulary_size must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.query_word_dropout) {
            return Err(Error::InvalidParameter(format!(
                "query_word_dropout must lie in [0,1), got {}",
                self.query_word_dropout
            )));
        }
        if *self.words_per_passage.start() == 0 || self.words_per_passage.is_empty() {
            return Err(Error::InvalidParameter(
                "words_per_passage must be a non-empty range of positive counts".into(),
            ));
        }
        Ok(())
    }
}

const ONSETS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Deterministic pronounceable pseudo-words: `index` written in base 70 with
/// consonant-vowel syllables as digits, at least two syllables long.
pub fn synth_vocabulary(size: usize) -> Vec<String> {
    let base = ONSETS.len() * VOWELS.len();
    (0..size)
        .map(|index| {
            let mut n = index;
            let mut syllables = Vec::new();
            loop {
                let d = n % base;
                syllables.push([ONSETS[d / VOWELS.len()], VOWELS[d % VOWELS.len()]]);
                n /= base;
                if n == 0 && syllables.len() >= 2 {
                    break;
                }
            }
            syllables
                .iter()
                .rev()
                .flat_map(|s| s.iter().map(|&b| b as char))
                .collect()
        })
        .collect()
}

/// Fixed word -> waveform mapping: each word is two seeded tones plus a
/// low-level seeded noise pattern, with 10 ms fades, quantised to the 16-bit
/// PCM grid so that WAV round trips are lossless.
#[derive(Debug, Clone)]
pub struct Codebook {
    words: Vec<String>,
    lookup: HashMap<String, usize>,
    waveforms: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(words: Vec<String>, seed: u64) -> Self {
        let waveforms = (0..words.len())
            .map(|i| word_waveform(seed, i as u64))
            .collect();
        let lookup = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self {
            words,
            lookup,
            waveforms,
        }
    }

    pub fn for_params(params: &SynthParams) -> Self {
        Self::new(synth_vocabulary(params.vocabulary_size), params.seed)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.lookup.get(word).copied()
    }

    pub fn waveform(&self, index: usize) -> &[f64] {
        &self.waveforms[index]
    }

    pub fn render(&self, indices: &[usize]) -> Vec<f64> {
        indices
            .iter()
            .flat_map(|&i| self.waveforms[i].iter().copied())
            .collect()
    }
}

fn word_waveform(seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CODEBOOK_STREAM);
    rng.set_stream(index);
    let (lo, hi) = (150f64.ln(), 6000f64.ln());
    let f1 = rng.random_range(lo..hi).exp();
    let f2 = rng.random_range(lo..hi).exp();
    let p1 = rng.random_range(0.0..2.0 * PI);
    let p2 = rng.random_range(0.0..2.0 * PI);
    let sr = SAMPLE_RATE as f64;
    (0..WORD_SAMPLES)
        .map(|n| {
            let t = n as f64 / sr;
            let edge = n.min(WORD_SAMPLES - 1 - n);
            let env = if edge < FADE_SAMPLES {
                0.5 - 0.5 * (PI * edge as f64 / FADE_SAMPLES as f64).cos()
            } else {
                1.0
            };
            let noise: f64 = StandardNormal.sample(&mut rng);
            let x = env
                * (0.25 * (2.0 * PI * f1 * t + p1).sin()
                    + 0.2 * (2.0 * PI * f2 * t + p2).sin()
                    + 0.03 * noise);
            (x * 32768.0).round() / 32768.0
        })
        .collect()
}

/// Builds a deterministic corpus: random-word transcripts rendered through the
/// codebook, and one query per passage made by dropping each transcript word
/// with probability `query_word_dropout` (at least one word is always kept).
/// The gold answer is one of the kept words.
pub fn synth_corpus(params: &SynthParams) -> Result<Corpus> {
    params.validate()?;
    let codebook = Codebook::for_params(params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut passages = Vec::with_capacity(params.n_passages);
    let mut queries = Vec::with_capacity(params.n_passages);
    for p in 0..params.n_passages {
        let n_words = rng.random_range(params.words_per_passage.clone());
        let indices: Vec<usize> = (0..n_words)
            .map(|_| rng.random_range(0..params.vocabulary_size))
            .collect();
        let words: Vec<&str> = indices.iter().map(|&i| codebook.words[i].as_str()).collect();
        let id = format!("p{p:05}");
        let audio = AudioSignal::new(codebook.render(&indices), SAMPLE_RATE)?;

        let mut kept: Vec<&str> = words
            .iter()
            .copied()
            .filter(|_| !rng.random_bool(params.query_word_dropout))
            .collect();
        if kept.is_empty() {
            kept.push(words[rng.random_range(0..words.len())]);
        }
        let gold = kept[rng.random_range(0..kept.len())].to_string();
        queries.push(Query {
            text: kept.join(" "),
            gold_answer: gold,
            relevant_passage_id: id.clone(),
        });
        passages.push(Passage {
            id,
            audio: AudioSource::Memory(audio),
            transcript: words.join(" "),
        });
    }
    Corpus::new(passages, queries, SAMPLE_RATE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_manifest, write_manifest};
    use proptest::prelude::*;

    fn small(seed: u64) -> SynthParams {
        SynthParams {
            n_passages: 6,
            words_per_passage: 3..=6,
            vocabulary_size: 20,
            query_word_dropout: 0.5,
            seed,
        }
    }

    #[test]
    fn vocabulary_is_unique_and_alphabetic() {
        let v = synth_vocabulary(5000);
        let mut sorted = v.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 5000);
        assert!(v.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(synth_corpus(&small(7)).unwrap(), synth_corpus(&small(7)).unwrap());
        assert_ne!(synth_corpus(&small(7)).unwrap(), synth_corpus(&small(8)).unwrap());
    }

    #[test]
    fn zero_dropout_copies_transcript() {
        let params = SynthParams {
            query_word_dropout: 0.0,
            ..small(1)
        };
        let c = synth_corpus(&params).unwrap();
        for (p, q) in c.passages().iter().zip(c.queries()) {
            assert_eq!(p.transcript, q.text);
        }
    }

    #[test]
    fn sixty_four_passages_over_two_hundred_words() {
        let params = SynthParams {
            vocabulary_size: 200,
            ..SynthParams::default()
        };
        let c = synth_corpus(&params).unwrap();
        assert_eq!(c.passages().len(), 64);
        assert_eq!(c.queries().len(), 64);
        c.validate().unwrap();
        for p in c.passages() {
            let n = p.transcript.split_whitespace().count();
            assert!((20..=40).contains(&n));
            assert_eq!(p.audio.load().unwrap().len(), n * WORD_SAMPLES);
        }
        for q in c.queries() {
            assert!(q.text.split_whitespace().any(|w| w == q.gold_answer));
        }
    }

    #[test]
    fn invalid_params() {
        assert!(synth_corpus(&SynthParams { vocabulary_size: 1, ..small(0) }).is_err());
        assert!(synth_corpus(&SynthParams { query_word_dropout: 1.0, ..small(0) }).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synth_corpus(&small(3)).unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_manifest(&corpus, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.queries(), corpus.queries());
        for (a, b) in corpus.passages().iter().zip(loaded.passages()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.transcript, b.transcript);
            assert_eq!(a.audio.load().unwrap(), b.audio.load().unwrap());
        }
        // writing the loaded corpus again reproduces the same manifest
        let path2 = dir.path().join("again").join("corpus.jsonl");
        std::fs::create_dir_all(path2.parent().unwrap()).unwrap();
        write_manifest(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn synth_output_satisfies_invariants(
            n in 1usize..12,
            lo in 1usize..5,
            extra in 0usize..5,
            vocab in 2usize..50,
            dropout in 0.0f64..0.99,
            seed in any::<u64>(),
        ) {
            let params = SynthParams {
                n_passages: n,
                words_per_passage: lo..=lo + extra,
                vocabulary_size: vocab,
                query_word_dropout: dropout,
                seed,
            };
            let c = synth_corpus(&params).unwrap();
            prop_assert!(c.validate().is_ok());
            prop_assert_eq!(c.passages().len(), n);
            prop_assert_eq!(c.queries().len(), n);
            for q in c.queries() {
                prop_assert!(!q.text.is_empty());
            }
        }
    }
}
