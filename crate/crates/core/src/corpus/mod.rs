//! Passages, queries and the corpora that hold them.

mod manifest;
mod synth;

pub use manifest::{load_manifest, write_manifest};
pub use synth::{synth_corpus, synth_vocabulary, Codebook, SynthParams, WORD_SAMPLES};

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{read_wav, AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Passage audio, either held in memory or read from disk on demand.
#[derive(Debug, Clone, PartialEq)]
pub enum AudioSource {
    Memory(AudioSignal),
    File(PathBuf),
}

impl AudioSource {
    pub fn load(&self) -> Result<AudioSignal> {
        match self {
            AudioSource::Memory(signal) => Ok(signal.clone()),
            AudioSource::File(path) => read_wav(path),
        }
    }

    /// A string handle for the audio, used in generation requests.
    pub fn reference(&self, passage_id: &str) -> String {
        match self {
            AudioSource::Memory(_) => format!("memory:{passage_id}"),
            AudioSource::File(path) => path.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub id: String,
    pub audio: AudioSource,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub text: String,
    pub gold_answer: String,
    pub relevant_passage_id: String,
}

/// Passages plus queries. Every query references exactly one passage and all
/// audio shares one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    passages: Vec<Passage>,
    queries: Vec<Query>,
    sample_rate: u32,
}

impl Corpus {
    pub fn new(passages: Vec<Passage>, queries: Vec<Query>, sample_rate: u32) -> Result<Self> {
        let corpus = Self {
            passages,
            queries,
            sample_rate,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn empty() -> Self {
        Self {
            passages: Vec::new(),
            queries: Vec::new(),
            sample_rate: SAMPLE_RATE,
        }
    }

    /// Checks the structural invariants. In-memory audio is checked for
    /// sample rate and non-zero length; file audio is checked at load time.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.passages.len());
        for p in &self.passages {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::DuplicateId(p.id.clone()));
            }
            if p.transcript.trim().is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "passage `{}` has an empty transcript",
                    p.id
                )));
            }
            if let AudioSource::Memory(signal) = &p.audio {
                if signal.is_empty() {
                    return Err(Error::InvalidParameter(format!(
                        "passage `{}` has empty audio",
                        p.id
                    )));
                }
                if signal.sample_rate() != self.sample_rate {
                    return Err(Error::SampleRateMismatch {
                        expected: self.sample_rate,
                        found: signal.sample_rate(),
                        context: format!("passage `{}`", p.id),
                    });
                }
            }
        }
        for q in &self.queries {
            if !ids.contains(q.relevant_passage_id.as_str()) {
                return Err(Error::DanglingReference(q.relevant_passage_id.clone()));
            }
        }
        Ok(())
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passages.iter().find(|p| p.id == id)
    }

    pub fn passage_ids(&self) -> Vec<&str> {
        self.passages.iter().map(|p| p.id.as_str()).collect()
    }

    /// Total number of transcript words, whitespace-separated.
    pub fn word_count(&self) -> usize {
        self.passages
            .iter()
            .map(|p| p.transcript.split_whitespace().count())
            .sum()
    }

    fn subset(&self, keep: &[usize]) -> Corpus {
        let passages: Vec<Passage> = keep.iter().map(|&i| self.passages[i].clone()).collect();
        let ids: HashSet<&str> = passages.iter().map(|p| p.id.as_str()).collect();
        let queries = self
            .queries
            .iter()
            .filter(|q| ids.contains(q.relevant_passage_id.as_str()))
            .cloned()
            .collect();
        Corpus {
            passages,
            queries,
            sample_rate: self.sample_rate,
        }
    }

    /// The passages named in `ids` (kept in corpus order) with their queries.
    pub fn select<S: AsRef<str>>(&self, ids: &[S]) -> Result<Corpus> {
        let position: HashMap<&str, usize> =
            self.passages.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let mut keep = ids
            .iter()
            .map(|id| {
                position
                    .get(id.as_ref())
                    .copied()
                    .ok_or_else(|| Error::DanglingReference(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        keep.sort_unstable();
        keep.dedup();
        Ok(self.subset(&keep))
    }

    /// Query -> relevant passage id, keyed by query position.
    pub fn qrels(&self) -> HashMap<usize, String> {
        self.queries
            .iter()
            .enumerate()
            .map(|(i, q)| (i, q.relevant_passage_id.clone()))
            .collect()
    }
}

/// Seeded partition of the passages into train/val/test, with each query
/// following its relevant passage. Split sizes are `floor(n * frac)` for
/// train and val; test takes the remainder. Corpus order is preserved
/// within each split.
pub fn split(
    corpus: &Corpus,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    let in_unit = |f: f64| f > 0.0 && f < 1.0;
    if !in_unit(train_frac) || !in_unit(val_frac) || train_frac + val_frac >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "split fractions must lie in (0,1) with train+val < 1, got {train_frac}/{val_frac}"
        )));
    }
    let n = corpus.passages.len();
    let n_train = (n as f64 * train_frac + 1e-9).floor() as usize;
    let n_val = (n as f64 * val_frac + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = [
        order[..n_train].to_vec(),
        order[n_train..n_train + n_val].to_vec(),
        order[n_train + n_val..].to_vec(),
    ];
    parts.iter_mut().for_each(|p| p.sort_unstable());
    Ok((
        corpus.subset(&parts[0]),
        corpus.subset(&parts[1]),
        corpus.subset(&parts[2]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_by_id() {
        let c = tiny(5);
        let ids = c.passage_ids().iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let picked = c.select(&[ids[3].as_str(), ids[1].as_str()]).unwrap();
        assert_eq!(picked.passage_ids(), [ids[1].as_str(), ids[3].as_str()]);
        assert_eq!(picked.queries().len(), 2);
        assert!(c.select(&["missing"]).is_err());
    }

    fn tiny(n: usize) -> Corpus {
        let passages = (0..n)
            .map(|i| Passage {
                id: format!("p{i}"),
                audio: AudioSource::Memory(AudioSignal::new(vec![0.1; 800], 16_000).unwrap()),
                transcript: format!("word{i}"),
            })
            .collect();
        let queries = (0..n)
            .map(|i| Query {
                text: format!("word{i}"),
                gold_answer: format!("word{i}"),
                relevant_passage_id: format!("p{i}"),
            })
            .collect();
        Corpus::new(passages, queries, 16_000).unwrap()
    }

    #[test]
    fn split_sizes() {
        let (a, b, c) = split(&tiny(10), 0.8, 0.1, 1).unwrap();
        assert_eq!((a.passages().len(), b.passages().len(), c.passages().len()), (8, 1, 1));
        assert_eq!(a.queries().len(), 8);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let corpus = tiny(37);
        let s1 = split(&corpus, 0.6, 0.2, 5).unwrap();
        let s2 = split(&corpus, 0.6, 0.2, 5).unwrap();
        assert_eq!(s1, s2);
        let mut all: Vec<&str> = [&s1.0, &s1.1, &s1.2]
            .iter()
            .flat_map(|c| c.passage_ids())
            .collect();
        assert_eq!(all.len(), 37);
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 37);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let c = tiny(4);
        assert!(split(&c, 0.0, 0.1, 0).is_err());
        assert!(split(&c, 0.9, 0.1, 0).is_err());
        assert!(split(&c, 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn dangling_reference_rejected() {
        let mut c = tiny(2);
        c.queries[0].relevant_passage_id = "nope".into();
        assert!(matches!(c.validate(), Err(Error::DanglingReference(_))));
    }

    #[test]
    fn duplicate_passage_rejected() {
        let mut c = tiny(2);
        c.passages[1].id = "p0".into();
        c.queries.clear();
        assert!(matches!(c.validate(), Err(Error::DuplicateId(_))));
    }
}
