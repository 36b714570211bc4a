use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::words;
use crate::error::{Error, Result};

/// Relative weights of the three edit operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditMix {
    pub substitute: f64,
    pub delete: f64,
    pub insert: f64,
}

impl Default for EditMix {
    fn default() -> Self {
        Self {
            substitute: 0.6,
            delete: 0.2,
            insert: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub target_wer: f64,
    #[serde(default)]
    pub mix: EditMix,
    pub vocabulary: Vec<String>,
    pub seed: u64,
}

impl CorruptionConfig {
    pub fn new(target_wer: f64, vocabulary: Vec<String>, seed: u64) -> Self {
        Self {
            target_wer,
            mix: EditMix::default(),
            vocabulary,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_wer) {
            return Err(Error::InvalidParameter(format!(
                "target_wer must be in [0, 1), got {}",
                self.target_wer
            )));
        }
        let EditMix { substitute, delete, insert } = self.mix;
        if [substitute, delete, insert].iter().any(|w| !(*w >= 0.0)) || (substitute + delete + insert - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "edit mix must be non-negative and sum to 1: {:?}",
                self.mix
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Edit {
    Substitute,
    Delete,
    Insert,
}

/// Corrupts `text` with an RNG seeded from `cfg.seed`.
pub fn corrupt_transcript(text: &str, cfg: &CorruptionConfig) -> Result<String> {
    corrupt_with_rng(text, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Corrupts many transcripts; item `i` uses stream `i` of `cfg.seed`, so
/// each result is independent of the others.
pub fn corrupt_all<'a>(texts: impl IntoIterator<Item = &'a str>, cfg: &CorruptionConfig) -> Result<Vec<String>> {
    texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            corrupt_with_rng(t, cfg, &mut rng)
        })
        .collect()
}

/// Each normalized word is hit with probability `target_wer` by one edit drawn
/// from the mix: replaced by a different vocabulary word, dropped, or followed
/// by an inserted vocabulary word.
pub fn corrupt_with_rng<R: Rng>(text: &str, cfg: &CorruptionConfig, rng: &mut R) -> Result<String> {
    cfg.validate()?;
    let input = words(text);
    if input.is_empty() {
        return Err(Error::EmptyInput("text to corrupt has no words"));
    }
    let mut out = Vec::with_capacity(input.len() + 4);
    let m = cfg.mix;
    for w in input {
        if !rng.random_bool(cfg.target_wer) {
            out.push(w);
            continue;
        }
        let u = rng.random::<f64>() * (m.substitute + m.delete + m.insert);
        let edit = if u < m.substitute {
            Edit::Substitute
        } else if u < m.substitute + m.delete {
            Edit::Delete
        } else {
            Edit::Insert
        };
        match edit {
            Edit::Substitute => out.push(pick_other(&cfg.vocabulary, &w, rng)?),
            Edit::Delete => {}
            Edit::Insert => {
                if cfg.vocabulary.is_empty() {
                    return Err(Error::EmptyInput("corruption vocabulary"));
                }
                let extra = cfg.vocabulary[rng.random_range(0..cfg.vocabulary.len())].clone();
                out.push(w);
                out.push(extra);
            }
        }
    }
    Ok(out.join(" "))
}

fn pick_other<R: Rng>(vocab: &[String], word: &str, rng: &mut R) -> Result<String> {
    let others: Vec<&String> = vocab.iter().filter(|v| v.as_str() != word).collect();
    if others.is_empty() {
        return Err(Error::EmptyInput("corruption vocabulary has no substitute"));
    }
    Ok(others[rng.random_range(0..others.len())].clone())
}
