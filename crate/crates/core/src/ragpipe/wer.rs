use crate::encoder::words;
use crate::error::{Error, Result};

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Word error rate of `hypothesis` against `reference`, over normalized words.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r = words(reference);
    if r.is_empty() {
        return Err(Error::EmptyInput("wer reference has no words"));
    }
    Ok(edit_distance(&r, &words(hypothesis)) as f64 / r.len() as f64)
}

/// Total edits over total reference words.
pub fn corpus_wer<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<f64> {
    let (mut edits, mut total) = (0usize, 0usize);
    for (reference, hypothesis) in pairs {
        let r = words(reference);
        edits += edit_distance(&r, &words(hypothesis));
        total += r.len();
    }
    if total == 0 {
        return Err(Error::EmptyInput("wer reference has no words"));
    }
    Ok(edits as f64 / total as f64)
}
