use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::generator::{GenerationRequest, Generator};
use super::pipeline::Trace;
use crate::error::Result;

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let kept: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1 if the normalized gold occurs in the normalized answer as a run of whole
/// words, else 0.
pub fn exact_match(answer: &str, gold: &str) -> u8 {
    let gold = normalize_answer(gold);
    if gold.is_empty() {
        return 0;
    }
    let answer = normalize_answer(answer);
    u8::from(format!(" {answer} ").contains(&format!(" {gold} ")))
}

/// Token-multiset F1 between normalized answer and gold.
pub fn token_f1(answer: &str, gold: &str) -> f64 {
    let a = normalize_answer(answer);
    let g = normalize_answer(gold);
    let (a, g): (Vec<&str>, Vec<&str>) = (a.split_whitespace().collect(), g.split_whitespace().collect());
    if a.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &a {
        if let Some(c) = counts.get_mut(t).filter(|c| **c > 0) {
            *c -= 1;
            overlap += 1;
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / a.len() as f64;
    let r = overlap as f64 / g.len() as f64;
    2.0 * p * r / (p + r)
}

pub trait Judge: Sync {
    fn judge(&self, query: &str, answer: &str, gold: &str) -> Result<bool>;
}

/// Exact match, or token F1 of at least `f1_threshold`.
#[derive(Debug, Clone, Copy)]
pub struct MockJudge {
    pub f1_threshold: f64,
}

impl Default for MockJudge {
    fn default() -> Self {
        Self { f1_threshold: 0.8 }
    }
}

impl Judge for MockJudge {
    fn judge(&self, _query: &str, answer: &str, gold: &str) -> Result<bool> {
        Ok(exact_match(answer, gold) == 1 || token_f1(answer, gold) >= self.f1_threshold)
    }
}

pub const JUDGE_INSTRUCTION: &str = "You are grading an answer. The first context is the reference answer, \
the second is the candidate. Reply \"yes\" if the candidate answers the question with the same meaning as \
the reference, otherwise reply \"no\".";

/// Judge backed by a generator endpoint: correct iff the reply starts with "yes".
pub struct GeneratorJudge<G> {
    pub generator: G,
}

impl<G: Generator> Judge for GeneratorJudge<G> {
    fn judge(&self, query: &str, answer: &str, gold: &str) -> Result<bool> {
        let req = GenerationRequest {
            query: query.to_string(),
            contexts: vec![gold.to_string(), answer.to_string()],
            context_ids: vec!["reference".into(), "candidate".into()],
            instruction: JUDGE_INSTRUCTION.to_string(),
        };
        let reply = self.generator.generate(&req)?.answer;
        Ok(normalize_answer(&reply).starts_with("yes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub query: usize,
    pub gold: String,
    pub answer: Option<String>,
    pub exact_match: Option<u8>,
    pub correct: Option<u8>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    /// Mean EM over queries with an answer.
    pub exact_match: f64,
    /// Mean judged correctness over queries the judge scored.
    pub correctness: f64,
    pub queries: usize,
    pub generation_failures: usize,
    pub judge_failures: usize,
    pub rows: Vec<GenerationRow>,
}

/// Scores traces against `golds[query]`. Failed generations and judge errors
/// are left out of the respective means and counted.
pub fn eval_generation(traces: &[Trace], golds: &[String], judge: &dyn Judge) -> GenerationReport {
    let mut rows = Vec::with_capacity(traces.len());
    let (mut em_sum, mut em_n, mut ok_sum, mut ok_n) = (0usize, 0usize, 0usize, 0usize);
    let (mut gen_fail, mut judge_fail) = (0, 0);
    for t in traces {
        let gold = golds.get(t.query).cloned().unwrap_or_default();
        let mut row = GenerationRow {
            query: t.query,
            gold: gold.clone(),
            answer: t.answer.clone(),
            exact_match: None,
            correct: None,
            error: t.error.clone(),
        };
        match &t.answer {
            None => gen_fail += 1,
            Some(answer) => {
                let em = exact_match(answer, &gold);
                em_sum += em as usize;
                em_n += 1;
                row.exact_match = Some(em);
                match judge.judge(&t.text, answer, &gold) {
                    Ok(c) => {
                        ok_sum += c as usize;
                        ok_n += 1;
                        row.correct = Some(c as u8);
                    }
                    Err(e) => {
                        judge_fail += 1;
                        row.error = Some(format!("judge: {e}"));
                    }
                }
            }
        }
        rows.push(row);
    }
    let mean = |s: usize, n: usize| if n == 0 { 0.0 } else { s as f64 / n as f64 };
    GenerationReport {
        exact_match: mean(em_sum, em_n),
        correctness: mean(ok_sum, ok_n),
        queries: traces.len(),
        generation_failures: gen_fail,
        judge_failures: judge_fail,
        rows,
    }
}
