use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Wire request. `contexts` are passage texts, or audio references in the
/// speech mode; `context_ids` names the passage behind each context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub query: String,
    pub contexts: Vec<String>,
    pub context_ids: Vec<String>,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub answer: String,
}

pub trait Generator: Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse>;

    /// Upper bound on simultaneous `generate` calls.
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

/// Answers with the gold answer iff the query's relevant passage is among the
/// contexts, otherwise with an empty string.
#[derive(Debug, Clone, Default)]
pub struct OracleGenerator {
    by_query: HashMap<String, Vec<(String, String)>>,
}

impl OracleGenerator {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut by_query: HashMap<String, Vec<(String, String)>> = HashMap::new();
        for q in corpus.queries() {
            by_query
                .entry(q.text.clone())
                .or_default()
                .push((q.gold_answer.clone(), q.relevant_passage_id.clone()));
        }
        Self { by_query }
    }
}

impl Generator for OracleGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse> {
        let known = self
            .by_query
            .get(&req.query)
            .ok_or_else(|| Error::Generator(format!("oracle has no entry for query {:?}", req.query)))?;
        let answer = known
            .iter()
            .find(|(_, id)| req.context_ids.contains(id))
            .map(|(gold, _)| gold.clone())
            .unwrap_or_default();
        Ok(GenerationResponse { answer })
    }
}

/// POSTs each request as JSON and reads a JSON response.
pub struct HttpGenerator {
    url: String,
    agent: ureq::Agent,
    concurrency: usize,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>, timeout: Duration, concurrency: usize) -> Result<Self> {
        if concurrency == 0 {
            return Err(Error::InvalidParameter("generator concurrency must be >= 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Ok(Self {
            url: url.into(),
            agent,
            concurrency,
        })
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse> {
        self.agent
            .post(&self.url)
            .send_json(req)
            .and_then(|mut resp| resp.body_mut().read_json::<GenerationResponse>())
            .map_err(|e| Error::Generator(format!("{}: {e}", self.url)))
    }

    fn max_concurrency(&self) -> Option<usize> {
        Some(self.concurrency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthParams};

    #[test]
    fn oracle_needs_relevant_context() {
        let corpus = synth_corpus(&SynthParams { n_passages: 3, ..Default::default() }).unwrap();
        let oracle = OracleGenerator::from_corpus(&corpus);
        let q = &corpus.queries()[1];
        let mut req = GenerationRequest {
            query: q.text.clone(),
            contexts: vec!["a".into(), "b".into()],
            context_ids: vec![corpus.passages()[0].id.clone(), q.relevant_passage_id.clone()],
            instruction: String::new(),
        };
        assert_eq!(oracle.generate(&req).unwrap().answer, q.gold_answer);
        req.context_ids.pop();
        assert_eq!(oracle.generate(&req).unwrap().answer, "");
        req.query = "unknown".into();
        assert!(oracle.generate(&req).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_a_generator_error() {
        let g = HttpGenerator::new("http://127.0.0.1:9/generate", Duration::from_millis(300), 2).unwrap();
        let req = GenerationRequest {
            query: "q".into(),
            contexts: vec!["c".into()],
            context_ids: vec!["p".into()],
            instruction: "i".into(),
        };
        assert!(matches!(g.generate(&req), Err(Error::Generator(_))));
        assert!(HttpGenerator::new("http://x", Duration::from_secs(1), 0).is_err());
    }

    #[test]
    fn wire_format() {
        let json = serde_json::to_value(GenerationResponse { answer: "a".into() }).unwrap();
        assert_eq!(json, serde_json::json!({"answer": "a"}));
        let req: GenerationRequest = serde_json::from_value(serde_json::json!({
            "query": "q", "contexts": ["x"], "context_ids": ["p1"], "instruction": "i"
        }))
        .unwrap();
        assert_eq!(req.contexts, ["x"]);
    }
}
