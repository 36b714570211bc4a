use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corrupt::{corrupt_all, CorruptionConfig};
use super::generator::{GenerationRequest, Generator};
use super::prompt::{assemble_prompt, DEFAULT_INSTRUCTION};
use crate::corpus::Corpus;
use crate::dsp::add_noise_snr;
use crate::encoder::{tokenize, Embedding, Retriever};
use crate::error::{Error, Result};
use crate::index::{Index, SearchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Speech retrieval, audio passed to the generator.
    SpeechRag,
    /// Text retrieval over ASR-like transcripts, transcripts to the generator.
    FullyCascaded,
    /// Speech retrieval, transcripts of the hits to the generator.
    SemiCascaded,
    /// Text retrieval over ground-truth transcripts.
    GtText,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 4] = [
        PipelineMode::SpeechRag,
        PipelineMode::FullyCascaded,
        PipelineMode::SemiCascaded,
        PipelineMode::GtText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::SpeechRag => "speech_rag",
            PipelineMode::FullyCascaded => "fully_cascaded",
            PipelineMode::SemiCascaded => "semi_cascaded",
            PipelineMode::GtText => "gt_text",
        }
    }

    /// Which passage representation the mode searches.
    pub fn representation(self) -> Representation {
        match self {
            PipelineMode::SpeechRag | PipelineMode::SemiCascaded => Representation::Speech,
            PipelineMode::FullyCascaded => Representation::Transcript,
            PipelineMode::GtText => Representation::GroundTruth,
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pipeline mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Speech,
    Transcript,
    GroundTruth,
}

/// Noise added to passage audio before speech embedding. Passage `i` uses
/// seed `seed + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// Per-passage material the pipelines draw on, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageView {
    pub ids: Vec<String>,
    pub ground_truth: Vec<String>,
    /// Transcripts as the cascaded systems see them; equal to the ground
    /// truth when no corruption is configured.
    pub transcripts: Vec<String>,
    pub audio_refs: Vec<String>,
}

impl PassageView {
    pub fn new(corpus: &Corpus, corruption: Option<&CorruptionConfig>) -> Result<Self> {
        let ground_truth: Vec<String> = corpus.passages().iter().map(|p| p.transcript.clone()).collect();
        let transcripts = match corruption {
            Some(cfg) => corrupt_all(ground_truth.iter().map(String::as_str), cfg)?,
            None => ground_truth.clone(),
        };
        Ok(Self {
            ids: corpus.passages().iter().map(|p| p.id.clone()).collect(),
            ground_truth,
            transcripts,
            audio_refs: corpus.passages().iter().map(|p| p.audio.reference(&p.id)).collect(),
        })
    }
}

/// An index tagged with the passage representation it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageIndex {
    pub representation: Representation,
    pub index: Index,
}

/// Text embedding that falls back to `<unk>` for transcripts with no tokens
/// left (possible after heavy deletion).
pub fn embed_transcript(model: &Retriever, text: &str) -> Result<Embedding> {
    let ids = tokenize(text, &model.vocab);
    if ids.is_empty() {
        model.embed_ids(&[model.vocab.unk_id()])
    } else {
        model.embed_ids(&ids)
    }
}

pub fn passage_embeddings(
    corpus: &Corpus,
    view: &PassageView,
    model: &Retriever,
    representation: Representation,
    noise: Option<NoiseSpec>,
) -> Result<Vec<Embedding>> {
    let indices: Vec<usize> = (0..view.ids.len()).collect();
    indices
        .par_iter()
        .map(|&i| match representation {
            Representation::Speech => {
                let mut audio = corpus.passages()[i].audio.load()?;
                if let Some(n) = noise {
                    audio = add_noise_snr(&audio, n.snr_db, n.seed.wrapping_add(i as u64))?;
                }
                model.embed_speech(&audio)
            }
            Representation::Transcript => embed_transcript(model, &view.transcripts[i]),
            Representation::GroundTruth => embed_transcript(model, &view.ground_truth[i]),
        })
        .collect()
}

pub fn build_index(
    corpus: &Corpus,
    view: &PassageView,
    model: &Retriever,
    representation: Representation,
    noise: Option<NoiseSpec>,
) -> Result<PassageIndex> {
    let embeddings = passage_embeddings(corpus, view, model, representation, noise)?;
    Ok(PassageIndex {
        representation,
        index: Index::build(view.ids.iter().cloned().zip(embeddings))?,
    })
}

/// Top-`k` passages for every query, in query order.
pub fn retrieve(corpus: &Corpus, model: &Retriever, index: &Index, k: usize) -> Result<Vec<SearchResult>> {
    corpus
        .queries()
        .par_iter()
        .map(|q| index.search(&model.embed_text(&q.text)?, k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Number of retrieved passages handed to the generator.
    pub top_k_context: usize,
    pub instruction: String,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            top_k_context: 5,
            instruction: DEFAULT_INSTRUCTION.to_string(),
        }
    }
}

/// What happened for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub query: usize,
    pub text: String,
    pub retrieved: Vec<String>,
    pub scores: Vec<f64>,
    pub contexts: Vec<String>,
    pub prompt: String,
    pub answer: Option<String>,
    pub error: Option<String>,
}

/// Retrieves, builds contexts for `mode`, and calls the generator for every
/// query. Generator failures are recorded in the trace and do not stop the run.
pub fn run_pipeline(
    corpus: &Corpus,
    mode: PipelineMode,
    model: &Retriever,
    index: &PassageIndex,
    view: &PassageView,
    opts: &PipelineOptions,
    generator: &dyn Generator,
) -> Result<Vec<Trace>> {
    if index.representation != mode.representation() {
        return Err(Error::ModeMismatch(format!(
            "mode {mode} searches {:?} passages but the index holds {:?}",
            mode.representation(),
            index.representation
        )));
    }
    if opts.top_k_context == 0 {
        return Err(Error::InvalidParameter("top_k_context must be >= 1".into()));
    }
    let results = retrieve(corpus, model, &index.index, opts.top_k_context)?;
    let position: std::collections::HashMap<&str, usize> =
        view.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let run_one = |(q, result): (usize, &SearchResult)| -> Result<Trace> {
        let query = &corpus.queries()[q];
        let retrieved: Vec<String> = result.iter().map(|h| h.id.clone()).collect();
        let contexts: Vec<String> = retrieved
            .iter()
            .map(|id| {
                let i = position[id.as_str()];
                match mode {
                    PipelineMode::SpeechRag => view.audio_refs[i].clone(),
                    PipelineMode::GtText => view.ground_truth[i].clone(),
                    PipelineMode::FullyCascaded | PipelineMode::SemiCascaded => view.transcripts[i].clone(),
                }
            })
            .collect();
        let prompt = assemble_prompt(&query.text, &contexts, &opts.instruction)?;
        let req = GenerationRequest {
            query: query.text.clone(),
            contexts: contexts.clone(),
            context_ids: retrieved.clone(),
            instruction: opts.instruction.clone(),
        };
        let (answer, error) = match generator.generate(&req) {
            Ok(r) => (Some(r.answer), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok(Trace {
            query: q,
            text: query.text.clone(),
            retrieved,
            scores: result.iter().map(|h| h.score).collect(),
            contexts,
            prompt,
            answer,
            error,
        })
    };

    let work: Vec<(usize, &SearchResult)> = results.iter().enumerate().collect();
    match generator.max_concurrency() {
        Some(limit) => rayon::ThreadPoolBuilder::new()
            .num_threads(limit)
            .build()
            .map_err(|e| Error::Generator(format!("thread pool: {e}")))?
            .install(|| work.into_par_iter().map(run_one).collect()),
        None => work.into_par_iter().map(run_one).collect(),
    }
}
