//! Retrieval-augmented generation pipelines, transcript corruption, and
//! answer metrics.

mod asr;
mod corrupt;
mod generator;
mod metrics;
mod pipeline;
mod prompt;
mod wer;

pub use asr::{transcribe_all, TemplateAsr};
pub use corrupt::{corrupt_all, corrupt_transcript, corrupt_with_rng, CorruptionConfig, EditMix};
pub use generator::{GenerationRequest, GenerationResponse, Generator, HttpGenerator, OracleGenerator};
pub use metrics::{
    eval_generation, exact_match, normalize_answer, token_f1, GenerationReport, GenerationRow, GeneratorJudge,
    Judge, MockJudge, JUDGE_INSTRUCTION,
};
pub use pipeline::{
    build_index, embed_transcript, passage_embeddings, retrieve, run_pipeline, NoiseSpec, PassageIndex,
    PassageView, PipelineMode, PipelineOptions, Representation, Trace,
};
pub use prompt::{assemble_prompt, DEFAULT_INSTRUCTION};
pub use wer::{corpus_wer, edit_distance, wer};
