//! Retrieval of spoken passages for text queries, without transcription.
//!
//! A frozen text encoder embeds queries and transcripts. A trainable speech
//! encoder and adapter map passage audio into the same space, so an index
//! built from audio answers text queries directly.
//!
//! - [`corpus`]: passages, queries, splits, manifests and the synthetic generator.
//! - [`dsp`]: WAV I/O, log-mel features and noise at a target SNR.
//! - [`encoder`] and [`adapter`]: the text and speech branches.
//! - [`training`]: cosine objective, backprop, Adam and gradient checking.
//! - [`checkpoint`]: binary model checkpoints.
//! - [`index`]: exact cosine top-k and Recall@k.
//! - [`ragpipe`]: retrieval-augmented pipelines, corruption and metrics.
//!
//! The guide in `book/` walks through each piece with runnable examples.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapter;
pub mod checkpoint;
pub mod corpus;
pub mod dsp;
pub mod encoder;
pub mod error;
pub mod index;
pub mod ragpipe;
pub mod training;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/workflow.md")]
    mod workflow {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/audio.md")]
    mod audio {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/pipelines.md")]
    mod pipelines {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
