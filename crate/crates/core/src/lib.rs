//! Retrieval-based image caption selection.
//!
//! A query image is described by transferring a caption written for a
//! visually similar training image. The flow is:
//!
//! 1. [`retrieval`]: adaptive nearest-neighbour search over precomputed
//!    visual features.
//! 2. [`candidates`]: re-rank the retrieved captions by cosine similarity to
//!    a reference vector built from predicted tags (or, when no tag is usable,
//!    a visually weighted average of the retrieved captions).
//! 3. [`matching`]: score each candidate on object, attribute and action
//!    agreement with the query tags.
//! 4. [`mcdm`]: weight the three criteria by Shannon entropy and rank the
//!    candidates with TOPSIS.
//!
//! [`pipeline`] wires the stages together and [`metrics`] scores the chosen
//! captions with corpus BLEU and ROUGE-L.

pub mod candidates;
pub mod config;
pub mod data;
pub mod embedding;
pub mod error;
pub mod matching;
pub mod mcdm;
pub mod metrics;
pub mod pipeline;
pub mod retrieval;
pub mod text;

pub use error::{Error, Result};
