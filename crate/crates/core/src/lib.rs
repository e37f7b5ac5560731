//! Shot-sequence scene segmentation.
//!
//! A clip-level boundary network embeds every shot boundary, a windowed
//! bidirectional LSTM turns the embeddings into coarse boundary scores, and
//! a movie-level grouping step merges over-segmented runs of shots by
//! dynamic programming over super shots. [`metrics`] scores the result.

pub mod boundary;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod grouping;
pub mod io;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod sequence;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use par::Execution;
