//! Metadata-orthogonal node embeddings.
//!
//! Node embeddings are fit to random-walk co-occurrences with a GloVe-style
//! loss, optionally alongside a linear embedding of node metadata. The MONET
//! training step keeps the topology embeddings orthogonal to the span of the
//! metadata embeddings, which removes all linear metadata signal from them.

// Guards of the form `!(x > 0.0)` reject NaN as well as non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod shilling;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
