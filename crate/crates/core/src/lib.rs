//! Unsupervised named-entity disambiguation against a domain knowledge graph.
//!
//! Mentions are matched to candidate entities by fuzzy surface search, the
//! candidates of one document are joined into a weighted context graph, and
//! the k cheapest group Steiner trees of that graph decide which candidate
//! each mention links to.

pub mod candidates;
pub mod context;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod gst;
pub mod kg;
pub mod pipeline;
pub mod rank;
pub mod similarity;
pub mod synthetic;

pub use error::{Error, Result};
