//! Termite: a shared embedding over tables and text for related-entity search.
//!
//! The pipeline has five parts:
//!
//! - [`extract`]: tables become `key:value - column:attribute - cell:value`
//!   triples; text relations arrive as triple files from external tools.
//! - [`encode`]: tokens are dictionary-encoded and hashed into fixed-width
//!   binary vectors sized with the birthday bound.
//! - [`metric_learn`]: a siamese network trained with contrastive loss on
//!   pairs taken from triples plus random negatives.
//! - [`refine`]: hubness counts and a percentile cutoff, and optional
//!   persistence-based confidence.
//! - [`join`]: the query operator, top-K related entities with hubs removed.
//!
//! [`store`] holds the offline embedding and answers exact cosine k-NN.
//! [`eval`] runs record-linkage and concept-expansion evaluations.

pub mod encode;
pub mod error;
pub mod eval;
pub mod extract;
pub mod join;
pub mod metric_learn;
pub mod pipeline;
pub mod refine;
pub mod store;

pub use error::{Error, Result};
pub use join::{termite_join, JoinResult};
pub use refine::HubnessMetadata;
pub use store::EmbeddingStore;
