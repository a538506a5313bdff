//! Analysis machinery for dense-retriever embeddings.
//!
//! The crate is organised around the batch pipeline:
//!
//! - [`store`]: on-disk formats (EMB1 matrices, label TSVs, qrels, JSONL text)
//!   and the immutable in-memory structures they load into.
//! - [`numerics`]: seeded logistic-regression trainers, orthonormalisation and
//!   nullspace projections.
//! - [`mdl`]: uniform and online codelengths and the compression ratio used to
//!   quantify how extractable a label is from a set of embeddings.
//! - [`inlp`]: iterative nullspace projection for linear concept removal.
//! - [`retrieval`]: exact brute-force dot-product retrieval, optionally through
//!   a projection.
//! - [`metrics`]: NDCG/MAP/MRR/Recall and the group fairness gap.
//! - [`query_filter`]: lexical entity / gendered query detection and group
//!   construction from manual annotations.
//! - [`analysis`]: correlations, seed rankings, distributions and anisotropy.
//! - [`synth`]: deterministic synthetic fixtures.

pub mod analysis;
pub mod inlp;
pub mod mdl;
pub mod metrics;
pub mod numerics;
pub mod query_filter;
pub mod retrieval;
pub mod seed;
pub mod store;
pub mod synth;

/// Toolkit version embedded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
