//! Memory-efficient multi-vector retrieval with SSD-resident re-ranking embeddings.
//!
//! The first-stage IVF index over CLS vectors stays in memory
//! ([`ivf`]); per-document token embeddings live in a packed file
//! ([`store`]). The [`pipeline`] overlaps reads of likely re-ranking
//! candidates with the tail of the ANN scan so that only the misses are
//! fetched on the critical path.

pub mod bandwidth;
pub mod corpus;
pub mod error;
pub mod ivf;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod store;
pub mod types;

pub use error::{Error, Result};
pub use ivf::{begin_search, CandidateList, IvfIndex, SearchCursor};
pub use metrics::{mrr_at_k, recall_at_k, Qrels};
pub use pipeline::{run_batch, run_query, BatchStats, PipelineConfig, QueryStats};
pub use scoring::{aggregate_score, maxsim_score, rank};
pub use store::{
    build_store, open_store, EmbeddingSource, ReadMode, StoreHandle, StoreManifest, StoreOptions,
};
pub use types::{
    ClsVector, DocId, EmbeddingMatrix, QueryEmbedding, QueryId, RankedList, ScoredDoc, TokenMatrix,
};
