//! Distance-aware self-adaptive graph convolution (SAGCN) for implicit-feedback
//! top-N recommendation.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: bipartite interaction graph and its symmetric-normalized adjacency.
//! - [`distance`]: Euclidean, cosine and KL distances between layer vectors.
//! - [`propagation`]: neighborhood aggregation, distance-adaptive fusion and the
//!   mean-aggregation baseline, with an exact backward pass.
//! - [`training`]: Xavier init, BPR sampling and loss, Adam, early stopping.
//! - [`evaluation`]: full-ranking Recall@K / NDCG@K.
//! - [`io`]: ingestion, splitting, run configuration, checkpoints, sweeps.

pub mod distance;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod io;
pub mod propagation;
pub mod training;

pub use distance::{Distance, DistanceKind, LayerVectorPair};
pub use error::{Result, SagcnError};
pub use evaluation::MetricsReport;
pub use graph::{InteractionGraph, NormalizedAdjacency};
pub use propagation::{Aggregator, EmbeddingTable, FusionConfig, FusionWeights};
pub use training::{TrainConfig, TrainOutcome};
