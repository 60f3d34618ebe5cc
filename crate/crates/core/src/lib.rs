//! Meta clustering learning for unsupervised re-identification, at desk scale.
//!
//! Only a fraction of the unlabeled pool is clustered each epoch. The cluster
//! centroids become a prototype memory that trains the encoder contrastively,
//! then acts as a soft annotator for the unclustered remainder. Clustering cost,
//! which grows with the square of the clustered set, shrinks accordingly.
//!
//! Module map:
//!
//! * [`data`]: synthetic identity pools and the `MCLF` feature format
//! * [`geometry`]: cosine distances, kNN, k-reciprocal sets, Jaccard distance
//! * [`cluster`]: DBSCAN over a precomputed distance matrix
//! * [`model`]: tanh-MLP encoder, feature-space augmentation, Adam
//! * [`protobank`]: prototype memory, soft labels
//! * [`losses`]: InfoNCE, siamese consistency, soft-weighted triplet
//! * [`trainer`]: epoch split, both phases, regimes and ablations
//! * [`metrics`]: mAP/CMC, cluster quality, cost profiling

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cluster;
pub mod data;
mod error;
pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod protobank;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use cluster::{cluster_embeddings, dbscan, ClusterAssignment, ClusterParams};
pub use data::{generate_pool, read_features, write_features, GenSpec, Pool, RawSample};
pub use error::{Error, Result};
pub use geometry::{DistanceKind, DistanceMatrix, NeighborSets};
pub use linalg::Matrix;
pub use losses::{LossValue, TripletWeighting};
pub use metrics::{CostProfile, RetrievalMetrics};
pub use model::{AdamConfig, EncoderDims, EncoderInit, EncoderParams};
pub use protobank::{harden, PrototypeBank, SoftLabel};
pub use trainer::{train, Regime, TrainConfig, TrainOutcome, TrainReport};
