//! Evaluation: retrieval mAP/CMC, pair-counting cluster quality, pseudo-label
//! correctness, and the clustering cost profiler.

mod profile;
mod quality;
mod retrieval;

pub use profile::{median, profile_clustering, timed_clustering, CostProfile, BYTES_PER_ENTRY};
pub use quality::{clustering_quality, correct_pair_fraction, labeling_histogram, ClusterQuality};
pub use retrieval::{
    average_precision, compute_map_cmc, evaluate_encoder, pool_matrix, query_gallery_split, RetrievalMetrics,
};
