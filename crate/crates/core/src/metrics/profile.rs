use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_embeddings, ClusterAssignment, ClusterParams};
use crate::error::Result;
use crate::geometry::entries_allocated;
use crate::linalg::Matrix;

/// Bytes per pairwise entry in the analytic memory model.
pub const BYTES_PER_ENTRY: u64 = 8;

/// Cost of clustering passes: analytic pairwise-entry count and wall time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub n_points: usize,
    /// Pairwise entries allocated by one pass (cosine + Jaccard).
    pub distance_entries: u64,
    pub peak_bytes: u64,
    /// Median wall time of the measured passes.
    pub wall_seconds: f64,
    pub runs: Vec<f64>,
}

impl CostProfile {
    pub fn analytic_entries(n: usize) -> u64 {
        2 * (n as u64) * (n as u64)
    }
}

/// Times one clustering pass and reads the entry counter around it.
pub fn timed_clustering(embeddings: &Matrix, params: &ClusterParams) -> Result<(ClusterAssignment, u64, f64)> {
    let before = entries_allocated();
    let start = Instant::now();
    let assignment = cluster_embeddings(embeddings, params)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok((assignment, entries_allocated() - before, seconds))
}

/// Runs the clustering pass `repeats` times (at least once) and reports the
/// entry count of a single pass with the median wall time.
pub fn profile_clustering(embeddings: &Matrix, params: &ClusterParams, repeats: usize) -> Result<CostProfile> {
    let mut runs = Vec::with_capacity(repeats.max(1));
    let mut entries = 0;
    for _ in 0..repeats.max(1) {
        let (_, e, s) = timed_clustering(embeddings, params)?;
        entries = e;
        runs.push(s);
    }
    Ok(CostProfile {
        n_points: embeddings.rows(),
        distance_entries: entries,
        peak_bytes: entries * BYTES_PER_ENTRY,
        wall_seconds: median(&runs),
        runs,
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
