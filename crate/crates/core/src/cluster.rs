//! DBSCAN over a precomputed distance matrix, and the embedding → pseudo label
//! clustering pass built on top of it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{jaccard_distance, k_reciprocal_sets, knn, pairwise_cosine_distance, DistanceMatrix};
use crate::linalg::Matrix;

pub const OUTLIER: i32 = -1;

/// Pseudo identities: `-1` for outliers, otherwise `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn num_outliers(&self) -> usize {
        self.labels.iter().filter(|&&l| l == OUTLIER).count()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Indices of non-outlier samples.
    pub fn clustered(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l >= 0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Density clustering with a fixed traversal order.
///
/// A point is core when at least `min_pts` *other* points lie within `eps`.
/// Cores are linked when within `eps` of each other; each linked component is a
/// cluster, numbered by its lowest-index core. A non-core point within `eps` of
/// some core joins the cluster of the lowest-index such core; everything else is
/// an outlier.
pub fn dbscan(dm: &DistanceMatrix, eps: f64, min_pts: usize) -> Result<ClusterAssignment> {
    if !(eps >= 0.0) {
        return Err(Error::NegativeEps(eps));
    }
    if min_pts == 0 {
        return Err(Error::InvalidParameter("min_pts must be positive".into()));
    }
    let n = dm.n();
    let mut row = vec![0.0; n];
    let neighbors: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            dm.row_into(i, &mut row);
            row.iter()
                .enumerate()
                .filter(|&(j, &d)| j != i && d <= eps)
                .map(|(j, _)| j as u32)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![OUTLIER; n];
    let mut k = 0usize;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !core[seed] || labels[seed] != OUTLIER {
            continue;
        }
        let id = k as i32;
        k += 1;
        labels[seed] = id;
        queue.push_back(seed);
        while let Some(c) = queue.pop_front() {
            for &j in &neighbors[c] {
                let j = j as usize;
                if core[j] && labels[j] == OUTLIER {
                    labels[j] = id;
                    queue.push_back(j);
                }
            }
        }
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        // Neighbour lists are ascending, so the first core is the lowest-index one.
        if let Some(&c) = neighbors[i].iter().find(|&&j| core[j as usize]) {
            labels[i] = labels[c as usize];
        }
    }
    Ok(ClusterAssignment { labels, k })
}

/// Settings for one clustering pass over embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub k: usize,
    pub eps: f64,
    pub min_pts: usize,
    pub include_self: bool,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self { k: 30, eps: 0.7, min_pts: 4, include_self: true }
    }
}

/// Cosine distance → kNN → k-reciprocal sets → Jaccard distance → DBSCAN.
///
/// `k` is lowered to `n - 1` for pools smaller than `k + 1`. The cosine matrix is
/// dropped before the Jaccard matrix is allocated.
pub fn cluster_embeddings(embeddings: &Matrix, params: &ClusterParams) -> Result<ClusterAssignment> {
    let n = embeddings.rows();
    if n < 2 {
        return Ok(ClusterAssignment { labels: vec![OUTLIER; n], k: 0 });
    }
    let k = params.k.min(n - 1);
    let lists = {
        let cosine = pairwise_cosine_distance(embeddings)?;
        knn(&cosine, k)?
    };
    let reciprocal = k_reciprocal_sets(&lists);
    let jaccard = jaccard_distance(&reciprocal, params.include_self);
    dbscan(&jaccard, params.eps, params.min_pts)
}
