//! Pairwise distances, kNN lists, k-reciprocal sets and the Jaccard distance
//! used for density clustering.
//!
//! Every [`DistanceMatrix`] constructed on a thread adds `n²` to that thread's
//! entry counter (see [`entries_allocated`]). The count is the logical size of
//! the matrix, which is what the cost profiler reports; the storage itself only
//! keeps the strict upper triangle.

use std::cell::Cell;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::encode_rows;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

thread_local! {
    static ENTRIES: Cell<u64> = const { Cell::new(0) };
}

/// Pairwise entries allocated on the current thread since the last reset.
pub fn entries_allocated() -> u64 {
    ENTRIES.with(Cell::get)
}

pub fn reset_entry_counter() {
    ENTRIES.with(|c| c.set(0));
}

fn record_entries(n: usize) {
    let add = (n as u64) * (n as u64);
    ENTRIES.with(|c| c.set(c.get() + add));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Cosine,
    Jaccard,
    /// Built directly from a caller-supplied function.
    Custom,
}

/// Symmetric `n × n` distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    kind: DistanceKind,
    /// Strict upper triangle, row by row.
    upper: Vec<f64>,
}

#[inline]
fn row_start(n: usize, i: usize) -> usize {
    // Σ_{r<i} (n - 1 - r)
    i * (2 * n - i - 1) / 2
}

impl DistanceMatrix {
    fn with_fill(n: usize, kind: DistanceKind, fill: f64) -> Self {
        record_entries(n);
        let len = n * n.saturating_sub(1) / 2;
        Self { n, kind, upper: vec![fill; len] }
    }

    /// Builds a matrix from `f(i, j)` for `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::with_fill(n, DistanceKind::Custom, 0.0);
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                m.upper[idx] = f(i, j);
                idx += 1;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    /// Logical entry count, `n²`.
    pub fn entry_count(&self) -> u64 {
        (self.n as u64) * (self.n as u64)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 0.0,
            Less => self.upper[row_start(self.n, i) + (j - i - 1)],
            Greater => self.upper[row_start(self.n, j) + (i - j - 1)],
        }
    }

    /// Writes row `i` into `out` (length `n`).
    pub fn row_into(&self, i: usize, out: &mut [f64]) {
        let n = self.n;
        assert_eq!(out.len(), n);
        for (j, o) in out.iter_mut().enumerate().take(i) {
            *o = self.upper[row_start(n, j) + (i - j - 1)];
        }
        out[i] = 0.0;
        let start = row_start(n, i);
        out[i + 1..].copy_from_slice(&self.upper[start..start + (n - i - 1)]);
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.row_into(i, &mut out);
        out
    }

    /// Mutable views of each row's strict-upper segment, for parallel filling.
    fn upper_rows_mut(&mut self) -> Vec<&mut [f64]> {
        let n = self.n;
        let mut rest: &mut [f64] = &mut self.upper;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let (head, tail) = rest.split_at_mut(n - i - 1);
            rows.push(head);
            rest = tail;
        }
        rows
    }

    /// Dumps the full matrix as an `MCLF` file (`n` rows of `n` f32 values).
    pub fn write_mclf(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<f32>> = (0..self.n)
            .map(|i| self.row(i).into_iter().map(|v| v as f32).collect())
            .collect();
        let bytes = encode_rows(self.n, self.n.max(1), rows.iter().map(Vec::as_slice), None);
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

/// Cosine distances `1 - e_i·e_j` between unit-norm rows, clamped to `[0, 2]`.
pub fn pairwise_cosine_distance(embeddings: &Matrix) -> Result<DistanceMatrix> {
    for (i, row) in embeddings.iter_rows().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding row {i}")));
        }
        let norm = dot(row, row).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "embedding row {i} has norm {norm}, expected unit norm"
            )));
        }
    }
    let n = embeddings.rows();
    let mut dm = DistanceMatrix::with_fill(n, DistanceKind::Cosine, 0.0);
    dm.upper_rows_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, seg)| {
            let ei = embeddings.row(i);
            for (off, out) in seg.iter_mut().enumerate() {
                let j = i + 1 + off;
                *out = (1.0 - dot(ei, embeddings.row(j))).clamp(0.0, 2.0);
            }
        });
    Ok(dm)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets {
    pub k: usize,
    /// Per sample: the `k` nearest other samples, nearest first.
    pub knn: Vec<Vec<u32>>,
    /// Per sample: mutual kNN members, ascending.
    pub reciprocal: Vec<Vec<u32>>,
}

impl NeighborSets {
    pub fn build(dm: &DistanceMatrix, k: usize) -> Result<Self> {
        let knn = knn(dm, k)?;
        let reciprocal = k_reciprocal_sets(&knn);
        Ok(Self { k, knn, reciprocal })
    }
}

/// Indices of the `k` smallest off-diagonal distances per row, ties broken by
/// the lower index.
pub fn knn(dm: &DistanceMatrix, k: usize) -> Result<Vec<Vec<u32>>> {
    let n = dm.n();
    if k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let lists = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], Vec::with_capacity(n)),
            |(row, cand): &mut (Vec<f64>, Vec<(f64, u32)>), i| {
                dm.row_into(i, row);
                cand.clear();
                cand.extend(
                    row.iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(j, &d)| (d, j as u32)),
                );
                let by_dist = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if k > 0 && k < cand.len() {
                    cand.select_nth_unstable_by(k - 1, by_dist);
                }
                let head = &mut cand[..k];
                head.sort_unstable_by(by_dist);
                head.iter().map(|&(_, j)| j).collect::<Vec<u32>>()
            },
        )
        .collect();
    Ok(lists)
}

/// `j ∈ R(i)` iff `j ∈ knn(i)` and `i ∈ knn(j)`. Sets are returned ascending.
pub fn k_reciprocal_sets(knn: &[Vec<u32>]) -> Vec<Vec<u32>> {
    knn.iter()
        .enumerate()
        .map(|(i, list)| {
            let mut set: Vec<u32> = list
                .iter()
                .copied()
                .filter(|&j| j as usize != i && knn[j as usize].contains(&(i as u32)))
                .collect();
            set.sort_unstable();
            set.dedup();
            set
        })
        .collect()
}

/// Jaccard distance `1 - |S_i ∩ S_j| / |S_i ∪ S_j|` between neighbour sets.
///
/// With `include_self`, `S_i = R(i) ∪ {i}`. Pairs with two empty sets get
/// distance 1, and the diagonal is 0.
pub fn jaccard_distance(reciprocal: &[Vec<u32>], include_self: bool) -> DistanceMatrix {
    let n = reciprocal.len();
    let sets: Vec<Vec<u32>> = reciprocal
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut s = r.clone();
            if include_self {
                s.push(i as u32);
            }
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();

    // Inverted index: element -> sets containing it.
    let mut containing: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, s) in sets.iter().enumerate() {
        for &m in s {
            containing[m as usize].push(i as u32);
        }
    }

    let mut dm = DistanceMatrix::with_fill(n, DistanceKind::Jaccard, 1.0);
    dm.upper_rows_mut()
        .into_par_iter()
        .enumerate()
        .for_each_init(
            || (vec![0u32; n], Vec::new()),
            |(counts, touched): &mut (Vec<u32>, Vec<usize>), (i, seg)| {
                for &m in &sets[i] {
                    for &j in &containing[m as usize] {
                        let j = j as usize;
                        if j > i {
                            if counts[j] == 0 {
                                touched.push(j);
                            }
                            counts[j] += 1;
                        }
                    }
                }
                for &j in touched.iter() {
                    let inter = counts[j] as f64;
                    let union = (sets[i].len() + sets[j].len()) as f64 - inter;
                    seg[j - i - 1] = 1.0 - inter / union;
                    counts[j] = 0;
                }
                touched.clear();
            },
        );
    dm
}
