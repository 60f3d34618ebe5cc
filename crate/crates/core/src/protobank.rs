//! Epoch-wise prototype memory: one row per cluster, initialized from cluster
//! means, moved by momentum during the clustered phase and used as a frozen
//! soft annotator afterwards.

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::linalg::{dot, normalize, softmax_into, Matrix};

pub const DEFAULT_MOMENTUM: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    weights: Matrix,
    momentum: f64,
    renormalize: bool,
}

/// Likelihood over the `K` prototypes; lies in the open simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel(pub Vec<f64>);

impl SoftLabel {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

impl PrototypeBank {
    /// Rows are the per-cluster means of `embeddings` (outliers ignored),
    /// renormalized to unit length when `renormalize` is set.
    pub fn init_from_clusters(
        embeddings: &Matrix,
        assignment: &ClusterAssignment,
        momentum: f64,
        renormalize: bool,
    ) -> Result<Self> {
        if assignment.k == 0 {
            return Err(Error::NoClusters);
        }
        if assignment.labels.len() != embeddings.rows() {
            return Err(Error::DimensionMismatch {
                expected: embeddings.rows(),
                found: assignment.labels.len(),
            });
        }
        check_momentum(momentum)?;
        let d = embeddings.cols();
        let mut weights = Matrix::zeros(assignment.k, d);
        let mut counts = vec![0usize; assignment.k];
        for (row, &label) in embeddings.iter_rows().zip(&assignment.labels) {
            if label < 0 {
                continue;
            }
            let k = label as usize;
            counts[k] += 1;
            for (w, x) in weights.row_mut(k).iter_mut().zip(row) {
                *w += x;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                return Err(Error::InvalidParameter(format!("cluster {k} has no members")));
            }
            let row = weights.row_mut(k);
            row.iter_mut().for_each(|w| *w /= c as f64);
            if renormalize {
                normalize(row);
            }
        }
        Ok(Self { weights, momentum, renormalize })
    }

    pub fn from_weights(weights: Matrix, momentum: f64, renormalize: bool) -> Result<Self> {
        check_momentum(momentum)?;
        if weights.rows() == 0 {
            return Err(Error::NoClusters);
        }
        Ok(Self { weights, momentum, renormalize })
    }

    pub fn k(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn prototype(&self, k: usize) -> &[f64] {
        self.weights.row(k)
    }

    /// `w_k ← m·w_k + (1-m)·mean(batch members of k)` for each class present in
    /// the batch; absent classes are untouched.
    pub fn momentum_update(&mut self, batch: &[&[f64]], labels: &[usize]) -> Result<()> {
        if batch.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: batch.len(), found: labels.len() });
        }
        let k = self.k();
        let d = self.dim();
        let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; k];
        for (x, &label) in batch.iter().zip(labels) {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, k });
            }
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: x.len() });
            }
            let (sum, count) = sums[label].get_or_insert_with(|| (vec![0.0; d], 0));
            sum.iter_mut().zip(x.iter()).for_each(|(s, v)| *s += v);
            *count += 1;
        }
        let m = self.momentum;
        for (label, entry) in sums.into_iter().enumerate() {
            let Some((sum, count)) = entry else { continue };
            let row = self.weights.row_mut(label);
            for (w, s) in row.iter_mut().zip(&sum) {
                *w = m * *w + (1.0 - m) * (s / count as f64);
            }
            if self.renormalize {
                normalize(row);
            }
        }
        Ok(())
    }

    /// Dot products `w_kᵀ f`.
    pub fn logits(&self, f: &[f64]) -> Vec<f64> {
        self.weights.iter_rows().map(|w| dot(w, f)).collect()
    }

    /// Softmax of the prototype dot products, without temperature.
    pub fn soft_label(&self, f: &[f64]) -> SoftLabel {
        let logits = self.logits(f);
        let mut y = vec![0.0; logits.len()];
        softmax_into(&logits, &mut y);
        SoftLabel(y)
    }
}

fn check_momentum(m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidParameter(format!("momentum must be in [0, 1], got {m}")));
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn harden(y: &SoftLabel) -> usize {
    let mut best = 0;
    for (i, &v) in y.0.iter().enumerate().skip(1) {
        if v > y.0[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::softmax;

    fn bank(rows: &[Vec<f64>], m: f64) -> PrototypeBank {
        PrototypeBank::from_weights(Matrix::from_rows(rows), m, true).unwrap()
    }

    #[test]
    fn init_two_vector_mean() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![5.0, 5.0]]);
        let a = ClusterAssignment { labels: vec![0, 0, -1], k: 1 };
        let b = PrototypeBank::init_from_clusters(&e, &a, 0.2, true).unwrap();
        let s = 0.5f64.sqrt();
        assert!((b.prototype(0)[0] - s).abs() < 1e-15);
        assert!((b.prototype(0)[1] - s).abs() < 1e-15);

        let raw = PrototypeBank::init_from_clusters(&e, &a, 0.2, false).unwrap();
        assert_eq!(raw.prototype(0), &[0.5, 0.5]);
    }

    #[test]
    fn init_singleton_and_empty() {
        let e = Matrix::from_rows(&[vec![0.6, 0.8], vec![1.0, 0.0]]);
        let a = ClusterAssignment { labels: vec![-1, 0], k: 1 };
        let b = PrototypeBank::init_from_clusters(&e, &a, 0.2, true).unwrap();
        assert_eq!(b.prototype(0), &[1.0, 0.0]);
        let none = ClusterAssignment { labels: vec![-1, -1], k: 0 };
        assert!(matches!(
            PrototypeBank::init_from_clusters(&e, &none, 0.2, true),
            Err(Error::NoClusters)
        ));
    }

    #[test]
    fn momentum_update_closed_form() {
        let mut b = bank(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.2);
        b.momentum_update(&[&[0.0, 1.0]], &[0]).unwrap();
        let w = b.prototype(0);
        assert!((w[0] - 0.242_535_625).abs() < 1e-9);
        assert!((w[1] - 0.970_142_500).abs() < 1e-9);
        // class 1 absent from the batch
        assert_eq!(b.prototype(1), &[0.0, 1.0]);
    }

    #[test]
    fn momentum_fixed_point_and_range() {
        let mut b = bank(&[vec![0.6, 0.8]], 0.2);
        b.momentum_update(&[&[0.6, 0.8], &[0.6, 0.8]], &[0, 0]).unwrap();
        assert!((b.prototype(0)[0] - 0.6).abs() < 1e-15);
        assert!((b.prototype(0)[1] - 0.8).abs() < 1e-15);
        assert!(matches!(
            b.momentum_update(&[&[1.0, 0.0]], &[3]),
            Err(Error::LabelOutOfRange { label: 3, k: 1 })
        ));
    }

    #[test]
    fn momentum_one_freezes_prototypes() {
        let mut b = bank(&[vec![1.0, 0.0]], 1.0);
        b.momentum_update(&[&[0.0, 1.0]], &[0]).unwrap();
        assert_eq!(b.prototype(0), &[1.0, 0.0]);
    }

    #[test]
    fn soft_label_closed_forms() {
        let b = bank(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.2);
        let y = b.soft_label(&[0.0, 0.0]);
        assert_eq!(y.0, vec![0.5, 0.5]);
        // dots (ln 2, 0)
        let y = b.soft_label(&[2f64.ln(), 0.0]);
        assert!((y.0[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((y.0[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn harden_rules() {
        assert_eq!(harden(&SoftLabel(vec![0.1, 0.7, 0.2])), 1);
        assert_eq!(harden(&SoftLabel(vec![0.5, 0.5])), 0);
        let z = [0.3, -1.0, 2.5, 2.4];
        for tau in [0.01, 0.5, 1.0, 7.0] {
            let scaled: Vec<f64> = z.iter().map(|v| v / tau).collect();
            assert_eq!(harden(&SoftLabel(softmax(&scaled))), 2);
        }
    }
}
