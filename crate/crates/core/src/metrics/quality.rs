use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Pair-counting agreement between a predicted partition and ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ari: f64,
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Negative predicted labels are outliers and count as singleton clusters.
/// Ratios with an empty denominator are reported as 1.
pub fn clustering_quality(predicted: &[i64], truth: &[u32]) -> ClusterQuality {
    assert_eq!(predicted.len(), truth.len(), "label length mismatch");
    let n = predicted.len();
    // Outliers become unique negative ids so they never share a cluster.
    let keyed = |i: usize| -> i64 {
        let l = predicted[i];
        if l < 0 {
            -(i as i64) - 1
        } else {
            l
        }
    };
    let mut pred_sizes: HashMap<i64, u64> = HashMap::new();
    let mut true_sizes: HashMap<u32, u64> = HashMap::new();
    let mut joint: HashMap<(i64, u32), u64> = HashMap::new();
    for (i, &t) in truth.iter().enumerate().take(n) {
        let p = keyed(i);
        *pred_sizes.entry(p).or_default() += 1;
        *true_sizes.entry(t).or_default() += 1;
        *joint.entry((p, t)).or_default() += 1;
    }
    let same_pred: f64 = pred_sizes.values().map(|&c| pairs(c)).sum();
    let same_true: f64 = true_sizes.values().map(|&c| pairs(c)).sum();
    let both: f64 = joint.values().map(|&c| pairs(c)).sum();

    let ratio = |num: f64, den: f64| if den == 0.0 { 1.0 } else { num / den };
    let precision = ratio(both, same_pred);
    let recall = ratio(both, same_true);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let total = pairs(n as u64);
    let expected = if total == 0.0 { 0.0 } else { same_pred * same_true / total };
    let max_index = 0.5 * (same_pred + same_true);
    let ari = if max_index == expected {
        1.0
    } else {
        (both - expected) / (max_index - expected)
    };
    ClusterQuality { precision, recall, f1, ari }
}

/// Fraction of same-pseudo-label pairs that share a ground-truth identity.
/// Negative labels are unlabeled and pair with nothing. `None` when no pairs.
pub fn correct_pair_fraction(pseudo: &[i64], truth: &[u32]) -> Option<f64> {
    assert_eq!(pseudo.len(), truth.len(), "label length mismatch");
    let mut sizes: HashMap<i64, u64> = HashMap::new();
    let mut joint: HashMap<(i64, u32), u64> = HashMap::new();
    for (&p, &t) in pseudo.iter().zip(truth) {
        if p < 0 {
            continue;
        }
        *sizes.entry(p).or_default() += 1;
        *joint.entry((p, t)).or_default() += 1;
    }
    let same: f64 = sizes.values().map(|&c| pairs(c)).sum();
    if same == 0.0 {
        return None;
    }
    Some(joint.values().map(|&c| pairs(c)).sum::<f64>() / same)
}

/// Per-epoch correct-pair fractions, one entry per `(pseudo, truth)` record.
pub fn labeling_histogram(records: &[(Vec<i64>, Vec<u32>)]) -> Vec<Option<f64>> {
    records.iter().map(|(p, t)| correct_pair_fraction(p, t)).collect()
}
