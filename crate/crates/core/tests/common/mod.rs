//! Reference implementations shared by the integration suites. They are written
//! for clarity, not speed, and share no code with the crate under test.
#![allow(dead_code)]

use mcl_core::geometry::DistanceMatrix;
use rand::Rng;

/// Central finite-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; 0 when both vanish below
/// `floor`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < floor {
        diff / floor
    } else {
        diff / scale
    }
}

pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let n = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Density clustering by explicit transitive closure over the core graph:
/// O(n³) Warshall, then the lowest-index-core border rule. Labels are arbitrary;
/// compare with [`same_partition`].
pub fn dbscan_reference(d: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = d.len();
    let within = |i: usize, j: usize| i != j && d[i][j] <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_pts).collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        if !core[i] {
            continue;
        }
        reach[i][i] = true;
        for j in 0..n {
            if core[j] && within(i, j) {
                reach[i][j] = true;
            }
        }
    }
    for m in 0..n {
        for i in 0..n {
            if !reach[i][m] {
                continue;
            }
            let row_m = reach[m].clone();
            for (r, via) in reach[i].iter_mut().zip(row_m) {
                *r |= via;
            }
        }
    }
    let mut labels = vec![-1i64; n];
    for i in 0..n {
        if core[i] {
            // Label a core by the smallest core it reaches.
            labels[i] = (0..n).find(|&j| reach[i][j]).unwrap() as i64;
        }
    }
    for i in 0..n {
        if !core[i] {
            if let Some(c) = (0..n).find(|&j| core[j] && within(i, j)) {
                labels[i] = labels[c];
            }
        }
    }
    labels
}

/// Equal up to relabelling of non-negative labels, with identical outlier sets.
pub fn same_partition(a: &[i64], b: &[i64]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x < 0) != (y < 0) {
            return false;
        }
        if x < 0 {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

pub fn dense(dm: &DistanceMatrix) -> Vec<Vec<f64>> {
    (0..dm.n()).map(|i| dm.row(i)).collect()
}

/// kNN by full sort of each row on `(distance, index)`, self excluded.
pub fn knn_reference(d: &[Vec<f64>], k: usize) -> Vec<Vec<u32>> {
    (0..d.len())
        .map(|i| {
            let mut idx: Vec<usize> = (0..d.len()).filter(|&j| j != i).collect();
            idx.sort_by(|&a, &b| d[i][a].partial_cmp(&d[i][b]).unwrap().then(a.cmp(&b)));
            idx.into_iter().take(k).map(|j| j as u32).collect()
        })
        .collect()
}

/// `j ∈ R(i)` iff each is in the other's list.
pub fn reciprocal_reference(lists: &[Vec<u32>]) -> Vec<Vec<u32>> {
    (0..lists.len())
        .map(|i| {
            let mut r: Vec<u32> = lists[i]
                .iter()
                .copied()
                .filter(|&j| lists[j as usize].contains(&(i as u32)))
                .collect();
            r.sort_unstable();
            r
        })
        .collect()
}

/// Dense Jaccard distance by explicit set operations.
pub fn jaccard_reference(sets: &[Vec<u32>], include_self: bool) -> Vec<Vec<f64>> {
    use std::collections::BTreeSet;
    let sets: Vec<BTreeSet<u32>> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut b: BTreeSet<u32> = s.iter().copied().collect();
            if include_self {
                b.insert(i as u32);
            }
            b
        })
        .collect();
    let n = sets.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let inter = sets[i].intersection(&sets[j]).count() as f64;
            let union = sets[i].union(&sets[j]).count() as f64;
            out[i][j] = if union == 0.0 { 1.0 } else { 1.0 - inter / union };
        }
    }
    out
}

/// ARI from the contingency table, written independently of the crate.
pub fn ari_reference(a: &[i64], b: &[i64]) -> f64 {
    use std::collections::HashMap;
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(i64, i64), f64> = HashMap::new();
    let mut ra: HashMap<i64, f64> = HashMap::new();
    let mut rb: HashMap<i64, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let total = c2(a.len() as f64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

/// Mean AP over queries from explicit precision@k at each relevant rank.
pub fn map_reference(query: &[Vec<f64>], qids: &[u32], gallery: &[Vec<f64>], gids: &[u32]) -> (f64, f64) {
    let mut ap_total = 0.0;
    let mut rank1 = 0.0;
    for (q, &qid) in query.iter().zip(qids) {
        let mut scored: Vec<(f64, usize)> = gallery
            .iter()
            .enumerate()
            .map(|(g, v)| (1.0 - q.iter().zip(v).map(|(a, b)| a * b).sum::<f64>(), g))
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let rel: Vec<bool> = scored.iter().map(|&(_, g)| gids[g] == qid).collect();
        let total_rel = rel.iter().filter(|&&r| r).count() as f64;
        let mut ap = 0.0;
        for k in 0..rel.len() {
            if rel[k] {
                let prec = rel[..=k].iter().filter(|&&r| r).count() as f64 / (k + 1) as f64;
                ap += prec / total_rel;
            }
        }
        ap_total += ap;
        if rel[0] {
            rank1 += 1.0;
        }
    }
    (ap_total / query.len() as f64, rank1 / query.len() as f64)
}

/// xorshift64* with Box–Muller, independent of the crate's RNG stack.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (u1, u2) = (self.uniform(), self.uniform());
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub mod gradcheck;
