//! Clustering-free polishing of the encoder on the unclustered subsets, using
//! the frozen prototype bank as a soft annotator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::losses::{siamese_consistency, soft_weighted_triplet, LossValue};
use crate::model::{adam_step, augment, AdamState, EncoderParams, Forward};
use crate::protobank::{harden, PrototypeBank};

use super::config::TrainConfig;
use super::sampling::pk_sample;
use super::accumulate_gradients;

/// Hardened phase-2 identity. Two samples share an identity only when both the
/// subset and the prototype index match, so subsets never share labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Phase2Identity {
    pub subset_index: usize,
    pub proto_index: usize,
}

impl Phase2Identity {
    /// Grouping key; with a shared label space the subset is ignored.
    pub fn key(self, shared_label_space: bool) -> Phase2Identity {
        if shared_label_space {
            Phase2Identity { subset_index: 0, ..self }
        } else {
            self
        }
    }
}

/// One unclustered subset: its index in the epoch plan (`>= 1`) and raw rows.
#[derive(Debug, Clone)]
pub struct Phase2Subset {
    pub subset_index: usize,
    pub raw: Matrix,
}

#[derive(Debug, Clone, Default)]
pub struct Phase2Outcome {
    /// Total phase-2 loss per batch.
    pub loss_trace: Vec<f64>,
    pub sc_trace: Vec<f64>,
    pub tri_trace: Vec<f64>,
    /// Hardened identity of every sample, per subset in input order.
    pub identities: Vec<Vec<Phase2Identity>>,
    pub samples: usize,
    pub triplet_skipped: bool,
}

/// For each anchor, the farthest same-key sample and the nearest other-key
/// sample. Anchors lacking either are skipped.
pub fn batch_hard_triplets<K: PartialEq>(embeddings: &[&[f64]], keys: &[K]) -> Vec<(usize, usize, usize)> {
    let n = embeddings.len();
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut pos: Option<(f64, usize)> = None;
        let mut neg: Option<(f64, usize)> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = squared_distance(embeddings[a], embeddings[j]);
            if keys[j] == keys[a] {
                if pos.is_none_or(|(best, _)| d > best) {
                    pos = Some((d, j));
                }
            } else if neg.is_none_or(|(best, _)| d < best) {
                neg = Some((d, j));
            }
        }
        if let (Some((_, p)), Some((_, ng))) = (pos, neg) {
            out.push((a, p, ng));
        }
    }
    out
}

pub fn run_phase2_epoch<R: Rng>(
    subsets: &[Phase2Subset],
    bank: &PrototypeBank,
    params: &mut EncoderParams,
    optimizer: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Phase2Outcome> {
    let shared = cfg.ablation.shared_label_space;
    let mut outcome = Phase2Outcome::default();

    // Proxy annotation with the epoch's frozen bank.
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut keys: Vec<Phase2Identity> = Vec::new();
    for subset in subsets {
        let emb = params.encode_all(&subset.raw)?;
        let ids: Vec<Phase2Identity> = emb
            .iter_rows()
            .map(|f| Phase2Identity {
                subset_index: subset.subset_index,
                proto_index: harden(&bank.soft_label(f)),
            })
            .collect();
        for (i, id) in ids.iter().enumerate() {
            rows.push(subset.raw.row(i));
            keys.push(id.key(shared));
        }
        outcome.identities.push(ids);
    }
    outcome.samples = rows.len();
    if rows.is_empty() {
        return Ok(outcome);
    }

    let use_triplet = bank.k() >= 2 && cfg.lambda > 0.0;
    if bank.k() < 2 {
        log::warn!("prototype bank has {} rows; skipping the triplet term", bank.k());
        outcome.triplet_skipped = true;
    }
    let distinct = {
        let mut k = keys.clone();
        k.sort_unstable();
        k.dedup();
        k.len()
    };
    let p = cfg.phase2_batch_ids.min(distinct);
    let instances = cfg.phase2_batch_instances;
    let n_batches = rows.len().div_ceil(p * instances);
    let aug = cfg.augment;

    for _ in 0..n_batches {
        let picks = pk_sample(&keys, p, instances, rng)?;
        let b = picks.len();
        // Views s for rows 0..b, views t for rows b..2b.
        let mut inputs = Vec::with_capacity(2 * b);
        for _view in 0..2 {
            for &i in &picks {
                inputs.push(augment(rows[i], rng, aug.sigma, aug.drop_p)?);
            }
        }
        let forwards: Vec<Forward> = inputs.iter().map(|x| params.forward(x)).collect::<Result<_>>()?;
        let dim = forwards[0].embedding.len();
        let mut grads_out = vec![vec![0.0; dim]; 2 * b];

        let mut sc_value = 0.0;
        if !cfg.ablation.no_sc {
            for j in 0..b {
                let l = siamese_consistency(&forwards[j].embedding, &forwards[b + j].embedding, bank);
                sc_value += l.value / b as f64;
                add_scaled(&mut grads_out[j], l.grad(0), 1.0 / b as f64);
                add_scaled(&mut grads_out[b + j], l.grad(1), 1.0 / b as f64);
            }
        }

        let mut tri_value = 0.0;
        if use_triplet {
            let emb: Vec<&[f64]> = forwards.iter().map(|f| f.embedding.as_slice()).collect();
            let view_keys: Vec<Phase2Identity> = (0..2 * b).map(|r| keys[picks[r % b]]).collect();
            let triplets = batch_hard_triplets(&emb, &view_keys);
            let scale = cfg.lambda / triplets.len().max(1) as f64;
            for &(a, pos, neg) in &triplets {
                let l: LossValue =
                    soft_weighted_triplet(emb[a], emb[pos], emb[neg], cfg.margin, cfg.ablation.triplet_weighting);
                tri_value += l.value / triplets.len() as f64;
                add_scaled(&mut grads_out[a], l.grad(0), scale);
                add_scaled(&mut grads_out[pos], l.grad(1), scale);
                add_scaled(&mut grads_out[neg], l.grad(2), scale);
            }
        }

        let total = sc_value + cfg.lambda * tri_value;
        if !total.is_finite() {
            return Err(Error::Numeric(format!("phase-2 loss is {total}")));
        }
        let grads = accumulate_gradients(params, &inputs, &forwards, &grads_out);
        adam_step(params, &grads, optimizer, lr)?;
        outcome.loss_trace.push(total);
        outcome.sc_trace.push(sc_value);
        outcome.tri_trace.push(tri_value);
    }
    Ok(outcome)
}

fn add_scaled(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_argmax_different_subset_is_not_positive() {
        let a = Phase2Identity { subset_index: 1, proto_index: 3 };
        let b = Phase2Identity { subset_index: 2, proto_index: 3 };
        assert_ne!(a.key(false), b.key(false));
        assert_eq!(a.key(true), b.key(true));

        let e0 = [1.0, 0.0];
        let e1 = [0.9, 0.1];
        let e2 = [0.0, 1.0];
        let emb: Vec<&[f64]> = vec![&e0, &e1, &e2];
        // sample 1 shares the prototype but sits in another subset.
        let keys = [a, b, Phase2Identity { subset_index: 1, proto_index: 0 }];
        let t = batch_hard_triplets(&emb, &keys);
        assert!(t.iter().all(|&(x, p, _)| keys[x] == keys[p]));
        assert!(t.iter().all(|&(x, p, _)| !(x == 0 && p == 1)));
    }

    #[test]
    fn batch_hard_picks_extremes() {
        let pts: Vec<[f64; 1]> = vec![[0.0], [1.0], [3.0], [3.5], [10.0]];
        let emb: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let keys = [0, 0, 0, 1, 1];
        let t = batch_hard_triplets(&emb, &keys);
        // anchor 0: hardest positive 2 (d=9), hardest negative 3 (d=12.25)
        assert_eq!(t[0], (0, 2, 3));
        // anchor 3: positive 4, negative 2
        assert_eq!(t[3], (3, 4, 2));
    }
}
