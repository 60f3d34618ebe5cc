//! The epoch engine and its three regimes.
//!
//! * `Mcl`: every epoch the pool is reshuffled into `N` subsets. Subset 0 is
//!   clustered and trained against a fresh prototype bank; after warm-up the
//!   remaining subsets polish the encoder against the frozen bank.
//! * `All`: subset 0 is the whole pool; no polishing.
//! * `NaiveSplit`: one fixed split; subset `j` is clustered and trained alone for
//!   `epochs / N` epochs, then never seen again.
//!
//! Ground-truth identities are only read to fill the evaluation columns of the
//! report.

mod config;
mod phase1;
mod phase2;
mod sampling;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::data::Pool;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{correct_pair_fraction, evaluate_encoder, RetrievalMetrics};
use crate::model::{scheduled_lr, AdamState, EncoderParams, Forward};

pub use config::{Ablation, AugmentConfig, EncoderConfig, Regime, TrainConfig};
pub use phase1::{run_phase1_epoch, Phase1Outcome};
pub use phase2::{batch_hard_triplets, run_phase2_epoch, Phase2Identity, Phase2Outcome, Phase2Subset};
pub use sampling::{epoch_split, pk_sample, stream_rng, EpochPlan};

/// RNG stream tags.
pub const STREAM_PHASE1: u64 = 1;
pub const STREAM_PHASE2: u64 = 2;
const INIT_SEED_OFFSET: u64 = 0x5EED;

/// Samples per gradient-accumulation chunk. Fixed so that the reduction order,
/// and therefore the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

/// Sums the parameter gradients of per-sample embedding gradients.
pub(crate) fn accumulate_gradients(
    params: &EncoderParams,
    inputs: &[Vec<f64>],
    forwards: &[Forward],
    grad_embeddings: &[Vec<f64>],
) -> EncoderParams {
    let dims = params.dims();
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let partials: Vec<EncoderParams> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = EncoderParams::zeros(dims);
            for &i in chunk {
                params.backward(&inputs[i], &forwards[i], &grad_embeddings[i], &mut g);
            }
            g
        })
        .collect();
    let mut total = EncoderParams::zeros(dims);
    for p in &partials {
        total.add_scaled(1.0, p);
    }
    total
}

/// Seed of the epoch split: `base + epoch`, or `base` for a fixed split.
pub fn split_seed(cfg: &TrainConfig, epoch: usize) -> u64 {
    if cfg.ablation.fixed_split {
        cfg.seed
    } else {
        cfg.seed.wrapping_add(epoch as u64)
    }
}

pub fn initial_params(cfg: &TrainConfig, d_raw: usize) -> EncoderParams {
    EncoderParams::init(cfg.encoder.dims(d_raw), cfg.encoder.init, cfg.seed.wrapping_add(INIT_SEED_OFFSET))
}

/// Raw features of the given pool positions, as an `f64` matrix.
pub fn gather_rows(pool: &Pool, positions: &[u32]) -> Matrix {
    let mut m = Matrix::zeros(positions.len(), pool.d_raw());
    for (r, &p) in positions.iter().enumerate() {
        for (dst, &v) in m.row_mut(r).iter_mut().zip(&pool.samples()[p as usize].features) {
            *dst = v as f64;
        }
    }
    m
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Subset being consumed (NaiveSplit); 0 otherwise.
    pub stage: usize,
    pub lr: f64,
    pub phase1_samples: usize,
    pub phase2_samples: usize,
    pub clusters: usize,
    pub outliers: usize,
    pub phase1_loss: Option<f64>,
    pub phase2_loss: Option<f64>,
    pub sc_loss: Option<f64>,
    pub tri_loss: Option<f64>,
    pub phase1_batches: usize,
    pub phase2_batches: usize,
    pub distance_entries: u64,
    pub cluster_seconds: f64,
    /// Correct-pair fraction of the cluster pseudo labels.
    pub cluster_label_precision: Option<f64>,
    /// Correct-pair fraction of the hardened phase-2 identities.
    pub phase2_label_precision: Option<f64>,
    pub map: Option<f64>,
    pub rank1: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub regime: Regime,
    pub config: TrainConfig,
    pub pool_size: usize,
    pub epochs: Vec<EpochRecord>,
    pub final_metrics: Option<RetrievalMetrics>,
    pub total_distance_entries: u64,
    pub total_cluster_seconds: f64,
    /// Largest single clustering pass.
    pub peak_pass_entries: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub report: TrainReport,
}

/// Runs a full training job. When `eval` is given, held-out retrieval metrics
/// are recorded after every epoch.
pub fn train(pool: &Pool, eval: Option<&Pool>, cfg: &TrainConfig, regime: Regime) -> Result<TrainOutcome> {
    train_from(pool, eval, cfg, regime, initial_params(cfg, pool.d_raw()))
}

/// [`train`] starting from the given parameters.
pub fn train_from(
    pool: &Pool,
    eval: Option<&Pool>,
    cfg: &TrainConfig,
    regime: Regime,
    mut params: EncoderParams,
) -> Result<TrainOutcome> {
    cfg.validate_for_pool(pool.len(), regime)?;
    if params.dims() != cfg.encoder.dims(pool.d_raw()) {
        return Err(Error::InvalidConfig(format!(
            "initial parameters have shape {:?}, config expects {:?}",
            params.dims(),
            cfg.encoder.dims(pool.d_raw())
        )));
    }
    let mut optimizer = AdamState::new(&params, cfg.optimizer);
    let truth = pool.identities();
    let n_subsets = match regime {
        Regime::All => 1,
        _ => cfg.split_count,
    };
    let naive_plan = match regime {
        Regime::NaiveSplit => Some(epoch_split(pool.len(), n_subsets, cfg.seed)?),
        _ => None,
    };
    let epochs_per_stage = (cfg.epochs / n_subsets).max(1);

    let mut report = TrainReport {
        regime,
        config: cfg.clone(),
        pool_size: pool.len(),
        epochs: Vec::with_capacity(cfg.epochs),
        final_metrics: None,
        total_distance_entries: 0,
        total_cluster_seconds: 0.0,
        peak_pass_entries: 0,
    };

    for epoch in 0..cfg.epochs {
        let lr = scheduled_lr(cfg.optimizer.lr, epoch, cfg.epochs);
        let mut rec = EpochRecord { epoch, lr, ..Default::default() };
        let (plan, clustered_subset) = match &naive_plan {
            Some(plan) => {
                let stage = (epoch / epochs_per_stage).min(n_subsets - 1);
                if epoch == 0 || stage != ((epoch - 1) / epochs_per_stage).min(n_subsets - 1) {
                    log::info!(
                        "[{regime}] stage {}/{n_subsets}: subset of {} samples from epoch {epoch}",
                        stage + 1,
                        plan.subset(stage).len()
                    );
                }
                rec.stage = stage;
                (plan.clone(), stage)
            }
            None => (epoch_split(pool.len(), n_subsets, split_seed(cfg, epoch))?, 0),
        };
        let x1 = plan.subset(clustered_subset);
        rec.phase1_samples = x1.len();
        let raw1 = gather_rows(pool, x1);
        let mut rng1 = stream_rng(cfg.seed, STREAM_PHASE1, epoch);
        let phase1 = match run_phase1_epoch(&raw1, &mut params, &mut optimizer, lr, cfg, &mut rng1) {
            Ok(p) => Some(p),
            Err(Error::NoClusters) => {
                log::warn!("epoch {epoch}: clustering found no clusters; skipping the epoch");
                rec.skipped = Some("no clusters".into());
                None
            }
            Err(e) => return Err(e),
        };

        if let Some(p1) = &phase1 {
            record_phase1(&mut rec, p1, x1, &truth);
            report.total_distance_entries += p1.distance_entries;
            report.total_cluster_seconds += p1.cluster_seconds;
            report.peak_pass_entries = report.peak_pass_entries.max(p1.distance_entries);

            let polish = regime == Regime::Mcl && n_subsets > 1 && epoch >= cfg.warmup_epochs;
            if polish {
                let subsets: Vec<Phase2Subset> = (1..n_subsets)
                    .map(|j| Phase2Subset { subset_index: j, raw: gather_rows(pool, plan.subset(j)) })
                    .collect();
                let mut rng2 = stream_rng(cfg.seed, STREAM_PHASE2, epoch);
                let p2 = run_phase2_epoch(&subsets, &p1.bank, &mut params, &mut optimizer, lr, cfg, &mut rng2)?;
                record_phase2(&mut rec, &p2, &plan, &truth, cfg.ablation.shared_label_space);
            }
        }

        if let Some(eval_pool) = eval {
            let m = evaluate_encoder(&params, eval_pool, cfg.eval_max_rank)?;
            rec.map = Some(m.map);
            rec.rank1 = Some(m.rank(1));
            report.final_metrics = Some(m);
        }
        log::info!(
            "[{regime}] epoch {epoch}: K={} x1={} x2={} loss1={:?} loss2={:?} mAP={:?}",
            rec.clusters,
            rec.phase1_samples,
            rec.phase2_samples,
            rec.phase1_loss,
            rec.phase2_loss,
            rec.map
        );
        report.epochs.push(rec);
    }
    if !params.is_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    Ok(TrainOutcome { params, report })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn record_phase1(rec: &mut EpochRecord, p1: &Phase1Outcome, x1: &[u32], truth: &[u32]) {
    let a: &ClusterAssignment = &p1.assignment;
    rec.clusters = a.k;
    rec.outliers = a.num_outliers();
    rec.phase1_loss = mean(&p1.loss_trace);
    rec.phase1_batches = p1.loss_trace.len();
    rec.distance_entries = p1.distance_entries;
    rec.cluster_seconds = p1.cluster_seconds;
    let pseudo: Vec<i64> = a.labels.iter().map(|&l| l as i64).collect();
    let gt: Vec<u32> = x1.iter().map(|&i| truth[i as usize]).collect();
    rec.cluster_label_precision = correct_pair_fraction(&pseudo, &gt);
}

fn record_phase2(rec: &mut EpochRecord, p2: &Phase2Outcome, plan: &EpochPlan, truth: &[u32], shared: bool) {
    rec.phase2_samples = p2.samples;
    rec.phase2_loss = mean(&p2.loss_trace);
    rec.sc_loss = mean(&p2.sc_trace);
    rec.tri_loss = mean(&p2.tri_trace);
    rec.phase2_batches = p2.loss_trace.len();
    // Encode identities as integers for the pair-counting helper.
    let mut keys = std::collections::HashMap::new();
    let mut pseudo = Vec::new();
    let mut gt = Vec::new();
    for ids in &p2.identities {
        for (pos, id) in ids.iter().enumerate() {
            let next = keys.len() as i64;
            pseudo.push(*keys.entry(id.key(shared)).or_insert(next));
            gt.push(truth[plan.subset(id.subset_index)[pos] as usize]);
        }
    }
    rec.phase2_label_precision = correct_pair_fraction(&pseudo, &gt);
}
