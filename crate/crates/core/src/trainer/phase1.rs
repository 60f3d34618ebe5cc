//! Clustered phase: encode the subset, cluster it, seed the prototype bank from
//! the clusters and train the encoder with InfoNCE against the bank while the
//! bank follows the batches by momentum.

use rand::Rng;

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::infonce;
use crate::metrics::timed_clustering;
use crate::model::{adam_step, augment, AdamState, EncoderParams, Forward};
use crate::protobank::PrototypeBank;

use super::config::TrainConfig;
use super::sampling::pk_sample;
use super::accumulate_gradients;

#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    pub bank: PrototypeBank,
    pub assignment: ClusterAssignment,
    /// Mean InfoNCE of each batch, in order.
    pub loss_trace: Vec<f64>,
    pub clustered: usize,
    pub distance_entries: u64,
    pub cluster_seconds: f64,
}

/// Rows of `raw` are the subset's raw features in plan order.
pub fn run_phase1_epoch<R: Rng>(
    raw: &Matrix,
    params: &mut EncoderParams,
    optimizer: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Phase1Outcome> {
    let embeddings = params.encode_all(raw)?;
    let (assignment, distance_entries, cluster_seconds) = timed_clustering(&embeddings, &cfg.cluster)?;
    if assignment.k == 0 {
        return Err(Error::NoClusters);
    }
    let bank = PrototypeBank::init_from_clusters(
        &embeddings,
        &assignment,
        cfg.momentum,
        cfg.ablation.proto_renorm,
    )?;
    let mut outcome = Phase1Outcome {
        bank,
        clustered: 0,
        assignment,
        loss_trace: Vec::new(),
        distance_entries,
        cluster_seconds,
    };
    train_on_clusters(raw, params, optimizer, lr, cfg, rng, &mut outcome)?;
    Ok(outcome)
}

fn train_on_clusters<R: Rng>(
    raw: &Matrix,
    params: &mut EncoderParams,
    optimizer: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
    rng: &mut R,
    outcome: &mut Phase1Outcome,
) -> Result<()> {
    let members = outcome.assignment.clustered();
    let labels: Vec<usize> = members.iter().map(|&i| outcome.assignment.labels[i] as usize).collect();
    outcome.clustered = members.len();
    let p = cfg.batch_ids.min(outcome.assignment.k);
    let batch_size = p * cfg.batch_instances;
    let n_batches = members.len().div_ceil(batch_size);
    let aug = cfg.augment;

    for _ in 0..n_batches {
        let picks = pk_sample(&labels, p, cfg.batch_instances, rng)?;
        let inputs: Vec<Vec<f64>> = picks
            .iter()
            .map(|&b| {
                let x = raw.row(members[b]);
                if aug.phase1 {
                    augment(x, rng, aug.sigma, aug.drop_p)
                } else {
                    Ok(x.to_vec())
                }
            })
            .collect::<Result<_>>()?;
        let forwards: Vec<Forward> = inputs.iter().map(|x| params.forward(x)).collect::<Result<_>>()?;
        let scale = 1.0 / picks.len() as f64;
        let mut loss = 0.0;
        let mut grads_out = Vec::with_capacity(picks.len());
        for (fwd, &b) in forwards.iter().zip(&picks) {
            debug_assert!((crate::linalg::norm(&fwd.embedding) - 1.0).abs() < 1e-9);
            let l = infonce(&fwd.embedding, &outcome.bank, labels[b], cfg.temperature)?;
            loss += l.value * scale;
            grads_out.push(l.grad(0).iter().map(|g| g * scale).collect::<Vec<f64>>());
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("phase-1 loss is {loss}")));
        }
        let grads = accumulate_gradients(params, &inputs, &forwards, &grads_out);
        adam_step(params, &grads, optimizer, lr)?;
        let batch_emb: Vec<&[f64]> = forwards.iter().map(|f| f.embedding.as_slice()).collect();
        let batch_labels: Vec<usize> = picks.iter().map(|&b| labels[b]).collect();
        outcome.bank.momentum_update(&batch_emb, &batch_labels)?;
        outcome.loss_trace.push(loss);
    }
    Ok(())
}
