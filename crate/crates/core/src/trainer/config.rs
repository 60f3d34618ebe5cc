use serde::{Deserialize, Serialize};

use crate::cluster::ClusterParams;
use crate::error::{Error, Result};
use crate::losses::{TripletWeighting, DEFAULT_LAMBDA, DEFAULT_MARGIN, DEFAULT_TEMPERATURE};
use crate::model::{AdamConfig, EncoderDims, EncoderInit};
use crate::protobank::DEFAULT_MOMENTUM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Cluster a fresh subset each epoch, polish the encoder on the rest.
    Mcl,
    /// Cluster the whole pool every epoch.
    All,
    /// Fixed subsets consumed one after another, each clustered and trained alone.
    #[serde(rename = "naive")]
    NaiveSplit,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Mcl => "mcl",
            Regime::All => "all",
            Regime::NaiveSplit => "naive",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcl" => Ok(Regime::Mcl),
            "all" => Ok(Regime::All),
            "naive" => Ok(Regime::NaiveSplit),
            other => Err(Error::InvalidConfig(format!(
                "unknown regime {other:?} (expected mcl, all or naive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_h: usize,
    pub d_emb: usize,
    pub init: EncoderInit,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { d_h: 128, d_emb: 64, init: EncoderInit::Random }
    }
}

impl EncoderConfig {
    pub fn dims(&self, d_raw: usize) -> EncoderDims {
        EncoderDims { d_raw, d_h: self.d_h, d_emb: self.d_emb }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Expected norm of the added noise.
    pub sigma: f64,
    pub drop_p: f64,
    /// Also augment the clustered-phase queries.
    pub phase1: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { sigma: 0.1, drop_p: 0.1, phase1: true }
    }
}

/// Switches for the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Split once and reuse the split every epoch.
    pub fixed_split: bool,
    /// Phase-2 identities ignore the subset index.
    pub shared_label_space: bool,
    /// Drop the siamese consistency term.
    pub no_sc: bool,
    pub triplet_weighting: TripletWeighting,
    /// Renormalize prototypes after initialization and each momentum update.
    pub proto_renorm: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            fixed_split: false,
            shared_label_space: false,
            no_sc: false,
            triplet_weighting: TripletWeighting::Soft,
            proto_renorm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of subsets `N`; the clustered subset holds `1/N` of the pool.
    pub split_count: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    /// Phase-1 identities per batch (`P`).
    pub batch_ids: usize,
    /// Phase-1 instances per identity (`I`).
    pub batch_instances: usize,
    pub phase2_batch_ids: usize,
    pub phase2_batch_instances: usize,
    pub momentum: f64,
    pub margin: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub cluster: ClusterParams,
    pub optimizer: AdamConfig,
    pub encoder: EncoderConfig,
    pub augment: AugmentConfig,
    pub ablation: Ablation,
    pub seed: u64,
    /// CMC depth recorded in evaluation reports.
    pub eval_max_rank: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            split_count: 2,
            epochs: 60,
            warmup_epochs: 10,
            batch_ids: 16,
            batch_instances: 16,
            phase2_batch_ids: 16,
            phase2_batch_instances: 4,
            momentum: DEFAULT_MOMENTUM,
            margin: DEFAULT_MARGIN,
            lambda: DEFAULT_LAMBDA,
            temperature: DEFAULT_TEMPERATURE,
            cluster: ClusterParams::default(),
            optimizer: AdamConfig::default(),
            encoder: EncoderConfig::default(),
            augment: AugmentConfig::default(),
            ablation: Ablation::default(),
            seed: 1,
            eval_max_rank: 10,
        }
    }
}

impl TrainConfig {
    /// `N = round(1 / ratio)`.
    pub fn split_count_for_ratio(ratio: f64) -> Result<usize> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidConfig(format!("split ratio must be in (0, 1], got {ratio}")));
        }
        Ok((1.0 / ratio).round().max(1.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.split_count == 0 {
            return fail("split_count must be at least 1".into());
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return fail(format!(
                "warmup_epochs ({}) must be smaller than epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.batch_ids == 0 || self.batch_instances == 0 {
            return fail("batch_ids and batch_instances must be positive".into());
        }
        if self.phase2_batch_ids == 0 || self.phase2_batch_instances == 0 {
            return fail("phase2 batch sizes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1], got {}", self.momentum));
        }
        if !(self.temperature > 0.0) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.margin >= 0.0) || !(self.lambda >= 0.0) {
            return fail("margin and lambda must be non-negative".into());
        }
        if !(self.cluster.eps >= 0.0) || self.cluster.min_pts == 0 || self.cluster.k == 0 {
            return fail("cluster eps must be >= 0, min_pts and k positive".into());
        }
        if !(self.optimizer.lr > 0.0) {
            return fail(format!("learning rate must be positive, got {}", self.optimizer.lr));
        }
        if self.encoder.d_emb == 0 {
            return fail("d_emb must be positive".into());
        }
        if !(self.augment.sigma >= 0.0) || !(0.0..1.0).contains(&self.augment.drop_p) {
            return fail("augment sigma must be >= 0 and drop_p in [0, 1)".into());
        }
        Ok(())
    }

    /// Checks `P·I` against the clustered subset size for a pool of `pool_len`.
    pub fn validate_for_pool(&self, pool_len: usize, regime: Regime) -> Result<()> {
        self.validate()?;
        let n = match regime {
            Regime::All => 1,
            _ => self.split_count,
        };
        if n > pool_len {
            return Err(Error::SplitTooLarge { n, pool: pool_len });
        }
        let x1 = pool_len / n;
        if self.batch_ids * self.batch_instances > x1 {
            return Err(Error::InvalidConfig(format!(
                "batch of {}x{} exceeds the clustered subset size {x1}; lower batch_ids/batch_instances \
                 or raise the split ratio",
                self.batch_ids, self.batch_instances
            )));
        }
        Ok(())
    }
}
