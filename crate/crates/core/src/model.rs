//! The trainable encoder, feature-space augmentation and the Adam optimizer.
//!
//! The encoder is a small tanh MLP followed by L2 normalization:
//!
//! ```text
//! h = tanh(W1 x + b1)      (skipped when d_h = 0)
//! u = W2 h + b2
//! v = u / |u|
//! ```
//!
//! Gradients are hand-derived; [`EncoderParams::backward`] propagates a gradient
//! with respect to `v` back to every parameter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub d_raw: usize,
    /// Hidden width; 0 selects a single linear layer.
    pub d_h: usize,
    pub d_emb: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderInit {
    /// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases.
    Random,
    /// Unit diagonal weights, zero biases.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub unnormalized_norm: f64,
    pub embedding: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(dims: EncoderDims) -> Self {
        let w2_cols = if dims.d_h == 0 { dims.d_raw } else { dims.d_h };
        Self {
            w1: Matrix::zeros(dims.d_h, dims.d_raw),
            b1: vec![0.0; dims.d_h],
            w2: Matrix::zeros(dims.d_emb, w2_cols),
            b2: vec![0.0; dims.d_emb],
        }
    }

    pub fn init(dims: EncoderDims, init: EncoderInit, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        match init {
            EncoderInit::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s1 = 1.0 / (dims.d_raw.max(1) as f64).sqrt();
                for w in p.w1.as_mut_slice() {
                    *w = s1 * rng.sample::<f64, _>(StandardNormal);
                }
                let s2 = 1.0 / (p.w2.cols().max(1) as f64).sqrt();
                for w in p.w2.as_mut_slice() {
                    *w = s2 * rng.sample::<f64, _>(StandardNormal);
                }
            }
            EncoderInit::Identity => {
                for i in 0..dims.d_h.min(dims.d_raw) {
                    p.w1[(i, i)] = 1.0;
                }
                for i in 0..p.w2.rows().min(p.w2.cols()) {
                    p.w2[(i, i)] = 1.0;
                }
            }
        }
        p
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            d_raw: if self.is_linear() { self.w2.cols() } else { self.w1.cols() },
            d_h: self.w1.rows(),
            d_emb: self.w2.rows(),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.w1.rows() == 0
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.w1.shape() == other.w1.shape()
            && self.b1.len() == other.b1.len()
            && self.w2.shape() == other.w2.shape()
            && self.b2.len() == other.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self += a * other`
    pub fn add_scaled(&mut self, a: f64, other: &Self) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        let dims = self.dims();
        if x.len() != dims.d_raw {
            return Err(Error::DimensionMismatch { expected: dims.d_raw, found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder input".into()));
        }
        let hidden = if self.is_linear() {
            Vec::new()
        } else {
            let mut h = vec![0.0; dims.d_h];
            self.w1.mul_vec(x, &mut h);
            for (hi, bi) in h.iter_mut().zip(&self.b1) {
                *hi = (*hi + bi).tanh();
            }
            h
        };
        let input = if self.is_linear() { x } else { &hidden };
        let mut u = vec![0.0; dims.d_emb];
        self.w2.mul_vec(input, &mut u);
        for (ui, bi) in u.iter_mut().zip(&self.b2) {
            *ui += bi;
        }
        let n = norm(&u);
        if !(n >= 1e-12) {
            return Err(Error::DegenerateEmbedding(n));
        }
        u.iter_mut().for_each(|v| *v /= n);
        Ok(Forward { hidden, unnormalized_norm: n, embedding: u })
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.embedding)
    }

    /// Encodes every row of `xs` into a unit-norm row of the result.
    pub fn encode_all(&self, xs: &Matrix) -> Result<Matrix> {
        let d_emb = self.dims().d_emb;
        let mut out = Matrix::zeros(xs.rows(), d_emb);
        for (i, x) in xs.iter_rows().enumerate() {
            let v = self.encode(x)?;
            out.row_mut(i).copy_from_slice(&v);
        }
        Ok(out)
    }

    /// Accumulates into `grads` the parameter gradient of a loss whose gradient
    /// with respect to the normalized embedding is `grad_embedding`.
    pub fn backward(&self, x: &[f64], fwd: &Forward, grad_embedding: &[f64], grads: &mut EncoderParams) {
        let v = &fwd.embedding;
        // d(u/|u|)/du = (I - v vᵀ) / |u|
        let along = dot(v, grad_embedding);
        let grad_u: Vec<f64> = grad_embedding
            .iter()
            .zip(v)
            .map(|(g, vi)| (g - along * vi) / fwd.unnormalized_norm)
            .collect();
        let input = if self.is_linear() { x } else { &fwd.hidden };
        grads.w2.add_outer(1.0, &grad_u, input);
        for (g, gu) in grads.b2.iter_mut().zip(&grad_u) {
            *g += gu;
        }
        if self.is_linear() {
            return;
        }
        let mut grad_h = vec![0.0; fwd.hidden.len()];
        self.w2.mul_vec_transposed(&grad_u, &mut grad_h);
        for (gh, h) in grad_h.iter_mut().zip(&fwd.hidden) {
            *gh *= 1.0 - h * h;
        }
        grads.w1.add_outer(1.0, &grad_h, x);
        for (g, gh) in grads.b1.iter_mut().zip(&grad_h) {
            *g += gh;
        }
    }
}

/// Feature-space augmentation: Gaussian noise with expected norm `sigma_aug`
/// (per-coordinate std `sigma_aug / sqrt(d)`), then inverted dropout with
/// probability `drop_p`.
pub fn augment<R: Rng + ?Sized>(x: &[f64], rng: &mut R, sigma_aug: f64, drop_p: f64) -> Result<Vec<f64>> {
    if !(sigma_aug >= 0.0) || !sigma_aug.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma_aug must be >= 0, got {sigma_aug}")));
    }
    if !(0.0..1.0).contains(&drop_p) {
        return Err(Error::InvalidParameter(format!("drop_p must be in [0, 1), got {drop_p}")));
    }
    let coord_sigma = sigma_aug / (x.len().max(1) as f64).sqrt();
    let keep_scale = 1.0 / (1.0 - drop_p);
    let out = x
        .iter()
        .map(|&xi| {
            let noisy = if sigma_aug > 0.0 {
                xi + coord_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                xi
            };
            if drop_p > 0.0 {
                if rng.random::<f64>() < drop_p {
                    0.0
                } else {
                    noisy * keep_scale
                }
            } else {
                noisy
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3.5e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 5e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: EncoderParams,
    pub v: EncoderParams,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &EncoderParams, config: AdamConfig) -> Self {
        let zeros = EncoderParams::zeros(params.dims());
        Self { m: zeros.clone(), v: zeros, step: 0, config }
    }
}

/// One Adam update with bias correction and decoupled weight decay, at learning
/// rate `lr` (the scheduled rate for the current epoch).
pub fn adam_step(params: &mut EncoderParams, grads: &EncoderParams, state: &mut AdamState, lr: f64) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::DimensionMismatch {
            expected: params.num_params(),
            found: grads.num_params(),
        });
    }
    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let [p0, p1, p2, p3] = params.slices_mut();
    let [m0, m1, m2, m3] = state.m.slices_mut();
    let [v0, v1, v2, v3] = state.v.slices_mut();
    let g = grads.slices();
    for (((p, m), v), g) in [p0, p1, p2, p3]
        .into_iter()
        .zip([m0, m1, m2, m3])
        .zip([v0, v1, v2, v3])
        .zip(g)
    {
        adam_update(p, g, m, v, &cfg, lr, bc1, bc2);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AdamConfig,
    lr: f64,
    bias_correction1: f64,
    bias_correction2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bias_correction1;
        let v_hat = v[i] / bias_correction2;
        params[i] -= lr * cfg.weight_decay * params[i];
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Step decay: `base * 0.1^(epoch / step)` where the step is 20 epochs out of 60,
/// scaled to `total_epochs`.
pub fn scheduled_lr(base: f64, epoch: usize, total_epochs: usize) -> f64 {
    let step = ((total_epochs as f64) * 20.0 / 60.0).round().max(1.0) as usize;
    base * 0.1f64.powi((epoch / step) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(d_h: usize) -> EncoderDims {
        EncoderDims { d_raw: 4, d_h, d_emb: 4 }
    }

    #[test]
    fn linear_identity_passes_unit_input() {
        let p = EncoderParams::init(dims(0), EncoderInit::Identity, 0);
        let x = [0.5, -0.5, 0.5, 0.5];
        assert_eq!(p.encode(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn bias_free_linear_encoder_is_scale_invariant() {
        let p = EncoderParams::init(dims(0), EncoderInit::Random, 3);
        let x = [0.3, -1.2, 0.7, 0.1];
        let x3: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        let a = p.encode(&x).unwrap();
        let b = p.encode(&x3).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let p = EncoderParams::init(dims(8), EncoderInit::Random, 9);
        let v = p.encode(&[1.0, 2.0, -3.0, 0.5]).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_output_is_degenerate() {
        let p = EncoderParams::zeros(dims(0));
        assert!(matches!(p.encode(&[1.0; 4]), Err(Error::DegenerateEmbedding(_))));
        assert!(matches!(
            p.encode(&[1.0; 3]),
            Err(Error::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn augment_identity_when_disabled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = [0.1, 0.2, 0.3];
        assert_eq!(augment(&x, &mut rng, 0.0, 0.0).unwrap(), x.to_vec());
    }

    #[test]
    fn dropout_rescales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = augment(&[1.0; 4], &mut rng, 0.0, 0.5).unwrap();
        assert!(out.iter().all(|&v| v == 0.0 || v == 2.0));
        let mut rng2 = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(out, augment(&[1.0; 4], &mut rng2, 0.0, 0.5).unwrap());
    }

    #[test]
    fn augment_rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(augment(&[1.0], &mut rng, -1.0, 0.0).is_err());
        assert!(augment(&[1.0], &mut rng, 0.0, 1.0).is_err());
    }

    #[test]
    fn adam_zero_gradient_no_decay_is_noop() {
        let mut p = EncoderParams::init(dims(3), EncoderInit::Random, 1);
        let before = p.clone();
        let cfg = AdamConfig { weight_decay: 0.0, ..Default::default() };
        let mut st = AdamState::new(&p, cfg);
        let g = EncoderParams::zeros(p.dims());
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st, cfg.lr).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = AdamConfig { weight_decay: 0.0, ..Default::default() };
        let (mut p, mut m, mut v) = ([0.0], [0.0], [0.0]);
        let bc1 = 1.0 - cfg.beta1;
        let bc2 = 1.0 - cfg.beta2;
        adam_update(&mut p, &[1.0], &mut m, &mut v, &cfg, cfg.lr, bc1, bc2);
        assert!((p[0] + cfg.lr).abs() < 1e-10);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = EncoderParams::init(dims(3), EncoderInit::Random, 1);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = EncoderParams::zeros(dims(2));
        assert!(adam_step(&mut p, &g, &mut st, 1e-3).is_err());
    }

    #[test]
    fn adam_descends_quadratic_bowl() {
        // f(p) = Σ c_i (p_i - t_i)², scripted 20-step run.
        let cfg = AdamConfig { lr: 0.05, weight_decay: 0.0, ..Default::default() };
        let target = [1.0, -2.0, 0.5];
        let curv = [1.0, 3.0, 0.2];
        let loss = |p: &[f64]| -> f64 { (0..3).map(|i| curv[i] * (p[i] - target[i]).powi(2)).sum() };
        let mut p = [0.0; 3];
        let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
        let mut prev = loss(&p);
        for t in 1..=20 {
            let g: Vec<f64> = (0..3).map(|i| 2.0 * curv[i] * (p[i] - target[i])).collect();
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            adam_update(&mut p, &g, &mut m, &mut v, &cfg, cfg.lr, bc1, bc2);
            let now = loss(&p);
            assert!(now < prev, "step {t}: {now} >= {prev}");
            prev = now;
        }
    }

    #[test]
    fn lr_schedule_steps_every_third() {
        assert_eq!(scheduled_lr(1.0, 0, 60), 1.0);
        assert_eq!(scheduled_lr(1.0, 19, 60), 1.0);
        assert!((scheduled_lr(1.0, 20, 60) - 0.1).abs() < 1e-15);
        assert!((scheduled_lr(1.0, 45, 60) - 0.01).abs() < 1e-15);
        assert!((scheduled_lr(1.0, 10, 30) - 0.1).abs() < 1e-15);
    }
}
