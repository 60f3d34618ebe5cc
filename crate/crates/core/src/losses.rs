//! Training losses with analytic gradients with respect to the (unit-norm)
//! embeddings they consume. Prototypes and swapped targets are constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp, softmax, squared_distance, Matrix};
use crate::protobank::PrototypeBank;

pub const DEFAULT_TEMPERATURE: f64 = 0.05;
pub const DEFAULT_MARGIN: f64 = 0.3;
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// A loss value and its gradient with respect to each input embedding, one row
/// per input in the order the loss function takes them.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grads: Matrix,
}

impl LossValue {
    pub fn zero(inputs: usize, dim: usize) -> Self {
        Self { value: 0.0, grads: Matrix::zeros(inputs, dim) }
    }

    pub fn grad(&self, input: usize) -> &[f64] {
        self.grads.row(input)
    }
}

/// `-log softmax(q·W/τ)[positive]`.
pub fn infonce(q: &[f64], bank: &PrototypeBank, positive: usize, tau: f64) -> Result<LossValue> {
    if !(tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    let k = bank.k();
    if positive >= k {
        return Err(Error::LabelOutOfRange { label: positive, k });
    }
    let logits: Vec<f64> = bank.logits(q).into_iter().map(|z| z / tau).collect();
    let value = log_sum_exp(&logits) - logits[positive];
    let probs = softmax(&logits);
    // dL/dq = (Σ_k p_k w_k - w_+) / τ
    let mut grads = Matrix::zeros(1, q.len());
    let g = grads.row_mut(0);
    for (kk, &p) in probs.iter().enumerate() {
        let coef = if kk == positive { p - 1.0 } else { p } / tau;
        for (gi, wi) in g.iter_mut().zip(bank.prototype(kk)) {
            *gi += coef * wi;
        }
    }
    Ok(LossValue { value, grads })
}

/// Cross entropy of the prototype softmax at `f` against a fixed soft target.
/// Returns the value and the gradient with respect to `f`.
fn soft_cross_entropy(f: &[f64], target: &[f64], bank: &PrototypeBank) -> (f64, Vec<f64>) {
    let logits = bank.logits(f);
    let lse = log_sum_exp(&logits);
    let value = -target.iter().zip(&logits).map(|(y, z)| y * (z - lse)).sum::<f64>();
    let p = softmax(&logits);
    let mut grad = vec![0.0; f.len()];
    // Wᵀ(p - y), valid because the target sums to one.
    for (kk, (pk, yk)) in p.iter().zip(target).enumerate() {
        let coef = pk - yk;
        for (gi, wi) in grad.iter_mut().zip(bank.prototype(kk)) {
            *gi += coef * wi;
        }
    }
    (value, grad)
}

/// Swapped prediction between two views: `CE(f_s, y_t) + CE(f_t, y_s)` with the
/// soft labels `y_*` held constant.
pub fn siamese_consistency(f_s: &[f64], f_t: &[f64], bank: &PrototypeBank) -> LossValue {
    let y_s = bank.soft_label(f_s);
    let y_t = bank.soft_label(f_t);
    siamese_consistency_with_targets(f_s, f_t, y_s.as_slice(), y_t.as_slice(), bank)
}

/// [`siamese_consistency`] with explicit frozen targets.
pub fn siamese_consistency_with_targets(
    f_s: &[f64],
    f_t: &[f64],
    y_s: &[f64],
    y_t: &[f64],
    bank: &PrototypeBank,
) -> LossValue {
    let (l_s, g_s) = soft_cross_entropy(f_s, y_t, bank);
    let (l_t, g_t) = soft_cross_entropy(f_t, y_s, bank);
    let mut grads = Matrix::zeros(2, f_s.len());
    grads.row_mut(0).copy_from_slice(&g_s);
    grads.row_mut(1).copy_from_slice(&g_t);
    LossValue { value: l_s + l_t, grads }
}

/// How the triplet hinge is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletWeighting {
    /// `clamp(⟨a,p⟩,0,1)·clamp(⟨a,n⟩,0,1)`
    #[default]
    Soft,
    /// `⟨a,p⟩·⟨a,n⟩`, which can go negative.
    SoftUnclamped,
    /// Constant weight 1 (plain triplet hinge).
    Plain,
}

/// `ω(a,p,n)·[|a-p|² - |a-n|² + margin]₊`, gradients through both factors.
/// Rows of the gradient are `a`, `p`, `n`.
pub fn soft_weighted_triplet(a: &[f64], p: &[f64], n: &[f64], margin: f64, weighting: TripletWeighting) -> LossValue {
    let d = a.len();
    let hinge = squared_distance(a, p) - squared_distance(a, n) + margin;
    if hinge <= 0.0 {
        return LossValue::zero(3, d);
    }
    let s_ap = dot(a, p);
    let s_an = dot(a, n);
    // ω and its partials with respect to the two similarities.
    let (omega, dw_dsap, dw_dsan) = match weighting {
        TripletWeighting::Plain => (1.0, 0.0, 0.0),
        TripletWeighting::SoftUnclamped => (s_ap * s_an, s_an, s_ap),
        TripletWeighting::Soft => {
            let c_ap = s_ap.clamp(0.0, 1.0);
            let c_an = s_an.clamp(0.0, 1.0);
            let live_ap = if s_ap > 0.0 && s_ap < 1.0 { 1.0 } else { 0.0 };
            let live_an = if s_an > 0.0 && s_an < 1.0 { 1.0 } else { 0.0 };
            (c_ap * c_an, c_an * live_ap, c_ap * live_an)
        }
    };
    let mut grads = Matrix::zeros(3, d);
    for i in 0..d {
        // hinge partials
        let dh_da = 2.0 * (n[i] - p[i]);
        let dh_dp = -2.0 * (a[i] - p[i]);
        let dh_dn = 2.0 * (a[i] - n[i]);
        // ω partials: s_ap = a·p, s_an = a·n
        let dw_da = dw_dsap * p[i] + dw_dsan * n[i];
        let dw_dp = dw_dsap * a[i];
        let dw_dn = dw_dsan * a[i];
        grads[(0, i)] = omega * dh_da + hinge * dw_da;
        grads[(1, i)] = omega * dh_dp + hinge * dw_dp;
        grads[(2, i)] = omega * dh_dn + hinge * dw_dn;
    }
    LossValue { value: omega * hinge, grads }
}

/// `L_sc + λ·L_tri` over the same inputs.
pub fn phase2_total(sc: &LossValue, tri: &LossValue, lambda: f64) -> Result<LossValue> {
    if sc.grads.shape() != tri.grads.shape() {
        return Err(Error::DimensionMismatch {
            expected: sc.grads.rows() * sc.grads.cols(),
            found: tri.grads.rows() * tri.grads.cols(),
        });
    }
    if !sc.value.is_finite() || !tri.value.is_finite() || !lambda.is_finite() {
        return Err(Error::Numeric("non-finite phase-2 loss term".into()));
    }
    let mut grads = sc.grads.clone();
    for (g, t) in grads.as_mut_slice().iter_mut().zip(tri.grads.as_slice()) {
        *g += lambda * t;
    }
    Ok(LossValue { value: sc.value + lambda * tri.value, grads })
}
