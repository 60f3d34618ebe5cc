//! Finite-difference checks of the loss gradients over random configurations.

use mcl_core::linalg::Matrix;
use mcl_core::losses::{
    infonce, phase2_total, siamese_consistency, siamese_consistency_with_targets, soft_weighted_triplet,
    TripletWeighting,
};
use mcl_core::PrototypeBank;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{numeric_gradient, random_unit, relative_error, unit};

pub const STEP: f64 = 1e-6;
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub configs: usize,
    pub worst: f64,
}

fn random_bank(rng: &mut ChaCha8Rng, k: usize, d: usize) -> PrototypeBank {
    let rows: Vec<Vec<f64>> = (0..k).map(|_| random_unit(rng, d)).collect();
    PrototypeBank::from_weights(Matrix::from_rows(&rows), 0.2, true).unwrap()
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn check_infonce(configs: usize, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let d = rng.random_range(2..=16);
        let k = rng.random_range(2..=12);
        let bank = random_bank(&mut rng, k, d);
        let q = random_unit(&mut rng, d);
        let pos = rng.random_range(0..k);
        let tau = rng.random_range(0.05..1.0);
        let analytic = infonce(&q, &bank, pos, tau).unwrap();
        let numeric = numeric_gradient(&q, STEP, |x| infonce(x, &bank, pos, tau).unwrap().value);
        worst = worst.max(relative_error(analytic.grad(0), &numeric, FLOOR));
    }
    GradReport { configs, worst }
}

/// The swapped targets are frozen at the evaluation point.
pub fn check_siamese(configs: usize, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let d = rng.random_range(2..=16);
        let k = rng.random_range(2..=12);
        let bank = random_bank(&mut rng, k, d);
        let fs = random_unit(&mut rng, d);
        let ft = random_unit(&mut rng, d);
        let ys = bank.soft_label(&fs).0;
        let yt = bank.soft_label(&ft).0;
        let analytic = siamese_consistency(&fs, &ft, &bank);
        let x = concat(&[&fs, &ft]);
        let numeric = numeric_gradient(&x, STEP, |x| {
            siamese_consistency_with_targets(&x[..d], &x[d..], &ys, &yt, &bank).value
        });
        let a = concat(&[analytic.grad(0), analytic.grad(1)]);
        worst = worst.max(relative_error(&a, &numeric, FLOOR));
    }
    GradReport { configs, worst }
}

/// Draws a triplet whose loss is smooth in a neighbourhood: the hinge and the
/// clamped similarities sit at least `gap` away from their kinks.
fn smooth_triplet(rng: &mut ChaCha8Rng, weighting: TripletWeighting, margin: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let gap = 1e-3;
    loop {
        let d = rng.random_range(2..=16);
        let a = random_unit(rng, d);
        let near = |rng: &mut ChaCha8Rng, s: f64| {
            let noise = random_unit(rng, d);
            unit(&a.iter().zip(&noise).map(|(x, e)| x + s * e).collect::<Vec<_>>())
        };
        let sp = rng.random_range(0.1..2.5);
        let sn = rng.random_range(0.1..2.5);
        let p = near(rng, sp);
        let n = near(rng, sn);
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        let hinge = (2.0 - 2.0 * dot(&a, &p)) - (2.0 - 2.0 * dot(&a, &n)) + margin;
        let s_ap = dot(&a, &p);
        let s_an = dot(&a, &n);
        let clamp_ok = weighting != TripletWeighting::Soft
            || [s_ap, s_an].iter().all(|&s| s.abs() > gap && (1.0 - s).abs() > gap);
        if hinge.abs() > gap && clamp_ok {
            return (a, p, n);
        }
    }
}

pub fn check_triplet(configs: usize, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let kinds = [TripletWeighting::Soft, TripletWeighting::SoftUnclamped, TripletWeighting::Plain];
    for c in 0..configs {
        let w = kinds[c % kinds.len()];
        let margin = rng.random_range(0.05..0.8);
        let (a, p, n) = smooth_triplet(&mut rng, w, margin);
        let d = a.len();
        let analytic = soft_weighted_triplet(&a, &p, &n, margin, w);
        let x = concat(&[&a, &p, &n]);
        let numeric = numeric_gradient(&x, STEP, |x| {
            soft_weighted_triplet(&x[..d], &x[d..2 * d], &x[2 * d..], margin, w).value
        });
        let g = concat(&[analytic.grad(0), analytic.grad(1), analytic.grad(2)]);
        worst = worst.max(relative_error(&g, &numeric, FLOOR));
    }
    GradReport { configs, worst }
}

/// Inputs `(f_s, f_t, n)`: consistency on the two views, triplet with `f_s` as
/// anchor and `f_t` as positive.
pub fn check_phase2_total(configs: usize, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let margin = rng.random_range(0.05..0.8);
        let (fs, ft, n) = smooth_triplet(&mut rng, TripletWeighting::Soft, margin);
        let d = fs.len();
        let k = rng.random_range(2..=12);
        let bank = random_bank(&mut rng, k, d);
        let lambda = rng.random_range(0.0..2.0);
        let ys = bank.soft_label(&fs).0;
        let yt = bank.soft_label(&ft).0;
        let eval = |fs: &[f64], ft: &[f64], n: &[f64]| {
            let sc2 = siamese_consistency_with_targets(fs, ft, &ys, &yt, &bank);
            let mut sc_grads = Matrix::zeros(3, d);
            sc_grads.row_mut(0).copy_from_slice(sc2.grad(0));
            sc_grads.row_mut(1).copy_from_slice(sc2.grad(1));
            let sc = mcl_core::LossValue { value: sc2.value, grads: sc_grads };
            let tri = soft_weighted_triplet(fs, ft, n, margin, TripletWeighting::Soft);
            phase2_total(&sc, &tri, lambda).unwrap()
        };
        let analytic = eval(&fs, &ft, &n);
        let x = concat(&[&fs, &ft, &n]);
        let numeric = numeric_gradient(&x, STEP, |x| eval(&x[..d], &x[d..2 * d], &x[2 * d..]).value);
        worst = worst.max(relative_error(analytic.grads.as_slice(), &numeric, FLOOR));
    }
    GradReport { configs, worst }
}
