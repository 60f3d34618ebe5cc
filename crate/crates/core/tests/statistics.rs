//! Monte Carlo checks of the random components against closed-form moments and
//! an independent xorshift/Box–Muller reference.

mod common;

use common::XorShift;
use mcl_core::metrics::clustering_quality;
use mcl_core::model::augment;
use mcl_core::trainer::pk_sample;
use mcl_core::{generate_pool, GenSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-identity noise statistics of the generator, compared with the same
/// statistics of noise drawn from an unrelated RNG.
#[test]
fn generator_noise_moments_match_independent_reference() {
    let (ids, per, d, sigma) = (40, 200, 16, 0.6);
    let pool = generate_pool(&GenSpec {
        num_identities: ids,
        samples_per_identity: per,
        d_raw: d,
        intra_class_sigma: sigma,
        seed: 3,
    })
    .unwrap();
    let coord_sd = sigma / (d as f64).sqrt();

    // Within-identity centered values: their variance estimates coord_sd².
    let mut sq = 0.0;
    let mut cnt = 0.0;
    let mut mean_norms = Vec::new();
    for id in 0..ids as u32 {
        let rows: Vec<&Vec<f32>> = pool.samples().iter().filter(|s| s.identity == id).map(|s| &s.features).collect();
        assert_eq!(rows.len(), per);
        let mean: Vec<f64> = (0..d).map(|c| rows.iter().map(|r| r[c] as f64).sum::<f64>() / per as f64).collect();
        mean_norms.push(mean.iter().map(|x| x * x).sum::<f64>().sqrt());
        for r in &rows {
            for c in 0..d {
                sq += (r[c] as f64 - mean[c]).powi(2);
                cnt += 1.0;
            }
        }
    }
    let var = sq / cnt * per as f64 / (per as f64 - 1.0);

    let mut xs = XorShift(0x1234_5678_9ABC_DEF1);
    let reference: f64 = (0..cnt as usize).map(|_| (coord_sd * xs.normal()).powi(2)).sum::<f64>() / cnt;

    let target = coord_sd * coord_sd;
    // Relative sd of a variance estimate over m draws is sqrt(2/m) ≈ 0.8% here.
    assert!((var / target - 1.0).abs() < 0.04, "generator variance {var} vs {target}");
    assert!((reference / target - 1.0).abs() < 0.04, "reference variance {reference} vs {target}");
    assert!((var / reference - 1.0).abs() < 0.06);

    // Sample means sit near the unit sphere: |mean|² ≈ 1 + sigma²/per.
    for n in mean_norms {
        assert!((n - 1.0).abs() < 0.05, "identity mean norm {n}");
    }
}

#[test]
fn augment_moments_match_closed_form() {
    let x = [0.8, -0.3, 0.0, 1.5];
    let (s, p) = (0.4, 0.25);
    let coord_sd = s / 2.0;
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    let mut zeros = 0usize;
    for _ in 0..draws {
        let y = augment(&x, &mut rng, s, p).unwrap();
        for c in 0..4 {
            sum[c] += y[c];
            sum_sq[c] += y[c] * y[c];
            zeros += usize::from(y[c] == 0.0);
        }
    }
    let n = draws as f64;
    for c in 0..4 {
        let mean = sum[c] / n;
        let var = sum_sq[c] / n - mean * mean;
        let want_var = (x[c] * x[c] + coord_sd * coord_sd) / (1.0 - p) - x[c] * x[c];
        let se = (want_var / n).sqrt();
        assert!((mean - x[c]).abs() < 5.0 * se, "coord {c}: mean {mean}");
        assert!((var / want_var - 1.0).abs() < 0.05, "coord {c}: var {var} vs {want_var}");
    }
    let frac = zeros as f64 / (4.0 * n);
    assert!((frac - p).abs() < 0.005, "dropout fraction {frac}");
}

/// Label selection in PK batches is uniform across labels.
#[test]
fn pk_label_choice_passes_chi_square() {
    let labels: Vec<u32> = (0..20).flat_map(|l| std::iter::repeat_n(l, 5)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0f64; 20];
    let rounds = 5000;
    for _ in 0..rounds {
        let batch = pk_sample(&labels, 4, 2, &mut rng).unwrap();
        for pair in batch.chunks(2) {
            counts[labels[pair[0]] as usize] += 1.0;
        }
    }
    let expected = rounds as f64 * 4.0 / 20.0;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 19 degrees of freedom; the 0.999 quantile is 43.8.
    assert!(chi2 < 43.8, "chi-square {chi2}");
}

#[test]
fn instances_are_uniform_within_a_label() {
    let labels = vec![0u32, 0, 0, 0, 1, 1, 1, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts = [0f64; 8];
    let rounds = 8000;
    for _ in 0..rounds {
        for b in pk_sample(&labels, 2, 2, &mut rng).unwrap() {
            counts[b] += 1.0;
        }
    }
    let expected = rounds as f64 * 4.0 / 8.0;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 7 degrees of freedom; the 0.999 quantile is 24.3.
    assert!(chi2 < 24.3, "chi-square {chi2}");
}

#[test]
fn ari_of_random_permutation_is_near_zero() {
    let truth: Vec<u32> = (0..300).map(|i| i / 10).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 300;
    let mut total = 0.0;
    for _ in 0..trials {
        let mut pred: Vec<i64> = truth.iter().map(|&t| t as i64).collect();
        pred.shuffle(&mut rng);
        total += clustering_quality(&pred, &truth).ari;
    }
    let mean = total / trials as f64;
    assert!(mean.abs() < 0.005, "mean ARI {mean}");
}
