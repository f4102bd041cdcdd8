use lika_core::metrics::{
    corr_coeff, default_ece_levels, ece, log_likelihood, regression_metrics, sharpness, sigma_scale,
    sigma_scale_objective, uce,
};
use lika_core::EvalBatch;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn col(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
}

fn batch(mean: &[f64], sigma: &[f64], target: &[f64]) -> EvalBatch {
    EvalBatch::new(col(mean), col(sigma), col(target)).unwrap()
}

fn triples() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, 0.01..3.0f64, -5.0..5.0f64), 2..60)
}

fn unzip(t: &[(f64, f64, f64)]) -> EvalBatch {
    let m: Vec<f64> = t.iter().map(|p| p.0).collect();
    let s: Vec<f64> = t.iter().map(|p| p.1).collect();
    let y: Vec<f64> = t.iter().map(|p| p.2).collect();
    batch(&m, &s, &y)
}

fn all_metrics(b: &EvalBatch) -> Vec<f64> {
    let r = regression_metrics(b).unwrap();
    vec![
        r.mae,
        r.mse,
        r.psnr,
        uce(b, 10).unwrap().0,
        ece(b, &default_ece_levels()).unwrap(),
        sharpness(b).unwrap(),
        corr_coeff(b).unwrap().0,
        log_likelihood(b).unwrap(),
        sigma_scale(b).unwrap(),
    ]
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

proptest! {
    #[test]
    fn metrics_are_permutation_invariant(t in triples(), seed in any::<u64>()) {
        let mut shuffled = t.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        for (a, b) in all_metrics(&unzip(&t)).into_iter().zip(all_metrics(&unzip(&shuffled))) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn ece_invariant_to_joint_rescaling(t in triples(), k in 0.01..100.0f64) {
        let scaled: Vec<(f64, f64, f64)> = t.iter().map(|&(m, s, y)| (k * m, k * s, k * y)).collect();
        let a = ece(&unzip(&t), &default_ece_levels()).unwrap();
        let b = ece(&unzip(&scaled), &default_ece_levels()).unwrap();
        // Coverage counts flip only when a target lies on an interval edge.
        prop_assert!((a - b).abs() <= 100.0 / t.len() as f64 + 1e-9, "{a} vs {b}");
    }

    #[test]
    fn single_bin_uce_is_gap_of_means(t in triples()) {
        let b = unzip(&t);
        let err = t.iter().map(|p| (p.0 - p.2).powi(2)).sum::<f64>() / t.len() as f64;
        let var = t.iter().map(|p| p.1 * p.1).sum::<f64>() / t.len() as f64;
        let u = uce(&b, 1).unwrap().0;
        prop_assert!((u - (err - var).abs()).abs() <= 1e-12 * err.max(var).max(1.0));
    }

    #[test]
    fn uce_bins_partition_samples(t in triples(), m in 1usize..20) {
        let (_, bins) = uce(&unzip(&t), m).unwrap();
        prop_assert_eq!(bins.len(), m);
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), t.len());
    }

    #[test]
    fn sigma_scale_matches_golden_section(t in triples()) {
        let b = unzip(&t);
        prop_assume!(t.iter().any(|p| (p.0 - p.2).abs() > 1e-3));
        let s = sigma_scale(&b).unwrap();
        let s_num = golden_min(|s| sigma_scale_objective(&b, s), 1e-4, 1e4);
        prop_assert!((s - s_num).abs() < 1e-6 * s.max(1.0), "{s} vs {s_num}");
    }

    #[test]
    fn log_likelihood_translation_invariant(t in triples(), c in -100.0..100.0f64) {
        let shifted: Vec<(f64, f64, f64)> = t.iter().map(|&(m, s, y)| (m + c, s, y + c)).collect();
        let a = log_likelihood(&unzip(&t)).unwrap();
        let b = log_likelihood(&unzip(&shifted)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }
}

#[test]
fn ece_small_when_targets_follow_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let target: Vec<f64> = (0..n)
        .map(|i| mean[i] + sigma[i] * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let e = ece(&batch(&mean, &sigma, &target), &default_ece_levels()).unwrap();
    assert!(e < 1.0, "ece {e}");
}

#[test]
fn log_likelihood_desk_values() {
    let ll = log_likelihood(&batch(&[0.0], &[1.0], &[1.0])).unwrap();
    assert!((ll + 1.41894).abs() < 1e-5);
}
