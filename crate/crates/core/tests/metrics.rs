use dsdiff_core::data::sine_generate;
use dsdiff_core::evaluation::{
    discriminative_score, histograms, js_divergence, js_hist, kl_divergence, kl_hist, ks_1d, ks_statistic,
    predictive_score, smooth, wasserstein1, wasserstein1_1d, EvalConfig, RecurrentConfig,
};
use dsdiff_core::SeriesWindow;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `∫₀¹ |Q_a(u) − Q_b(u)| du`, with quantile breakpoints on the integer grid
/// `k / (na·nb)`.
fn w1_quantile_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let mut cuts: Vec<usize> = (0..=na).map(|i| i * nb).chain((0..=nb).map(|j| j * na)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let total = (na * nb) as f64;
    cuts.windows(2)
        .map(|c| {
            // Both quantile functions are constant on (c0, c1].
            let (qa, qb) = (a[c[0] / nb], b[c[0] / na]);
            (c[1] - c[0]) as f64 / total * (qa - qb).abs()
        })
        .sum()
}

/// `max_x |F_a(x) − F_b(x)|` by counting at every sample point.
fn ks_count_oracle(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
        .fold(0.0, f64::max)
}

fn random_set(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(1..=10);
    if rng.random_bool(0.5) {
        // Coarse grid to force ties.
        (0..n).map(|_| rng.random_range(0..5) as f64 * 0.5).collect()
    } else {
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
    }
}

#[test]
fn wasserstein_and_ks_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let (a, b) = (random_set(&mut rng), random_set(&mut rng));
        let (w, wo) = (wasserstein1_1d(&a, &b), w1_quantile_oracle(&a, &b));
        assert!((w - wo).abs() <= 1e-12, "{a:?} {b:?}: {w} vs {wo}");
        assert_eq!(ks_1d(&a, &b), ks_count_oracle(&a, &b), "{a:?} {b:?}");
    }
}

fn windows_of(values: &[f64]) -> Vec<SeriesWindow> {
    values.iter().map(|&v| SeriesWindow::from_rows(1, 1, vec![v]).unwrap()).collect()
}

#[test]
fn set_level_metrics_agree_with_per_feature_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (a, b) = (random_set(&mut rng), random_set(&mut rng));
    let (wa, wb) = (windows_of(&a), windows_of(&b));
    assert!((wasserstein1(&wa, &wb).unwrap() - w1_quantile_oracle(&a, &b)).abs() <= 1e-12);
    assert_eq!(ks_statistic(&wa, &wb).unwrap(), ks_count_oracle(&a, &b));
}

#[test]
fn appended_empty_bins_barely_move_kl_and_js() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let eps = 1e-10;
    for _ in 0..50 {
        let bins = rng.random_range(2..20);
        let counts = |rng: &mut ChaCha8Rng| (0..bins).map(|_| rng.random_range(0..6) as f64).collect::<Vec<_>>();
        let (mut ca, mut cb) = (counts(&mut rng), counts(&mut rng));
        ca[0] += 1.0;
        cb[0] += 1.0;
        let (na, nb) = (ca.iter().sum::<f64>(), cb.iter().sum::<f64>());
        let base_kl = kl_hist(&smooth(&ca, na, eps), &smooth(&cb, nb, eps));
        let base_js = js_hist(&smooth(&ca, na, eps), &smooth(&cb, nb, eps));
        let extra = rng.random_range(1..30);
        ca.extend(std::iter::repeat_n(0.0, extra));
        cb.extend(std::iter::repeat_n(0.0, extra));
        let kl = kl_hist(&smooth(&ca, na, eps), &smooth(&cb, nb, eps));
        let js = js_hist(&smooth(&ca, na, eps), &smooth(&cb, nb, eps));
        assert!((kl - base_kl).abs() <= 1e-6, "{kl} vs {base_kl}");
        assert!((js - base_js).abs() <= 1e-6, "{js} vs {base_js}");
    }
}

#[test]
fn identical_and_disjoint_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let a = sine_generate(30, 24, 3, &mut rng).unwrap();
    assert!(kl_divergence(&a, &a, 50, 1e-10).unwrap() <= 1e-12);
    assert!(js_divergence(&a, &a, 50).unwrap() <= 1e-12);
    assert!(wasserstein1(&a, &a).unwrap() <= 1e-12);
    assert!(ks_statistic(&a, &a).unwrap() <= 1e-12);

    let shifted: Vec<SeriesWindow> = a
        .iter()
        .map(|w| SeriesWindow::new(w.values().mapv(|v| v + 2.0)).unwrap())
        .collect();
    assert_eq!(ks_statistic(&a, &shifted).unwrap(), 1.0);
    assert!((js_divergence(&a, &shifted, 50).unwrap() - std::f64::consts::LN_2).abs() <= 1e-12);
    assert!((wasserstein1(&a, &shifted).unwrap() - 2.0).abs() <= 1e-12);
    let (p, q) = histograms(&[0.0], &[1.0], 50, 1e-10);
    assert!(kl_hist(&p, &q) > 10.0);
}

fn quick_eval() -> EvalConfig {
    let rec = RecurrentConfig {
        iterations: 400,
        batch_size: 64,
        ..Default::default()
    };
    EvalConfig {
        classifier: rec.clone(),
        predictor: rec,
        replicates: 3,
        ..Default::default()
    }
}

#[test]
fn discriminator_null_and_separable_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let real = sine_generate(400, 24, 2, &mut rng).unwrap();
    let resample: Vec<SeriesWindow> = (0..400).map(|_| real.choose(&mut rng).unwrap().clone()).collect();
    let zeros = vec![SeriesWindow::from_rows(24, 2, vec![0.0; 48]).unwrap(); 400];
    let cfg = quick_eval();

    let null = discriminative_score(&real, &resample, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(null <= 0.05, "null disc {null}");
    let sep = discriminative_score(&real, &zeros, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(sep >= 0.4, "separable disc {sep}");
    let again = discriminative_score(&real, &zeros, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(sep.to_bits(), again.to_bits());
}

#[test]
fn predictive_score_on_real_matches_the_real_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let real = sine_generate(400, 24, 2, &mut rng).unwrap();
    let other = sine_generate(400, 24, 2, &mut rng).unwrap();
    let cfg = quick_eval();
    let same = predictive_score(&real, &real, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let baseline = predictive_score(&real, &other, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(same >= 0.0);
    assert!((same - baseline).abs() <= 0.1 * baseline, "{same} vs baseline {baseline}");
}
