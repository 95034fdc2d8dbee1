//! Marginal distribution distances between two sets of windows. Every metric
//! pools all values of one feature across windows and time, compares the two
//! pooled samples, and averages over features.

use crate::series::SeriesWindow;
use crate::{Error, Result};

/// All values of feature `f` across `set`.
pub fn pooled(set: &[SeriesWindow], f: usize) -> Vec<f64> {
    set.iter().flat_map(|w| w.feature(f).to_vec()).collect()
}

fn check_sets(real: &[SeriesWindow], gen: &[SeriesWindow]) -> Result<usize> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::Validation("both sets must be non-empty".into()));
    }
    let f = real[0].features();
    if real.iter().chain(gen).any(|w| w.features() != f) {
        return Err(Error::Validation("all windows must have the same feature count".into()));
    }
    Ok(f)
}

fn feature_mean(real: &[SeriesWindow], gen: &[SeriesWindow], metric: impl Fn(&[f64], &[f64]) -> f64) -> Result<f64> {
    let f = check_sets(real, gen)?;
    let total: f64 = (0..f).map(|j| metric(&pooled(real, j), &pooled(gen, j))).sum();
    Ok(total / f as f64)
}

/// Probability histograms of `a` and `b` over their joint range, each bin
/// smoothed by `eps` and renormalized. A degenerate range puts everything in
/// the first bin.
pub fn histograms(a: &[f64], b: &[f64], bins: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let hist = |xs: &[f64]| {
        let mut counts = vec![0.0; bins];
        for &x in xs {
            let i = if width > 0.0 {
                (((x - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[i] += 1.0;
        }
        smooth(&counts, xs.len() as f64, eps)
    };
    (hist(a), hist(b))
}

/// `(count/n + eps)` renormalized to sum to one.
pub fn smooth(counts: &[f64], n: f64, eps: f64) -> Vec<f64> {
    let z = 1.0 + counts.len() as f64 * eps;
    counts.iter().map(|c| (c / n + eps) / z).collect()
}

/// `Σ p ln(p/q)` in nats.
pub fn kl_hist(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// `½ KL(p‖m) + ½ KL(q‖m)` with `m = (p + q)/2`.
pub fn js_hist(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl_hist(p, &m) + 0.5 * kl_hist(q, &m)
}

pub fn kl_divergence(real: &[SeriesWindow], gen: &[SeriesWindow], bins: usize, eps: f64) -> Result<f64> {
    check_hist(bins, eps)?;
    feature_mean(real, gen, |a, b| {
        let (p, q) = histograms(a, b, bins, eps);
        kl_hist(&p, &q)
    })
}

/// Same binning as [`kl_divergence`] but unsmoothed: the mixture already
/// covers both supports, and smoothing would bias disjoint sets below ln 2.
pub fn js_divergence(real: &[SeriesWindow], gen: &[SeriesWindow], bins: usize) -> Result<f64> {
    check_hist(bins, 1.0)?;
    feature_mean(real, gen, |a, b| {
        let (p, q) = histograms(a, b, bins, 0.0);
        js_hist(&p, &q)
    })
}

fn check_hist(bins: usize, eps: f64) -> Result<()> {
    if bins < 2 || !(eps > 0.0) {
        return Err(Error::Config(format!("need bins >= 2 and eps > 0, got {bins} and {eps}")));
    }
    Ok(())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `∫ |F_a − F_b|` between two empirical distributions, swept over the
/// merged sorted sample.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (x - prev);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        prev = x;
    }
    total
}

/// `sup |F_a − F_b|` over the merged sample.
pub fn ks_1d(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

pub fn wasserstein1(real: &[SeriesWindow], gen: &[SeriesWindow]) -> Result<f64> {
    feature_mean(real, gen, wasserstein1_1d)
}

pub fn ks_statistic(real: &[SeriesWindow], gen: &[SeriesWindow]) -> Result<f64> {
    feature_mean(real, gen, ks_1d)
}
