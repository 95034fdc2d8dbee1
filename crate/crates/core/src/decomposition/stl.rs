//! Seasonal-trend decomposition by loess.
//!
//! Inner loop: detrend, smooth each cycle-subseries (extended one period at
//! both ends), remove the low-pass of that seasonal estimate, then loess the
//! deseasonalized series for the trend. The optional outer loop recomputes
//! bisquare robustness weights from the residual between inner passes.

use ndarray::Array2;

use super::loess;
use super::StyleComponents;
use crate::series::SeriesWindow;
use crate::{Error, Result};

/// STL configuration. `trend_smoother` and `lowpass_smoother` default to the
/// conventional values derived from the effective period when `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct StlParams {
    pub period: usize,
    pub robust: bool,
    pub inner_iterations: usize,
    /// Ignored unless `robust` is set.
    pub outer_iterations: usize,
    pub seasonal_smoother: usize,
    pub trend_smoother: Option<usize>,
    pub lowpass_smoother: Option<usize>,
}

impl Default for StlParams {
    fn default() -> Self {
        Self::new(24, true)
    }
}

/// Fully resolved smoother lengths for one series length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResolvedStl {
    pub period: usize,
    pub seasonal: usize,
    pub trend: usize,
    pub lowpass: usize,
    pub inner: usize,
    pub outer: usize,
}

fn next_odd(x: f64) -> usize {
    let n = x.ceil() as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

impl StlParams {
    pub fn new(period: usize, robust: bool) -> Self {
        Self {
            period,
            robust,
            inner_iterations: 2,
            outer_iterations: if robust { 5 } else { 0 },
            seasonal_smoother: 7,
            trend_smoother: None,
            lowpass_smoother: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::Config(format!("STL period must be >= 2, got {}", self.period)));
        }
        if self.inner_iterations == 0 {
            return Err(Error::Config("STL needs at least one inner iteration".into()));
        }
        let smoothers = [
            ("seasonal", Some(self.seasonal_smoother)),
            ("trend", self.trend_smoother),
            ("low-pass", self.lowpass_smoother),
        ];
        for (name, len) in smoothers {
            if let Some(len) = len {
                if len < 3 || len % 2 == 0 {
                    return Err(Error::Config(format!(
                        "{name} smoother must be odd and >= 3, got {len}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Period actually used for a series of length `len`: windows shorter
    /// than two periods fall back to `max(2, len / 2)`.
    pub fn effective_period(&self, len: usize) -> usize {
        if len < 2 * self.period {
            (len / 2).max(2)
        } else {
            self.period
        }
    }

    pub fn resolve(&self, len: usize) -> Result<ResolvedStl> {
        self.validate()?;
        if len < 4 {
            return Err(Error::TooShort(format!("STL needs at least 4 samples, got {len}")));
        }
        let period = self.effective_period(len);
        let ns = self.seasonal_smoother;
        let trend = self
            .trend_smoother
            .unwrap_or_else(|| next_odd(1.5 * period as f64 / (1.0 - 1.5 / ns as f64)).max(3));
        let lowpass = self.lowpass_smoother.unwrap_or_else(|| next_odd(period as f64).max(3));
        Ok(ResolvedStl {
            period,
            seasonal: ns,
            trend,
            lowpass,
            inner: self.inner_iterations,
            outer: if self.robust { self.outer_iterations } else { 0 },
        })
    }
}

/// Decomposition of a single channel plus the final robustness weights.
#[derive(Clone, Debug, PartialEq)]
pub struct StlChannel {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    /// All ones when no robustness iterations ran.
    pub weights: Vec<f64>,
}

/// Decomposes one channel.
pub fn stl_channel(y: &[f64], params: &StlParams) -> Result<StlChannel> {
    let cfg = params.resolve(y.len())?;
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("series contains non-finite value {bad}")));
    }
    let n = y.len();
    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut weights: Option<Vec<f64>> = None;
    for pass in 0..=cfg.outer {
        inner_loop(y, &cfg, weights.as_deref(), &mut trend, &mut seasonal);
        if pass < cfg.outer {
            weights = Some(robustness_weights(y, &trend, &seasonal));
        }
    }
    let residual = (0..n).map(|i| y[i] - trend[i] - seasonal[i]).collect();
    Ok(StlChannel {
        trend,
        seasonal,
        residual,
        weights: weights.unwrap_or_else(|| vec![1.0; n]),
    })
}

/// Decomposes every feature of `series` independently.
pub fn stl_decompose(series: &SeriesWindow, params: &StlParams) -> Result<StyleComponents> {
    let (len, f) = (series.len(), series.features());
    let mut trend = Array2::zeros((len, f));
    let mut seasonal = Array2::zeros((len, f));
    let mut residual = Array2::zeros((len, f));
    for c in 0..f {
        let y: Vec<f64> = series.feature(c).to_vec();
        let fit = stl_channel(&y, params)?;
        for t in 0..len {
            trend[[t, c]] = fit.trend[t];
            seasonal[[t, c]] = fit.seasonal[t];
            residual[[t, c]] = fit.residual[t];
        }
    }
    Ok(StyleComponents {
        trend,
        seasonal,
        residual,
    })
}

fn inner_loop(y: &[f64], cfg: &ResolvedStl, rw: Option<&[f64]>, trend: &mut [f64], seasonal: &mut [f64]) {
    let n = y.len();
    let np = cfg.period;
    let mut detrended = vec![0.0; n];
    for _ in 0..cfg.inner {
        for i in 0..n {
            detrended[i] = y[i] - trend[i];
        }
        let cycle = cycle_subseries(&detrended, np, cfg.seasonal, rw);
        let low = low_pass(&cycle, np, cfg.lowpass);
        for i in 0..n {
            seasonal[i] = cycle[np + i] - low[i];
        }
        let deseasonalized: Vec<f64> = (0..n).map(|i| y[i] - seasonal[i]).collect();
        trend.copy_from_slice(&loess::smooth(&deseasonalized, cfg.trend, 1, rw));
    }
}

/// Smooths each of the `np` cycle-subseries and extends it by one point on
/// each side. Output length is `n + 2·np`.
fn cycle_subseries(y: &[f64], np: usize, ns: usize, rw: Option<&[f64]>) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n + 2 * np];
    for j in 0..np {
        if j >= n {
            break;
        }
        let k = (n - 1 - j) / np + 1;
        let sub: Vec<f64> = (0..k).map(|i| y[j + i * np]).collect();
        let sub_rw: Option<Vec<f64>> = rw.map(|w| (0..k).map(|i| w[j + i * np]).collect());
        let smoothed = loess::smooth(&sub, ns, 1, sub_rw.as_deref());
        let mut w = vec![0.0; k];
        let right = ns.min(k) - 1;
        let first = loess::estimate(&sub, ns, 1, -1.0, 0, right, sub_rw.as_deref(), &mut w)
            .unwrap_or(smoothed[0]);
        let left = k.saturating_sub(ns);
        let last = loess::estimate(&sub, ns, 1, k as f64, left, k - 1, sub_rw.as_deref(), &mut w)
            .unwrap_or(smoothed[k - 1]);
        out[j] = first;
        for (i, v) in smoothed.iter().enumerate() {
            out[(i + 1) * np + j] = *v;
        }
        out[(k + 1) * np + j] = last;
    }
    out
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1 - len);
    let mut sum: f64 = x[..len].iter().sum();
    out.push(sum / len as f64);
    for i in len..x.len() {
        sum += x[i] - x[i - len];
        out.push(sum / len as f64);
    }
    out
}

/// Moving averages of lengths `np`, `np`, 3 followed by a loess pass. Maps
/// `n + 2·np` points back to `n`.
fn low_pass(cycle: &[f64], np: usize, nl: usize) -> Vec<f64> {
    let a = moving_average(cycle, np);
    let b = moving_average(&a, np);
    let c = moving_average(&b, 3);
    loess::smooth(&c, nl, 1, None)
}

/// Relative size below which the median absolute residual counts as an
/// exact fit.
const EXACT_FIT: f64 = 1e-9;

/// Bisquare weights on `|y − fit|` scaled by six median absolute residuals.
/// An exact fit (median residual at rounding level) weights every point 1.
fn robustness_weights(y: &[f64], trend: &[f64], seasonal: &[f64]) -> Vec<f64> {
    let n = y.len();
    let r: Vec<f64> = (0..n).map(|i| (y[i] - trend[i] - seasonal[i]).abs()).collect();
    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    let hi = n / 2;
    let lo = n - hi - 1;
    let cmad = 3.0 * (sorted[lo] + sorted[hi]);
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if cmad <= EXACT_FIT * scale {
        return vec![1.0; n];
    }
    let c9 = 0.999 * cmad;
    let c1 = 0.001 * cmad;
    r.iter()
        .map(|&ri| {
            if ri <= c1 {
                1.0
            } else if ri <= c9 {
                let u = ri / cmad;
                (1.0 - u * u).powi(2)
            } else {
                0.0
            }
        })
        .collect()
}
