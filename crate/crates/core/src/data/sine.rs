use std::f64::consts::TAU;

use rand::Rng;

use crate::series::SeriesWindow;
use crate::{Error, Result};

pub const FREQ_RANGE: (f64, f64) = (0.05, 0.15);

/// `n` windows of `features` independent sinusoids, each with its own
/// frequency (cycles per sample) and phase, mapped to `[0, 1]`.
pub fn sine_generate<R: Rng + ?Sized>(n: usize, len: usize, features: usize, rng: &mut R) -> Result<Vec<SeriesWindow>> {
    Ok(sine_generate_with_params(n, len, features, rng)?.0)
}

/// As [`sine_generate`], also returning the drawn `(frequency, phase)` per
/// window and feature.
pub fn sine_generate_with_params<R: Rng + ?Sized>(
    n: usize,
    len: usize,
    features: usize,
    rng: &mut R,
) -> Result<(Vec<SeriesWindow>, Vec<Vec<(f64, f64)>>)> {
    if n == 0 || len == 0 || features == 0 {
        return Err(Error::Config(format!(
            "sine set needs positive n, length and features (got {n}, {len}, {features})"
        )));
    }
    let mut windows = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let p: Vec<(f64, f64)> = (0..features)
            .map(|_| (rng.random_range(FREQ_RANGE.0..=FREQ_RANGE.1), rng.random_range(0.0..TAU)))
            .collect();
        let mut data = Vec::with_capacity(len * features);
        for k in 0..len {
            for &(f, phi) in &p {
                data.push(0.5 * ((TAU * f * k as f64 + phi).sin() + 1.0));
            }
        }
        windows.push(SeriesWindow::from_rows(len, features, data)?);
        params.push(p);
    }
    Ok((windows, params))
}
