//! Frequency-domain split: low bins form the trend, the rest the seasonal part.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::StyleComponents;
use crate::series::SeriesWindow;
use crate::{Error, Result};

/// Splits each feature at `cutoff_bin`: bins `0..=cutoff_bin` (and their
/// mirror images) form the trend, everything above is seasonal. The residual
/// is identically zero and the seasonal part is defined as `series − trend`.
pub fn fourier_split(series: &SeriesWindow, cutoff_bin: usize) -> Result<StyleComponents> {
    let len = series.len();
    if cutoff_bin < 1 || cutoff_bin >= len / 2 {
        return Err(Error::Validation(format!(
            "cutoff bin {cutoff_bin} outside [1, {}) for length {len}",
            len / 2
        )));
    }
    let f = series.features();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut trend = Array2::zeros((len, f));
    let mut seasonal = Array2::zeros((len, f));
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for c in 0..f {
        for (b, v) in buf.iter_mut().zip(series.feature(c)) {
            *b = Complex64::new(*v, 0.0);
        }
        forward.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            if k.min(len - k) > cutoff_bin {
                *b = Complex64::new(0.0, 0.0);
            }
        }
        inverse.process(&mut buf);
        for t in 0..len {
            let low = buf[t].re / len as f64;
            trend[[t, c]] = low;
            seasonal[[t, c]] = series.values()[[t, c]] - low;
        }
    }
    Ok(StyleComponents {
        trend,
        seasonal,
        residual: Array2::zeros((len, f)),
    })
}
