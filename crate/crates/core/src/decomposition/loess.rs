//! Loess on equally spaced abscissae `0, 1, …, n−1` with tricube weights.

/// Local fit of degree 0 or 1 at position `xs` using the points
/// `left..=right`. `q` is the nominal window size; when it exceeds the
/// series length the bandwidth is widened as if the window extended past
/// both ends. Returns `None` if every weight vanishes.
pub(crate) fn estimate(
    y: &[f64],
    q: usize,
    degree: u8,
    xs: f64,
    left: usize,
    right: usize,
    robustness: Option<&[f64]>,
    w: &mut [f64],
) -> Option<f64> {
    let n = y.len();
    let range = n as f64 - 1.0;
    let mut h = (xs - left as f64).max(right as f64 - xs);
    if q > n {
        h += ((q - n) / 2) as f64;
    }
    let h9 = 0.999 * h;
    let h1 = 0.001 * h;
    let mut total = 0.0;
    for j in left..=right {
        let r = (j as f64 - xs).abs();
        w[j] = if r <= h9 {
            let base = if r <= h1 {
                1.0
            } else {
                let u = r / h;
                let t = 1.0 - u * u * u;
                t * t * t
            };
            base * robustness.map_or(1.0, |rw| rw[j])
        } else {
            0.0
        };
        total += w[j];
    }
    if total <= 0.0 {
        return None;
    }
    for wj in &mut w[left..=right] {
        *wj /= total;
    }
    if degree > 0 && h > 0.0 {
        let a: f64 = (left..=right).map(|j| w[j] * j as f64).sum();
        let b: f64 = (left..=right).map(|j| w[j] * (j as f64 - a).powi(2)).sum();
        if b.sqrt() > 0.001 * range {
            let slope = (xs - a) / b;
            for j in left..=right {
                w[j] *= slope * (j as f64 - a) + 1.0;
            }
        }
    }
    Some((left..=right).map(|j| w[j] * y[j]).sum())
}

/// Smooths every point of `y` with a window of `q` nearest neighbours.
/// Points where the fit fails keep their input value.
pub(crate) fn smooth(y: &[f64], q: usize, degree: u8, robustness: Option<&[f64]>) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if n < 2 {
        out[0] = y[0];
        return out;
    }
    let mut w = vec![0.0; n];
    let half = q.div_ceil(2);
    for i in 0..n {
        let (left, right) = if q >= n {
            (0, n - 1)
        } else if i < half {
            (0, q - 1)
        } else {
            let left = (i + 1 - half).min(n - q);
            (left, left + q - 1)
        };
        out[i] = estimate(y, q, degree, i as f64, left, right, robustness, &mut w).unwrap_or(y[i]);
    }
    out
}
