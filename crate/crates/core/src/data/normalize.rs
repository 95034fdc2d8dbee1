use ndarray::Array2;

use crate::series::SeriesWindow;
use crate::{Error, Result};

/// Per-feature range used for min-max scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationState {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationState {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::Validation("min and max must be non-empty and equally long".into()));
        }
        if min.iter().zip(&max).any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi >= lo)) {
            return Err(Error::Validation("every feature needs finite min <= max".into()));
        }
        Ok(Self { min, max })
    }

    /// Column ranges of a `rows x features` table.
    pub fn fit(table: &Array2<f64>) -> Result<Self> {
        if table.nrows() == 0 {
            return Err(Error::InsufficientData("cannot fit normalization on an empty table".into()));
        }
        let min = table.columns().into_iter().map(|c| c.fold(f64::INFINITY, |a, &b| a.min(b))).collect();
        let max = table.columns().into_iter().map(|c| c.fold(f64::NEG_INFINITY, |a, &b| a.max(b))).collect();
        Self::new(min, max)
    }

    pub fn features(&self) -> usize {
        self.min.len()
    }

    pub fn is_constant(&self, feature: usize) -> bool {
        self.max[feature] == self.min[feature]
    }
}

fn check(window: &SeriesWindow, state: &NormalizationState) -> Result<()> {
    if window.features() != state.features() {
        return Err(Error::Validation(format!(
            "window has {} features but the normalization has {}",
            window.features(),
            state.features()
        )));
    }
    Ok(())
}

/// `(x − min)/(max − min)` per feature; constant features map to 0.5.
pub fn normalize(window: &SeriesWindow, state: &NormalizationState) -> Result<SeriesWindow> {
    check(window, state)?;
    let mut v = window.values().to_owned();
    for (f, mut col) in v.columns_mut().into_iter().enumerate() {
        if state.is_constant(f) {
            col.fill(0.5);
        } else {
            let (lo, span) = (state.min[f], state.max[f] - state.min[f]);
            col.mapv_inplace(|x| (x - lo) / span);
        }
    }
    SeriesWindow::new(v)
}

/// Inverse of [`normalize`]; constant features return their constant.
pub fn denormalize(window: &SeriesWindow, state: &NormalizationState) -> Result<SeriesWindow> {
    check(window, state)?;
    let mut v = window.values().to_owned();
    for (f, mut col) in v.columns_mut().into_iter().enumerate() {
        if state.is_constant(f) {
            col.fill(state.min[f]);
        } else {
            let (lo, span) = (state.min[f], state.max[f] - state.min[f]);
            col.mapv_inplace(|x| lo + x * span);
        }
    }
    SeriesWindow::new(v)
}
