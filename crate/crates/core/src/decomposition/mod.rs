//! Trend / seasonal / residual decomposition and data-style extraction.

mod fourier;
mod loess;
mod stl;

use ndarray::Array2;

pub use fourier::fourier_split;
pub use stl::{stl_channel, stl_decompose, ResolvedStl, StlChannel, StlParams};

use crate::series::SeriesWindow;
use crate::Result;

/// The three additive parts of a window, each `L x F`.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleComponents {
    pub trend: Array2<f64>,
    pub seasonal: Array2<f64>,
    pub residual: Array2<f64>,
}

impl StyleComponents {
    /// `trend + seasonal + residual`.
    pub fn recompose(&self) -> Array2<f64> {
        &self.trend + &self.seasonal + &self.residual
    }
}

/// Trend and seasonal parts of a real sample, used to condition guidance.
#[derive(Clone, Debug, PartialEq)]
pub struct DataStyle {
    pub trend: Array2<f64>,
    pub seasonal: Array2<f64>,
}

impl DataStyle {
    pub fn len(&self) -> usize {
        self.trend.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    pub fn features(&self) -> usize {
        self.trend.ncols()
    }
}

impl From<StyleComponents> for DataStyle {
    fn from(c: StyleComponents) -> Self {
        Self {
            trend: c.trend,
            seasonal: c.seasonal,
        }
    }
}

/// STL trend and seasonal components of `sample`, residual dropped.
pub fn extract_style(sample: &SeriesWindow, params: &StlParams) -> Result<DataStyle> {
    stl_decompose(sample, params).map(DataStyle::from)
}

/// Selects the decomposition applied inside the guidance kernel.
#[derive(Clone, Debug, PartialEq)]
pub enum Decomposer {
    Stl(StlParams),
    Fourier { cutoff_bin: usize },
}

impl Default for Decomposer {
    fn default() -> Self {
        Decomposer::Stl(StlParams::default())
    }
}

impl Decomposer {
    pub fn decompose(&self, series: &SeriesWindow) -> Result<StyleComponents> {
        match self {
            Decomposer::Stl(p) => stl_decompose(series, p),
            Decomposer::Fourier { cutoff_bin } => fourier_split(series, *cutoff_bin),
        }
    }

    /// Trend and seasonal parts under this decomposer.
    pub fn style(&self, sample: &SeriesWindow) -> Result<DataStyle> {
        self.decompose(sample).map(DataStyle::from)
    }
}
