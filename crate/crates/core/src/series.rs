//! Sample containers shared by every module.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2};

use crate::{Error, Result};

/// An `L x F` window of a multivariate series (rows are time steps).
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesWindow {
    values: Array2<f64>,
}

impl SeriesWindow {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Validation(format!(
                "window must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("window contains non-finite value {bad}")));
        }
        Ok(Self { values })
    }

    /// Builds a window from row-major data.
    pub fn from_rows(len: usize, features: usize, data: Vec<f64>) -> Result<Self> {
        let values = Array2::from_shape_vec((len, features), data)
            .map_err(|e| Error::Validation(format!("window shape: {e}")))?;
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn features(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn feature(&self, f: usize) -> ArrayView1<'_, f64> {
        self.values.column(f)
    }

    /// Row-major copy of the values.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

/// An `F x H x W` image: one delay-embedded plane per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    values: Array3<f64>,
}

impl ImageTensor {
    pub fn new(values: Array3<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("image contains non-finite value {bad}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            values: Array3::zeros((channels, height, width)),
        }
    }

    /// Wraps values without the finiteness scan. Used on hot paths whose
    /// inputs were already validated.
    pub(crate) fn from_array_unchecked(values: Array3<f64>) -> Self {
        Self { values }
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
