//! Delay-embedding bridge between series windows and images.
//!
//! Column `j` of a feature's image plane holds the samples
//! `[j·delay, j·delay + embedding)`. When `(L − embedding)` is not a multiple
//! of `delay`, one extra column aligned to the end of the window is added so
//! that every sample is covered. Columns past the natural count are edge
//! replicas of the last natural column and are ignored on inversion, where
//! every sample becomes the unweighted mean of the cells it was copied to.

use ndarray::{Array2, Array3};

use crate::series::{ImageTensor, SeriesWindow};
use crate::{Error, Result};

/// Embedding height, column stride and target width of the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransformParams {
    pub embedding: usize,
    pub delay: usize,
    pub width: usize,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self {
            embedding: 8,
            delay: 3,
            width: 8,
        }
    }
}

impl TransformParams {
    pub fn new(embedding: usize, delay: usize, width: usize) -> Self {
        Self {
            embedding,
            delay,
            width,
        }
    }

    /// Start offsets of the natural (non-padding) columns for a window of
    /// length `len`.
    pub fn column_starts(&self, len: usize) -> Result<Vec<usize>> {
        if self.embedding == 0 || self.delay == 0 || self.width == 0 {
            return Err(Error::InvalidTransform(format!(
                "embedding, delay and width must be positive (got {self:?})"
            )));
        }
        if len < self.embedding {
            return Err(Error::InvalidTransform(format!(
                "window length {len} is shorter than the embedding {}",
                self.embedding
            )));
        }
        let span = len - self.embedding;
        let mut starts: Vec<usize> = (0..=span / self.delay).map(|j| j * self.delay).collect();
        if span % self.delay != 0 {
            starts.push(span);
        }
        if starts.len() > self.width {
            return Err(Error::InvalidTransform(format!(
                "window length {len} needs {} columns but the image width is {}",
                starts.len(),
                self.width
            )));
        }
        Ok(starts)
    }

    /// Number of natural columns for a window of length `len`.
    pub fn natural_columns(&self, len: usize) -> Result<usize> {
        self.column_starts(len).map(|s| s.len())
    }

    pub fn validate_for(&self, len: usize) -> Result<()> {
        self.column_starts(len).map(|_| ())
    }
}

/// Embeds each feature of `window` into an `embedding x width` plane.
pub fn to_image(window: &SeriesWindow, p: &TransformParams) -> Result<ImageTensor> {
    let starts = p.column_starts(window.len())?;
    let values = window.values();
    let f = window.features();
    let mut img = Array3::<f64>::zeros((f, p.embedding, p.width));
    for c in 0..f {
        for col in 0..p.width {
            let start = starts[col.min(starts.len() - 1)];
            for r in 0..p.embedding {
                img[[c, r, col]] = values[[start + r, c]];
            }
        }
    }
    ImageTensor::new(img)
}

/// Inverts [`to_image`] for a window of length `len` by averaging every cell
/// that maps to the same sample. Padding columns do not contribute.
pub fn from_image(img: &ImageTensor, p: &TransformParams, len: usize) -> Result<SeriesWindow> {
    let starts = p.column_starts(len)?;
    let (f, h, w) = img.dim();
    if h != p.embedding || w != p.width {
        return Err(Error::Validation(format!(
            "image is {h}x{w} but the transform expects {}x{}",
            p.embedding, p.width
        )));
    }
    if f == 0 {
        return Err(Error::Validation("image has no channels".into()));
    }
    let mut counts = vec![0usize; len];
    for &s in &starts {
        for c in counts.iter_mut().skip(s).take(p.embedding) {
            *c += 1;
        }
    }
    let vals = img.values();
    let mut out = Array2::<f64>::zeros((len, f));
    for ch in 0..f {
        for (col, &s) in starts.iter().enumerate() {
            for r in 0..p.embedding {
                out[[s + r, ch]] += vals[[ch, r, col]];
            }
        }
        for t in 0..len {
            out[[t, ch]] /= counts[t] as f64;
        }
    }
    SeriesWindow::new(out)
}
