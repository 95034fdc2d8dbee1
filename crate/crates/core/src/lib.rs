//! Style-guided diffusion for multivariate time-series generation.
//!
//! A small EDM-preconditioned U-net denoises delay-embedded images of series
//! windows. At inference, a guidance kernel decomposes each intermediate
//! sample into trend, seasonal and residual parts, steers the first two with
//! time-conditioned transformers toward a real sample's style, and
//! recomposes them with the untouched residual.

pub mod backbone;
pub mod data;
pub mod decomposition;
mod error;
pub mod evaluation;
pub mod guidance;
pub mod series;
pub mod transform;

pub use error::{Error, Result};
pub use series::{ImageTensor, SeriesWindow};
