//! Small reverse-mode automatic differentiation over `f64` buffers, sized for
//! desk-scale convolutional, attention and recurrent models.

pub mod gemm;
pub mod optim;
pub mod params;
pub mod tape;

pub use optim::{clip_grad_norm, Adam};
pub use params::{Init, ParamId, ParamLayout, ParamSpec};
pub use tape::{Gradients, Tape, Var};
