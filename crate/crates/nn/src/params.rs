//! Flat parameter vectors with a named, ordered layout.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::fmt::Write as _;

/// Initialization rule for one parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform on `[-bound, bound]`.
    Uniform(f64),
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
}

/// One named tensor inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

/// Handle into a [`ParamLayout`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered registry of parameter tensors. Tensors are stored back to back,
/// row-major, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        let spec = ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.len,
            init,
        };
        self.len += spec.numel();
        self.specs.push(spec);
        ParamId(self.specs.len() - 1)
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Draws a fresh parameter vector according to each tensor's [`Init`].
    pub fn initialize<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for spec in &self.specs {
            let dst = &mut out[spec.range()];
            match spec.init {
                Init::Zeros => {}
                Init::Ones => dst.fill(1.0),
                Init::Uniform(bound) => {
                    for v in dst.iter_mut() {
                        *v = rng.random_range(-bound..=bound);
                    }
                }
                Init::Normal(std) => {
                    let normal = Normal::new(0.0, std).expect("finite std");
                    for v in dst.iter_mut() {
                        *v = normal.sample(rng);
                    }
                }
            }
        }
        out
    }

    /// Human-readable layout table: `offset  numel  name  [shape]` per line.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for spec in &self.specs {
            let _ = writeln!(
                s,
                "{:>10}  {:>8}  {}  {:?}",
                spec.offset,
                spec.numel(),
                spec.name,
                spec.shape
            );
        }
        s
    }
}
