//! Transformer encoder that maps `[component | style | t/T]` rows to a guided
//! component.
//!
//! Weight layout, in order (`D` = model dim, `F` = features, `L` = length):
//!
//! | name                     | shape        |
//! |--------------------------|--------------|
//! | `embed.weight`           | `[2F+1, D]`  |
//! | `embed.bias`             | `[D]`        |
//! | `pos`                    | `[L, D]`     |
//! | per layer `i`:           |              |
//! | `layer{i}.{q,k,v,o}.weight` | `[D, D]`  |
//! | `layer{i}.{q,k,v,o}.bias`   | `[D]`     |
//! | `layer{i}.ln1.{gamma,beta}` | `[D]`     |
//! | `layer{i}.ff1.weight`    | `[D, H]`     |
//! | `layer{i}.ff1.bias`      | `[H]`        |
//! | `layer{i}.ff2.weight`    | `[H, D]`     |
//! | `layer{i}.ff2.bias`      | `[D]`        |
//! | `layer{i}.ln2.{gamma,beta}` | `[D]`     |
//! | `head.weight`            | `[D, F]`     |
//! | `head.bias`              | `[F]`        |
//!
//! Each layer is pre-norm: `h = h + Attn(LN(h))`, `h = h + FF(LN(h))` with a
//! GELU feed-forward of hidden width `H`. The head reads the residual stream
//! directly.

use dsdiff_nn::{Init, ParamId, ParamLayout, ParamSpec, Tape, Var};
use ndarray::Array2;
use rand::Rng;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceConfig {
    pub features: usize,
    pub seq_len: usize,
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
}

impl GuidanceConfig {
    /// Table defaults (2 layers, width 64) for `features` channels of
    /// windows of length `seq_len`.
    pub fn new(features: usize, seq_len: usize) -> Self {
        Self {
            features,
            seq_len,
            layers: 2,
            model_dim: 64,
            heads: 4,
            ff_dim: 128,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.features + 1
    }

    pub fn output_dim(&self) -> usize {
        self.features
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.seq_len == 0 || self.layers == 0 || self.model_dim == 0 || self.ff_dim == 0 {
            return Err(Error::Config(format!("guidance dimensions must be positive: {self:?}")));
        }
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model dim {} is not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn register(layout: &mut ParamLayout, name: &str, din: usize, dout: usize) -> Self {
        let bound = 1.0 / (din as f64).sqrt();
        Self {
            w: layout.push(format!("{name}.weight"), &[din, dout], Init::Uniform(bound)),
            b: layout.push(format!("{name}.bias"), &[dout], Init::Zeros),
        }
    }

    fn apply(&self, tape: &mut Tape, layout: &ParamLayout, x: Var) -> Var {
        let w = tape.param(layout.spec(self.w));
        let b = tape.param(layout.spec(self.b));
        tape.linear(x, w, b)
    }
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    fn register(layout: &mut ParamLayout, name: &str, d: usize) -> Self {
        Self {
            gamma: layout.push(format!("{name}.gamma"), &[d], Init::Ones),
            beta: layout.push(format!("{name}.beta"), &[d], Init::Zeros),
        }
    }

    fn apply(&self, tape: &mut Tape, layout: &ParamLayout, x: Var) -> Var {
        let g = tape.param(layout.spec(self.gamma));
        let b = tape.param(layout.spec(self.beta));
        tape.layer_norm(x, g, b)
    }
}

#[derive(Clone, Debug)]
struct Layer {
    q: Dense,
    k: Dense,
    v: Dense,
    o: Dense,
    ln1: Norm,
    ff1: Dense,
    ff2: Dense,
    ln2: Norm,
}

/// Guidance transformer with its flat weight vector.
#[derive(Clone, Debug)]
pub struct GuidanceNet {
    config: GuidanceConfig,
    layout: ParamLayout,
    embed: Dense,
    pos: ParamId,
    layers: Vec<Layer>,
    head: Dense,
    weights: Vec<f64>,
}

impl GuidanceNet {
    fn build(config: GuidanceConfig) -> Result<(ParamLayout, Dense, ParamId, Vec<Layer>, Dense, GuidanceConfig)> {
        config.validate()?;
        let d = config.model_dim;
        let mut layout = ParamLayout::new();
        let embed = Dense::register(&mut layout, "embed", config.input_dim(), d);
        let pos = layout.push("pos", &[config.seq_len, d], Init::Normal(0.02));
        let layers = (0..config.layers)
            .map(|i| Layer {
                q: Dense::register(&mut layout, &format!("layer{i}.q"), d, d),
                k: Dense::register(&mut layout, &format!("layer{i}.k"), d, d),
                v: Dense::register(&mut layout, &format!("layer{i}.v"), d, d),
                o: Dense::register(&mut layout, &format!("layer{i}.o"), d, d),
                ln1: Norm::register(&mut layout, &format!("layer{i}.ln1"), d),
                ff1: Dense::register(&mut layout, &format!("layer{i}.ff1"), d, config.ff_dim),
                ff2: Dense::register(&mut layout, &format!("layer{i}.ff2"), config.ff_dim, d),
                ln2: Norm::register(&mut layout, &format!("layer{i}.ln2"), d),
            })
            .collect();
        let head = Dense::register(&mut layout, "head", d, config.output_dim());
        Ok((layout, embed, pos, layers, head, config))
    }

    pub fn new<R: Rng + ?Sized>(config: GuidanceConfig, rng: &mut R) -> Result<Self> {
        let (layout, embed, pos, layers, head, config) = Self::build(config)?;
        let weights = layout.initialize(rng);
        Ok(Self {
            config,
            layout,
            embed,
            pos,
            layers,
            head,
            weights,
        })
    }

    pub fn from_weights(config: GuidanceConfig, weights: Vec<f64>) -> Result<Self> {
        let (layout, embed, pos, layers, head, config) = Self::build(config)?;
        if weights.len() != layout.len() {
            return Err(Error::Validation(format!(
                "expected {} guidance weights, got {}",
                layout.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("guidance weights contain non-finite values".into()));
        }
        Ok(Self {
            config,
            layout,
            embed,
            pos,
            layers,
            head,
            weights,
        })
    }

    pub fn config(&self) -> &GuidanceConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Spec of a named parameter block.
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.layout.find(name)
    }

    /// `x: [batch·L, 2F+1]` to `[batch·L, F]`.
    pub fn forward(&self, tape: &mut Tape, x: Var, batch: usize) -> Var {
        let layout = &self.layout;
        let mut h = self.embed.apply(tape, layout, x);
        let pos = tape.param(layout.spec(self.pos));
        h = tape.add_tiled(h, pos);
        for l in &self.layers {
            let n = l.ln1.apply(tape, layout, h);
            let q = l.q.apply(tape, layout, n);
            let k = l.k.apply(tape, layout, n);
            let v = l.v.apply(tape, layout, n);
            let a = tape.attention(q, k, v, batch, self.config.seq_len, self.config.heads);
            let a = l.o.apply(tape, layout, a);
            h = tape.add(h, a);
            let n = l.ln2.apply(tape, layout, h);
            let f = l.ff1.apply(tape, layout, n);
            let f = tape.gelu(f);
            let f = l.ff2.apply(tape, layout, f);
            h = tape.add(h, f);
        }
        self.head.apply(tape, layout, h)
    }

    /// Checks a batch of `(component, style)` pairs against the config.
    fn check(&self, components: &[Array2<f64>], styles: &[&Array2<f64>]) -> Result<()> {
        let (l, f) = (self.config.seq_len, self.config.features);
        if components.len() != styles.len() {
            return Err(Error::Validation(format!(
                "{} components but {} styles",
                components.len(),
                styles.len()
            )));
        }
        for (c, s) in components.iter().zip(styles) {
            if c.dim() != s.dim() {
                return Err(Error::Validation(format!(
                    "component is {:?} but style is {:?}",
                    c.dim(),
                    s.dim()
                )));
            }
            if c.dim() != (l, f) {
                return Err(Error::Config(format!(
                    "guidance net expects {l}x{f} inputs, got {:?}",
                    c.dim()
                )));
            }
        }
        Ok(())
    }

    /// Runs the net on several inputs sharing one time value.
    pub fn apply_batch(&self, components: &[Array2<f64>], styles: &[&Array2<f64>], t_norm: f64) -> Result<Vec<Array2<f64>>> {
        self.check(components, styles)?;
        if components.is_empty() {
            return Ok(Vec::new());
        }
        let (l, f) = (self.config.seq_len, self.config.features);
        let mut rows = Vec::with_capacity(components.len() * l * (2 * f + 1));
        for (c, s) in components.iter().zip(styles) {
            rows.extend(guidance_input(c, s, t_norm)?.iter().copied());
        }
        let b = components.len();
        let mut tape = Tape::new(&self.weights);
        let x = tape.constant(rows, &[b * l, 2 * f + 1]);
        let out = self.forward(&mut tape, x, b);
        let out = tape.into_value(out);
        Ok(out
            .chunks(l * f)
            .map(|c| Array2::from_shape_vec((l, f), c.to_vec()).expect("sized by construction"))
            .collect())
    }
}

/// Rows `[component_k | style_k | t_norm]` for every time step `k`.
pub fn guidance_input(component: &Array2<f64>, style: &Array2<f64>, t_norm: f64) -> Result<Array2<f64>> {
    if component.dim() != style.dim() {
        return Err(Error::Validation(format!(
            "component is {:?} but style is {:?}",
            component.dim(),
            style.dim()
        )));
    }
    if !(0.0..=1.0).contains(&t_norm) {
        return Err(Error::Validation(format!("normalized time {t_norm} is outside [0, 1]")));
    }
    let (l, f) = component.dim();
    let mut out = Array2::zeros((l, 2 * f + 1));
    for k in 0..l {
        for j in 0..f {
            out[[k, j]] = component[[k, j]];
            out[[k, f + j]] = style[[k, j]];
        }
        out[[k, 2 * f]] = t_norm;
    }
    Ok(out)
}

/// Guided component for one `(component, style)` pair.
pub fn guide_component(net: &GuidanceNet, component: &Array2<f64>, style: &Array2<f64>, t_norm: f64) -> Result<Array2<f64>> {
    let mut out = net.apply_batch(std::slice::from_ref(component), &[style], t_norm)?;
    Ok(out.remove(0))
}
