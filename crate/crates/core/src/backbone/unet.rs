//! Reduced U-net used as the raw network inside the EDM denoiser.
//!
//! Layout: a 3x3 input convolution, one residual block per resolution level
//! on the way down (2x2 mean pooling between levels), a middle block, then
//! one residual block per level on the way up, each fed the concatenation of
//! the upsampled path and the matching encoder activation, and finally a 3x3
//! output convolution. Every residual block adds a per-channel projection of
//! the noise embedding after its first convolution.
//!
//! The noise embedding is `silu(W·φ(c_noise) + b)` where `φ` stacks
//! `sin(2^j c_noise)` and `cos(2^j c_noise)` for `j < NOISE_FREQS`.

use dsdiff_nn::{Init, ParamId, ParamLayout, Tape, Var};

use crate::{Error, Result};

pub(crate) const NOISE_FREQS: usize = 8;

/// Shape of the denoiser network.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserConfig {
    pub base_channels: usize,
    pub channel_multipliers: Vec<usize>,
    pub in_channels: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub sigma_data: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            channel_multipliers: vec![1, 2, 2, 2],
            in_channels: 5,
            image_height: 8,
            image_width: 8,
            sigma_data: 0.5,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.in_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.channel_multipliers.is_empty() || self.channel_multipliers.contains(&0) {
            return Err(Error::Config(format!(
                "channel multipliers must be non-empty and positive, got {:?}",
                self.channel_multipliers
            )));
        }
        let factor = 1usize << (self.channel_multipliers.len() - 1);
        if self.image_height == 0
            || self.image_width == 0
            || self.image_height % factor != 0
            || self.image_width % factor != 0
        {
            return Err(Error::Config(format!(
                "image {}x{} is not divisible by {factor} for {} levels",
                self.image_height,
                self.image_width,
                self.channel_multipliers.len()
            )));
        }
        if !(self.sigma_data > 0.0 && self.sigma_data.is_finite()) {
            return Err(Error::Config(format!("sigma_data must be positive, got {}", self.sigma_data)));
        }
        Ok(())
    }

    fn channels(&self) -> Vec<usize> {
        self.channel_multipliers.iter().map(|m| m * self.base_channels).collect()
    }

    fn embedding_dim(&self) -> usize {
        2 * self.base_channels
    }
}

#[derive(Clone, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn register(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize, k: usize, gain: f64) -> Self {
        let bound = gain / ((cin * k * k) as f64).sqrt();
        Self {
            w: layout.push(format!("{name}.weight"), &[cout, cin, k, k], Init::Uniform(bound)),
            b: layout.push(format!("{name}.bias"), &[cout], Init::Zeros),
        }
    }

    fn apply(&self, tape: &mut Tape, layout: &ParamLayout, x: Var) -> Var {
        let w = tape.param(layout.spec(self.w));
        let b = tape.param(layout.spec(self.b));
        tape.conv2d(x, w, b)
    }
}

#[derive(Clone, Debug)]
struct ResBlock {
    conv1: Conv,
    emb_w: ParamId,
    emb_b: ParamId,
    conv2: Conv,
    skip: Option<Conv>,
}

impl ResBlock {
    fn register(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize, emb: usize) -> Self {
        let conv1 = Conv::register(layout, &format!("{name}.conv1"), cin, cout, 3, 1.0);
        let bound = 1.0 / (emb as f64).sqrt();
        let emb_w = layout.push(format!("{name}.emb.weight"), &[emb, cout], Init::Uniform(bound));
        let emb_b = layout.push(format!("{name}.emb.bias"), &[cout], Init::Zeros);
        let conv2 = Conv::register(layout, &format!("{name}.conv2"), cout, cout, 3, 1.0);
        let skip = (cin != cout).then(|| Conv::register(layout, &format!("{name}.skip"), cin, cout, 1, 1.0));
        Self {
            conv1,
            emb_w,
            emb_b,
            conv2,
            skip,
        }
    }

    fn apply(&self, tape: &mut Tape, layout: &ParamLayout, x: Var, emb: Var) -> Var {
        let h = tape.silu(x);
        let h = self.conv1.apply(tape, layout, h);
        let ew = tape.param(layout.spec(self.emb_w));
        let eb = tape.param(layout.spec(self.emb_b));
        let e = tape.linear(emb, ew, eb);
        let h = tape.add_channel(h, e);
        let h = tape.silu(h);
        let h = self.conv2.apply(tape, layout, h);
        let skip = match &self.skip {
            Some(conv) => conv.apply(tape, layout, x),
            None => x,
        };
        tape.add(h, skip)
    }
}

/// Parameter layout and forward pass of the network. Weights live outside.
#[derive(Clone, Debug)]
pub struct UNet {
    config: DenoiserConfig,
    layout: ParamLayout,
    emb_w: ParamId,
    emb_b: ParamId,
    conv_in: Conv,
    down: Vec<ResBlock>,
    mid: ResBlock,
    up: Vec<ResBlock>,
    conv_out: Conv,
}

impl UNet {
    pub fn new(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let ch = config.channels();
        let e = config.embedding_dim();
        let mut layout = ParamLayout::new();
        let emb_w = layout.push(
            "noise_emb.weight",
            &[2 * NOISE_FREQS, e],
            Init::Uniform(1.0 / ((2 * NOISE_FREQS) as f64).sqrt()),
        );
        let emb_b = layout.push("noise_emb.bias", &[e], Init::Zeros);
        let conv_in = Conv::register(&mut layout, "conv_in", config.in_channels, ch[0], 3, 1.0);
        let mut down = Vec::with_capacity(ch.len());
        let mut prev = ch[0];
        for (lvl, &c) in ch.iter().enumerate() {
            down.push(ResBlock::register(&mut layout, &format!("down{lvl}"), prev, c, e));
            prev = c;
        }
        let mid = ResBlock::register(&mut layout, "mid", prev, prev, e);
        let mut up: Vec<ResBlock> = Vec::with_capacity(ch.len());
        for (lvl, &c) in ch.iter().enumerate().rev() {
            up.push(ResBlock::register(&mut layout, &format!("up{lvl}"), prev + c, c, e));
            prev = c;
        }
        up.reverse();
        let conv_out = Conv::register(&mut layout, "conv_out", ch[0], config.in_channels, 3, 0.1);
        Ok(Self {
            config,
            layout,
            emb_w,
            emb_b,
            conv_in,
            down,
            mid,
            up,
            conv_out,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Runs the network on `x: [F, B, H, W]` with one `c_noise` per batch item.
    pub fn forward(&self, tape: &mut Tape, x: Var, c_noise: &[f64]) -> Var {
        let layout = &self.layout;
        let feats: Vec<f64> = c_noise
            .iter()
            .flat_map(|&c| {
                (0..NOISE_FREQS).flat_map(move |j| {
                    let a = c * (1u32 << j) as f64;
                    [a.sin(), a.cos()]
                })
            })
            .collect();
        let feats = tape.constant(feats, &[c_noise.len(), 2 * NOISE_FREQS]);
        let ew = tape.param(layout.spec(self.emb_w));
        let eb = tape.param(layout.spec(self.emb_b));
        let emb = tape.linear(feats, ew, eb);
        let emb = tape.silu(emb);

        let levels = self.down.len();
        let mut h = self.conv_in.apply(tape, layout, x);
        let mut skips = Vec::with_capacity(levels);
        for (lvl, block) in self.down.iter().enumerate() {
            h = block.apply(tape, layout, h, emb);
            skips.push(h);
            if lvl + 1 < levels {
                h = tape.avg_pool2(h);
            }
        }
        h = self.mid.apply(tape, layout, h, emb);
        for lvl in (0..levels).rev() {
            let cat = tape.concat_rows(&[h, skips[lvl]]);
            h = self.up[lvl].apply(tape, layout, cat, emb);
            if lvl > 0 {
                h = tape.upsample2(h);
            }
        }
        let h = tape.silu(h);
        self.conv_out.apply(tape, layout, h)
    }
}
