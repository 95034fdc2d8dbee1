use dsdiff_nn::{clip_grad_norm, Adam, Tape};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::net::{guidance_input, GuidanceConfig, GuidanceNet};
use super::thd::KernelConfig;
use crate::backbone::{heun_step_batch, initial_noise, ImageDenoiser};
use crate::decomposition::DataStyle;
use crate::series::{ImageTensor, SeriesWindow};
use crate::transform::{from_image, to_image};
use crate::{Error, Result};

/// Images per batched backbone call while building pairs.
const STEP_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Interior time steps drawn per real sample when building pairs.
    pub pairs_per_sample: usize,
    pub grad_clip: Option<f64>,
    /// Epochs between rebuilds of the pairs with new time steps and noise.
    /// Zero keeps the first set for the whole run.
    pub refresh_every: usize,
}

impl Default for GuidanceTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            pairs_per_sample: 1,
            grad_clip: Some(1.0),
            refresh_every: 5,
        }
    }
}

impl GuidanceTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.pairs_per_sample == 0 {
            return Err(Error::Config("batch size and pairs per sample must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.grad_clip.is_some_and(|c| c <= 0.0) {
            return Err(Error::Config("gradient clip must be positive".into()));
        }
        Ok(())
    }
}

/// One regression example shared by both nets.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub t_norm: f64,
    /// Components of the corrupted-then-stepped sample.
    pub input: DataStyle,
    /// Style of the clean sample.
    pub style: DataStyle,
    /// Trend and seasonal parts of the clean sample.
    pub target: DataStyle,
}

/// Builds `pairs_per_sample` pairs per window: noise the window's image to
/// the level of a random interior step, take that backbone step, invert and
/// decompose.
pub fn build_training_pairs<R: Rng + ?Sized>(
    dataset: &[SeriesWindow],
    backbone: &dyn ImageDenoiser,
    cfg: &KernelConfig,
    pairs_per_sample: usize,
    rng: &mut R,
) -> Result<Vec<TrainingPair>> {
    let steps = cfg.total_steps();
    if steps < 2 {
        return Err(Error::Config("schedule has no interior steps".into()));
    }
    let styles: Vec<DataStyle> = dataset.iter().map(|x| cfg.decomposer.style(x)).collect::<Result<_>>()?;
    let mut draws = Vec::with_capacity(dataset.len() * pairs_per_sample);
    for x in dataset {
        let clean = to_image(x, &cfg.transform)?;
        for _ in 0..pairs_per_sample {
            let t = rng.random_range(1..steps);
            let eps = initial_noise(clean.dim(), 1, cfg.sigmas_for(t)?.0, rng).remove(0);
            draws.push((t, ImageTensor::new(clean.values() + eps.values())?));
        }
    }

    // One batched backbone step per time index.
    let mut stepped: Vec<Option<ImageTensor>> = vec![None; draws.len()];
    for t in 1..steps {
        let idx: Vec<usize> = (0..draws.len()).filter(|&i| draws[i].0 == t).collect();
        let (sc, sn) = cfg.sigmas_for(t)?;
        for chunk in idx.chunks(STEP_CHUNK) {
            let xs: Vec<ImageTensor> = chunk.iter().map(|&i| draws[i].1.clone()).collect();
            for (&i, y) in chunk.iter().zip(heun_step_batch(backbone, &xs, sc, sn)?) {
                stepped[i] = Some(y);
            }
        }
    }

    let mut pairs = Vec::with_capacity(draws.len());
    for (i, ((t, _), img)) in draws.into_iter().zip(stepped).enumerate() {
        let x = &dataset[i / pairs_per_sample];
        let img = img.expect("every draw has an interior time index");
        let c = cfg.decomposer.decompose(&from_image(&img, &cfg.transform, x.len())?)?;
        let style = &styles[i / pairs_per_sample];
        pairs.push(TrainingPair {
            t_norm: t as f64 / steps as f64,
            input: DataStyle {
                trend: c.trend,
                seasonal: c.seasonal,
            },
            style: style.clone(),
            target: style.clone(),
        });
    }
    Ok(pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Trend,
    Seasonal,
}

impl Part {
    fn of(self, s: &DataStyle) -> &Array2<f64> {
        match self {
            Part::Trend => &s.trend,
            Part::Seasonal => &s.seasonal,
        }
    }
}

/// Mean squared error of `net` on `pairs` for one part, with its gradient.
pub fn guidance_loss_and_grad(net: &GuidanceNet, pairs: &[&TrainingPair], part: Part) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::Validation("loss needs a non-empty batch".into()));
    }
    let (l, f) = (net.config().seq_len, net.config().features);
    let mut rows = Vec::with_capacity(pairs.len() * l * (2 * f + 1));
    let mut target = Vec::with_capacity(pairs.len() * l * f);
    for p in pairs {
        let x = guidance_input(part.of(&p.input), part.of(&p.style), p.t_norm)?;
        if x.nrows() != l || x.ncols() != 2 * f + 1 {
            return Err(Error::Config(format!("pair is {:?} but the net expects {l}x{f}", part.of(&p.input).dim())));
        }
        rows.extend(x.iter().copied());
        target.extend(part.of(&p.target).iter().copied());
    }
    let n = target.len() as f64;
    let mut tape = Tape::new(net.weights());
    let x = tape.constant(rows, &[pairs.len() * l, 2 * f + 1]);
    let out = net.forward(&mut tape, x, pairs.len());
    let loss = tape.squared_error(out, target, 1.0 / n);
    let value = tape.scalar(loss);
    Ok((value, tape.backward(loss).params))
}

/// Adam loop over precomputed pairs for one net.
pub struct GuidanceTrainer {
    net: GuidanceNet,
    part: Part,
    adam: Adam,
    cfg: GuidanceTrainConfig,
    history: Vec<f64>,
}

impl GuidanceTrainer {
    pub fn new(net: GuidanceNet, part: Part, cfg: GuidanceTrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = Adam::new(net.weights().len(), cfg.learning_rate);
        Ok(Self {
            net,
            part,
            adam,
            cfg,
            history: Vec::new(),
        })
    }

    pub fn net(&self) -> &GuidanceNet {
        &self.net
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn epoch<R: Rng + ?Sized>(&mut self, pairs: &[TrainingPair], rng: &mut R) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::Validation("no training pairs".into()));
        }
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&TrainingPair> = idx.iter().map(|&i| &pairs[i]).collect();
            let (loss, mut grads) = guidance_loss_and_grad(&self.net, &batch, self.part)?;
            if let Some(c) = self.cfg.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            self.adam.step(self.net.weights_mut(), &grads);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        self.history.push(mean);
        Ok(mean)
    }

    pub fn into_parts(self) -> (GuidanceNet, Vec<f64>) {
        (self.net, self.history)
    }
}

/// Both trained nets and their per-epoch loss histories.
#[derive(Clone, Debug)]
pub struct GuidanceModels {
    pub trend: GuidanceNet,
    pub seasonal: GuidanceNet,
    pub trend_history: Vec<f64>,
    pub seasonal_history: Vec<f64>,
}

/// Trains the trend and seasonal nets side by side on shared pairs, rebuilt
/// every `refresh_every` epochs.
pub fn train_guidance<R: Rng + ?Sized>(
    dataset: &[SeriesWindow],
    backbone: &dyn ImageDenoiser,
    kernel: &KernelConfig,
    net_cfg: &GuidanceConfig,
    cfg: &GuidanceTrainConfig,
    rng: &mut R,
) -> Result<GuidanceModels> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let mut trend = GuidanceTrainer::new(GuidanceNet::new(net_cfg.clone(), rng)?, Part::Trend, cfg.clone())?;
    let mut seasonal = GuidanceTrainer::new(GuidanceNet::new(net_cfg.clone(), rng)?, Part::Seasonal, cfg.clone())?;
    let mut pairs = Vec::new();
    for e in 0..cfg.epochs {
        if e == 0 || (cfg.refresh_every > 0 && e % cfg.refresh_every == 0) {
            pairs = build_training_pairs(dataset, backbone, kernel, cfg.pairs_per_sample, rng)?;
        }
        trend.epoch(&pairs, rng)?;
        seasonal.epoch(&pairs, rng)?;
    }
    let (trend, trend_history) = trend.into_parts();
    let (seasonal, seasonal_history) = seasonal.into_parts();
    Ok(GuidanceModels {
        trend,
        seasonal,
        trend_history,
        seasonal_history,
    })
}
