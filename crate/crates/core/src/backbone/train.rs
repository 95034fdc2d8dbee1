use dsdiff_nn::{clip_grad_norm, Adam};
use rand::seq::SliceRandom;
use rand::Rng;

use super::edm::{Denoiser, ImageDenoiser, NoiseDraw};
use super::unet::DenoiserConfig;
use crate::series::{ImageTensor, SeriesWindow};
use crate::transform::{to_image, TransformParams};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Decay of an exponential moving average of the weights. When set, the
    /// averaged weights are the ones returned after training.
    pub ema_decay: Option<f64>,
}

impl Default for BackboneTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-4,
            weight_decay: 0.0,
            grad_clip: Some(1.0),
            ema_decay: None,
        }
    }
}

impl BackboneTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.weight_decay < 0.0 || self.grad_clip.is_some_and(|c| c <= 0.0) {
            return Err(Error::Config("weight decay and gradient clip must be non-negative".into()));
        }
        if self.ema_decay.is_some_and(|d| !(0.0..1.0).contains(&d)) {
            return Err(Error::Config("EMA decay must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Optimizer state around a denoiser; one call to [`epoch`](Self::epoch)
/// per pass over the data.
pub struct BackboneTrainer {
    denoiser: Denoiser,
    adam: Adam,
    cfg: BackboneTrainConfig,
    history: Vec<f64>,
    ema: Option<Vec<f64>>,
}

impl BackboneTrainer {
    pub fn new(denoiser: Denoiser, cfg: BackboneTrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = Adam::new(denoiser.weights().len(), cfg.learning_rate).with_weight_decay(cfg.weight_decay);
        let ema = cfg.ema_decay.map(|_| denoiser.weights().to_vec());
        Ok(Self {
            denoiser,
            adam,
            cfg,
            history: Vec::new(),
            ema,
        })
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.denoiser
    }

    /// Mean training loss of every completed epoch.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// One shuffled pass over `images`; returns the mean minibatch loss.
    pub fn epoch<R: Rng + ?Sized>(&mut self, images: &[ImageTensor], rng: &mut R) -> Result<f64> {
        if images.is_empty() {
            return Err(Error::Validation("training set is empty".into()));
        }
        let shape = self.denoiser.image_shape();
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(self.cfg.batch_size) {
            let batch: Vec<ImageTensor> = idx.iter().map(|&i| images[i].clone()).collect();
            let draw = NoiseDraw::sample(batch.len(), shape, rng);
            let (loss, mut grads) = self.denoiser.loss_and_grad(&batch, &draw)?;
            if let Some(c) = self.cfg.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            self.adam.step(self.denoiser.weights_mut(), &grads);
            if let (Some(avg), Some(d)) = (self.ema.as_mut(), self.cfg.ema_decay) {
                for (a, &w) in avg.iter_mut().zip(self.denoiser.weights()) {
                    *a = d * *a + (1.0 - d) * w;
                }
            }
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        self.history.push(mean);
        Ok(mean)
    }

    /// Averaged weights, if an EMA is kept.
    pub fn ema_weights(&self) -> Option<&[f64]> {
        self.ema.as_deref()
    }

    /// The trained denoiser, carrying the averaged weights when an EMA is kept.
    pub fn into_parts(mut self) -> (Denoiser, Vec<f64>) {
        if let Some(avg) = self.ema {
            self.denoiser.weights_mut().copy_from_slice(&avg);
        }
        (self.denoiser, self.history)
    }
}

/// Fits a freshly initialized denoiser to the delay-embedded `dataset`.
/// Returns the trained model and its per-epoch loss history.
pub fn train_backbone<R: Rng + ?Sized>(
    dataset: &[SeriesWindow],
    transform: &TransformParams,
    config: DenoiserConfig,
    cfg: &BackboneTrainConfig,
    rng: &mut R,
) -> Result<(Denoiser, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let images: Vec<ImageTensor> = dataset.iter().map(|w| to_image(w, transform)).collect::<Result<_>>()?;
    let denoiser = Denoiser::new(config, rng)?;
    if images[0].dim() != denoiser.image_shape() {
        return Err(Error::Config(format!(
            "dataset images are {:?} but the denoiser expects {:?}",
            images[0].dim(),
            denoiser.image_shape()
        )));
    }
    let mut trainer = BackboneTrainer::new(denoiser, cfg.clone())?;
    for _ in 0..cfg.epochs {
        trainer.epoch(&images, rng)?;
    }
    Ok(trainer.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config(f: usize) -> DenoiserConfig {
        DenoiserConfig {
            base_channels: 8,
            channel_multipliers: vec![1, 2],
            in_channels: f,
            ..DenoiserConfig::default()
        }
    }

    fn sines(n: usize, rng: &mut ChaCha8Rng) -> Vec<SeriesWindow> {
        (0..n)
            .map(|_| {
                let f = rng.random_range(0.05..0.15);
                let p = rng.random_range(0.0..std::f64::consts::TAU);
                let v: Vec<f64> = (0..24)
                    .map(|k| 0.5 + 0.5 * (std::f64::consts::TAU * f * k as f64 + p).sin())
                    .collect();
                SeriesWindow::from_rows(24, 1, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn fixed_seed_gives_identical_history() {
        let data = sines(40, &mut ChaCha8Rng::seed_from_u64(0));
        let cfg = BackboneTrainConfig {
            epochs: 2,
            batch_size: 16,
            ..Default::default()
        };
        let run = |s| {
            train_backbone(&data, &TransformParams::default(), small_config(1), &cfg, &mut ChaCha8Rng::seed_from_u64(s))
                .unwrap()
        };
        let (a, ha) = run(5);
        let (b, hb) = run(5);
        assert_eq!(ha, hb);
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn ema_tracks_weights_and_is_returned() {
        let data = sines(32, &mut ChaCha8Rng::seed_from_u64(1));
        let images: Vec<ImageTensor> =
            data.iter().map(|w| to_image(w, &TransformParams::default()).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let den = Denoiser::new(small_config(1), &mut rng).unwrap();
        let start = den.weights().to_vec();
        let cfg = BackboneTrainConfig {
            batch_size: 32,
            ema_decay: Some(0.5),
            ..Default::default()
        };
        let mut tr = BackboneTrainer::new(den, cfg).unwrap();
        tr.epoch(&images, &mut rng).unwrap();
        let w = tr.denoiser().weights().to_vec();
        let avg = tr.ema_weights().unwrap().to_vec();
        for ((a, s), w) in avg.iter().zip(&start).zip(&w) {
            assert!((a - 0.5 * (s + w)).abs() < 1e-15);
        }
        let (out, _) = tr.into_parts();
        assert_eq!(out.weights(), &avg[..]);
    }

    #[test]
    fn rejects_empty_dataset_and_bad_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = train_backbone(&[], &TransformParams::default(), small_config(1), &Default::default(), &mut rng);
        assert!(matches!(err, Err(Error::Validation(_))));
        let data = sines(2, &mut rng);
        let cfg = BackboneTrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(matches!(
            train_backbone(&data, &TransformParams::default(), small_config(1), &cfg, &mut rng),
            Err(Error::Config(_))
        ));
        let cfg = BackboneTrainConfig {
            ema_decay: Some(1.0),
            ..Default::default()
        };
        assert!(matches!(
            train_backbone(&data, &TransformParams::default(), small_config(1), &cfg, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_backbone(&data, &TransformParams::default(), small_config(3), &Default::default(), &mut rng),
            Err(Error::Config(_))
        ));
    }
}
