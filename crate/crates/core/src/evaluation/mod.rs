//! Similarity metrics between real and generated window sets.

mod distribution;
mod pca;
mod recurrent;

use rand::Rng;

pub use distribution::{
    histograms, js_divergence, js_hist, kl_divergence, kl_hist, ks_1d, ks_statistic, pooled, smooth, wasserstein1,
    wasserstein1_1d,
};
pub use pca::{pca_project, PcaProjection};
pub use recurrent::RecurrentConfig;

use crate::series::SeriesWindow;
use crate::{Error, Result};

/// Minimum windows per side for the learned scores.
pub const MIN_SAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub histogram_bins: usize,
    pub smoothing_epsilon: f64,
    pub classifier: RecurrentConfig,
    pub predictor: RecurrentConfig,
    pub replicates: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            histogram_bins: 50,
            smoothing_epsilon: 1e-10,
            classifier: RecurrentConfig::default(),
            predictor: RecurrentConfig::default(),
            replicates: 5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.histogram_bins < 2 {
            return Err(Error::Config(format!("need at least 2 histogram bins, got {}", self.histogram_bins)));
        }
        if !(self.smoothing_epsilon > 0.0) {
            return Err(Error::Config("smoothing epsilon must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        self.classifier.validate()?;
        self.predictor.validate()
    }
}

fn check_learned(real: &[SeriesWindow], gen: &[SeriesWindow]) -> Result<()> {
    if real.len() < MIN_SAMPLES || gen.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "learned scores need at least {MIN_SAMPLES} windows per set, got {} and {}",
            real.len(),
            gen.len()
        )));
    }
    let shape = (real[0].len(), real[0].features());
    if real.iter().chain(gen).any(|w| (w.len(), w.features()) != shape) {
        return Err(Error::Validation("all windows must have the same shape".into()));
    }
    if shape.0 < 2 {
        return Err(Error::Validation("windows need at least two time steps".into()));
    }
    Ok(())
}

/// `|accuracy − 0.5|` of a recurrent real-vs-generated classifier on an
/// 80/20 split, averaged over replicates.
pub fn discriminative_score<R: Rng + ?Sized>(
    real: &[SeriesWindow],
    gen: &[SeriesWindow],
    cfg: &EvalConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    check_learned(real, gen)?;
    let seeds = recurrent::replicate_seeds(cfg.replicates, rng);
    let total: f64 = seeds
        .iter()
        .map(|&s| (recurrent::classifier_accuracy(real, gen, &cfg.classifier, s) - 0.5).abs())
        .sum();
    Ok(total / seeds.len() as f64)
}

/// Train on `gen`, test on `real`: MAE of a one-step-ahead recurrent
/// predictor, averaged over replicates.
pub fn predictive_score<R: Rng + ?Sized>(
    real: &[SeriesWindow],
    gen: &[SeriesWindow],
    cfg: &EvalConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    check_learned(real, gen)?;
    let seeds = recurrent::replicate_seeds(cfg.replicates, rng);
    let total: f64 = seeds
        .iter()
        .map(|&s| recurrent::predictor_mae(gen, real, &cfg.predictor, s))
        .sum();
    Ok(total / seeds.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub disc: f64,
    pub pred: f64,
    pub kl: f64,
    pub js: f64,
    pub wass: f64,
    pub ks: f64,
    pub seed: u64,
    pub replicates: usize,
}

const KEYS: [&str; 8] = ["disc", "pred", "kl", "js", "wass", "ks", "seed", "replicates"];

impl MetricReport {
    fn fields(&self) -> [String; 8] {
        [
            self.disc.to_string(),
            self.pred.to_string(),
            self.kl.to_string(),
            self.js.to_string(),
            self.wass.to_string(),
            self.ks.to_string(),
            self.seed.to_string(),
            self.replicates.to_string(),
        ]
    }

    /// One `key = value` line per field.
    pub fn to_key_value(&self) -> String {
        KEYS.iter()
            .zip(self.fields())
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn table_header() -> String {
        KEYS.join("\t")
    }

    pub fn table_row(&self) -> String {
        self.fields().join("\t")
    }

    /// Parses the output of [`to_key_value`](Self::to_key_value).
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut vals: [Option<&str>; 8] = [None; 8];
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key = value", n + 1)))?;
            let pos = KEYS
                .iter()
                .position(|key| *key == k.trim())
                .ok_or_else(|| Error::Format(format!("line {}: unknown key {:?}", n + 1, k.trim())))?;
            vals[pos] = Some(v.trim());
        }
        let get = |i: usize| vals[i].ok_or_else(|| Error::Format(format!("missing key {}", KEYS[i])));
        let real = |i: usize| -> Result<f64> {
            get(i)?.parse().map_err(|_| Error::Format(format!("{} is not a number", KEYS[i])))
        };
        let int = |i: usize| -> Result<u64> {
            get(i)?.parse().map_err(|_| Error::Format(format!("{} is not an integer", KEYS[i])))
        };
        Ok(Self {
            disc: real(0)?,
            pred: real(1)?,
            kl: real(2)?,
            js: real(3)?,
            wass: real(4)?,
            ks: real(5)?,
            seed: int(6)?,
            replicates: int(7)? as usize,
        })
    }
}

/// All six metrics; the learned scores draw their replicate seeds from `seed`.
pub fn evaluate(real: &[SeriesWindow], gen: &[SeriesWindow], cfg: &EvalConfig, seed: u64) -> Result<MetricReport> {
    use rand::SeedableRng;
    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok(MetricReport {
        disc: discriminative_score(real, gen, cfg, &mut rng)?,
        pred: predictive_score(real, gen, cfg, &mut rng)?,
        kl: kl_divergence(real, gen, cfg.histogram_bins, cfg.smoothing_epsilon)?,
        js: js_divergence(real, gen, cfg.histogram_bins)?,
        wass: wasserstein1(real, gen)?,
        ks: ks_statistic(real, gen)?,
        seed,
        replicates: cfg.replicates,
    })
}
