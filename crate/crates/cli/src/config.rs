//! Layered run configuration: built-in defaults, then a TOML file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use dsdiff_core::backbone::{BackboneTrainConfig, DenoiserConfig, NoiseSchedule};
use dsdiff_core::decomposition::{Decomposer, StlParams};
use dsdiff_core::evaluation::{EvalConfig, RecurrentConfig};
use dsdiff_core::guidance::{GuidanceConfig, GuidanceTrainConfig, KernelConfig, StyleSelection};
use dsdiff_core::transform::TransformParams;
use dsdiff_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub transform: TransformSection,
    pub decomposition: DecompositionSection,
    pub schedule: ScheduleSection,
    pub backbone: BackboneSection,
    pub guidance: GuidanceSection,
    pub sampling: SamplingSection,
    pub evaluation: EvaluationSection,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataSection::default(),
            transform: TransformSection::default(),
            decomposition: DecompositionSection::default(),
            schedule: ScheduleSection::default(),
            backbone: BackboneSection::default(),
            guidance: GuidanceSection::default(),
            sampling: SamplingSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub samples: usize,
    pub length: usize,
    pub features: usize,
    pub stride: usize,
    pub delimiter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<usize>>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            samples: 2000,
            length: 24,
            features: 5,
            stride: 1,
            delimiter: ",".into(),
            columns: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSection {
    pub embedding: usize,
    pub delay: usize,
    pub width: usize,
}

impl Default for TransformSection {
    fn default() -> Self {
        let p = TransformParams::default();
        Self {
            embedding: p.embedding,
            delay: p.delay,
            width: p.width,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Stl,
    Fourier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionSection {
    pub method: Method,
    pub period: usize,
    pub robust: bool,
    pub seasonal_smoother: usize,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trend_smoother: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lowpass_smoother: Option<usize>,
    pub cutoff_bin: usize,
}

impl Default for DecompositionSection {
    fn default() -> Self {
        let p = StlParams::default();
        Self {
            method: Method::Stl,
            period: p.period,
            robust: p.robust,
            seasonal_smoother: p.seasonal_smoother,
            inner_iterations: p.inner_iterations,
            outer_iterations: p.outer_iterations,
            trend_smoother: p.trend_smoother,
            lowpass_smoother: p.lowpass_smoother,
            cutoff_bin: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub steps: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = NoiseSchedule::default();
        Self {
            sigma_min: s.sigma_min,
            sigma_max: s.sigma_max,
            rho: s.rho,
            steps: s.steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSection {
    pub base_channels: usize,
    pub channel_multipliers: Vec<usize>,
    pub sigma_data: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ema_decay: Option<f64>,
}

impl Default for BackboneSection {
    fn default() -> Self {
        let (d, t) = (DenoiserConfig::default(), BackboneTrainConfig::default());
        Self {
            base_channels: d.base_channels,
            channel_multipliers: d.channel_multipliers,
            sigma_data: d.sigma_data,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            grad_clip: t.grad_clip,
            ema_decay: t.ema_decay,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSection {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub pairs_per_sample: usize,
    pub refresh_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

impl Default for GuidanceSection {
    fn default() -> Self {
        let (n, t) = (GuidanceConfig::new(1, 1), GuidanceTrainConfig::default());
        Self {
            layers: n.layers,
            model_dim: n.model_dim,
            heads: n.heads,
            ff_dim: n.ff_dim,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            pairs_per_sample: t.pairs_per_sample,
            refresh_every: t.refresh_every,
            grad_clip: t.grad_clip,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub count: usize,
    pub guided: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style_index: Option<usize>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            count: 500,
            guided: true,
            style_index: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub bins: usize,
    pub epsilon: f64,
    pub replicates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    pub layers: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let (e, r) = (EvalConfig::default(), RecurrentConfig::default());
        Self {
            bins: e.histogram_bins,
            epsilon: e.smoothing_epsilon,
            replicates: e.replicates,
            hidden: r.hidden,
            layers: r.layers,
            iterations: r.iterations,
            batch_size: r.batch_size,
            learning_rate: r.learning_rate,
        }
    }
}

impl Settings {
    /// Defaults overlaid with `path`, if given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// Canonical TOML form; the config hash is taken over this text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings always serialize")
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Checks every section that does not depend on the data shape.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.samples == 0 || d.length == 0 || d.features == 0 || d.stride == 0 {
            return Err(Error::Config("data samples, length, features and stride must be positive".into()));
        }
        self.delimiter()?;
        self.schedule().validate()?;
        if let Decomposer::Stl(p) = self.decomposer() {
            p.validate()?;
        }
        self.backbone_training().validate()?;
        self.guidance_training().validate()?;
        self.eval_config().validate()?;
        if self.sampling.count == 0 {
            return Err(Error::Config("sampling count must be positive".into()));
        }
        Ok(())
    }

    pub fn delimiter(&self) -> Result<char> {
        let mut chars = self.data.delimiter.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c != '.' && c != '-' => Ok(c),
            _ => Err(Error::Config(format!(
                "delimiter must be a single character other than '.' and '-', got {:?}",
                self.data.delimiter
            ))),
        }
    }

    pub fn transform(&self) -> TransformParams {
        let t = &self.transform;
        TransformParams::new(t.embedding, t.delay, t.width)
    }

    pub fn decomposer(&self) -> Decomposer {
        let d = &self.decomposition;
        match d.method {
            Method::Stl => Decomposer::Stl(StlParams {
                period: d.period,
                robust: d.robust,
                inner_iterations: d.inner_iterations,
                outer_iterations: d.outer_iterations,
                seasonal_smoother: d.seasonal_smoother,
                trend_smoother: d.trend_smoother,
                lowpass_smoother: d.lowpass_smoother,
            }),
            Method::Fourier => Decomposer::Fourier {
                cutoff_bin: d.cutoff_bin,
            },
        }
    }

    pub fn schedule(&self) -> NoiseSchedule {
        let s = &self.schedule;
        NoiseSchedule {
            sigma_min: s.sigma_min,
            sigma_max: s.sigma_max,
            rho: s.rho,
            steps: s.steps,
        }
    }

    pub fn kernel(&self) -> KernelConfig {
        KernelConfig {
            decomposer: self.decomposer(),
            transform: self.transform(),
            schedule: self.schedule(),
            style_selection: match self.sampling.style_index {
                Some(i) => StyleSelection::Index(i),
                None => StyleSelection::Uniform,
            },
        }
    }

    pub fn denoiser(&self, features: usize) -> DenoiserConfig {
        let b = &self.backbone;
        DenoiserConfig {
            base_channels: b.base_channels,
            channel_multipliers: b.channel_multipliers.clone(),
            in_channels: features,
            image_height: self.transform.embedding,
            image_width: self.transform.width,
            sigma_data: b.sigma_data,
        }
    }

    pub fn backbone_training(&self) -> BackboneTrainConfig {
        let b = &self.backbone;
        BackboneTrainConfig {
            epochs: b.epochs,
            batch_size: b.batch_size,
            learning_rate: b.learning_rate,
            weight_decay: b.weight_decay,
            grad_clip: b.grad_clip,
            ema_decay: b.ema_decay,
        }
    }

    pub fn guidance_net(&self, features: usize, seq_len: usize) -> GuidanceConfig {
        let g = &self.guidance;
        GuidanceConfig {
            features,
            seq_len,
            layers: g.layers,
            model_dim: g.model_dim,
            heads: g.heads,
            ff_dim: g.ff_dim,
        }
    }

    pub fn guidance_training(&self) -> GuidanceTrainConfig {
        let g = &self.guidance;
        GuidanceTrainConfig {
            epochs: g.epochs,
            batch_size: g.batch_size,
            learning_rate: g.learning_rate,
            pairs_per_sample: g.pairs_per_sample,
            grad_clip: g.grad_clip,
            refresh_every: g.refresh_every,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.evaluation;
        let rec = RecurrentConfig {
            hidden: e.hidden,
            layers: e.layers,
            iterations: e.iterations,
            batch_size: e.batch_size,
            learning_rate: e.learning_rate,
        };
        EvalConfig {
            histogram_bins: e.bins,
            smoothing_epsilon: e.epsilon,
            classifier: rec.clone(),
            predictor: rec,
            replicates: e.replicates,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let s = Settings::default();
        let back: Settings = toml::from_str(&s.to_toml()).unwrap();
        assert_eq!(back, s);
        assert_eq!(s.hash(), back.hash());
        assert_eq!(s.hash().len(), 64);
        s.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let s: Settings = toml::from_str("seed = 9\n[backbone]\nepochs = 3\n").unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.backbone.epochs, 3);
        assert_eq!(s.backbone.batch_size, 128);
        assert_ne!(s.hash(), Settings::default().hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("sed = 9\n").is_err());
        assert!(toml::from_str::<Settings>("[backbone]\nepoch = 3\n").is_err());
        assert!(toml::from_str::<Settings>("[decomposition]\nmethod = \"wavelet\"\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut s = Settings::default();
        s.data.delimiter = ";;".into();
        assert!(s.validate().is_err());
        let mut s = Settings::default();
        s.schedule.steps = 1;
        assert!(s.validate().is_err());
        let mut s = Settings::default();
        s.evaluation.bins = 1;
        assert!(s.validate().is_err());
    }
}
