//! Style-guided kernel: decomposition of each intermediate sample, guidance
//! of its trend and seasonal parts, and recomposition with the residual.
//!
//! Sampler step `k` (from `σ_k` to `σ_{k+1}`, `k = 0..T−1`) carries the time
//! index `t = T − k`. Guidance runs only when `0 < t < T`, so the first step
//! out of pure noise is a bare backbone step and every later step is guided.

use ndarray::Array2;
use rand::Rng;

use super::net::GuidanceNet;
use crate::backbone::{heun_step_batch, initial_noise, ImageDenoiser, NoiseSchedule};
use crate::decomposition::{DataStyle, Decomposer, StyleComponents};
use crate::series::{ImageTensor, SeriesWindow};
use crate::transform::{from_image, to_image, TransformParams};
use crate::{Error, Result};

/// Samples pushed through the sampler together.
const SAMPLE_CHUNK: usize = 256;

/// Maps a batch of components plus their styles to guided components.
pub trait Guide {
    fn guide_batch(&self, components: &[Array2<f64>], styles: &[&Array2<f64>], t_norm: f64) -> Result<Vec<Array2<f64>>>;
}

impl Guide for GuidanceNet {
    fn guide_batch(&self, components: &[Array2<f64>], styles: &[&Array2<f64>], t_norm: f64) -> Result<Vec<Array2<f64>>> {
        self.apply_batch(components, styles, t_norm)
    }
}

/// A style and the index of the dataset sample it was extracted from.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleEntry {
    pub source: usize,
    pub style: DataStyle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleLibrary {
    entries: Vec<StyleEntry>,
}

impl StyleLibrary {
    pub fn new(entries: Vec<StyleEntry>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Validation("style library is empty".into()))?;
        let dim = first.style.trend.dim();
        for e in &entries {
            if e.style.trend.dim() != dim || e.style.seasonal.dim() != dim {
                return Err(Error::Validation(format!(
                    "style from sample {} does not match the library shape {dim:?}",
                    e.source
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Styles of every window in `dataset`, tagged with their index.
    pub fn from_dataset(dataset: &[SeriesWindow], decomposer: &Decomposer) -> Result<Self> {
        let entries = dataset
            .iter()
            .enumerate()
            .map(|(i, w)| {
                Ok(StyleEntry {
                    source: i,
                    style: decomposer.style(w)?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&StyleEntry> {
        self.entries.get(index)
    }

    pub fn entries(&self) -> &[StyleEntry] {
        &self.entries
    }

    pub fn window_len(&self) -> usize {
        self.entries[0].style.len()
    }

    pub fn features(&self) -> usize {
        self.entries[0].style.features()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StyleSelection {
    Uniform,
    Index(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    pub decomposer: Decomposer,
    pub transform: TransformParams,
    pub schedule: NoiseSchedule,
    pub style_selection: StyleSelection,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            decomposer: Decomposer::default(),
            transform: TransformParams::default(),
            schedule: NoiseSchedule::default(),
            style_selection: StyleSelection::Uniform,
        }
    }
}

impl KernelConfig {
    pub fn total_steps(&self) -> usize {
        self.schedule.steps
    }

    /// Time index `t` of sampler step `k`.
    pub fn time_index(&self, step: usize) -> usize {
        self.total_steps() - step
    }

    pub fn is_guided(&self, t: usize) -> bool {
        t > 0 && t < self.total_steps()
    }

    /// Noise levels `(σ_k, σ_{k+1})` of the step that carries time index `t`.
    pub fn sigmas_for(&self, t: usize) -> Result<(f64, f64)> {
        let steps = self.total_steps();
        if t == 0 || t > steps {
            return Err(Error::Validation(format!("time index {t} is outside 1..={steps}")));
        }
        let s = self.schedule.sigma_steps()?;
        let k = steps - t;
        Ok((s[k], s[k + 1]))
    }
}

/// Every intermediate of one guided step for one sample.
#[derive(Clone, Debug)]
pub struct ThdTrace {
    /// Image after the bare backbone step.
    pub backbone: ImageTensor,
    pub series: SeriesWindow,
    pub components: StyleComponents,
    pub guided_trend: Array2<f64>,
    pub guided_seasonal: Array2<f64>,
    /// `guided_trend + guided_seasonal + components.residual`.
    pub recomposed: Array2<f64>,
    pub output: ImageTensor,
}

/// Guided step at time index `t` for a batch, keeping all intermediates.
pub fn thd_step_traced(
    xs: &[ImageTensor],
    t: usize,
    styles: &[&DataStyle],
    backbone: &dyn ImageDenoiser,
    nets: (&dyn Guide, &dyn Guide),
    cfg: &KernelConfig,
) -> Result<Vec<ThdTrace>> {
    if !cfg.is_guided(t) {
        return Err(Error::Gating(format!(
            "time index {t} is a boundary step of a {}-step schedule; use the bare backbone step",
            cfg.total_steps()
        )));
    }
    if xs.len() != styles.len() {
        return Err(Error::Validation(format!("{} samples but {} styles", xs.len(), styles.len())));
    }
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let len = styles[0].len();
    let (sc, sn) = cfg.sigmas_for(t)?;
    let t_norm = t as f64 / cfg.total_steps() as f64;

    let stepped = heun_step_batch(backbone, xs, sc, sn)?;
    let mut series = Vec::with_capacity(xs.len());
    let mut components = Vec::with_capacity(xs.len());
    for img in &stepped {
        let s = from_image(img, &cfg.transform, len)?;
        components.push(cfg.decomposer.decompose(&s)?);
        series.push(s);
    }
    let trends: Vec<Array2<f64>> = components.iter().map(|c| c.trend.clone()).collect();
    let seasonals: Vec<Array2<f64>> = components.iter().map(|c| c.seasonal.clone()).collect();
    let s_tr: Vec<&Array2<f64>> = styles.iter().map(|s| &s.trend).collect();
    let s_seas: Vec<&Array2<f64>> = styles.iter().map(|s| &s.seasonal).collect();
    let g_tr = nets.0.guide_batch(&trends, &s_tr, t_norm)?;
    let g_seas = nets.1.guide_batch(&seasonals, &s_seas, t_norm)?;
    if g_tr.len() != xs.len() || g_seas.len() != xs.len() {
        return Err(Error::Validation("guide returned the wrong number of components".into()));
    }

    let mut out = Vec::with_capacity(xs.len());
    for ((((backbone, series), components), guided_trend), guided_seasonal) in
        stepped.into_iter().zip(series).zip(components).zip(g_tr).zip(g_seas)
    {
        if guided_trend.dim() != components.trend.dim() || guided_seasonal.dim() != components.seasonal.dim() {
            return Err(Error::Validation("guided component has the wrong shape".into()));
        }
        let recomposed = &guided_trend + &guided_seasonal + &components.residual;
        let output = to_image(&SeriesWindow::new(recomposed.clone())?, &cfg.transform)?;
        out.push(ThdTrace {
            backbone,
            series,
            components,
            guided_trend,
            guided_seasonal,
            recomposed,
            output,
        });
    }
    Ok(out)
}

/// Guided step at time index `t`; `0 < t < T` is required.
pub fn thd_step(
    xs: &[ImageTensor],
    t: usize,
    styles: &[&DataStyle],
    backbone: &dyn ImageDenoiser,
    nets: (&dyn Guide, &dyn Guide),
    cfg: &KernelConfig,
) -> Result<Vec<ImageTensor>> {
    Ok(thd_step_traced(xs, t, styles, backbone, nets, cfg)?
        .into_iter()
        .map(|tr| tr.output)
        .collect())
}

/// A generated window and the style it was steered toward.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidedSample {
    pub series: SeriesWindow,
    /// Position of the style in the library.
    pub style_index: usize,
    /// Dataset index of the sample the style was extracted from.
    pub source: usize,
}

fn pick_styles<R: Rng + ?Sized>(library: &StyleLibrary, sel: StyleSelection, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    match sel {
        StyleSelection::Uniform => Ok((0..count).map(|_| rng.random_range(0..library.len())).collect()),
        StyleSelection::Index(i) if i < library.len() => Ok(vec![i; count]),
        StyleSelection::Index(i) => Err(Error::Validation(format!(
            "style index {i} is out of range for a library of {}",
            library.len()
        ))),
    }
}

/// Full guided sampling: pure noise, one bare backbone step at the boundary
/// and a guided step everywhere else, then conversion to series.
pub fn sample_guided<R: Rng + ?Sized>(
    backbone: &dyn ImageDenoiser,
    nets: (&dyn Guide, &dyn Guide),
    library: &StyleLibrary,
    cfg: &KernelConfig,
    count: usize,
    rng: &mut R,
) -> Result<Vec<GuidedSample>> {
    if library.is_empty() {
        return Err(Error::Validation("style library is empty".into()));
    }
    let sigmas = cfg.schedule.sigma_steps()?;
    let picks = pick_styles(library, cfg.style_selection, count, rng)?;
    let noise = initial_noise(backbone.image_shape(), count, sigmas[0], rng);
    let len = library.window_len();
    let mut out = Vec::with_capacity(count);
    for (xs, idx) in noise.chunks(SAMPLE_CHUNK).zip(picks.chunks(SAMPLE_CHUNK)) {
        let styles: Vec<&DataStyle> = idx.iter().map(|&i| &library.entries[i].style).collect();
        let mut xs = xs.to_vec();
        for k in 0..cfg.total_steps() {
            let t = cfg.time_index(k);
            xs = if cfg.is_guided(t) {
                thd_step(&xs, t, &styles, backbone, nets, cfg)?
            } else {
                heun_step_batch(backbone, &xs, sigmas[k], sigmas[k + 1])?
            };
        }
        for (img, &i) in xs.iter().zip(idx) {
            out.push(GuidedSample {
                series: from_image(img, &cfg.transform, len)?,
                style_index: i,
                source: library.entries[i].source,
            });
        }
    }
    Ok(out)
}

/// Unguided sampling with the same schedule and transform, returned as series.
pub fn sample_unguided_series<R: Rng + ?Sized>(
    backbone: &dyn ImageDenoiser,
    cfg: &KernelConfig,
    len: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SeriesWindow>> {
    cfg.transform.validate_for(len)?;
    let sigmas = cfg.schedule.sigma_steps()?;
    let noise = initial_noise(backbone.image_shape(), count, sigmas[0], rng);
    let mut out = Vec::with_capacity(count);
    for chunk in noise.chunks(SAMPLE_CHUNK) {
        let mut xs = chunk.to_vec();
        for k in 0..cfg.total_steps() {
            xs = heun_step_batch(backbone, &xs, sigmas[k], sigmas[k + 1])?;
        }
        for img in &xs {
            out.push(from_image(img, &cfg.transform, len)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::FnDenoiser;
    use crate::decomposition::StlParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::Cell;

    struct Identity;

    impl Guide for Identity {
        fn guide_batch(&self, c: &[Array2<f64>], _: &[&Array2<f64>], _: f64) -> Result<Vec<Array2<f64>>> {
            Ok(c.to_vec())
        }
    }

    struct Counting<'a>(&'a Cell<usize>);

    impl Guide for Counting<'_> {
        fn guide_batch(&self, c: &[Array2<f64>], _: &[&Array2<f64>], _: f64) -> Result<Vec<Array2<f64>>> {
            self.0.set(self.0.get() + 1);
            Ok(c.to_vec())
        }
    }

    /// Returns the style itself, ignoring the component.
    struct Copy;

    impl Guide for Copy {
        fn guide_batch(&self, _: &[Array2<f64>], s: &[&Array2<f64>], _: f64) -> Result<Vec<Array2<f64>>> {
            Ok(s.iter().map(|m| (*m).clone()).collect())
        }
    }

    fn shrink() -> FnDenoiser<impl Fn(&ImageTensor, f64) -> ImageTensor> {
        FnDenoiser::new((2, 8, 8), |y: &ImageTensor, s| {
            ImageTensor::new(y.values().mapv(|v| v / (1.0 + s * s) + 0.3)).unwrap()
        })
    }

    fn library(n: usize) -> StyleLibrary {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data: Vec<SeriesWindow> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..48).map(|_| rng.random::<f64>()).collect();
                SeriesWindow::from_rows(24, 2, v).unwrap()
            })
            .collect();
        StyleLibrary::from_dataset(&data, &Decomposer::Stl(StlParams::default())).unwrap()
    }

    fn noisy(n: usize, seed: u64) -> Vec<ImageTensor> {
        initial_noise((2, 8, 8), n, 2.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn recomposition_and_residual_passthrough() {
        let lib = library(3);
        let styles: Vec<&DataStyle> = lib.entries().iter().map(|e| &e.style).collect();
        let cfg = KernelConfig::default();
        let net = GuidanceNet::new(
            super::super::net::GuidanceConfig::new(2, 24),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let traces = thd_step_traced(&noisy(3, 0), 9, &styles, &shrink(), (&net, &net), &cfg).unwrap();
        for tr in &traces {
            let back = from_image(&tr.output, &cfg.transform, 24).unwrap();
            let sum = &tr.guided_trend + &tr.guided_seasonal + &tr.components.residual;
            assert_eq!(sum, tr.recomposed);
            for (a, b) in back.values().iter().zip(sum.iter()) {
                assert!((a - b).abs() <= 1e-9);
            }
            // Residual is exactly what the decomposer returned for this series.
            let again = cfg.decomposer.decompose(&tr.series).unwrap();
            assert_eq!(again.residual, tr.components.residual);
        }
    }

    #[test]
    fn identity_guidance_equals_backbone_step_round_trip() {
        let lib = library(2);
        let styles: Vec<&DataStyle> = lib.entries().iter().map(|e| &e.style).collect();
        let cfg = KernelConfig::default();
        let xs = noisy(2, 3);
        let den = shrink();
        for t in [1, 5, 17] {
            let guided = thd_step(&xs, t, &styles, &den, (&Identity, &Identity), &cfg).unwrap();
            let (sc, sn) = cfg.sigmas_for(t).unwrap();
            let bare = heun_step_batch(&den, &xs, sc, sn).unwrap();
            for (g, b) in guided.iter().zip(&bare) {
                let rt = to_image(&from_image(b, &cfg.transform, 24).unwrap(), &cfg.transform).unwrap();
                for (p, q) in g.values().iter().zip(rt.values().iter()) {
                    assert!((p - q).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn boundary_steps_are_rejected() {
        let lib = library(1);
        let styles = vec![&lib.entries()[0].style];
        let cfg = KernelConfig::default();
        for t in [0, 18, 19] {
            let r = thd_step(&noisy(1, 1), t, &styles, &shrink(), (&Identity, &Identity), &cfg);
            assert!(matches!(r, Err(Error::Gating(_))), "t = {t}");
        }
    }

    #[test]
    fn guidance_runs_t_minus_one_times() {
        let lib = library(4);
        let calls_tr = Cell::new(0);
        let calls_seas = Cell::new(0);
        let cfg = KernelConfig::default();
        let out = sample_guided(
            &shrink(),
            (&Counting(&calls_tr), &Counting(&calls_seas)),
            &lib,
            &cfg,
            3,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(calls_tr.get(), cfg.total_steps() - 1);
        assert_eq!(calls_seas.get(), cfg.total_steps() - 1);
    }

    #[test]
    fn guided_sampling_is_deterministic_with_provenance() {
        let lib = library(5);
        let cfg = KernelConfig {
            style_selection: StyleSelection::Index(3),
            ..KernelConfig::default()
        };
        let run = || sample_guided(&shrink(), (&Copy, &Copy), &lib, &cfg, 2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let a = run();
        assert_eq!(a, run());
        for s in &a {
            assert_eq!(s.style_index, 3);
            assert_eq!(lib.get(s.style_index).unwrap().source, s.source);
            assert_eq!((s.series.len(), s.series.features()), (24, 2));
        }
        let uniform = KernelConfig::default();
        let u = sample_guided(&shrink(), (&Copy, &Copy), &lib, &uniform, 6, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(u.iter().all(|s| lib.get(s.style_index).is_some()));
    }

    #[test]
    fn bad_style_index_and_empty_library() {
        let lib = library(2);
        let cfg = KernelConfig {
            style_selection: StyleSelection::Index(2),
            ..KernelConfig::default()
        };
        let r = sample_guided(&shrink(), (&Copy, &Copy), &lib, &cfg, 1, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(r, Err(Error::Validation(_))));
        assert!(matches!(StyleLibrary::new(vec![]), Err(Error::Validation(_))));
    }

    #[test]
    fn step_time_mapping() {
        let cfg = KernelConfig::default();
        let s = cfg.schedule.sigma_steps().unwrap();
        assert_eq!(cfg.sigmas_for(18).unwrap(), (s[0], s[1]));
        assert_eq!(cfg.sigmas_for(1).unwrap(), (s[17], 0.0));
        let guided: Vec<usize> = (0..18).filter(|&k| cfg.is_guided(cfg.time_index(k))).collect();
        assert_eq!(guided, (1..18).collect::<Vec<_>>());
    }
}
