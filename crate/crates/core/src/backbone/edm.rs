//! Preconditioned denoiser, training objective and deterministic Heun sampler.

use dsdiff_nn::Tape;
use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::schedule::NoiseSchedule;
use super::unet::{DenoiserConfig, UNet};
use crate::series::ImageTensor;
use crate::{Error, Result};

/// Mean and standard deviation of `ln σ` during training.
pub const P_MEAN: f64 = -1.2;
pub const P_STD: f64 = 1.2;

/// Largest batch pushed through one tape during inference.
const INFER_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preconditioning {
    pub sigma_data: f64,
}

impl Preconditioning {
    pub fn new(sigma_data: f64) -> Self {
        Self { sigma_data }
    }

    pub fn c_skip(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sd2 / (sigma * sigma + sd2)
    }

    pub fn c_out(&self, sigma: f64) -> f64 {
        sigma * self.sigma_data / (sigma * sigma + self.sigma_data * self.sigma_data).sqrt()
    }

    pub fn c_in(&self, sigma: f64) -> f64 {
        1.0 / (sigma * sigma + self.sigma_data * self.sigma_data).sqrt()
    }

    pub fn c_noise(&self, sigma: f64) -> f64 {
        0.25 * sigma.ln()
    }

    /// Loss weight `λ(σ) = (σ² + σ_d²)/(σ·σ_d)²`.
    pub fn weight(&self, sigma: f64) -> f64 {
        let sd = self.sigma_data;
        (sigma * sigma + sd * sd) / (sigma * sd).powi(2)
    }
}

/// Anything that maps a noisy image and a noise level to a clean estimate.
pub trait ImageDenoiser {
    /// `(channels, height, width)` of the images this denoiser accepts.
    fn image_shape(&self) -> (usize, usize, usize);

    fn denoise_batch(&self, xs: &[ImageTensor], sigma: f64) -> Result<Vec<ImageTensor>>;

    fn denoise(&self, x: &ImageTensor, sigma: f64) -> Result<ImageTensor> {
        let mut out = self.denoise_batch(std::slice::from_ref(x), sigma)?;
        Ok(out.remove(0))
    }
}

/// Closure-backed denoiser, handy for analytic test doubles.
pub struct FnDenoiser<F> {
    shape: (usize, usize, usize),
    f: F,
}

impl<F: Fn(&ImageTensor, f64) -> ImageTensor> FnDenoiser<F> {
    pub fn new(shape: (usize, usize, usize), f: F) -> Self {
        Self { shape, f }
    }
}

impl<F: Fn(&ImageTensor, f64) -> ImageTensor> ImageDenoiser for FnDenoiser<F> {
    fn image_shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    fn denoise_batch(&self, xs: &[ImageTensor], sigma: f64) -> Result<Vec<ImageTensor>> {
        check_inputs(xs, self.shape, sigma)?;
        Ok(xs.iter().map(|x| (self.f)(x, sigma)).collect())
    }
}

fn check_inputs(xs: &[ImageTensor], shape: (usize, usize, usize), sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Validation(format!("noise level must be positive and finite, got {sigma}")));
    }
    for x in xs {
        if x.dim() != shape {
            return Err(Error::Validation(format!(
                "image shape {:?} does not match the denoiser's {:?}",
                x.dim(),
                shape
            )));
        }
        if !x.is_finite() {
            return Err(Error::Validation("image contains non-finite values".into()));
        }
    }
    Ok(())
}

/// Packs images `[F, H, W]` into a channel-major `[F, B, H, W]` buffer.
pub(crate) fn pack(xs: &[ImageTensor], scales: &[f64]) -> Vec<f64> {
    let (f, h, w) = xs[0].dim();
    let hw = h * w;
    let b = xs.len();
    let mut out = vec![0.0; f * b * hw];
    for (i, (x, &s)) in xs.iter().zip(scales).enumerate() {
        let v = x.values();
        for c in 0..f {
            let dst = &mut out[(c * b + i) * hw..(c * b + i + 1) * hw];
            for (d, src) in dst.iter_mut().zip(v.index_axis(ndarray::Axis(0), c).iter()) {
                *d = s * src;
            }
        }
    }
    out
}

pub(crate) fn unpack(buf: &[f64], b: usize, shape: (usize, usize, usize)) -> Vec<Array3<f64>> {
    let (f, h, w) = shape;
    let hw = h * w;
    (0..b)
        .map(|i| {
            let mut a = Array3::zeros(shape);
            for c in 0..f {
                let src = &buf[(c * b + i) * hw..(c * b + i + 1) * hw];
                for (d, s) in a.index_axis_mut(ndarray::Axis(0), c).iter_mut().zip(src) {
                    *d = *s;
                }
            }
            a
        })
        .collect()
}

/// Noise draws for one loss evaluation: a level per sample and a standard
/// normal image per sample.
#[derive(Clone, Debug)]
pub struct NoiseDraw {
    pub sigmas: Vec<f64>,
    pub eps: Vec<Array3<f64>>,
}

impl NoiseDraw {
    pub fn sample<R: Rng + ?Sized>(count: usize, shape: (usize, usize, usize), rng: &mut R) -> Self {
        let mut sigmas = Vec::with_capacity(count);
        let mut eps = Vec::with_capacity(count);
        for _ in 0..count {
            let z: f64 = StandardNormal.sample(rng);
            sigmas.push((P_MEAN + P_STD * z).exp());
            eps.push(Array3::from_shape_simple_fn(shape, || StandardNormal.sample(rng)));
        }
        Self { sigmas, eps }
    }
}

/// The backbone network together with its flat weight vector.
#[derive(Clone, Debug)]
pub struct Denoiser {
    net: UNet,
    weights: Vec<f64>,
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        let net = UNet::new(config)?;
        let weights = net.layout().initialize(rng);
        Ok(Self { net, weights })
    }

    pub fn from_weights(config: DenoiserConfig, weights: Vec<f64>) -> Result<Self> {
        let net = UNet::new(config)?;
        if weights.len() != net.layout().len() {
            return Err(Error::Validation(format!(
                "expected {} weights for this config, got {}",
                net.layout().len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("weights contain non-finite values".into()));
        }
        Ok(Self { net, weights })
    }

    pub fn config(&self) -> &DenoiserConfig {
        self.net.config()
    }

    pub fn net(&self) -> &UNet {
        &self.net
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn preconditioning(&self) -> Preconditioning {
        Preconditioning::new(self.config().sigma_data)
    }

    /// Raw network output `F(c_in·y, c_noise)` for noisy images `ys` with
    /// per-image noise levels.
    fn raw(&self, tape: &mut Tape, ys: &[ImageTensor], sigmas: &[f64]) -> dsdiff_nn::Var {
        let pc = self.preconditioning();
        let (f, h, w) = self.image_shape();
        let scales: Vec<f64> = sigmas.iter().map(|&s| pc.c_in(s)).collect();
        let noise: Vec<f64> = sigmas.iter().map(|&s| pc.c_noise(s)).collect();
        let x = tape.constant(pack(ys, &scales), &[f, ys.len(), h, w]);
        self.net.forward(tape, x, &noise)
    }

    fn denoise_chunk(&self, ys: &[ImageTensor], sigma: f64) -> Vec<ImageTensor> {
        let pc = self.preconditioning();
        let sigmas = vec![sigma; ys.len()];
        let mut tape = Tape::new(&self.weights);
        let out = self.raw(&mut tape, ys, &sigmas);
        let raw = tape.into_value(out);
        let (cs, co) = (pc.c_skip(sigma), pc.c_out(sigma));
        unpack(&raw, ys.len(), self.image_shape())
            .into_iter()
            .zip(ys)
            .map(|(r, y)| ImageTensor::from_array_unchecked(y.values() * cs + r * co))
            .collect()
    }

    /// Loss and weight gradient for clean images `xs` under fixed noise draws.
    /// Equals [`edm_loss_with`] because `λ(σ)·c_out(σ)² = 1`.
    pub fn loss_and_grad(&self, xs: &[ImageTensor], draw: &NoiseDraw) -> Result<(f64, Vec<f64>)> {
        if xs.is_empty() {
            return Err(Error::Validation("loss needs a non-empty batch".into()));
        }
        check_inputs(xs, self.image_shape(), 1.0)?;
        let pc = self.preconditioning();
        let ys: Vec<ImageTensor> = xs
            .iter()
            .zip(draw.sigmas.iter().zip(&draw.eps))
            .map(|(x, (&s, e))| ImageTensor::from_array_unchecked(x.values() + &(e * s)))
            .collect();
        let targets: Vec<ImageTensor> = xs
            .iter()
            .zip(ys.iter().zip(&draw.sigmas))
            .map(|(x, (y, &s))| {
                let t = (x.values() - &(y.values() * pc.c_skip(s))) / pc.c_out(s);
                ImageTensor::from_array_unchecked(t)
            })
            .collect();
        let mut tape = Tape::new(&self.weights);
        let out = self.raw(&mut tape, &ys, &draw.sigmas);
        let loss = tape.squared_error(out, pack(&targets, &vec![1.0; xs.len()]), 1.0 / xs.len() as f64);
        let value = tape.scalar(loss);
        let grads = tape.backward(loss);
        Ok((value, grads.params))
    }
}

impl ImageDenoiser for Denoiser {
    fn image_shape(&self) -> (usize, usize, usize) {
        let c = self.config();
        (c.in_channels, c.image_height, c.image_width)
    }

    fn denoise_batch(&self, xs: &[ImageTensor], sigma: f64) -> Result<Vec<ImageTensor>> {
        check_inputs(xs, self.image_shape(), sigma)?;
        Ok(xs.chunks(INFER_CHUNK).flat_map(|c| self.denoise_chunk(c, sigma)).collect())
    }
}

/// Literal `mean_b λ(σ_b)·‖D(x_b + σ_b ε_b; σ_b) − x_b‖²` for fixed draws.
pub fn edm_loss_with(
    den: &dyn ImageDenoiser,
    sigma_data: f64,
    xs: &[ImageTensor],
    draw: &NoiseDraw,
) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Validation("loss needs a non-empty batch".into()));
    }
    let pc = Preconditioning::new(sigma_data);
    let mut total = 0.0;
    for (x, (&s, e)) in xs.iter().zip(draw.sigmas.iter().zip(&draw.eps)) {
        let y = ImageTensor::new(x.values() + &(e * s))?;
        let d = den.denoise(&y, s)?;
        let sq: f64 = (d.values() - x.values()).iter().map(|v| v * v).sum();
        total += pc.weight(s) * sq;
    }
    Ok(total / xs.len() as f64)
}

/// [`edm_loss_with`] using fresh draws from `rng`.
pub fn edm_loss<R: Rng + ?Sized>(
    den: &dyn ImageDenoiser,
    sigma_data: f64,
    xs: &[ImageTensor],
    rng: &mut R,
) -> Result<f64> {
    let draw = NoiseDraw::sample(xs.len(), den.image_shape(), rng);
    edm_loss_with(den, sigma_data, xs, &draw)
}

/// One deterministic Heun step from `sigma_cur` to `sigma_next` for a batch.
pub fn heun_step_batch(
    den: &dyn ImageDenoiser,
    xs: &[ImageTensor],
    sigma_cur: f64,
    sigma_next: f64,
) -> Result<Vec<ImageTensor>> {
    if !(sigma_next >= 0.0 && sigma_next < sigma_cur) {
        return Err(Error::Ordering(format!(
            "need sigma_cur > sigma_next >= 0, got {sigma_cur} -> {sigma_next}"
        )));
    }
    let h = sigma_next - sigma_cur;
    let d0 = den.denoise_batch(xs, sigma_cur)?;
    let slopes: Vec<Array3<f64>> = xs
        .iter()
        .zip(&d0)
        .map(|(x, d)| (x.values() - d.values()) / sigma_cur)
        .collect();
    let euler: Vec<ImageTensor> = xs
        .iter()
        .zip(&slopes)
        .map(|(x, s)| ImageTensor::new(x.values() + &(s * h)))
        .collect::<Result<_>>()?;
    if sigma_next == 0.0 {
        return Ok(euler);
    }
    let d1 = den.denoise_batch(&euler, sigma_next)?;
    xs.iter()
        .zip(euler.iter().zip(&d1))
        .zip(&slopes)
        .map(|((x, (e, d)), s)| {
            let s2 = (e.values() - d.values()) / sigma_next;
            ImageTensor::new(x.values() + &((s + &s2) * (0.5 * h)))
        })
        .collect()
}

pub fn heun_step(den: &dyn ImageDenoiser, x: &ImageTensor, sigma_cur: f64, sigma_next: f64) -> Result<ImageTensor> {
    let mut out = heun_step_batch(den, std::slice::from_ref(x), sigma_cur, sigma_next)?;
    Ok(out.remove(0))
}

/// `count` images of standard normal noise scaled by `sigma`.
pub fn initial_noise<R: Rng + ?Sized>(
    shape: (usize, usize, usize),
    count: usize,
    sigma: f64,
    rng: &mut R,
) -> Vec<ImageTensor> {
    (0..count)
        .map(|_| {
            let a = Array3::from_shape_simple_fn(shape, || {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            });
            ImageTensor::from_array_unchecked(a)
        })
        .collect()
}

/// Probability-flow sampling from pure noise across the whole schedule.
pub fn sample_unguided<R: Rng + ?Sized>(
    den: &dyn ImageDenoiser,
    schedule: &NoiseSchedule,
    count: usize,
    rng: &mut R,
) -> Result<Vec<ImageTensor>> {
    let sigmas = schedule.sigma_steps()?;
    let mut xs = initial_noise(den.image_shape(), count, sigmas[0], rng);
    for k in 0..schedule.steps {
        xs = heun_step_batch(den, &xs, sigmas[k], sigmas[k + 1])?;
    }
    Ok(xs)
}
