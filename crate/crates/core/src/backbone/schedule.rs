use crate::{Error, Result};

/// Power-law noise discretization of the probability-flow sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub steps: usize,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            steps: 18,
        }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config(format!("schedule needs at least 2 steps, got {}", self.steps)));
        }
        let ok = self.sigma_min > 0.0
            && self.sigma_max > self.sigma_min
            && self.rho > 0.0
            && self.sigma_max.is_finite()
            && self.rho.is_finite();
        if !ok {
            return Err(Error::Config(format!(
                "schedule requires 0 < sigma_min < sigma_max and rho > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// `σ_i = (σ_max^{1/ρ} + i/(N−1)·(σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ` for
    /// `i < N`, followed by a terminal 0. Endpoints are pinned exactly.
    pub fn sigma_steps(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.steps;
        let inv = 1.0 / self.rho;
        let (hi, lo) = (self.sigma_max.powf(inv), self.sigma_min.powf(inv));
        let mut out: Vec<f64> = (0..n)
            .map(|i| (hi + i as f64 / (n - 1) as f64 * (lo - hi)).powf(self.rho))
            .collect();
        out[0] = self.sigma_max;
        out[n - 1] = self.sigma_min;
        out.push(0.0);
        Ok(out)
    }
}
