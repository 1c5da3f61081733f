//! Gamma-process degradation component.
//!
//! A unit at standardized stress `x` accumulates independent increments over
//! the measurement intervals; the increment over an interval of length Δ is
//! Gamma(shape = γ(x)Δ, scale = ν) with rate γ(x) = exp(β₀ + β₁x).

use log::warn;
use nalgebra::{Matrix2, Vector2};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::specfun::{ln_gamma, scaled_trigamma};

/// Parameters of one gamma failure mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaComponentParams {
    /// Intercept of the log-rate.
    pub beta0: f64,
    /// Slope of the log-rate per unit of standardized stress.
    pub beta1: f64,
    /// Known scale of the increments.
    pub nu: f64,
    /// Failure threshold on the degradation scale.
    pub z0: f64,
}

impl GammaComponentParams {
    pub fn new(beta0: f64, beta1: f64, nu: f64, z0: f64) -> Result<Self> {
        let p = GammaComponentParams { beta0, beta1, nu, z0 };
        p.validate()?;
        Ok(p)
    }

    /// Check `nu > 0`, `z0 > 0` and finiteness. A non-positive slope is
    /// accepted with a warning.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0.is_finite() && self.beta1.is_finite()) {
            return Err(Error::InvalidScenario("gamma rate coefficients must be finite".into()));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidScenario(format!("gamma scale nu must be positive, got {}", self.nu)));
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(Error::InvalidScenario(format!("gamma threshold z0 must be positive, got {}", self.z0)));
        }
        if self.beta1 <= 0.0 {
            warn!("gamma slope beta1 = {} does not accelerate degradation", self.beta1);
        }
        Ok(())
    }

    /// Threshold on the shape scale, z₀/ν.
    pub fn scaled_threshold(&self) -> f64 {
        self.z0 / self.nu
    }

    /// Linear predictor β₀ + β₁x.
    pub fn linear_predictor(&self, x: f64) -> f64 {
        self.beta0 + self.beta1 * x
    }
}

/// Ordered measurement times t₁ < … < t_k, with t₀ = 0 implied.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSchedule {
    times: Vec<f64>,
}

impl MeasurementSchedule {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidSchedule("at least one measurement time is required".into()));
        }
        let mut prev = 0.0;
        for &t in &times {
            if !t.is_finite() || t <= prev {
                return Err(Error::InvalidSchedule(format!(
                    "times must be positive and strictly increasing, got {times:?}"
                )));
            }
            prev = t;
        }
        Ok(MeasurementSchedule { times })
    }

    /// `k` equally spaced times Δ, 2Δ, …, kΔ.
    pub fn equally_spaced(k: usize, delta: f64) -> Result<Self> {
        Self::new((1..=k).map(|j| j as f64 * delta).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of measurements after the start, k.
    pub fn k(&self) -> usize {
        self.times.len()
    }

    /// Interval lengths Δ_j = t_j − t_{j−1}.
    pub fn deltas(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }
}

/// Degradation rate γ(x) = exp(β₀ + β₁x).
pub fn rate(params: &GammaComponentParams, x: f64) -> f64 {
    params.linear_predictor(x).exp()
}

/// Log-density of one increment `y` observed over an interval of length `delta` at stress `x`.
pub fn increment_loglik(params: &GammaComponentParams, x: f64, delta: f64, y: f64) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::Domain(format!("increment must be positive, got {y}")));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("interval length must be positive, got {delta}")));
    }
    let shape = rate(params, x) * delta;
    Ok((shape - 1.0) * y.ln() - y / params.nu - ln_gamma(shape)? - shape * params.nu.ln())
}

/// Single-interval information factor q(z) = e^{2z} ψ₁(e^z).
pub fn q_value(z: f64) -> Result<f64> {
    let a = z.exp();
    if !a.is_finite() {
        return Err(Error::Range(format!("q(z) overflows at z = {z}")));
    }
    if z.is_nan() {
        return Err(Error::Domain("q(z) requires a number".into()));
    }
    Ok(scaled_trigamma(a))
}

/// Intensity λ(z) = Σ_j q(z + ln Δ_j).
pub fn intensity(z: f64, schedule: &MeasurementSchedule) -> Result<f64> {
    schedule.deltas().iter().map(|d| q_value(z + d.ln())).sum()
}

/// Regression vector f(x) = (1, x).
pub(crate) fn regressor(x: f64) -> Vector2<f64> {
    Vector2::new(1.0, x)
}

/// Per-unit Fisher information for (β₀, β₁) at stress `x`: λ(β₀+β₁x)·f(x)f(x)ᵀ.
pub fn unit_info(params: &GammaComponentParams, x: f64, schedule: &MeasurementSchedule) -> Result<Matrix2<f64>> {
    let f = regressor(x);
    Ok(intensity(params.linear_predictor(x), schedule)? * f * f.transpose())
}

/// Normalized design information M(ξ) = Σ w_i · unit_info(x_i).
pub fn design_info(
    params: &GammaComponentParams,
    design: &Design,
    schedule: &MeasurementSchedule,
) -> Result<Matrix2<f64>> {
    let mut m = Matrix2::zeros();
    for (x, w) in design.iter() {
        m += w * unit_info(params, x, schedule)?;
    }
    Ok(m)
}
