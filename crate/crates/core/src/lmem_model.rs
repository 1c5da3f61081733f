//! Linear mixed-effects degradation component with a random intercept.
//!
//! Unit i at stress x is measured at t₀ = 0, t₁, …, t_k with response
//! β_{i20} + β₂₁x + β₂₂t + β₂₃xt + ε, where β_{i20} ~ N(β₂₀, σ₀²) and
//! ε ~ N(0, σ_ε²). Responses of one unit are compound symmetric.

use log::warn;
use nalgebra::{DMatrix, Matrix2, Matrix4};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::gamma_model::{regressor, MeasurementSchedule};

/// Parameters of the mixed-model failure mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmemComponentParams {
    /// Aggregate intercept β₂₀.
    pub beta20: f64,
    /// Stress slope β₂₁.
    pub beta21: f64,
    /// Time slope β₂₂.
    pub beta22: f64,
    /// Stress-time interaction β₂₃.
    pub beta23: f64,
    /// Random-intercept variance σ₀².
    pub sigma0_sq: f64,
    /// Measurement-error variance σ_ε².
    pub sigma_eps_sq: f64,
    /// Failure threshold y₂₀.
    pub y20: f64,
}

impl LmemComponentParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.beta20, self.beta21, self.beta22, self.beta23, self.y20];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario("mixed-model coefficients must be finite".into()));
        }
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "random-intercept variance must be positive, got {}",
                self.sigma0_sq
            )));
        }
        if !(self.sigma_eps_sq > 0.0 && self.sigma_eps_sq.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "error variance must be positive, got {}",
                self.sigma_eps_sq
            )));
        }
        Ok(())
    }

    /// Warn when the mean path at `x_u` is not increasing in time.
    pub fn check_use_condition(&self, x_u: f64) {
        if self.beta22 + self.beta23 * x_u <= 0.0 {
            warn!("mean degradation path is not increasing at x_u = {x_u}");
        }
    }

    /// Mean response β₂₀ + β₂₁x + β₂₂t + β₂₃xt.
    pub fn mean(&self, x: f64, t: f64) -> f64 {
        self.beta20 + self.beta21 * x + self.beta22 * t + self.beta23 * x * t
    }
}

/// Rows (1, t_j) for j = 0..k, with t₀ = 0 prepended.
pub fn time_design_matrix(schedule: &MeasurementSchedule) -> DMatrix<f64> {
    let k = schedule.k();
    DMatrix::from_fn(k + 1, 2, |r, c| match (r, c) {
        (_, 0) => 1.0,
        (0, _) => 0.0,
        (r, _) => schedule.times()[r - 1],
    })
}

/// Compound-symmetric covariance V = σ_ε² I + σ₀² 11ᵀ of the k+1 responses of one unit.
pub fn covariance_v(params: &LmemComponentParams, k: usize) -> DMatrix<f64> {
    let n = k + 1;
    DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            params.sigma0_sq + params.sigma_eps_sq
        } else {
            params.sigma0_sq
        }
    })
}

/// V⁻¹ = (I − σ₀²/(σ_ε² + nσ₀²) 11ᵀ)/σ_ε² with n = k + 1.
pub fn covariance_v_inverse(params: &LmemComponentParams, k: usize) -> DMatrix<f64> {
    let n = (k + 1) as f64;
    let a = params.sigma_eps_sq;
    let shrink = params.sigma0_sq / (a + n * params.sigma0_sq);
    DMatrix::from_fn(k + 1, k + 1, |r, c| {
        let delta = if r == c { 1.0 } else { 0.0 };
        (delta - shrink) / a
    })
}

/// Time information DᵀV⁻¹D of one unit.
pub fn time_information(params: &LmemComponentParams, schedule: &MeasurementSchedule) -> Matrix2<f64> {
    let d = time_design_matrix(schedule);
    let vinv = covariance_v_inverse(params, schedule.k());
    let a = d.transpose() * vinv * &d;
    Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)])
}

/// Stress moment matrix M(ξ) = Σ w_i (1, x_i)(1, x_i)ᵀ.
pub fn moment_matrix(design: &Design) -> Matrix2<f64> {
    let mut m = Matrix2::zeros();
    for (x, w) in design.iter() {
        let f = regressor(x);
        m += w * f * f.transpose();
    }
    m
}

/// Kronecker product of two 2×2 matrices.
pub fn kron2(a: &Matrix2<f64>, b: &Matrix2<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// Information for β₂ = (β₂₀, β₂₁, β₂₂, β₂₃): DᵀV⁻¹D ⊗ M(ξ).
pub fn lmem_design_info(
    params: &LmemComponentParams,
    design: &Design,
    schedule: &MeasurementSchedule,
) -> Matrix4<f64> {
    kron2(&time_information(params, schedule), &moment_matrix(design))
}

/// Per-unit ML information for ς = (σ₀², σ_ε²), entries ½ tr(V⁻¹ ∂V/∂ς_a V⁻¹ ∂V/∂ς_b).
///
/// With n = k + 1 and λ₁ = σ_ε² + nσ₀² the entries reduce to
/// ½(n/λ₁)², ½n/λ₁² and ½((n−1)/σ_ε⁴ + 1/λ₁²). The matrix is the same for
/// every stress level.
pub fn variance_info(params: &LmemComponentParams, k: usize) -> Matrix2<f64> {
    let n = (k + 1) as f64;
    let a = params.sigma_eps_sq;
    let lambda1 = a + n * params.sigma0_sq;
    let i00 = 0.5 * (n / lambda1).powi(2);
    let i01 = 0.5 * n / (lambda1 * lambda1);
    let i11 = 0.5 * ((n - 1.0) / (a * a) + 1.0 / (lambda1 * lambda1));
    Matrix2::new(i00, i01, i01, i11)
}

/// (1, t)(DᵀV⁻¹D)⁻¹(1, t)ᵀ.
pub fn time_profile_var(schedule: &MeasurementSchedule, params: &LmemComponentParams, t: f64) -> Result<f64> {
    let a = time_information(params, schedule);
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Singular("time information is singular".into()))?;
    let g = regressor(t);
    Ok((g.transpose() * inv * g)[(0, 0)])
}
