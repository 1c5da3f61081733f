//! Failure-time distributions, quantiles and delta-method gradient constants.
//!
//! A unit fails when its degradation first reaches the threshold. For a
//! gamma component this gives F(t) = Q(γ(x_u)t, z₀/ν); for the mixed-model
//! component it gives Φ((μ(t) − y₂₀)/σ₀). A two-component system is a series
//! system of independent modes, F = 1 − (1 − F₁)(1 − F₂).

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{Vector2, Vector4};

use crate::error::{Error, Result};
use crate::gamma_model::{rate, GammaComponentParams, MeasurementSchedule};
use crate::lmem_model::{time_profile_var, LmemComponentParams};
use crate::roots::bisect;
use crate::specfun::{dq_dshape, inv_reg_gamma_q_shape, reg_gamma_q, std_normal_cdf, std_normal_pdf};

const BRACKET_LO: f64 = 1e-6;
const BRACKET_CAP: f64 = (1u64 << 30) as f64;

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gamma,
    GammaGamma,
    GammaLmem,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gamma => "gamma",
            Family::GammaGamma => "gamma+gamma",
            Family::GammaLmem => "gamma+lmem",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(Family::Gamma),
            "gamma+gamma" => Ok(Family::GammaGamma),
            "gamma+lmem" => Ok(Family::GammaLmem),
            other => Err(Error::InvalidScenario(format!(
                "unknown family {other:?}; expected gamma, gamma+gamma or gamma+lmem"
            ))),
        }
    }
}

/// Failure modes of the system, one variant per family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Components {
    Gamma(GammaComponentParams),
    GammaGamma(GammaComponentParams, GammaComponentParams),
    GammaLmem(GammaComponentParams, LmemComponentParams),
}

impl Components {
    pub fn family(&self) -> Family {
        match self {
            Components::Gamma(_) => Family::Gamma,
            Components::GammaGamma(..) => Family::GammaGamma,
            Components::GammaLmem(..) => Family::GammaLmem,
        }
    }

    /// The first (always gamma) component.
    pub fn gamma1(&self) -> &GammaComponentParams {
        match self {
            Components::Gamma(g) | Components::GammaGamma(g, _) | Components::GammaLmem(g, _) => g,
        }
    }

    pub fn gamma2(&self) -> Option<&GammaComponentParams> {
        match self {
            Components::GammaGamma(_, g) => Some(g),
            _ => None,
        }
    }

    pub fn lmem(&self) -> Option<&LmemComponentParams> {
        match self {
            Components::GammaLmem(_, l) => Some(l),
            _ => None,
        }
    }

    pub fn gamma1_mut(&mut self) -> &mut GammaComponentParams {
        match self {
            Components::Gamma(g) | Components::GammaGamma(g, _) | Components::GammaLmem(g, _) => g,
        }
    }

    pub fn gamma2_mut(&mut self) -> Option<&mut GammaComponentParams> {
        match self {
            Components::GammaGamma(_, g) => Some(g),
            _ => None,
        }
    }

    pub fn lmem_mut(&mut self) -> Option<&mut LmemComponentParams> {
        match self {
            Components::GammaLmem(_, l) => Some(l),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        self.gamma1().validate()?;
        if let Some(g) = self.gamma2() {
            g.validate()?;
        }
        if let Some(l) = self.lmem() {
            l.validate()?;
        }
        Ok(())
    }
}

/// A planning problem: failure modes, schedule, use condition and quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    components: Components,
    schedule: MeasurementSchedule,
    x_u: f64,
    alpha: f64,
}

impl Scenario {
    pub fn new(components: Components, schedule: MeasurementSchedule, x_u: f64, alpha: f64) -> Result<Self> {
        components.validate()?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidScenario(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !x_u.is_finite() {
            return Err(Error::InvalidScenario(format!("x_u must be finite, got {x_u}")));
        }
        if x_u >= 0.0 {
            warn!("use condition x_u = {x_u} is not below the experimental region");
        }
        if let Some(l) = components.lmem() {
            l.check_use_condition(x_u);
        }
        Ok(Scenario {
            components,
            schedule,
            x_u,
            alpha,
        })
    }

    pub fn family(&self) -> Family {
        self.components.family()
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn schedule(&self) -> &MeasurementSchedule {
        &self.schedule
    }

    pub fn x_u(&self) -> f64 {
        self.x_u
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_components(&self, components: Components) -> Result<Self> {
        Scenario::new(components, self.schedule.clone(), self.x_u, self.alpha)
    }

    pub fn with_x_u(&self, x_u: f64) -> Result<Self> {
        Scenario::new(self.components, self.schedule.clone(), x_u, self.alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Scenario::new(self.components, self.schedule.clone(), self.x_u, alpha)
    }
}

/// F_T(t) = Q(γ(x_u)t, z₀/ν) for one gamma component.
pub fn gamma_cdf_t(params: &GammaComponentParams, x_u: f64, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Domain(format!("failure time must be nonnegative, got {t}")));
    }
    let shape = rate(params, x_u) * t;
    if shape == 0.0 {
        return Ok(0.0);
    }
    reg_gamma_q(shape, params.scaled_threshold())
}

/// Density of the gamma-component failure time, γ(x_u)·∂Q/∂s(γ(x_u)t, z₀/ν).
pub fn gamma_pdf_t(params: &GammaComponentParams, x_u: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("failure time must be positive, got {t}")));
    }
    let g = rate(params, x_u);
    Ok(g * dq_dshape(g * t, params.scaled_threshold())?)
}

/// Standardized distance (μ(t) − y₂₀)/σ₀ of the mean path from the threshold.
fn lmem_standardized(params: &LmemComponentParams, x_u: f64, t: f64) -> f64 {
    (params.mean(x_u, t) - params.y20) / params.sigma0_sq.sqrt()
}

/// F_T(t) = Φ((μ(t) − y₂₀)/σ₀) for the mixed-model component.
pub fn lmem_cdf_t(params: &LmemComponentParams, x_u: f64, t: f64) -> f64 {
    std_normal_cdf(lmem_standardized(params, x_u, t))
}

/// φ((μ(t) − y₂₀)/σ₀)·(β₂₂ + β₂₃x_u)/σ₀.
pub fn lmem_pdf_t(params: &LmemComponentParams, x_u: f64, t: f64) -> f64 {
    std_normal_pdf(lmem_standardized(params, x_u, t)) * (params.beta22 + params.beta23 * x_u)
        / params.sigma0_sq.sqrt()
}

/// Marginal failure-time CDFs of each component at `t`, in component order.
pub fn component_cdfs(scenario: &Scenario, t: f64) -> Result<Vec<f64>> {
    let x_u = scenario.x_u;
    let mut out = vec![gamma_cdf_t(scenario.components.gamma1(), x_u, t)?];
    match &scenario.components {
        Components::Gamma(_) => {}
        Components::GammaGamma(_, g2) => out.push(gamma_cdf_t(g2, x_u, t)?),
        Components::GammaLmem(_, l) => out.push(lmem_cdf_t(l, x_u, t)),
    }
    Ok(out)
}

fn component_pdfs(scenario: &Scenario, t: f64) -> Result<Vec<f64>> {
    let x_u = scenario.x_u;
    let mut out = vec![gamma_pdf_t(scenario.components.gamma1(), x_u, t)?];
    match &scenario.components {
        Components::Gamma(_) => {}
        Components::GammaGamma(_, g2) => out.push(gamma_pdf_t(g2, x_u, t)?),
        Components::GammaLmem(_, l) => out.push(lmem_pdf_t(l, x_u, t)),
    }
    Ok(out)
}

/// System failure-time CDF 1 − Π(1 − F_l(t)).
pub fn system_cdf(scenario: &Scenario, t: f64) -> Result<f64> {
    let survival: f64 = component_cdfs(scenario, t)?.iter().map(|f| 1.0 - f).product();
    Ok(1.0 - survival)
}

/// System failure-time density, by the product rule on the survival.
pub fn system_pdf(scenario: &Scenario, t: f64) -> Result<f64> {
    let cdfs = component_cdfs(scenario, t)?;
    let pdfs = component_pdfs(scenario, t)?;
    Ok(match cdfs.len() {
        1 => pdfs[0],
        _ => pdfs[0] * (1.0 - cdfs[1]) + pdfs[1] * (1.0 - cdfs[0]),
    })
}

/// Solve F(t) = alpha for t > 0 on the bracket [1e-6, 1], doubling the upper end.
fn solve_cdf<F: FnMut(f64) -> Result<f64>>(mut cdf: F, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if cdf(BRACKET_LO)? >= alpha {
        return Err(Error::NoFailureRegion(format!(
            "failure probability already reaches {alpha} before t = {BRACKET_LO}"
        )));
    }
    let mut hi = 1.0;
    while cdf(hi)? < alpha {
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Err(Error::NoFailureRegion(format!(
                "failure probability stays below {alpha} up to t = {BRACKET_CAP}"
            )));
        }
    }
    bisect(|t| cdf(t).map(|f| f - alpha), BRACKET_LO, hi)
}

/// α-quantile of the system failure time at the scenario's level.
pub fn quantile(scenario: &Scenario) -> Result<f64> {
    quantile_at(scenario, scenario.alpha)
}

/// Quantile of the system failure time at an arbitrary level.
pub fn quantile_at(scenario: &Scenario, alpha: f64) -> Result<f64> {
    solve_cdf(|t| system_cdf(scenario, t), alpha)
}

/// t_α = g⁻¹(α)/γ(x_u) with g(s) = Q(s, z₀/ν), for a single gamma component.
pub fn gamma_quantile_closed_form(params: &GammaComponentParams, x_u: f64, alpha: f64) -> Result<f64> {
    Ok(inv_reg_gamma_q_shape(alpha, params.scaled_threshold())? / rate(params, x_u))
}

/// Each component's own failure-time quantile at level `alpha`, in component order.
pub fn marginal_quantiles(scenario: &Scenario, alpha: f64) -> Result<Vec<f64>> {
    let x_u = scenario.x_u;
    let mut out = vec![gamma_quantile_closed_form(scenario.components.gamma1(), x_u, alpha)?];
    match &scenario.components {
        Components::Gamma(_) => {}
        Components::GammaGamma(_, g2) => out.push(gamma_quantile_closed_form(g2, x_u, alpha)?),
        Components::GammaLmem(_, l) => out.push(solve_cdf(|t| Ok(lmem_cdf_t(l, x_u, t)), alpha)?),
    }
    Ok(out)
}

/// c_l = κ_l (1 − F_other(t_α)) ∂Q/∂s(κ_l, z₀/ν) with κ_l = γ_l(x_u)t_α.
///
/// ∂F_T/∂(β₀, β₁) of the system equals c_l·(1, x_u).
pub fn grad_const_gamma(params: &GammaComponentParams, other_survival: f64, x_u: f64, t_alpha: f64) -> Result<f64> {
    if !(t_alpha > 0.0) {
        return Err(Error::Domain(format!("t_alpha must be positive, got {t_alpha}")));
    }
    let kappa = rate(params, x_u) * t_alpha;
    Ok(kappa * other_survival * dq_dshape(kappa, params.scaled_threshold())?)
}

/// c₂ = (1 − F_T₁(t_α)) φ(·)/σ₀ · ((1, t_α)(DᵀV⁻¹D)⁻¹(1, t_α)ᵀ)^{1/2}.
pub fn grad_const_lmem(scenario: &Scenario, t_alpha: f64) -> Result<f64> {
    let l = scenario.components.lmem().ok_or_else(|| {
        Error::InvalidScenario(format!("grad_const_lmem needs a gamma+lmem scenario, got {}", scenario.family()))
    })?;
    let gamma_survival = 1.0 - gamma_cdf_t(scenario.components.gamma1(), scenario.x_u, t_alpha)?;
    let zz = lmem_standardized(l, scenario.x_u, t_alpha);
    let profile = time_profile_var(&scenario.schedule, l, t_alpha)?;
    Ok(gamma_survival * std_normal_pdf(zz) / l.sigma0_sq.sqrt() * profile.sqrt())
}

/// ∂F_T/∂(β₂₀, β₂₁, β₂₂, β₂₃) of the mixed-model component: φ(·)/σ₀ (1, t) ⊗ (1, x_u).
pub fn lmem_location_gradient(params: &LmemComponentParams, x_u: f64, t: f64) -> Vector4<f64> {
    let scale = std_normal_pdf(lmem_standardized(params, x_u, t)) / params.sigma0_sq.sqrt();
    scale * Vector4::new(1.0, x_u, t, t * x_u)
}

/// ∂F_T/∂(σ₀², σ_ε²) of the mixed-model component. The second entry is zero
/// since the failure-time law does not involve σ_ε².
pub fn lmem_variance_gradient(params: &LmemComponentParams, x_u: f64, t: f64) -> Vector2<f64> {
    let zz = lmem_standardized(params, x_u, t);
    Vector2::new(-std_normal_pdf(zz) * zz / (2.0 * params.sigma0_sq), 0.0)
}

/// Everything the delta method needs at the nominal values.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientConstants {
    /// System quantile t_α.
    pub t_alpha: f64,
    /// System density f_T(t_α).
    pub density: f64,
    /// One scalar per component; c_l·(1, x_u) (gamma) or the c₂ of the
    /// mixed-model block.
    pub c: Vec<f64>,
    /// Gradient of the system CDF in the variance parameters (zero without a
    /// mixed-model component).
    pub c_variance: Vector2<f64>,
}

/// Compute t_α, f_T(t_α) and the gradient constants for a scenario.
pub fn gradient_constants(scenario: &Scenario) -> Result<GradientConstants> {
    let t_alpha = quantile(scenario)?;
    let density = system_pdf(scenario, t_alpha)?;
    let cdfs = component_cdfs(scenario, t_alpha)?;
    let x_u = scenario.x_u;
    let g1 = scenario.components.gamma1();
    let (c, c_variance) = match &scenario.components {
        Components::Gamma(_) => (vec![grad_const_gamma(g1, 1.0, x_u, t_alpha)?], Vector2::zeros()),
        Components::GammaGamma(_, g2) => (
            vec![
                grad_const_gamma(g1, 1.0 - cdfs[1], x_u, t_alpha)?,
                grad_const_gamma(g2, 1.0 - cdfs[0], x_u, t_alpha)?,
            ],
            Vector2::zeros(),
        ),
        Components::GammaLmem(_, l) => (
            vec![
                grad_const_gamma(g1, 1.0 - cdfs[1], x_u, t_alpha)?,
                grad_const_lmem(scenario, t_alpha)?,
            ],
            (1.0 - cdfs[0]) * lmem_variance_gradient(l, x_u, t_alpha),
        ),
    };
    Ok(GradientConstants {
        t_alpha,
        density,
        c,
        c_variance,
    })
}
