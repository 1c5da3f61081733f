//! Locally c-optimal design search.
//!
//! [`multiplicative_optimize`] runs a multiplicative weight update on an
//! equally spaced stress grid, [`elfving_weight`] gives the closed-form
//! two-point weight of the univariate problem, [`two_point_search`] optimizes
//! the weight of {0, 1} designs directly, and [`optimality_certificate`]
//! checks the equivalence-theorem condition on a grid.

use nalgebra::{Matrix2, Vector2};

use crate::design::{guarded_inverse, Criterion, Design};
use crate::error::{Error, Result};
use crate::failure_time::Scenario;
use crate::gamma_model::{intensity, regressor, GammaComponentParams, MeasurementSchedule};
use crate::par::Execution;

const PRUNE_WEIGHT: f64 = 1e-8;
const GOLDEN_TOL: f64 = 1e-9;

/// Settings of the multiplicative algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Grid spacing on [0, 1]; must divide 1 evenly.
    pub grid_step: f64,
    pub max_iter: usize,
    /// Stop once max over the support of |d_i/Φ − 1| is at most this.
    pub tol: f64,
    pub execution: Execution,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            grid_step: 0.01,
            max_iter: 100_000,
            tol: 1e-6,
            execution: Execution::default(),
        }
    }
}

/// Outcome of [`multiplicative_optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    /// Best design found (the final iterate when converged).
    pub design: Design,
    pub converged: bool,
    pub iterations: usize,
    /// Design-dependent criterion part Σ a_l cᵀM_l⁻¹c at each iterate.
    pub trace: Vec<f64>,
    /// max over the support of |d_i/Φ − 1| at the returned design.
    pub max_deviation: f64,
}

/// Grid points i/m on [0, 1] for a step of 1/m.
pub fn stress_grid(grid_step: f64) -> Result<Vec<f64>> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Domain(format!("grid step must lie in (0, 1], got {grid_step}")));
    }
    let m = (1.0 / grid_step).round();
    if ((m * grid_step) - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("grid step {grid_step} does not divide 1 evenly")));
    }
    let m = m as usize;
    Ok((0..=m).map(|i| i as f64 / m as f64).collect())
}

/// Multiplicative algorithm for the scenario's criterion.
pub fn multiplicative_optimize(scenario: &Scenario, options: &OptimizerOptions) -> Result<OptimizerResult> {
    multiplicative_optimize_with(&Criterion::new(scenario)?, options)
}

/// Multiplicative algorithm for a prebuilt criterion.
///
/// Starts from uniform weights on the grid and iterates
/// w_i ← w_i (d_i/Φ)^{1/2}, renormalizing and dropping weights below 1e-8,
/// where d_i is the sensitivity at grid point x_i and Φ = Σ_i w_i d_i is the
/// current criterion value. The square-root rule decreases Φ monotonically
/// for c-criteria; the plain rule d_i/Φ can cycle between two designs.
pub fn multiplicative_optimize_with(criterion: &Criterion, options: &OptimizerOptions) -> Result<OptimizerResult> {
    if !(options.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", options.tol)));
    }
    let xs = stress_grid(options.grid_step)?;
    let exec = options.execution;
    let lambdas: Vec<Vec<f64>> = criterion
        .blocks
        .iter()
        .map(|b| exec.map(&xs, |&x| b.intensity.at(x)).into_iter().collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let coefs = criterion.block_coefficients();
    let c = regressor(criterion.x_u());

    let n = xs.len();
    let mut w = vec![1.0 / n as f64; n];
    let mut trace = Vec::new();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;

    for iter in 0..=options.max_iter {
        let (d, phi) = grid_sensitivity(&xs, &w, &lambdas, &coefs, &c, exec)
            .ok_or_else(|| Error::Singular("multiplicative iterate lost estimability".into()))?;
        trace.push(phi);
        let deviation = w
            .iter()
            .zip(&d)
            .filter(|(wi, _)| **wi > 0.0)
            .map(|(_, di)| (di / phi - 1.0).abs())
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|b| phi < b.0) {
            best = Some((phi, w.clone(), deviation));
        }
        if deviation <= options.tol {
            return Ok(OptimizerResult {
                design: grid_design(&xs, &w)?,
                converged: true,
                iterations: iter,
                trace,
                max_deviation: deviation,
            });
        }
        if iter == options.max_iter {
            break;
        }
        for (wi, di) in w.iter_mut().zip(&d) {
            *wi *= (di / phi).sqrt();
        }
        normalize(&mut w);
        for wi in w.iter_mut() {
            if *wi < PRUNE_WEIGHT {
                *wi = 0.0;
            }
        }
        normalize(&mut w);
    }
    let (_, w_best, deviation) = best.expect("at least one iterate is evaluated");
    log::warn!(
        "multiplicative algorithm stopped after {} iterations (deviation {deviation:.3e})",
        options.max_iter
    );
    Ok(OptimizerResult {
        design: grid_design(&xs, &w_best)?,
        converged: false,
        iterations: options.max_iter,
        trace,
        max_deviation: deviation,
    })
}

fn normalize(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    for wi in w.iter_mut() {
        *wi /= total;
    }
}

fn grid_design(xs: &[f64], w: &[f64]) -> Result<Design> {
    let pairs: Vec<(f64, f64)> = xs.iter().copied().zip(w.iter().copied()).filter(|p| p.1 > 0.0).collect();
    Design::from_masses(&pairs)
}

/// Sensitivities at every grid point and Φ for weights `w`; `None` if a block is singular.
fn grid_sensitivity(
    xs: &[f64],
    w: &[f64],
    lambdas: &[Vec<f64>],
    coefs: &[f64],
    c: &Vector2<f64>,
    exec: Execution,
) -> Option<(Vec<f64>, f64)> {
    let mut us = Vec::with_capacity(lambdas.len());
    let mut phi = 0.0;
    for (lam, &a) in lambdas.iter().zip(coefs) {
        let mut m = Matrix2::zeros();
        for ((&x, &wi), &li) in xs.iter().zip(w).zip(lam) {
            if wi > 0.0 {
                let f = regressor(x);
                m += wi * li * f * f.transpose();
            }
        }
        let u = guarded_inverse(&m)? * c;
        phi += a * c.dot(&u);
        us.push(u);
    }
    let idx: Vec<usize> = (0..xs.len()).collect();
    let d = exec.map(&idx, |&i| {
        let f = regressor(xs[i]);
        lambdas
            .iter()
            .zip(coefs)
            .zip(&us)
            .map(|((lam, a), u)| a * lam[i] * f.dot(u).powi(2))
            .sum::<f64>()
    });
    Some((d, phi))
}

/// Closed-form optimal weight at x = 0 of the univariate two-point design on {0, 1}:
/// (1 + |x_u|)√λ(β₀+β₁) / ((1 + |x_u|)√λ(β₀+β₁) + |x_u|√λ(β₀)).
pub fn elfving_weight(params: &GammaComponentParams, schedule: &MeasurementSchedule, x_u: f64) -> Result<f64> {
    if !(x_u < 0.0) {
        return Err(Error::Domain(format!("the closed form needs x_u < 0, got {x_u}")));
    }
    let a = x_u.abs();
    let high = (1.0 + a) * intensity(params.beta0 + params.beta1, schedule)?.sqrt();
    let low = a * intensity(params.beta0, schedule)?.sqrt();
    Ok(high / (high + low))
}

/// Best two-point design {0: w, 1: 1 − w} and its criterion value.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointResult {
    pub weight: f64,
    pub value: f64,
    pub design: Design,
}

/// Grid search over w ∈ {step, 2·step, …, 1 − step}, refined by golden section.
pub fn two_point_search(scenario: &Scenario, weight_step: f64) -> Result<TwoPointResult> {
    two_point_search_with(&Criterion::new(scenario)?, weight_step)
}

/// [`two_point_search`] with a prebuilt criterion.
pub fn two_point_search_with(criterion: &Criterion, weight_step: f64) -> Result<TwoPointResult> {
    if !(weight_step > 0.0 && weight_step < 0.5) {
        return Err(Error::Domain(format!("weight step must lie in (0, 0.5), got {weight_step}")));
    }
    let f = |w: f64| criterion.value_weighted(&[(0.0, w), (1.0, 1.0 - w)]);
    let steps = (1.0 / weight_step).floor() as usize;
    let mut best_w = weight_step;
    let mut best_v = f64::INFINITY;
    for i in 1..steps {
        let w = i as f64 * weight_step;
        if w >= 1.0 {
            break;
        }
        let v = f(w)?;
        if v < best_v {
            best_v = v;
            best_w = w;
        }
    }
    let lo = (best_w - weight_step).max(weight_step * 1e-3);
    let hi = (best_w + weight_step).min(1.0 - weight_step * 1e-3);
    let weight = golden_section(f, lo, hi)?;
    let value = f(weight)?;
    let (weight, value) = if value <= best_v { (weight, value) } else { (best_w, best_v) };
    Ok(TwoPointResult {
        weight,
        value,
        design: Design::two_point(weight)?,
    })
}

fn golden_section<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Result of the equivalence-theorem check.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// max over the grid of d(x)/Φ − 1.
    pub max_excess: f64,
    /// Grid point attaining the maximum.
    pub argmax: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Check d(x) ≤ Φ(ξ)(1 + tol) on the grid; a c-optimal design satisfies
/// d(x) ≤ Φ(ξ) for every x in the design region.
pub fn optimality_certificate(scenario: &Scenario, design: &Design, grid_step: f64, tol: f64) -> Result<Certificate> {
    optimality_certificate_with(&Criterion::new(scenario)?, design, grid_step, tol)
}

/// [`optimality_certificate`] with a prebuilt criterion.
pub fn optimality_certificate_with(
    criterion: &Criterion,
    design: &Design,
    grid_step: f64,
    tol: f64,
) -> Result<Certificate> {
    let xs = stress_grid(grid_step)?;
    let (d, phi) = criterion.sensitivity(design, &xs)?;
    let (argmax, max_excess) = xs
        .iter()
        .zip(&d)
        .map(|(&x, &di)| (x, di / phi - 1.0))
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
    Ok(Certificate {
        max_excess,
        argmax,
        tol,
        passed: max_excess <= tol,
    })
}
