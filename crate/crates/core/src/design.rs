//! Approximate designs and the asymptotic-variance criterion.
//!
//! A [`Criterion`] is built once from a scenario's nominal values. It holds
//! one information block per location-parameter vector; each block has an
//! intensity λ_l(x) (the gamma intensity, or 1 for the mixed-model block)
//! and a coefficient a_l, and the criterion is
//!
//! scale · (Σ_l a_l (1, x_u) M_l(ξ)⁻¹ (1, x_u)ᵀ + constant),
//!
//! with M_l(ξ) = Σ_i w_i λ_l(x_i) f(x_i)f(x_i)ᵀ.

use log::warn;
use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::failure_time::{gradient_constants, Components, Family, Scenario};
use crate::gamma_model::{intensity, regressor, GammaComponentParams, MeasurementSchedule};
use crate::lmem_model::variance_info;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const COND_WARN: f64 = 1e12;
const COND_SINGULAR: f64 = 1e14;

/// Finite set of stress levels in [0, 1] with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Design {
    /// Validating constructor: distinct points in [0, 1], positive weights summing to 1.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidDesign(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidDesign("a design needs at least one support point".into()));
        }
        for &x in &points {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidDesign(format!("support point {x} outside [0, 1]")));
            }
        }
        for &w in &weights {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidDesign(format!("weight {w} is not positive")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidDesign(format!("weights sum to {total}, not 1")));
        }
        let mut sorted = points.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDesign("support points must be distinct".into()));
        }
        Ok(Design { points, weights })
    }

    /// Build from raw (point, mass) pairs: drops zero masses, merges repeated
    /// points, sorts by point and rescales the masses to sum to one.
    pub fn from_masses(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut kept: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for &(x, m) in pairs {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::InvalidDesign(format!("mass {m} at {x} is not a nonnegative number")));
            }
            if m > 0.0 {
                kept.push((x, m));
            }
        }
        kept.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(kept.len());
        for (x, m) in kept {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += m,
                _ => merged.push((x, m)),
            }
        }
        let total: f64 = merged.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDesign("total mass is zero".into()));
        }
        let points = merged.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = merged.iter().map(|p| p.1 / total).collect();
        let design = Design { points, weights };
        design.check_points()?;
        Ok(design)
    }

    /// Exact design from unit counts n_i, with weights n_i/n.
    pub fn from_counts(counts: &[(f64, usize)]) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = counts.iter().map(|&(x, n)| (x, n as f64)).collect();
        Self::from_masses(&pairs)
    }

    /// {0: w, 1: 1 − w} for w ∈ (0, 1).
    pub fn two_point(w: f64) -> Result<Self> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::InvalidDesign(format!("two-point weight must lie in (0, 1), got {w}")));
        }
        Ok(Design {
            points: vec![0.0, 1.0],
            weights: vec![w, 1.0 - w],
        })
    }

    /// Equal weights on the given points.
    pub fn uniform(points: Vec<f64>) -> Result<Self> {
        let n = points.len();
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        if let Some(last) = weights.last_mut() {
            *last = 1.0 - w * (n - 1) as f64;
        }
        Design::new(points, weights)
    }

    fn check_points(&self) -> Result<()> {
        match self.points.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            Some(x) => Err(Error::InvalidDesign(format!("support point {x} outside [0, 1]"))),
            None => Ok(()),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weight of an exact support point, 0 if absent.
    pub fn weight_at(&self, x: f64) -> f64 {
        self.iter().find(|p| p.0 == x).map_or(0.0, |p| p.1)
    }

    /// (point, weight) pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Copy with support points in increasing order.
    pub fn sorted(&self) -> Design {
        let mut pairs: Vec<(f64, f64)> = self.iter().collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Design {
            points: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }
}

/// Intensity of one information block.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum BlockIntensity {
    Gamma(GammaComponentParams, MeasurementSchedule),
    Unit,
}

impl BlockIntensity {
    pub(crate) fn at(&self, x: f64) -> Result<f64> {
        match self {
            BlockIntensity::Gamma(p, s) => intensity(p.linear_predictor(x), s),
            BlockIntensity::Unit => Ok(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub(crate) coef: f64,
    pub(crate) intensity: BlockIntensity,
}

/// Inverse of a symmetric PSD 2×2 matrix, or `None` when it is singular to
/// working precision. Warns when the condition number is large.
pub(crate) fn guarded_inverse(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let d = m[(1, 1)];
    let half_trace = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let lmax = half_trace + disc;
    let det = a * d - b * b;
    if !(lmax > 0.0) || !(det > 0.0) {
        return None;
    }
    let lmin = det / lmax;
    let cond = lmax / lmin;
    if !(cond < COND_SINGULAR) {
        return None;
    }
    if cond > COND_WARN {
        warn!("information matrix is ill conditioned (condition number {cond:.3e})");
    }
    Some(Matrix2::new(d, -b, -b, a) / det)
}

/// Asymptotic-variance criterion of a scenario, fixed at its nominal values.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    family: Family,
    x_u: f64,
    pub(crate) blocks: Vec<Block>,
    constant: f64,
    scale: f64,
    t_alpha: f64,
    density: f64,
    c: Vec<f64>,
}

impl Criterion {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let gc = gradient_constants(scenario)?;
        let schedule = scenario.schedule().clone();
        let gamma_block = |p: &GammaComponentParams, coef: f64| Block {
            coef,
            intensity: BlockIntensity::Gamma(*p, schedule.clone()),
        };
        let (blocks, constant, scale) = match scenario.components() {
            Components::Gamma(g) => (vec![gamma_block(g, 1.0)], 0.0, 1.0),
            Components::GammaGamma(g1, g2) => (
                vec![gamma_block(g1, gc.c[0].powi(2)), gamma_block(g2, gc.c[1].powi(2))],
                0.0,
                1.0,
            ),
            Components::GammaLmem(g, l) => {
                let mv = variance_info(l, scenario.schedule().k());
                let inv = guarded_inverse(&mv)
                    .ok_or_else(|| Error::Singular("variance-parameter information is singular".into()))?;
                let cs = gc.c_variance;
                let c_sigma_sq = (cs.transpose() * inv * cs)[(0, 0)];
                (
                    vec![
                        gamma_block(g, gc.c[0].powi(2)),
                        Block {
                            coef: gc.c[1].powi(2),
                            intensity: BlockIntensity::Unit,
                        },
                    ],
                    c_sigma_sq,
                    gc.density.powi(-2),
                )
            }
        };
        Ok(Criterion {
            family: scenario.family(),
            x_u: scenario.x_u(),
            blocks,
            constant,
            scale,
            t_alpha: gc.t_alpha,
            density: gc.density,
            c: gc.c,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Use condition x_u.
    pub fn x_u(&self) -> f64 {
        self.x_u
    }

    /// Nominal quantile t_α.
    pub fn t_alpha(&self) -> f64 {
        self.t_alpha
    }

    /// Failure-time density at t_α.
    pub fn density(&self) -> f64 {
        self.density
    }

    /// Per-component gradient constants (c₁, c₂ or just c₁).
    pub fn gradient_constants(&self) -> &[f64] {
        &self.c
    }

    /// Additive variance-parameter term c_ς² (zero without a mixed-model component).
    pub fn variance_constant(&self) -> f64 {
        self.constant
    }

    /// Block coefficients a_l.
    pub fn block_coefficients(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.coef).collect()
    }

    /// The same criterion with the c-vector multiplied by `factor`.
    pub fn with_c_scaled(&self, factor: f64) -> Criterion {
        let mut out = self.clone();
        let f2 = factor * factor;
        for b in &mut out.blocks {
            b.coef *= f2;
        }
        out.constant *= f2;
        out
    }

    fn c_vector(&self) -> Vector2<f64> {
        regressor(self.x_u)
    }

    /// Block information matrices M_l for a list of (point, weight) pairs.
    fn block_infos(&self, pairs: &[(f64, f64)]) -> Result<Vec<Matrix2<f64>>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut m = Matrix2::zeros();
                for &(x, w) in pairs {
                    let f = regressor(x);
                    m += w * b.intensity.at(x)? * f * f.transpose();
                }
                Ok(m)
            })
            .collect()
    }

    /// Σ_l a_l cᵀ M_l⁻¹ c on raw (point, weight) pairs; repeated points are allowed.
    /// Returns +∞ when any block is non-estimable.
    pub fn variable_part_weighted(&self, pairs: &[(f64, f64)]) -> Result<f64> {
        let c = self.c_vector();
        let mut total = 0.0;
        for (b, m) in self.blocks.iter().zip(self.block_infos(pairs)?) {
            if b.coef == 0.0 {
                continue;
            }
            match guarded_inverse(&m) {
                Some(inv) => total += b.coef * (c.transpose() * inv * c)[(0, 0)],
                None => return Ok(f64::INFINITY),
            }
        }
        Ok(total)
    }

    /// Design-dependent part Σ_l a_l cᵀ M_l(ξ)⁻¹ c.
    pub fn variable_part(&self, design: &Design) -> Result<f64> {
        self.variable_part_weighted(&design.iter().collect::<Vec<_>>())
    }

    /// Criterion value on raw (point, weight) pairs.
    pub fn value_weighted(&self, pairs: &[(f64, f64)]) -> Result<f64> {
        Ok(self.scale * (self.variable_part_weighted(pairs)? + self.constant))
    }

    /// Criterion value. For the gamma family this is the direction-only
    /// c-criterion (1, x_u)M(ξ)⁻¹(1, x_u)ᵀ; for gamma+gamma it is
    /// c₁²q₁ + c₂²q₂; for gamma+lmem it is (c₁²q₁ + c₂²q₂ + c_ς²)/f_T(t_α)².
    pub fn value(&self, design: &Design) -> Result<f64> {
        self.value_weighted(&design.iter().collect::<Vec<_>>())
    }

    /// Per-unit asymptotic variance of the estimated quantile,
    /// (Σ_l a_l q_l + c_ς²)/f_T(t_α)², in the scenario's time units.
    pub fn asymptotic_variance(&self, design: &Design) -> Result<f64> {
        let var = self.variable_part(design)?;
        let raw = match self.family {
            Family::Gamma => self.c[0].powi(2) * var,
            _ => var + self.constant,
        };
        Ok(raw / (self.density * self.density))
    }

    /// Inverse block informations, `None` when the design is non-estimable.
    pub(crate) fn inverse_blocks(&self, pairs: &[(f64, f64)]) -> Result<Option<Vec<Matrix2<f64>>>> {
        let mut out = Vec::with_capacity(self.blocks.len());
        for m in self.block_infos(pairs)? {
            match guarded_inverse(&m) {
                Some(inv) => out.push(inv),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// Sensitivity d(x) = Σ_l a_l λ_l(x)(f(x)ᵀ M_l⁻¹ c)² at each of `xs`,
    /// together with Σ_l a_l cᵀM_l⁻¹c. A design is optimal iff
    /// d(x) ≤ Σ_l a_l cᵀM_l⁻¹c everywhere, with equality on its support.
    pub fn sensitivity(&self, design: &Design, xs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let pairs: Vec<(f64, f64)> = design.iter().collect();
        let inv = self
            .inverse_blocks(&pairs)?
            .ok_or_else(|| Error::Singular("design is not estimable".into()))?;
        let c = self.c_vector();
        let u: Vec<Vector2<f64>> = inv.iter().map(|m| m * c).collect();
        let phi: f64 = self.blocks.iter().zip(&u).map(|(b, u)| b.coef * c.dot(u)).sum();
        let d = xs
            .iter()
            .map(|&x| {
                let f = regressor(x);
                self.blocks
                    .iter()
                    .zip(&u)
                    .map(|(b, u)| Ok(b.coef * b.intensity.at(x)? * f.dot(u).powi(2)))
                    .sum::<Result<f64>>()
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((d, phi))
    }
}

/// Criterion value of `design` for `scenario`; +∞ when non-estimable.
pub fn avar(scenario: &Scenario, design: &Design) -> Result<f64> {
    Criterion::new(scenario)?.value(design)
}

/// aVar(optimal)/aVar(design); 0 for a non-estimable design.
pub fn efficiency(scenario: &Scenario, design: &Design, optimal: &Design) -> Result<f64> {
    efficiency_with(&Criterion::new(scenario)?, design, optimal)
}

/// [`efficiency`] with a prebuilt criterion.
pub fn efficiency_with(criterion: &Criterion, design: &Design, optimal: &Design) -> Result<f64> {
    let best = criterion.value(optimal)?;
    if !best.is_finite() {
        return Err(Error::InvalidDesign("reference design is not estimable".into()));
    }
    let v = criterion.value(design)?;
    Ok(if v.is_finite() { best / v } else { 0.0 })
}
