//! Monte Carlo validation of the asymptotic variance.
//!
//! Each replication simulates an exact design's worth of units, refits every
//! component by maximum likelihood, and evaluates the failure-time quantile
//! at the fitted values. The empirical variance of those estimates, times
//! the number of units, is compared with the per-unit asymptotic variance.
//!
//! Random numbers come from ChaCha8 with one stream per replication. Inside
//! a stream, each unit starts at a word offset derived from its stress level
//! and its index within that level, so a unit's draws do not depend on the
//! other units, on thread scheduling, or on the rest of the design. Two
//! designs that share a support point therefore see the same units there.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::design::{Criterion, Design};
use crate::error::{Error, Result};
use crate::failure_time::{quantile, Components, Scenario};
use crate::gamma_model::{rate, GammaComponentParams, MeasurementSchedule};
use crate::lmem_model::{time_design_matrix, LmemComponentParams};
use crate::par::Execution;
use crate::specfun::{digamma, ln_gamma, trigamma};

const SCORING_MAX_ITER: usize = 200;
const SCORING_TOL: f64 = 1e-12;
const LEVEL_BITS: u32 = 20;
const UNIT_BITS: u32 = 24;
const OFFSET_BITS: u32 = 24;

/// Settings of a validation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_units: usize,
    pub replications: usize,
    pub seed: u64,
    /// Approximate design, apportioned to `n_units` by largest remainder.
    pub design: Design,
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(n_units: usize, replications: usize, seed: u64, design: Design) -> Result<Self> {
        let cfg = SimConfig {
            n_units,
            replications,
            seed,
            design,
            execution: Execution::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_units < 4 {
            return Err(Error::InvalidConfig(format!("need at least 4 units, got {}", self.n_units)));
        }
        if self.replications < 1 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if self.n_units >= 1 << UNIT_BITS {
            return Err(Error::InvalidConfig(format!("at most {} units are supported", (1usize << UNIT_BITS) - 1)));
        }
        Ok(())
    }
}

/// Integer unit counts n_i with Σ n_i = n by largest remainder; remainders
/// equal to within 1e-9 count as ties, which go to the earlier support point. Points that receive no unit are dropped.
pub fn apportion(design: &Design, n: usize) -> Vec<(f64, usize)> {
    let quotas: Vec<f64> = design.weights().iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by_key(|&i| {
        let remainder = quotas[i] - quotas[i].floor();
        (std::cmp::Reverse((remainder * 1e9).round() as i64), i)
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    design
        .points()
        .iter()
        .copied()
        .zip(counts)
        .filter(|p| p.1 > 0)
        .collect()
}

/// Independent increments Y_j ~ Gamma(shape = γ(x)Δ_j, scale = ν).
pub fn simulate_gamma_increments<R: Rng + ?Sized>(
    params: &GammaComponentParams,
    x: f64,
    schedule: &MeasurementSchedule,
    rng: &mut R,
) -> Vec<f64> {
    let g = rate(params, x);
    schedule
        .deltas()
        .iter()
        .map(|d| {
            let dist = Gamma::new(g * d, params.nu).expect("shape and scale are positive");
            dist.sample(rng).max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// One unit's responses at t₀ = 0, t₁, …, t_k: a random intercept plus the
/// mean profile plus independent measurement errors.
pub fn simulate_lmem_responses<R: Rng + ?Sized>(
    params: &LmemComponentParams,
    x: f64,
    schedule: &MeasurementSchedule,
    rng: &mut R,
) -> Vec<f64> {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let intercept = params.sigma0_sq.sqrt() * std.sample(rng);
    std::iter::once(0.0)
        .chain(schedule.times().iter().copied())
        .map(|t| params.mean(x, t) + intercept + params.sigma_eps_sq.sqrt() * std.sample(rng))
        .collect()
}

/// Observations of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitData {
    pub x: f64,
    /// Increments of the first gamma component.
    pub gamma1: Vec<f64>,
    /// Increments of the second gamma component (gamma+gamma only).
    pub gamma2: Option<Vec<f64>>,
    /// Responses of the mixed-model component at t₀..t_k (gamma+lmem only).
    pub lmem: Option<Vec<f64>>,
}

/// A simulated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub units: Vec<UnitData>,
}

fn level_key(x: f64) -> u128 {
    ((x * 1e6).round() as u128) & ((1 << LEVEL_BITS) - 1)
}

/// Generator positioned at the start of a unit's private block of the replication stream.
fn unit_rng(seed: u64, replication: u64, x: f64, unit: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    let pos = ((level_key(x) << UNIT_BITS) | unit as u128) << OFFSET_BITS;
    rng.set_word_pos(pos);
    rng
}

/// Simulate every unit of an exact design (`counts` as from [`apportion`]).
pub fn simulate_dataset(scenario: &Scenario, counts: &[(f64, usize)], seed: u64, replication: u64) -> Dataset {
    let schedule = scenario.schedule();
    let mut units = Vec::with_capacity(counts.iter().map(|c| c.1).sum());
    for &(x, n) in counts {
        for i in 0..n {
            let mut rng = unit_rng(seed, replication, x, i);
            let comps = scenario.components();
            let gamma1 = simulate_gamma_increments(comps.gamma1(), x, schedule, &mut rng);
            let gamma2 = comps.gamma2().map(|g| simulate_gamma_increments(g, x, schedule, &mut rng));
            let lmem = comps.lmem().map(|l| simulate_lmem_responses(l, x, schedule, &mut rng));
            units.push(UnitData { x, gamma1, gamma2, lmem });
        }
    }
    Dataset { units }
}

/// Per-level sufficient statistics of a gamma component: unit count and
/// Σ_units ln y_j for each interval.
struct GammaLevel {
    x: f64,
    n: f64,
    log_sums: Vec<f64>,
    sum: f64,
}

fn gamma_levels<'a, I>(data: I, k: usize) -> Result<Vec<GammaLevel>>
where
    I: Iterator<Item = (f64, &'a [f64])>,
{
    let mut levels: Vec<GammaLevel> = Vec::new();
    for (x, ys) in data {
        if ys.len() != k {
            return Err(Error::InvalidConfig(format!("expected {k} increments per unit, got {}", ys.len())));
        }
        let idx = match levels.iter().position(|l| l.x == x) {
            Some(i) => i,
            None => {
                levels.push(GammaLevel {
                    x,
                    n: 0.0,
                    log_sums: vec![0.0; k],
                    sum: 0.0,
                });
                levels.len() - 1
            }
        };
        let level = &mut levels[idx];
        level.n += 1.0;
        for (s, &y) in level.log_sums.iter_mut().zip(ys) {
            if !(y > 0.0) {
                return Err(Error::Domain(format!("increment must be positive, got {y}")));
            }
            *s += y.ln();
        }
        level.sum += ys.iter().sum::<f64>();
    }
    if levels.len() < 2 {
        return Err(Error::RankDeficient("gamma fit needs units at two or more stress levels".into()));
    }
    Ok(levels)
}

/// β-dependent part of the gamma log-likelihood with its score and expected information.
fn gamma_objective(
    beta: Vector2<f64>,
    levels: &[GammaLevel],
    deltas: &[f64],
    nu: f64,
) -> Result<(f64, Vector2<f64>, Matrix2<f64>)> {
    let ln_nu = nu.ln();
    let mut ll = 0.0;
    let mut score = Vector2::zeros();
    let mut info = Matrix2::zeros();
    for l in levels {
        let f = Vector2::new(1.0, l.x);
        let g = (beta[0] + beta[1] * l.x).exp();
        let mut s = 0.0;
        let mut i = 0.0;
        for (&d, &ls) in deltas.iter().zip(&l.log_sums) {
            let a = g * d;
            ll += a * (ls - l.n * ln_nu) - l.n * ln_gamma(a)?;
            s += a * (ls - l.n * ln_nu - l.n * digamma(a)?);
            i += l.n * a * a * trigamma(a)?;
        }
        score += s * f;
        info += i * f * f.transpose();
    }
    Ok((ll, score, info))
}

/// Weighted least squares of per-level log mean rates, as a starting value.
fn gamma_start(levels: &[GammaLevel], deltas: &[f64], nu: f64) -> Vector2<f64> {
    let total_time: f64 = deltas.iter().sum();
    let mut xtx = Matrix2::zeros();
    let mut xty = Vector2::zeros();
    for l in levels {
        let f = Vector2::new(1.0, l.x);
        let y = (l.sum / (l.n * total_time * nu)).max(f64::MIN_POSITIVE).ln();
        xtx += l.n * f * f.transpose();
        xty += l.n * y * f;
    }
    xtx.try_inverse().map_or(Vector2::zeros(), |inv| inv * xty)
}

/// Fisher scoring with step halving for (β₀, β₁) of one gamma component, ν known.
fn fit_gamma<'a, I>(template: &GammaComponentParams, data: I, schedule: &MeasurementSchedule) -> Result<(GammaComponentParams, bool)>
where
    I: Iterator<Item = (f64, &'a [f64])>,
{
    let deltas = schedule.deltas();
    let levels = gamma_levels(data, deltas.len())?;
    let nu = template.nu;
    let mut beta = gamma_start(&levels, &deltas, nu);
    let (mut ll, mut score, mut info) = gamma_objective(beta, &levels, &deltas, nu)?;
    let mut converged = false;
    for _ in 0..SCORING_MAX_ITER {
        let inv = info
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("gamma information is singular".into()))?;
        let step = inv * score;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = beta + t * step;
            if let Ok(obj) = gamma_objective(cand, &levels, &deltas, nu) {
                if obj.0.is_finite() && obj.0 >= ll - 1e-12 * ll.abs() {
                    accepted = Some((cand, obj));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, obj)) = accepted else { break };
        let moved = (cand - beta).amax();
        beta = cand;
        (ll, score, info) = obj;
        if moved <= SCORING_TOL * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
    }
    let fitted = GammaComponentParams {
        beta0: beta[0],
        beta1: beta[1],
        ..*template
    };
    Ok((fitted, converged))
}

/// ML fit of the mixed-model component.
///
/// The GLS location estimate under compound symmetry coincides with OLS
/// because the time design contains an intercept column, so the location
/// does not depend on the variances and the profile over (σ₀², σ_ε²) is
/// maximized in closed form from the within- and between-unit residual sums
/// of squares. A negative between-unit component is set to the boundary.
fn fit_lmem<'a, I>(template: &LmemComponentParams, data: I, schedule: &MeasurementSchedule) -> Result<(LmemComponentParams, bool)>
where
    I: Iterator<Item = (f64, &'a [f64])>,
{
    let d = time_design_matrix(schedule);
    let n_obs = d.nrows();
    let dtd = d.transpose() * &d;
    let dtd = Matrix2::new(dtd[(0, 0)], dtd[(0, 1)], dtd[(1, 0)], dtd[(1, 1)]);
    let mut moment = Matrix2::zeros();
    let mut xty = Vector4::zeros();
    let units: Vec<(f64, &[f64])> = data.collect();
    let mut levels: Vec<f64> = Vec::new();
    for &(x, y) in &units {
        if y.len() != n_obs {
            return Err(Error::InvalidConfig(format!("expected {n_obs} responses per unit, got {}", y.len())));
        }
        if !levels.contains(&x) {
            levels.push(x);
        }
        let f = Vector2::new(1.0, x);
        moment += f * f.transpose();
        for (j, &yj) in y.iter().enumerate() {
            let t = d[(j, 1)];
            xty += yj * Vector4::new(1.0, x, t, t * x);
        }
    }
    if levels.len() < 2 {
        return Err(Error::RankDeficient("mixed-model fit needs units at two or more stress levels".into()));
    }
    let xtx: Matrix4<f64> = crate::lmem_model::kron2(&dtd, &moment);
    let beta = xtx
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("mixed-model design is singular".into()))?
        * xty;

    let n_units = units.len() as f64;
    let n = n_obs as f64;
    let mut ssw = 0.0;
    let mut ssb = 0.0;
    for &(x, y) in &units {
        let resid: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(j, &yj)| {
                let t = d[(j, 1)];
                yj - (beta[0] + beta[1] * x + beta[2] * t + beta[3] * t * x)
            })
            .collect();
        let mean = resid.iter().sum::<f64>() / n;
        ssw += resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>();
        ssb += n * mean * mean;
    }
    let mut sigma_eps_sq = ssw / (n_units * (n - 1.0));
    let mut sigma0_sq = (ssb / n_units - sigma_eps_sq) / n;
    let interior = sigma0_sq > 0.0;
    if !interior {
        sigma0_sq = 0.0;
        sigma_eps_sq = (ssw + ssb) / (n_units * n);
    }
    let fitted = LmemComponentParams {
        beta20: beta[0],
        beta21: beta[1],
        beta22: beta[2],
        beta23: beta[3],
        sigma0_sq,
        sigma_eps_sq,
        ..*template
    };
    Ok((fitted, interior))
}

/// Fitted components and whether every block converged to an interior maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub components: Components,
    pub converged: bool,
}

/// Maximum likelihood fit of every component; blocks are fitted independently.
/// Known quantities (ν, thresholds) are taken from the scenario.
pub fn fit_mle(scenario: &Scenario, dataset: &Dataset) -> Result<FitResult> {
    let schedule = scenario.schedule();
    let comps = scenario.components();
    let (g1, ok1) = fit_gamma(
        comps.gamma1(),
        dataset.units.iter().map(|u| (u.x, u.gamma1.as_slice())),
        schedule,
    )?;
    let missing = |what: &str| Error::InvalidConfig(format!("dataset has no {what} observations"));
    match comps {
        Components::Gamma(_) => Ok(FitResult {
            components: Components::Gamma(g1),
            converged: ok1,
        }),
        Components::GammaGamma(_, g2_template) => {
            let data = dataset
                .units
                .iter()
                .map(|u| u.gamma2.as_deref().map(|y| (u.x, y)).ok_or_else(|| missing("second gamma")))
                .collect::<Result<Vec<_>>>()?;
            let (g2, ok2) = fit_gamma(g2_template, data.into_iter(), schedule)?;
            Ok(FitResult {
                components: Components::GammaGamma(g1, g2),
                converged: ok1 && ok2,
            })
        }
        Components::GammaLmem(_, l_template) => {
            let data = dataset
                .units
                .iter()
                .map(|u| u.lmem.as_deref().map(|y| (u.x, y)).ok_or_else(|| missing("mixed-model")))
                .collect::<Result<Vec<_>>>()?;
            let (l, ok2) = fit_lmem(l_template, data.into_iter(), schedule)?;
            Ok(FitResult {
                components: Components::GammaLmem(g1, l),
                converged: ok1 && ok2,
            })
        }
    }
}

/// Log-likelihood of one gamma component's increments under `params`.
pub fn gamma_loglik(params: &GammaComponentParams, dataset: &Dataset, schedule: &MeasurementSchedule) -> Result<f64> {
    let deltas = schedule.deltas();
    let mut ll = 0.0;
    for u in &dataset.units {
        for (&d, &y) in deltas.iter().zip(&u.gamma1) {
            ll += crate::gamma_model::increment_loglik(params, u.x, d, y)?;
        }
    }
    Ok(ll)
}

/// Outcome of [`empirical_avar_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n_units: usize,
    pub replications: usize,
    pub seed: u64,
    /// Unit counts actually simulated.
    pub counts: Vec<(f64, usize)>,
    /// True quantile at the nominal values.
    pub t_alpha: f64,
    /// Mean of the estimates over successful replications.
    pub mean_estimate: f64,
    /// Sample variance (n − 1 denominator) of the estimates.
    pub empirical_variance: f64,
    /// Per-unit asymptotic variance of the estimator at the exact design.
    pub predicted_avar: f64,
    /// predicted_avar / n_units.
    pub predicted_variance: f64,
    /// empirical_variance / predicted_variance.
    pub ratio: f64,
    /// Replications whose fit or quantile failed, or did not converge.
    pub failed: usize,
}

/// Replicate simulate → fit → quantile and compare the spread of t̂_α with the asymptotics.
pub fn empirical_avar_check(scenario: &Scenario, sim: &SimConfig) -> Result<ValidationReport> {
    sim.validate()?;
    let counts = apportion(&sim.design, sim.n_units);
    let exact = Design::from_counts(&counts)?;
    let criterion = Criterion::new(scenario)?;
    let predicted_avar = criterion.asymptotic_variance(&exact)?;
    if !predicted_avar.is_finite() {
        return Err(Error::InvalidDesign("apportioned design is not estimable".into()));
    }
    let estimates: Vec<Option<f64>> = sim.execution.map_range(sim.replications, |r| {
        let data = simulate_dataset(scenario, &counts, sim.seed, r as u64);
        let fit = fit_mle(scenario, &data).ok()?;
        if !fit.converged {
            return None;
        }
        let fitted = scenario.with_components(fit.components).ok()?;
        quantile(&fitted).ok()
    });
    let ok: Vec<f64> = estimates.iter().filter_map(|e| *e).collect();
    let failed = estimates.len() - ok.len();
    if ok.len() < 2 {
        return Err(Error::NoConvergence {
            routine: "Monte Carlo replications",
            iterations: sim.replications,
        });
    }
    let m = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / m;
    let var = ok.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let predicted_variance = predicted_avar / sim.n_units as f64;
    Ok(ValidationReport {
        n_units: sim.n_units,
        replications: sim.replications,
        seed: sim.seed,
        counts,
        t_alpha: criterion.t_alpha(),
        mean_estimate: mean,
        empirical_variance: var,
        predicted_avar,
        predicted_variance,
        ratio: var / predicted_variance,
        failed,
    })
}
