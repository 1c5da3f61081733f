//! Scenario files: JSON documents describing a planning problem.

use std::fmt;
use std::path::{Path, PathBuf};

use adtplan_core::{
    Components, Design, Family, GammaComponentParams, LmemComponentParams, MeasurementSchedule, OptimizerOptions,
    Scenario,
};
use serde::Deserialize;

/// A configuration problem, optionally anchored to a line of the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError {
            path: None,
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{}: {}", p.display(), l, self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, Some(l)) => write!(f, "line {}: {}", l, self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub beta0: f64,
    pub beta1: f64,
    pub nu: f64,
    pub z0: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LmemSpec {
    pub beta20: f64,
    pub beta21: f64,
    pub beta22: f64,
    pub beta23: f64,
    /// Standard deviation of the random intercept.
    pub sigma0: f64,
    /// Standard deviation of the measurement error.
    pub sigma_eps: f64,
    pub y20: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSpec {
    pub grid_step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let o = OptimizerOptions::default();
        OptimizerSpec {
            grid_step: o.grid_step,
            tol: o.tol,
            max_iter: o.max_iter,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NamedDesign {
    pub name: String,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub n_units: usize,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n_units: 200,
            replications: 2000,
            seed: 20240601,
        }
    }
}

fn default_alpha() -> f64 {
    0.5
}

/// Raw contents of a scenario file.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub family: String,
    pub gamma1: GammaSpec,
    #[serde(default)]
    pub gamma2: Option<GammaSpec>,
    #[serde(default)]
    pub lmem: Option<LmemSpec>,
    pub times: Vec<f64>,
    pub x_u: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub fixed_designs: Vec<NamedDesign>,
    #[serde(default)]
    pub simulation: SimulationSpec,
}

/// A loaded and validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub fixed_designs: Vec<(String, Design)>,
}

/// 1-based line of the first occurrence of `"key"` in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text).map_err(|mut e| {
            e.path = Some(path.to_path_buf());
            e
        })
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ConfigError {
            path: None,
            line: Some(e.line()).filter(|&l| l > 0),
            message: e.to_string(),
        })?;
        let at = |key: &str, message: String| ConfigError {
            path: None,
            line: line_of(text, key),
            message,
        };
        let scenario = build_scenario(&file).map_err(|(key, msg)| at(key, msg))?;
        let mut fixed_designs = Vec::new();
        for d in &file.fixed_designs {
            let design = Design::new(d.points.clone(), d.weights.clone())
                .map_err(|e| at("fixed_designs", format!("fixed design {:?}: {e}", d.name)))?;
            if d.name.is_empty() || !d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(at(
                    "fixed_designs",
                    format!("fixed design name {:?} must be non-empty ASCII letters, digits or '_'", d.name),
                ));
            }
            fixed_designs.push((d.name.clone(), design));
        }
        let o = &file.optimizer;
        if !(o.grid_step > 0.0 && o.tol > 0.0) {
            return Err(at("optimizer", "grid_step and tol must be positive".into()));
        }
        if let Some(s) = &file.sweep {
            check_sweep(s, scenario.family()).map_err(|m| at("sweep", m))?;
        }
        Ok(Config {
            file,
            scenario,
            fixed_designs,
        })
    }

    pub fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions {
            grid_step: self.file.optimizer.grid_step,
            tol: self.file.optimizer.tol,
            max_iter: self.file.optimizer.max_iter,
            ..OptimizerOptions::default()
        }
    }
}

fn gamma_params(spec: &GammaSpec) -> GammaComponentParams {
    GammaComponentParams {
        beta0: spec.beta0,
        beta1: spec.beta1,
        nu: spec.nu,
        z0: spec.z0,
    }
}

fn lmem_params(spec: &LmemSpec) -> LmemComponentParams {
    LmemComponentParams {
        beta20: spec.beta20,
        beta21: spec.beta21,
        beta22: spec.beta22,
        beta23: spec.beta23,
        sigma0_sq: spec.sigma0 * spec.sigma0,
        sigma_eps_sq: spec.sigma_eps * spec.sigma_eps,
        y20: spec.y20,
    }
}

/// Build the scenario, reporting failures with the key they belong to.
fn build_scenario(file: &ScenarioFile) -> Result<Scenario, (&'static str, String)> {
    let family: Family = file.family.parse().map_err(|e| ("family", format!("{e}")))?;
    let g1 = gamma_params(&file.gamma1);
    g1.validate().map_err(|e| ("gamma1", e.to_string()))?;
    let components = match family {
        Family::Gamma => {
            if file.gamma2.is_some() {
                return Err(("gamma2", "family gamma takes no gamma2 block".into()));
            }
            if file.lmem.is_some() {
                return Err(("lmem", "family gamma takes no lmem block".into()));
            }
            Components::Gamma(g1)
        }
        Family::GammaGamma => {
            if file.lmem.is_some() {
                return Err(("lmem", "family gamma+gamma takes no lmem block".into()));
            }
            let g2 = gamma_params(file.gamma2.as_ref().ok_or(("family", "family gamma+gamma needs a gamma2 block".into()))?);
            g2.validate().map_err(|e| ("gamma2", e.to_string()))?;
            Components::GammaGamma(g1, g2)
        }
        Family::GammaLmem => {
            if file.gamma2.is_some() {
                return Err(("gamma2", "family gamma+lmem takes no gamma2 block".into()));
            }
            let spec = file.lmem.as_ref().ok_or(("family", "family gamma+lmem needs an lmem block".into()))?;
            let l = lmem_params(spec);
            l.validate().map_err(|e| ("lmem", e.to_string()))?;
            Components::GammaLmem(g1, l)
        }
    };
    let schedule = MeasurementSchedule::new(file.times.clone()).map_err(|e| ("times", e.to_string()))?;
    if !(file.alpha > 0.0 && file.alpha < 1.0) {
        return Err(("alpha", format!("alpha must lie in (0, 1), got {}", file.alpha)));
    }
    Scenario::new(components, schedule, file.x_u, file.alpha).map_err(|e| ("x_u", e.to_string()))
}

/// Names accepted by [`apply_parameter`] for a family.
pub fn sweepable_parameters(family: Family) -> &'static [&'static str] {
    match family {
        Family::Gamma => &["x_u", "alpha", "beta0", "beta1", "nu", "z0"],
        Family::GammaGamma => &[
            "x_u", "alpha", "beta10", "beta11", "nu1", "z10", "beta20", "beta21", "nu2", "z20",
        ],
        Family::GammaLmem => &[
            "x_u", "alpha", "beta10", "beta11", "nu1", "z10", "beta20", "beta21", "beta22", "beta23", "sigma0",
            "sigma_eps", "y20",
        ],
    }
}

fn check_sweep(s: &SweepSpec, family: Family) -> Result<(), String> {
    if !sweepable_parameters(family).contains(&s.param.as_str()) {
        return Err(format!(
            "unknown sweep parameter {:?} for family {family}; expected one of {}",
            s.param,
            sweepable_parameters(family).join(", ")
        ));
    }
    if !(s.step > 0.0) || !(s.to >= s.from) {
        return Err(format!("sweep needs step > 0 and to >= from, got from={} to={} step={}", s.from, s.to, s.step));
    }
    Ok(())
}

/// Validate a sweep specification against a family.
pub fn validate_sweep(s: &SweepSpec, family: Family) -> Result<(), ConfigError> {
    check_sweep(s, family).map_err(ConfigError::new)
}

/// Copy of `scenario` with the named parameter set to `value`.
pub fn apply_parameter(scenario: &Scenario, name: &str, value: f64) -> adtplan_core::Result<Scenario> {
    let mut c = *scenario.components();
    let family = scenario.family();
    let unknown = || adtplan_core::Error::InvalidConfig(format!("unknown parameter {name:?} for family {family}"));
    match (family, name) {
        (_, "x_u") => return scenario.with_x_u(value),
        (_, "alpha") => return scenario.with_alpha(value),
        (Family::Gamma, "beta0") | (Family::GammaGamma | Family::GammaLmem, "beta10") => c.gamma1_mut().beta0 = value,
        (Family::Gamma, "beta1") | (Family::GammaGamma | Family::GammaLmem, "beta11") => c.gamma1_mut().beta1 = value,
        (Family::Gamma, "nu") | (Family::GammaGamma | Family::GammaLmem, "nu1") => c.gamma1_mut().nu = value,
        (Family::Gamma, "z0") | (Family::GammaGamma | Family::GammaLmem, "z10") => c.gamma1_mut().z0 = value,
        (Family::GammaGamma, "beta20") => c.gamma2_mut().ok_or_else(unknown)?.beta0 = value,
        (Family::GammaGamma, "beta21") => c.gamma2_mut().ok_or_else(unknown)?.beta1 = value,
        (Family::GammaGamma, "nu2") => c.gamma2_mut().ok_or_else(unknown)?.nu = value,
        (Family::GammaGamma, "z20") => c.gamma2_mut().ok_or_else(unknown)?.z0 = value,
        (Family::GammaLmem, "beta20") => c.lmem_mut().ok_or_else(unknown)?.beta20 = value,
        (Family::GammaLmem, "beta21") => c.lmem_mut().ok_or_else(unknown)?.beta21 = value,
        (Family::GammaLmem, "beta22") => c.lmem_mut().ok_or_else(unknown)?.beta22 = value,
        (Family::GammaLmem, "beta23") => c.lmem_mut().ok_or_else(unknown)?.beta23 = value,
        (Family::GammaLmem, "sigma0") => c.lmem_mut().ok_or_else(unknown)?.sigma0_sq = value * value,
        (Family::GammaLmem, "sigma_eps") => c.lmem_mut().ok_or_else(unknown)?.sigma_eps_sq = value * value,
        (Family::GammaLmem, "y20") => c.lmem_mut().ok_or_else(unknown)?.y20 = value,
        _ => return Err(unknown()),
    }
    scenario.with_components(c)
}
