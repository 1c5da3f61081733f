//! Subcommand implementations. Each writes one CSV table to a sink.

use std::io::Write;
use std::path::Path;

use adtplan_core::design::efficiency_with;
use adtplan_core::failure_time::{component_cdfs, marginal_quantiles, quantile_at, system_cdf};
use adtplan_core::mc::{apportion, empirical_avar_check, SimConfig};
use adtplan_core::optimizer::{multiplicative_optimize_with, optimality_certificate_with};
use adtplan_core::{Criterion, Design, Execution, Family, OptimizerOptions, OptimizerResult, Scenario};

use crate::config::{apply_parameter, validate_sweep, Config, ConfigError, SweepSpec};
use crate::output::{fmt_num, Cell, Table};
use crate::CliError;

/// Tolerance of the equivalence-theorem check reported by `design`.
pub const CERTIFICATE_TOL: f64 = 1e-4;

fn options(cfg: &Config, grid_step: Option<f64>) -> Result<OptimizerOptions, CliError> {
    let mut o = cfg.optimizer_options();
    if let Some(g) = grid_step {
        if !(g > 0.0 && g <= 1.0) {
            return Err(ConfigError::new(format!("--grid-step must lie in (0, 1], got {g}")).into());
        }
        o.grid_step = g;
    }
    Ok(o)
}

fn optimize(criterion: &Criterion, options: &OptimizerOptions) -> Result<OptimizerResult, CliError> {
    let result = multiplicative_optimize_with(criterion, options)?;
    if !result.converged {
        log::warn!(
            "optimizer stopped after {} iterations with deviation {:e}",
            result.iterations,
            result.max_deviation
        );
    }
    Ok(result)
}

/// Arguments of the `design` command.
#[derive(Debug, Clone, Default)]
pub struct DesignArgs {
    pub grid_step: Option<f64>,
    /// Also report an integer apportionment to this many units.
    pub n_units: Option<usize>,
}

/// Optimal design table: one row per support point.
pub fn design<W: Write>(cfg: &Config, args: &DesignArgs, out: W) -> Result<(), CliError> {
    let opts = options(cfg, args.grid_step)?;
    let criterion = Criterion::new(&cfg.scenario)?;
    let result = optimize(&criterion, &opts)?;
    let value = criterion.value(&result.design)?;
    let cert = optimality_certificate_with(&criterion, &result.design, opts.grid_step, CERTIFICATE_TOL)?;
    let counts = args.n_units.map(|n| apportion(&result.design, n));

    let mut header = vec!["x", "weight"];
    if counts.is_some() {
        header.push("units");
    }
    header.extend([
        "criterion",
        "t_alpha",
        "certificate_excess",
        "certificate_passed",
        "converged",
        "iterations",
    ]);
    let mut table = Table::new(out, &header)?;
    for (x, w) in result.design.iter() {
        let mut row = vec![Cell::from(x), Cell::from(w)];
        if let Some(c) = &counts {
            let n = c.iter().find(|(cx, _)| *cx == x).map_or(0, |(_, n)| *n);
            row.push(Cell::from(n));
        }
        row.extend([
            Cell::from(value),
            Cell::from(criterion.t_alpha()),
            Cell::from(cert.max_excess),
            Cell::from(cert.passed),
            Cell::from(result.converged),
            Cell::from(result.iterations),
        ]);
        table.row(&row)?;
    }
    Ok(table.finish()?)
}

/// Arguments of the `sweep` command; flags override the config's `sweep` block.
#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub grid_step: Option<f64>,
    pub param: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub step: Option<f64>,
}

fn resolve_sweep(cfg: &Config, args: &SweepArgs) -> Result<SweepSpec, CliError> {
    let base = cfg.file.sweep.clone();
    let pick = |flag: Option<f64>, field: Option<f64>, name: &str| {
        flag.or(field)
            .ok_or_else(|| ConfigError::new(format!("sweep needs --{name} or a sweep block in the config")))
    };
    let spec = SweepSpec {
        param: args
            .param
            .clone()
            .or_else(|| base.as_ref().map(|s| s.param.clone()))
            .ok_or_else(|| ConfigError::new("sweep needs --param or a sweep block in the config"))?,
        from: pick(args.from, base.as_ref().map(|s| s.from), "from")?,
        to: pick(args.to, base.as_ref().map(|s| s.to), "to")?,
        step: pick(args.step, base.as_ref().map(|s| s.step), "step")?,
    };
    validate_sweep(&spec, cfg.scenario.family())?;
    Ok(spec)
}

/// Grid values from, from + step, …, up to `to` inclusive.
pub fn sweep_values(spec: &SweepSpec) -> Vec<f64> {
    let n = ((spec.to - spec.from) / spec.step + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|i| {
            let v = spec.from + i as f64 * spec.step;
            fmt_num(v).parse().unwrap_or(v)
        })
        .collect()
}

struct SweepRow {
    value: f64,
    w_star: f64,
    criterion: f64,
    t_alpha: f64,
    efficiency_nominal: f64,
    fixed: Vec<f64>,
    c: Vec<f64>,
    converged: bool,
}

fn sweep_point(
    cfg: &Config,
    spec: &SweepSpec,
    nominal: &Design,
    opts: &OptimizerOptions,
    value: f64,
) -> Result<SweepRow, CliError> {
    let scenario = apply_parameter(&cfg.scenario, &spec.param, value)?;
    let criterion = Criterion::new(&scenario)?;
    let result = optimize(&criterion, opts)?;
    let fixed = cfg
        .fixed_designs
        .iter()
        .map(|(_, d)| efficiency_with(&criterion, d, &result.design))
        .collect::<adtplan_core::Result<Vec<_>>>()?;
    Ok(SweepRow {
        value,
        w_star: result.design.weight_at(0.0),
        criterion: criterion.value(&result.design)?,
        t_alpha: criterion.t_alpha(),
        efficiency_nominal: efficiency_with(&criterion, nominal, &result.design)?,
        fixed,
        c: criterion.gradient_constants().to_vec(),
        converged: result.converged,
    })
}

/// One row per grid value of the swept parameter, in increasing order.
pub fn sweep<W: Write>(cfg: &Config, args: &SweepArgs, out: W) -> Result<(), CliError> {
    let spec = resolve_sweep(cfg, args)?;
    let mut opts = options(cfg, args.grid_step)?;
    let nominal = optimize(&Criterion::new(&cfg.scenario)?, &opts)?.design;
    opts.execution = Execution::Sequential;
    let values = sweep_values(&spec);
    let rows = Execution::default().map(&values, |&v| sweep_point(cfg, &spec, &nominal, &opts, v));

    let n_c = match cfg.scenario.family() {
        Family::Gamma => 1,
        _ => 2,
    };
    let mut header: Vec<String> = ["value", "w_star", "criterion", "t_alpha", "efficiency_nominal"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(cfg.fixed_designs.iter().map(|(name, _)| format!("eff_{name}")));
    header.extend((1..=n_c).map(|i| format!("c{i}")));
    header.push("converged".into());
    let mut table = Table::new(out, &header)?;
    for row in rows {
        let row = row?;
        let mut cells = vec![
            Cell::from(row.value),
            Cell::from(row.w_star),
            Cell::from(row.criterion),
            Cell::from(row.t_alpha),
            Cell::from(row.efficiency_nominal),
        ];
        cells.extend(row.fixed.iter().map(|&e| Cell::from(e)));
        cells.extend(row.c.iter().take(n_c).map(|&c| Cell::from(c)));
        cells.push(Cell::from(row.converged));
        table.row(&cells)?;
    }
    Ok(table.finish()?)
}

/// Arguments of the `quantile` command.
#[derive(Debug, Clone)]
pub struct QuantileArgs {
    pub alphas: Vec<f64>,
    /// Upper end and spacing of the optional CDF trace.
    pub t_max: f64,
    pub t_step: f64,
}

impl Default for QuantileArgs {
    fn default() -> Self {
        QuantileArgs {
            alphas: vec![0.5],
            t_max: 10.0,
            t_step: 0.05,
        }
    }
}

/// Quantiles of the system failure time and of each component.
pub fn quantile<W: Write>(cfg: &Config, args: &QuantileArgs, out: W) -> Result<(), CliError> {
    if args.alphas.is_empty() {
        return Err(ConfigError::new("--alphas needs at least one level").into());
    }
    for &a in &args.alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(ConfigError::new(format!("quantile levels must lie in (0, 1), got {a}")).into());
        }
    }
    let s = &cfg.scenario;
    let n_comp = component_count(s);
    let mut header = vec!["alpha".to_string(), "t_alpha".into(), "F_T".into()];
    header.extend((1..=n_comp).map(|i| format!("t_alpha_{i}")));
    let mut table = Table::new(out, &header)?;
    for &a in &args.alphas {
        let t = quantile_at(s, a)?;
        let mut cells = vec![Cell::from(a), Cell::from(t), Cell::from(system_cdf(s, t)?)];
        cells.extend(marginal_quantiles(s, a)?.into_iter().map(Cell::from));
        table.row(&cells)?;
    }
    Ok(table.finish()?)
}

fn component_count(s: &Scenario) -> usize {
    match s.family() {
        Family::Gamma => 1,
        _ => 2,
    }
}

/// System and component CDFs on the grid 0, t_step, …, t_max.
pub fn cdf_trace<W: Write>(cfg: &Config, args: &QuantileArgs, out: W) -> Result<(), CliError> {
    if !(args.t_step > 0.0 && args.t_max > 0.0) {
        return Err(ConfigError::new("--t-max and --t-step must be positive").into());
    }
    let s = &cfg.scenario;
    let n_comp = component_count(s);
    let mut header = vec!["t".to_string(), "F_T".into()];
    header.extend((1..=n_comp).map(|i| format!("F_T{i}")));
    let mut table = Table::new(out, &header)?;
    let spec = SweepSpec {
        param: String::new(),
        from: 0.0,
        to: args.t_max,
        step: args.t_step,
    };
    for t in sweep_values(&spec) {
        let mut cells = vec![Cell::from(t), Cell::from(system_cdf(s, t)?)];
        cells.extend(component_cdfs(s, t)?.into_iter().map(Cell::from));
        table.row(&cells)?;
    }
    Ok(table.finish()?)
}

/// Arguments of the `validate` command; flags override the `simulation` block.
#[derive(Debug, Clone, Default)]
pub struct ValidateArgs {
    pub grid_step: Option<f64>,
    pub seed: Option<u64>,
    pub n_units: Option<usize>,
    pub replications: Option<usize>,
}

/// Monte Carlo check of the optimal design and every fixed design.
pub fn validate<W: Write>(cfg: &Config, args: &ValidateArgs, out: W) -> Result<(), CliError> {
    let opts = options(cfg, args.grid_step)?;
    let criterion = Criterion::new(&cfg.scenario)?;
    let optimal = optimize(&criterion, &opts)?.design;
    let sim = &cfg.file.simulation;
    let n_units = args.n_units.unwrap_or(sim.n_units);
    let replications = args.replications.unwrap_or(sim.replications);
    let seed = args.seed.unwrap_or(sim.seed);

    let mut designs = vec![("optimal".to_string(), optimal.clone())];
    designs.extend(cfg.fixed_designs.iter().cloned());
    let mut reports = Vec::with_capacity(designs.len());
    for (name, d) in &designs {
        let sim_cfg = SimConfig::new(n_units, replications, seed, d.clone()).map_err(|e| ConfigError::new(e.to_string()))?;
        let report = empirical_avar_check(&cfg.scenario, &sim_cfg)?;
        if report.failed > 0 {
            log::warn!("design {name}: {} of {} replications failed", report.failed, replications);
        }
        reports.push(report);
    }

    let header = [
        "design",
        "n_units",
        "replications",
        "seed",
        "t_alpha",
        "mean_estimate",
        "empirical_variance",
        "predicted_variance",
        "ratio",
        "failed",
        "predicted_efficiency",
        "empirical_efficiency",
    ];
    let mut table = Table::new(out, &header)?;
    let reference = &reports[0];
    for ((name, _), r) in designs.iter().zip(&reports) {
        table.row(&[
            Cell::from(name.as_str()),
            Cell::from(r.n_units),
            Cell::from(r.replications),
            Cell::from(r.seed),
            Cell::from(r.t_alpha),
            Cell::from(r.mean_estimate),
            Cell::from(r.empirical_variance),
            Cell::from(r.predicted_variance),
            Cell::from(r.ratio),
            Cell::from(r.failed),
            Cell::from(reference.predicted_avar / r.predicted_avar),
            Cell::from(reference.empirical_variance / r.empirical_variance),
        ])?;
    }
    Ok(table.finish()?)
}

/// Arguments of the `efficiency` command.
#[derive(Debug, Clone, Default)]
pub struct EfficiencyArgs {
    pub grid_step: Option<f64>,
    /// CSV with `x` and `weight` columns, such as the output of `design`.
    pub design: Option<std::path::PathBuf>,
}

/// Read a design from a CSV file with `x` and `weight` columns; repeated
/// points are merged and weights renormalized.
pub fn read_design_csv(path: &Path) -> Result<Design, ConfigError> {
    let err = |line: Option<u64>, msg: String| ConfigError {
        path: Some(path.to_path_buf()),
        line: line.map(|l| l as usize),
        message: msg,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(None, e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(Some(1), e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(Some(1), format!("missing column {name:?}")))
    };
    let (xi, wi) = (col("x")?, col("weight")?);
    let mut pairs = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        let num = |i: usize| -> Result<f64, ConfigError> {
            let field = rec.get(i).unwrap_or("");
            field.trim().parse().map_err(|_| err(line, format!("not a number: {field:?}")))
        };
        pairs.push((num(xi)?, num(wi)?));
    }
    Design::from_masses(&pairs).map_err(|e| err(None, e.to_string()))
}

/// Asymptotic variance and efficiency of each fixed design and of `--design`.
pub fn efficiency<W: Write>(cfg: &Config, args: &EfficiencyArgs, out: W) -> Result<(), CliError> {
    let mut designs = cfg.fixed_designs.clone();
    if let Some(path) = &args.design {
        designs.push(("file".to_string(), read_design_csv(path)?));
    }
    if designs.is_empty() {
        return Err(ConfigError::new("no designs to evaluate: pass --design or add fixed_designs").into());
    }
    let opts = options(cfg, args.grid_step)?;
    let criterion = Criterion::new(&cfg.scenario)?;
    let optimal = optimize(&criterion, &opts)?.design;
    let avar_opt = criterion.asymptotic_variance(&optimal)?;
    let mut table = Table::new(out, &["design", "avar", "avar_optimal", "efficiency"])?;
    for (name, d) in &designs {
        table.row(&[
            Cell::from(name.as_str()),
            Cell::from(criterion.asymptotic_variance(d)?),
            Cell::from(avar_opt),
            Cell::from(efficiency_with(&criterion, d, &optimal)?),
        ])?;
    }
    Ok(table.finish()?)
}
