//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use adtplan_cli::commands::{self, SweepArgs};
use adtplan_cli::Config;
use adtplan_core::failure_time::{
    gamma_quantile_closed_form, gradient_constants, marginal_quantiles, quantile, system_cdf,
};
use adtplan_core::lmem_model::time_profile_var;
use adtplan_core::mc::{empirical_avar_check, SimConfig};
use adtplan_core::optimizer::{elfving_weight, multiplicative_optimize, optimality_certificate};
use adtplan_core::specfun::{dq_dshape, reg_gamma_q};
use adtplan_core::{
    efficiency, Components, Design, GammaComponentParams, LmemComponentParams, OptimizerOptions, Scenario,
};

const SEED: u64 = 20240601;

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn load(name: &str) -> Config {
    Config::load(&example(name)).expect("bundled config loads")
}

fn scenario(name: &str) -> Scenario {
    load(name).scenario
}

fn xi2() -> Design {
    Design::uniform(vec![0.0, 1.0]).unwrap()
}

fn xi3() -> Design {
    Design::uniform(vec![0.0, 0.5, 1.0]).unwrap()
}

/// Collects the sub-checks of one criterion.
#[derive(Default)]
struct Outcome {
    ok: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            ok: true,
            notes: Vec::new(),
        }
    }

    fn check(&mut self, pass: bool, note: String) {
        self.ok &= pass;
        self.notes.push(if pass { note } else { format!("[fails] {note}") });
    }

    fn within(&mut self, label: &str, value: f64, target: f64, tol: f64) {
        self.check(
            (value - target).abs() <= tol,
            format!("{label} = {value:.6} (want {target} +/- {tol})"),
        );
    }

    fn faster_than(&mut self, label: &str, elapsed: Duration, limit: Duration) {
        self.check(elapsed < limit, format!("{label} {:.3}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs_f64()));
    }
}

fn optimal(s: &Scenario) -> Design {
    let r = multiplicative_optimize(s, &OptimizerOptions::default()).unwrap();
    assert!(r.converged, "optimizer did not converge");
    r.design
}

fn univariate_design() -> Outcome {
    let mut o = Outcome::new();
    let s = scenario("univariate.json");
    let start = Instant::now();
    let r = multiplicative_optimize(&s, &OptimizerOptions::default()).unwrap();
    let elapsed = start.elapsed();
    o.check(r.converged, format!("converged in {} iterations", r.iterations));
    o.check(r.design.points() == [0.0, 1.0], format!("support {:?}", r.design.points()));
    let w = r.design.weight_at(0.0);
    o.within("w*", w, 0.79, 0.005);
    let closed = elfving_weight(s.components().gamma1(), s.schedule(), s.x_u()).unwrap();
    o.within("closed-form weight vs w*", closed, w, 1e-3);
    o.faster_than("optimizer", elapsed, Duration::from_secs(1));
    o
}

fn univariate_median() -> Outcome {
    let mut o = Outcome::new();
    let s = scenario("univariate.json");
    o.within("t0.5 by root solve", quantile(&s).unwrap(), 5.39, 0.01);
    let closed = gamma_quantile_closed_form(s.components().gamma1(), s.x_u(), 0.5).unwrap();
    o.within("t0.5 in closed form", closed, 5.39, 0.01);
    o
}

fn standard_design_efficiencies() -> Outcome {
    let mut o = Outcome::new();
    let s = scenario("univariate.json");
    let opt = optimal(&s);
    o.within("eff(uniform two-point)", efficiency(&s, &xi2(), &opt).unwrap(), 0.75, 0.01);
    o.within("eff(uniform three-point)", efficiency(&s, &xi3(), &opt).unwrap(), 0.55, 0.01);
    o
}

fn closed_form_weight_limits() -> Outcome {
    let mut o = Outcome::new();
    let s = scenario("univariate.json");
    let g = s.components().gamma1();
    o.within("w at x_u = -1e6", elfving_weight(g, s.schedule(), -1e6).unwrap(), 0.516, 0.002);
    o.within("w as x_u -> 0-", elfving_weight(g, s.schedule(), -1e-12).unwrap(), 1.0, 1e-6);
    o
}

fn gamma_gamma_design() -> Outcome {
    let mut o = Outcome::new();
    let s = scenario("gamma_gamma.json");
    o.within("w*", optimal(&s).weight_at(0.0), 0.78, 0.005);
    o.within("t0.5", quantile(&s).unwrap(), 3.93, 0.01);
    o
}

fn gamma_lmem_design() -> Outcome {
    let mut o = Outcome::new();
    let s = scenario("gamma_lmem.json");
    o.within("w*", optimal(&s).weight_at(0.0), 0.78, 0.005);
    o.within("t0.5", quantile(&s).unwrap(), 4.99, 0.01);
    o.within("mixed-model marginal median", marginal_quantiles(&s, 0.5).unwrap()[1], 5.32, 0.01);
    o
}

fn parse_csv(bytes: &[u8]) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::str::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn misspecification_sweep() -> Outcome {
    let mut o = Outcome::new();
    let cfg = load("gamma_lmem.json");
    let mut buf = Vec::new();
    let args = SweepArgs {
        param: Some("beta10".into()),
        from: Some(-1.0),
        to: Some(2.0),
        step: Some(0.01),
        ..SweepArgs::default()
    };
    commands::sweep(&cfg, &args, &mut buf).unwrap();
    let (header, rows) = parse_csv(&buf);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (v, t, e) = (col("value"), col("t_alpha"), col("efficiency_nominal"));

    let crossing = rows.windows(2).find(|p| p[0][t] >= 1.0 && p[1][t] < 1.0).map(|p| {
        let (a, b) = (&p[0], &p[1]);
        a[v] + (a[t] - 1.0) / (a[t] - b[t]) * (b[v] - a[v])
    });
    match crossing {
        Some(c) => o.within("t0.5 = 1 crossing in beta10", c, 1.92, 0.02),
        None => o.check(false, "t0.5 never crosses 1".into()),
    }
    let at = |x: f64| rows.iter().find(|r| (r[v] - x).abs() < 1e-9).unwrap()[e];
    o.within("eff(nominal design) at beta10 = 1.92", at(1.92), 0.9936, 0.002);
    let worst = rows
        .iter()
        .filter(|r| r[v] >= 0.35 - 1e-9 && r[v] <= 0.50 + 1e-9)
        .map(|r| r[e])
        .fold(f64::INFINITY, f64::min);
    o.check(worst >= 0.999, format!("min eff on beta10 in [0.35, 0.50] = {worst:.6} (want >= 0.999)"));
    o
}

const FD_REL: f64 = 1e-4;

fn central<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
    let h = 1e-5 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn gamma_block(c: &mut Components, l: usize) -> &mut GammaComponentParams {
    if l == 0 {
        c.gamma1_mut()
    } else {
        c.gamma2_mut().unwrap()
    }
}

fn gradient_suite() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut record = |o: &mut Outcome, label: String, analytic: f64, numeric: f64| {
        let e = rel_err(analytic, numeric);
        worst = worst.max(e);
        count += 1;
        if e > FD_REL {
            o.check(false, format!("{label}: analytic {analytic:e} vs finite difference {numeric:e}"));
        }
    };

    for &(s, z) in &[(0.5, 5.16), (1.0, 5.16), (2.9, 5.16), (5.5, 5.16), (9.0, 5.23), (4.0, 2.0), (20.0, 18.0)] {
        let numeric = central(|u| reg_gamma_q(u, z).unwrap(), s);
        record(&mut o, format!("dQ/ds at ({s}, {z})"), dq_dshape(s, z).unwrap(), numeric);
    }

    for name in ["univariate.json", "gamma_gamma.json", "gamma_lmem.json"] {
        let s = scenario(name);
        let g = gradient_constants(&s).unwrap();
        let t = g.t_alpha;
        let x_u = s.x_u();
        let cdf_with = |c: Components| system_cdf(&s.with_components(c).unwrap(), t).unwrap();

        let numeric = central(|u| system_cdf(&s, u).unwrap(), t);
        record(&mut o, format!("{name}: density"), g.density, numeric);

        let n_gamma = if matches!(s.components(), Components::GammaGamma(..)) { 2 } else { 1 };
        for l in 0..n_gamma {
            let base = *s.components();
            let mut nominal = base;
            let p = *gamma_block(&mut nominal, l);
            let shift = |f: fn(&mut GammaComponentParams, f64), v: f64| {
                let mut c = base;
                f(gamma_block(&mut c, l), v);
                cdf_with(c)
            };
            let d0 = central(|v| shift(|p, v| p.beta0 = v, v), p.beta0);
            let d1 = central(|v| shift(|p, v| p.beta1 = v, v), p.beta1);
            record(&mut o, format!("{name}: gamma block {} in beta0", l + 1), g.c[l], d0);
            record(&mut o, format!("{name}: gamma block {} in beta1", l + 1), g.c[l] * x_u, d1);
        }

        if let Components::GammaLmem(_, l) = *s.components() {
            let base = *s.components();
            let shift = |f: fn(&mut LmemComponentParams, f64), v: f64| {
                let mut c = base;
                f(c.lmem_mut().unwrap(), v);
                cdf_with(c)
            };
            let d20 = central(|v| shift(|p, v| p.beta20 = v, v), l.beta20);
            let d21 = central(|v| shift(|p, v| p.beta21 = v, v), l.beta21);
            let d22 = central(|v| shift(|p, v| p.beta22 = v, v), l.beta22);
            let d23 = central(|v| shift(|p, v| p.beta23 = v, v), l.beta23);
            let lead = d20;
            record(&mut o, format!("{name}: mixed-model slope in x"), lead * x_u, d21);
            record(&mut o, format!("{name}: mixed-model slope in t"), lead * t, d22);
            record(&mut o, format!("{name}: mixed-model interaction"), lead * t * x_u, d23);
            let profile = time_profile_var(s.schedule(), &l, t).unwrap();
            record(&mut o, format!("{name}: mixed-model constant"), g.c[1], lead.abs() * profile.sqrt());
            let dvar = central(|v| shift(|p, v| p.sigma0_sq = v, v), l.sigma0_sq);
            record(&mut o, format!("{name}: variance gradient"), g.c_variance.x, dvar);
            let deps = central(|v| shift(|p, v| p.sigma_eps_sq = v, v), l.sigma_eps_sq);
            o.check(
                g.c_variance.y == 0.0 && deps.abs() < 1e-12,
                format!("{name}: error-variance gradient {deps:e}"),
            );
        }
    }
    o.check(true, format!("{count} gradients, worst relative error {worst:.2e} (limit {FD_REL:e})"));
    o.faster_than("suite", start.elapsed(), Duration::from_secs(10));
    o
}

fn optimality_certificates() -> Outcome {
    let mut o = Outcome::new();
    for name in ["univariate.json", "gamma_gamma.json", "gamma_lmem.json"] {
        let s = scenario(name);
        let c = optimality_certificate(&s, &optimal(&s), 0.01, 1e-4).unwrap();
        o.check(c.passed, format!("{name}: excess {:.2e}", c.max_excess));
    }
    let s = scenario("univariate.json");
    let c = optimality_certificate(&s, &xi3(), 0.01, 1e-4).unwrap();
    o.check(!c.passed, format!("uniform three-point rejected with excess {:.3}", c.max_excess));
    o
}

fn monte_carlo_validation() -> Outcome {
    let mut o = Outcome::new();
    let s = scenario("univariate.json");
    let start = Instant::now();
    let opt = optimal(&s);
    let run = |d: Design| empirical_avar_check(&s, &SimConfig::new(200, 2000, SEED, d).unwrap()).unwrap();
    let r_opt = run(opt);
    let r_two = run(xi2());
    o.check(
        (0.85..=1.15).contains(&r_opt.ratio),
        format!("variance ratio {:.4} (want [0.85, 1.15])", r_opt.ratio),
    );
    o.within(
        "empirical eff(uniform two-point)",
        r_opt.empirical_variance / r_two.empirical_variance,
        0.75,
        0.05,
    );
    o.check(
        r_opt.failed + r_two.failed == 0,
        format!("failed replications {}", r_opt.failed + r_two.failed),
    );
    o.faster_than("validation", start.elapsed(), Duration::from_secs(300));
    o
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_adtplan")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn cli_determinism() -> Outcome {
    let mut o = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    for name in ["univariate.json", "gamma_gamma.json", "gamma_lmem.json"] {
        let cfg = example(name);
        let cfg = cfg.to_str().unwrap();
        let trace = dir.path().join("trace.csv");
        let trace = trace.to_str().unwrap();
        let runs: Vec<(&str, Vec<&str>)> = vec![
            ("design", vec!["design", "--config", cfg, "--n-units", "200"]),
            ("sweep", vec!["sweep", "--config", cfg, "--param", "x_u", "--from", "-2", "--to", "-0.1", "--step", "0.1"]),
            ("quantile", vec!["quantile", "--config", cfg, "--alphas", "0.1,0.5,0.9", "--trace", trace]),
            ("efficiency", vec!["efficiency", "--config", cfg]),
            ("validate", vec!["validate", "--config", cfg, "--replications", "200", "--seed", "7"]),
        ];
        for (label, args) in runs {
            let first = run_cli(&args);
            let first_trace = if label == "quantile" { std::fs::read(trace).unwrap() } else { Vec::new() };
            let second = run_cli(&args);
            let second_trace = if label == "quantile" { std::fs::read(trace).unwrap() } else { Vec::new() };
            o.check(
                !first.is_empty() && first == second && first_trace == second_trace,
                format!("{name} {label}"),
            );
        }
    }
    o
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("univariate optimal design", univariate_design),
        ("univariate median failure time", univariate_median),
        ("efficiency of uniform designs", standard_design_efficiencies),
        ("closed-form weight limits", closed_form_weight_limits),
        ("gamma+gamma optimal design", gamma_gamma_design),
        ("gamma+lmem optimal design", gamma_lmem_design),
        ("misspecification sweep in beta10", misspecification_sweep),
        ("analytic gradients vs finite differences", gradient_suite),
        ("optimality certificates", optimality_certificates),
        ("Monte Carlo variance validation", monte_carlo_validation),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (label, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome {
                ok: false,
                notes: vec![format!("panicked: {msg}")],
            }
        });
        if !outcome.ok {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {label}: {}",
            if outcome.ok { "PASS" } else { "FAIL" },
            i + 1,
            outcome.notes.join("; ")
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
