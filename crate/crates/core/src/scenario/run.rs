use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::output::{write_atomic, Table};
use super::{
    parse_scenario_file, Check, Execution, Experiment, Kind, Scenario, ScenarioError, SpinSystem,
};
use crate::golden_rule::{
    build_model, fit_window, golden_rule_rate, monitored_decay_experiment,
    multichannel_decay_check, rate_sweep, DecayMode,
};
use crate::measurement::{
    direction, expectation_curve, fit_exponential, monte_carlo_curve, zeno_limit_study, DecayCurve,
    SequenceGenerator,
};
use crate::operator::pauli::{self, Axis};
use crate::operator::{evolve, DensityOperator, Operator};
use crate::probability::{default_step, derivative_probe, initial_decay_rate, WeightedObservable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub metric: String,
    pub value: Option<f64>,
    pub expectation: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub kind: Kind,
    pub seed: Option<u64>,
    /// The scenario document as parsed.
    pub input: serde_json::Value,
    pub output_dir: PathBuf,
    /// File names inside `output_dir`, in write order.
    pub artifacts: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub details: serde_json::Value,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    pub wall_time_s: f64,
    pub tool_version: &'static str,
}

struct Outputs {
    metrics: BTreeMap<String, f64>,
    details: serde_json::Value,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Self {
            metrics: BTreeMap::new(),
            details: json!({}),
            files: Vec::new(),
        }
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    fn json(&mut self, s: &Scenario, name: &str, value: &serde_json::Value) {
        if s.output.json {
            let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
            text.push('\n');
            self.files.push((name.to_string(), text.into_bytes()));
        }
    }

    fn curve(&mut self, s: &Scenario, stem: &str, curve: &DecayCurve) {
        if s.output.csv {
            self.files
                .push((format!("{stem}.csv"), curve.to_csv().into_bytes()));
        }
        self.json(s, &format!("{stem}.json"), &curve.sidecar_json());
    }

    fn table(&mut self, s: &Scenario, stem: &str, table: &Table, meta: serde_json::Value) {
        if s.output.csv {
            self.files
                .push((format!("{stem}.csv"), table.to_csv().into_bytes()));
        }
        self.json(s, &format!("{stem}.json"), &table.sidecar_json(meta));
    }
}

fn evaluate(check: &Check, metrics: &BTreeMap<String, f64>) -> CheckResult {
    let value = metrics.get(&check.metric).copied().filter(|v| !v.is_nan());
    let mut parts = Vec::new();
    let mut passed = value.is_some();
    let v = value.unwrap_or(f64::NAN);
    if let Some(e) = check.equals {
        let (tol, label) = match (check.tolerance, check.relative_tolerance) {
            (Some(t), _) => (t, format!("{e} ± {t}")),
            (None, Some(r)) => (r * e.abs(), format!("{e} ± {r} (relative)")),
            (None, None) => (0.0, format!("{e}")),
        };
        passed &= (v - e).abs() <= tol;
        parts.push(format!("= {label}"));
    }
    if let Some(lo) = check.min {
        passed &= v >= lo;
        parts.push(format!(">= {lo}"));
    }
    if let Some(hi) = check.max {
        passed &= v <= hi;
        parts.push(format!("<= {hi}"));
    }
    CheckResult {
        metric: check.metric.clone(),
        value,
        expectation: parts.join(", "),
        passed,
    }
}

fn spin_state(s: &SpinSystem) -> DensityOperator {
    DensityOperator::pure(&pauli::up_along(s.initial.theta, s.initial.phi))
}

fn spin_hamiltonian(s: &SpinSystem) -> Operator {
    pauli::precession(s.axis, s.omega, s.hbar)
}

fn axis_vector(a: Axis) -> [f64; 3] {
    match a {
        Axis::X => [1.0, 0.0, 0.0],
        Axis::Y => [0.0, 1.0, 0.0],
        Axis::Z => [0.0, 0.0, 1.0],
    }
}

/// Least-squares slope of `ln(1 − P)` against `ln n` over the last points, negated.
fn convergence_order(points: &[(usize, f64)]) -> f64 {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, p)| 1.0 - p > 1e-13)
        .map(|&(n, p)| ((n as f64).ln(), (1.0 - p).ln()))
        .collect();
    let tail = &usable[usable.len().saturating_sub(5)..];
    if tail.len() < 2 {
        return f64::NAN;
    }
    let k = tail.len() as f64;
    let (mx, my) = (
        tail.iter().map(|p| p.0).sum::<f64>() / k,
        tail.iter().map(|p| p.1).sum::<f64>() / k,
    );
    let sxy: f64 = tail.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = tail.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    -sxy / sxx
}

fn zeno_limit(
    s: &Scenario,
    system: &SpinSystem,
    total: f64,
    schedule: &[usize],
) -> crate::Result<Outputs> {
    let mut out = Outputs::new();
    let rho0 = spin_state(system);
    let h = spin_hamiltonian(system);
    let chi = Operator::ket_projector(&pauli::up_along(system.initial.theta, system.initial.phi));
    let points = zeno_limit_study(&rho0, &h, &chi, total, schedule, system.hbar)?;

    // One step returns the prepared state with probability
    // cos²(ωδ/2) + sin²(ωδ/2)·b², b the Bloch component along the precession axis.
    let (d, a) = (
        direction(system.initial.theta, system.initial.phi),
        axis_vector(system.axis),
    );
    let b = d[0] * a[0] + d[1] * a[1] + d[2] * a[2];
    let closed = |n: usize| {
        let half = system.omega * total / n as f64 / 2.0;
        (half.cos().powi(2) + half.sin().powi(2) * b * b).powi(n as i32)
    };

    let mut rows = Vec::with_capacity(points.len());
    let mut max_err = 0.0f64;
    for p in &points {
        let c = closed(p.n);
        max_err = max_err.max((p.product - c).abs());
        rows.push(vec![p.n as f64, p.product, c, p.predicted]);
        out.metric(&format!("product_n{}", p.n), p.product);
    }
    let monotone = points
        .windows(2)
        .all(|w| w[1].product >= w[0].product - 1e-12);
    out.metric(
        "final_product",
        points.last().map_or(f64::NAN, |p| p.product),
    );
    out.metric("monotone", if monotone { 1.0 } else { 0.0 });
    out.metric("max_closed_form_error", max_err);
    let pairs: Vec<(usize, f64)> = points.iter().map(|p| (p.n, p.product)).collect();
    out.metric("convergence_order", convergence_order(&pairs));

    let table = Table {
        columns: vec!["n", "nondecay_prob", "closed_form", "linear_prediction"],
        rows,
    };
    out.table(
        s,
        "zeno",
        &table,
        json!({ "total": total, "kind": "zeno_limit" }),
    );
    out.details = json!({ "points": points });
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn random_axis(
    s: &Scenario,
    system: &SpinSystem,
    n: usize,
    total: f64,
    seed: u64,
    execution: Execution,
    check_steps: usize,
) -> crate::Result<Outputs> {
    let mut out = Outputs::new();
    let rho0 = spin_state(system);
    let h = spin_hamiltonian(system);
    let gen = SequenceGenerator::RandomAxis;
    let curve = match execution {
        Execution::MonteCarlo { trajectories } => {
            monte_carlo_curve(&rho0, &h, &gen, total, n, trajectories, seed, system.hbar)?
        }
        Execution::Expectation { realizations } => {
            expectation_curve(&rho0, &h, &gen, total, n, realizations, seed, system.hbar)?
        }
    };
    let fit = fit_exponential(&curve, (0.0, total))?;
    let dwell = total / n as f64;
    out.metric("tau_per_step", fit.tau_inv * dwell);
    out.metric("r_squared", fit.r_squared);

    let mut worst = 0.0f64;
    for k in 1..=check_steps.min(curve.len() - 1) {
        let p = 0.5f64.powi(k as i32);
        let sigma = match execution {
            Execution::MonteCarlo { trajectories } => (p * (1.0 - p) / trajectories as f64).sqrt(),
            Execution::Expectation { .. } => curve.stderr[k],
        };
        let dev = (curve.nondecay_prob[k] - p).abs();
        worst = worst.max(if sigma > 0.0 {
            dev / sigma
        } else if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    out.metric("max_sigma_deviation", worst);
    out.curve(s, "curve", &curve);
    let fit_json = json!({ "fit": fit, "dwell": dwell, "window": [0.0, total] });
    out.json(s, "fit.json", &fit_json);
    out.details = fit_json;
    Ok(out)
}

fn probe(system: &SpinSystem, t_star: f64, step: Option<f64>) -> crate::Result<Outputs> {
    let mut out = Outputs::new();
    let rho0 = spin_state(system);
    let h = spin_hamiltonian(system);
    let obs = system.observable.unwrap_or(system.initial);
    let lambda = WeightedObservable::from_projector(Operator::ket_projector(&pauli::up_along(
        obs.theta, obs.phi,
    )))?;
    let step = step.unwrap_or_else(|| default_step(&h, system.hbar));
    let p = derivative_probe(&rho0, &h, &lambda, t_star, step, system.hbar)?;
    let rate = initial_decay_rate(
        &evolve(&rho0, &h, t_star, system.hbar)?,
        &lambda,
        &h,
        system.hbar,
    )?;
    out.metric("dp_shifted", p.dp_shifted);
    out.metric("dp_direct", p.dp_direct);
    out.metric("dc_shifted", p.dc_shifted);
    out.metric("dc_direct", p.dc_direct);
    out.metric("decay_rate", rate);
    out.details = json!({ "probe": p, "step": step, "t_star": t_star, "decay_rate": rate });
    Ok(out)
}

fn run_experiment(s: &Scenario) -> crate::Result<Outputs> {
    match &s.experiment {
        Experiment::ZenoLimit {
            system,
            total,
            n_schedule,
        } => zeno_limit(s, system, *total, n_schedule),
        Experiment::RandomAxis {
            system,
            n,
            total,
            seed,
            execution,
            check_steps,
        } => random_axis(s, system, *n, *total, *seed, *execution, *check_steps),
        Experiment::DerivativeProbe {
            system,
            t_star,
            step,
        } => {
            let out = probe(system, *t_star, *step)?;
            let mut out = Outputs {
                files: Vec::new(),
                ..out
            };
            let details = out.details.clone();
            out.json(s, "probe.json", &details);
            Ok(out)
        }
        Experiment::GoldenRule {
            model,
            delta,
            total,
            fit_window: declared,
            execution,
            seed,
        } => {
            let mut out = Outputs::new();
            let model = build_model(model.clone())?;
            let mode = match execution {
                Execution::Expectation { .. } => DecayMode::Expectation,
                Execution::MonteCarlo { trajectories } => DecayMode::MonteCarlo {
                    trajectories: *trajectories,
                    seed: seed.unwrap_or_default(),
                },
            };
            let curve = monitored_decay_experiment(&model, *delta, *total, mode)?;
            let guard = fit_window(&model, *total);
            let window = match declared {
                Some((lo, hi)) => (*lo, hi.min(guard.1)),
                None => guard,
            };
            let fit = fit_exponential(&curve, window)?;
            let rates = golden_rule_rate(&model);
            let rel = if rates.total > 0.0 {
                (fit.tau_inv - rates.total).abs() / rates.total
            } else {
                fit.tau_inv.abs()
            };
            out.metric("fitted_rate", fit.tau_inv);
            out.metric("golden_rule_rate", rates.total);
            out.metric("relative_error", rel);
            out.metric("r_squared", fit.r_squared);
            out.metric("fit_window_end", window.1);
            out.metric("recurrence_time", model.recurrence_time());
            out.curve(s, "curve", &curve);
            let fit_json =
                json!({ "fit": fit, "window": [window.0, window.1], "rates": rates, "mode": mode });
            out.json(s, "fit.json", &fit_json);
            out.details = fit_json;
            Ok(out)
        }
        Experiment::Multichannel {
            model,
            delta,
            total,
            trajectories,
            seed,
        } => {
            let mut out = Outputs::new();
            let model = build_model(model.clone())?;
            let branching = trajectories.zip(*seed);
            let check = multichannel_decay_check(&model, *delta, *total, branching)?;
            let sum = check.sum_of_channel_rates;
            out.metric("fitted_total", check.fitted_total);
            out.metric("sum_of_channel_rates", sum);
            out.metric(
                "additivity_error",
                if sum > 0.0 {
                    (check.fitted_total - sum).abs() / sum
                } else {
                    check.fitted_total.abs()
                },
            );
            out.metric("product_law_residual", check.product_law_residual);
            let rates = &check.channel_rates.per_channel;
            let expected = rates[0].rate / rates[1].rate;
            out.metric("expected_branching_ratio", expected);
            if let Some(b) = &check.branching {
                out.metric("branching_ratio", b.ratio);
                out.metric("branching_sigma", b.ratio_sigma);
                out.metric(
                    "branching_deviation_sigma",
                    (b.ratio - expected).abs() / b.ratio_sigma,
                );
            }
            out.curve(s, "curve", &check.curve);
            let details = serde_json::to_value(&check).expect("check serializes");
            out.json(s, "multichannel.json", &details);
            out.details = details;
            Ok(out)
        }
        Experiment::RateSweep {
            model,
            deltas,
            total,
            plateau,
        } => {
            let mut out = Outputs::new();
            let model = build_model(model.clone())?;
            let points = rate_sweep(&model, deltas, *total)?;
            let gamma = golden_rule_rate(&model).total;
            let in_plateau: Vec<_> = points
                .iter()
                .filter(|p| p.delta >= plateau.0 && p.delta <= plateau.1)
                .filter_map(|p| p.tau_inv.zip(p.r_squared))
                .collect();
            let plateau_rate = if in_plateau.is_empty() {
                f64::NAN
            } else {
                in_plateau.iter().map(|p| p.0).sum::<f64>() / in_plateau.len() as f64
            };
            let smallest = points[0].tau_inv.unwrap_or(f64::NAN);
            out.metric("plateau_rate", plateau_rate);
            out.metric("golden_rule_rate", gamma);
            out.metric(
                "plateau_relative_error",
                if gamma > 0.0 {
                    (plateau_rate - gamma).abs() / gamma
                } else {
                    plateau_rate.abs()
                },
            );
            out.metric(
                "min_plateau_r_squared",
                in_plateau.iter().map(|p| p.1).fold(f64::NAN, f64::min),
            );
            out.metric("smallest_delta_rate", smallest);
            out.metric("suppression_ratio", smallest / plateau_rate);
            out.metric(
                "failed_points",
                points.iter().filter(|p| p.error.is_some()).count() as f64,
            );
            let rows = points
                .iter()
                .map(|p| {
                    vec![
                        p.delta,
                        p.tau_inv.unwrap_or(f64::NAN),
                        p.r_squared.unwrap_or(f64::NAN),
                    ]
                })
                .collect();
            let table = Table {
                columns: vec!["delta", "tau_inv", "r_squared"],
                rows,
            };
            out.table(
                s,
                "sweep",
                &table,
                json!({ "total": total, "plateau": [plateau.0, plateau.1] }),
            );
            out.details = json!({ "points": points, "golden_rule_rate": gamma });
            Ok(out)
        }
    }
}

/// Runs a scenario, writes its artifacts and `report.json` into the output directory.
pub fn run(scenario: &Scenario) -> Result<RunReport, ScenarioError> {
    let start = Instant::now();
    let out = run_experiment(scenario).map_err(|source| ScenarioError::Run {
        scenario: scenario.name.clone(),
        source,
    })?;
    let dir = &scenario.output.directory;
    let mut artifacts = Vec::new();
    for (name, bytes) in &out.files {
        write_atomic(&dir.join(name), bytes)?;
        artifacts.push(name.clone());
    }
    artifacts.push("report.json".into());
    let checks: Vec<CheckResult> = scenario
        .checks
        .iter()
        .map(|c| evaluate(c, &out.metrics))
        .collect();
    let report = RunReport {
        scenario: scenario.name.clone(),
        kind: scenario.kind(),
        seed: scenario.experiment.seed(),
        input: serde_json::to_value(&scenario.source).unwrap_or_default(),
        output_dir: dir.clone(),
        artifacts,
        metrics: out.metrics,
        details: out.details,
        passed: checks.iter().all(|c| c.passed),
        checks,
        wall_time_s: start.elapsed().as_secs_f64(),
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_atomic(&dir.join("report.json"), text.as_bytes())?;
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct ScenarioOutcome {
    pub path: PathBuf,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.passed)
    }
}

#[derive(Debug, Serialize)]
pub struct VerifySummary {
    pub outcomes: Vec<ScenarioOutcome>,
    pub passed: bool,
}

/// Runs every `*.toml` scenario in `dir` (sorted by file name).
///
/// Configuration errors and failed checks are recorded per scenario;
/// I/O errors abort the whole run. With `out`, scenario `name` writes to
/// `out/name`.
pub fn verify(
    dir: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<VerifySummary, ScenarioError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| ScenarioError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| ScenarioError::io(dir, e)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "toml"))
        .collect();
    if files.is_empty() {
        return Err(ScenarioError::NoScenarios(dir.to_path_buf()));
    }
    files.sort();
    let mut outcomes = Vec::with_capacity(files.len());
    for path in files {
        let result = parse_scenario_file(&path).and_then(|mut s| {
            if let Some(seed) = seed {
                s.override_seed(seed);
            }
            if let Some(o) = out {
                s.output.directory = o.join(&s.name);
            }
            run(&s)
        });
        outcomes.push(match result {
            Ok(report) => ScenarioOutcome {
                path,
                report: Some(report),
                error: None,
            },
            Err(e @ ScenarioError::Io { .. }) => return Err(e),
            Err(e) => ScenarioOutcome {
                path,
                report: None,
                error: Some(e.to_string()),
            },
        });
    }
    let passed = outcomes.iter().all(ScenarioOutcome::passed);
    Ok(VerifySummary { outcomes, passed })
}
