//! Scenario files: one TOML document per experiment.
//!
//! ```toml
//! format_version = 1
//! name = "rabi-zeno"
//! kind = "zeno_limit"
//!
//! [system]
//! spin = "1/2"
//! omega = 1.0
//! axis = "x"
//!
//! [sequence]
//! total = 3.141592653589793
//! n_schedule_pow2 = 14
//!
//! [[checks]]
//! metric = "product_n10"
//! equals = 0.7805
//! tolerance = 1e-3
//! ```
//!
//! Recognised kinds are `zeno_limit`, `random_axis`, `derivative_probe`,
//! `golden_rule`, `multichannel` and `rate_sweep`. The README lists the
//! fields and metrics of each kind.

mod output;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::golden_rule::{BathCoupling, ChannelSpec, CrossCoupling, ModelSpec};
use crate::operator::pauli::Axis;

pub use output::{write_atomic, Table};
pub use run::{run, verify, CheckResult, RunReport, ScenarioOutcome, VerifySummary};

/// The only accepted value of `format_version`.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    /// Malformed TOML or a type error; the message carries line and column.
    #[error("{0}")]
    Syntax(String),

    #[error("{}field `{field}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Field {
        field: String,
        line: Option<usize>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("scenario '{scenario}': {source}")]
    Run {
        scenario: String,
        #[source]
        source: crate::Error,
    },

    #[error("no scenarios found in {0}")]
    NoScenarios(PathBuf),
}

impl ScenarioError {
    /// Process exit code: 2 for usage, configuration and I/O errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Run { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    ZenoLimit,
    RandomAxis,
    DerivativeProbe,
    GoldenRule,
    Multichannel,
    RateSweep,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::ZenoLimit => "zeno_limit",
            Kind::RandomAxis => "random_axis",
            Kind::DerivativeProbe => "derivative_probe",
            Kind::GoldenRule => "golden_rule",
            Kind::Multichannel => "multichannel",
            Kind::RateSweep => "rate_sweep",
        }
    }

    /// Metrics a run of this kind reports, and so may be checked.
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            Kind::ZenoLimit => &[
                "final_product",
                "monotone",
                "convergence_order",
                "max_closed_form_error",
            ],
            Kind::RandomAxis => &["tau_per_step", "r_squared", "max_sigma_deviation"],
            Kind::DerivativeProbe => &[
                "dp_shifted",
                "dp_direct",
                "dc_shifted",
                "dc_direct",
                "decay_rate",
            ],
            Kind::GoldenRule => &[
                "fitted_rate",
                "golden_rule_rate",
                "relative_error",
                "r_squared",
                "fit_window_end",
                "recurrence_time",
            ],
            Kind::Multichannel => &[
                "fitted_total",
                "sum_of_channel_rates",
                "additivity_error",
                "product_law_residual",
                "branching_ratio",
                "branching_sigma",
                "expected_branching_ratio",
                "branching_deviation_sigma",
            ],
            Kind::RateSweep => &[
                "plateau_rate",
                "golden_rule_rate",
                "plateau_relative_error",
                "min_plateau_r_squared",
                "smallest_delta_rate",
                "suppression_ratio",
                "failed_points",
            ],
        }
    }

    fn accepts_metric(self, metric: &str) -> bool {
        self.metrics().contains(&metric)
            || (self == Kind::ZenoLimit
                && metric
                    .strip_prefix("product_n")
                    .is_some_and(|n| n.parse::<usize>().is_ok()))
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bloch-sphere angles of a spin-1/2 pure state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochAngles {
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
}

/// Spin-1/2 precessing as `H = (ħω/2)σ_axis`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinSystem {
    pub omega: f64,
    pub axis: Axis,
    pub hbar: f64,
    pub initial: BlochAngles,
    /// Measured projector for derivative probes; defaults to the initial state.
    pub observable: Option<BlochAngles>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Execution {
    Expectation { realizations: u64 },
    MonteCarlo { trajectories: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    ZenoLimit {
        system: SpinSystem,
        total: f64,
        n_schedule: Vec<usize>,
    },
    RandomAxis {
        system: SpinSystem,
        n: usize,
        total: f64,
        seed: u64,
        execution: Execution,
        /// Steps compared against `2^{-k}` by `max_sigma_deviation`.
        check_steps: usize,
    },
    DerivativeProbe {
        system: SpinSystem,
        t_star: f64,
        step: Option<f64>,
    },
    GoldenRule {
        model: ModelSpec,
        delta: f64,
        total: f64,
        fit_window: Option<(f64, f64)>,
        execution: Execution,
        seed: Option<u64>,
    },
    Multichannel {
        model: ModelSpec,
        delta: f64,
        total: f64,
        /// Monte Carlo trajectories for the branching tally.
        trajectories: Option<u64>,
        seed: Option<u64>,
    },
    RateSweep {
        model: ModelSpec,
        deltas: Vec<f64>,
        total: f64,
        plateau: (f64, f64),
    },
}

impl Experiment {
    pub fn kind(&self) -> Kind {
        match self {
            Experiment::ZenoLimit { .. } => Kind::ZenoLimit,
            Experiment::RandomAxis { .. } => Kind::RandomAxis,
            Experiment::DerivativeProbe { .. } => Kind::DerivativeProbe,
            Experiment::GoldenRule { .. } => Kind::GoldenRule,
            Experiment::Multichannel { .. } => Kind::Multichannel,
            Experiment::RateSweep { .. } => Kind::RateSweep,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Experiment::RandomAxis { seed, .. } => Some(*seed),
            Experiment::GoldenRule { seed, .. } | Experiment::Multichannel { seed, .. } => *seed,
            _ => None,
        }
    }
}

/// A pass condition on one reported metric.
///
/// `equals` needs exactly one of `tolerance` (absolute) or
/// `relative_tolerance`; `min` and `max` are inclusive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub metric: String,
    #[serde(default)]
    pub equals: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub relative_tolerance: Option<f64>,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub csv: bool,
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub experiment: Experiment,
    pub output: OutputSpec,
    pub checks: Vec<Check>,
    /// The parsed document, echoed into reports.
    #[serde(skip)]
    pub source: toml::Table,
}

impl Scenario {
    pub fn kind(&self) -> Kind {
        self.experiment.kind()
    }

    /// Replaces the seed of a stochastic scenario; no-op otherwise.
    pub fn override_seed(&mut self, new: u64) {
        match &mut self.experiment {
            Experiment::RandomAxis { seed, .. } => *seed = new,
            Experiment::GoldenRule { seed, .. } | Experiment::Multichannel { seed, .. }
                if seed.is_some() =>
            {
                *seed = Some(new);
            }
            _ => {}
        }
    }

    /// Turns a `golden_rule` or `multichannel` scenario with `deltas` into a `rate_sweep`.
    pub fn into_sweep(self) -> Result<Scenario, ScenarioError> {
        if self.kind() == Kind::RateSweep {
            return Ok(self);
        }
        let field = |message: &str| ScenarioError::Field {
            field: "sequence.deltas".into(),
            line: None,
            message: message.into(),
        };
        let model = match &self.experiment {
            Experiment::GoldenRule { model, .. } | Experiment::Multichannel { model, .. } => {
                model.clone()
            }
            _ => return Err(field(&format!("kind {} cannot be swept", self.kind()))),
        };
        let seq = self.source.get("sequence").and_then(|v| v.as_table());
        let raw: RawSequence = match seq {
            Some(t) => t
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| ScenarioError::Syntax(e.to_string()))?,
            None => RawSequence::default(),
        };
        let deltas = raw.deltas.ok_or_else(|| field("required for sweeps"))?;
        let total = raw
            .total
            .ok_or_else(|| field("sweeps also need sequence.total"))?;
        let plateau = raw
            .plateau
            .map(|p| (p[0], p[1]))
            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        validate_deltas(&deltas, None)?;
        Ok(Scenario {
            experiment: Experiment::RateSweep {
                model,
                deltas,
                total,
                plateau,
            },
            checks: Vec::new(),
            ..self
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    format_version: u32,
    name: String,
    kind: Kind,
    #[serde(default)]
    description: Option<String>,
    system: RawSystem,
    #[serde(default)]
    sequence: RawSequence,
    #[serde(default)]
    execution: RawExecution,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    checks: Vec<Check>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    spin: Option<String>,
    omega: Option<f64>,
    axis: Option<Axis>,
    hbar: Option<f64>,
    initial: Option<BlochAngles>,
    observable: Option<BlochAngles>,
    excited_energy: Option<f64>,
    channels: Option<Vec<ChannelSpec>>,
    #[serde(default)]
    bath_couplings: Vec<BathCoupling>,
    #[serde(default)]
    cross_couplings: Vec<CrossCoupling>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    n: Option<usize>,
    n_schedule: Option<Vec<usize>>,
    n_schedule_pow2: Option<u32>,
    total: Option<f64>,
    delta: Option<f64>,
    deltas: Option<Vec<f64>>,
    fit_window: Option<[f64; 2]>,
    plateau: Option<[f64; 2]>,
    t_star: Option<f64>,
    step: Option<f64>,
    check_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExecution {
    mode: Option<Mode>,
    trajectories: Option<u64>,
    realizations: Option<u64>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    Expectation,
    MonteCarlo,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    formats: Option<Vec<String>>,
}

/// Line (1-based) of `key` inside the `index`-th `[section]` or `[[section]]`
/// header, or of the header itself when `key` is empty.
fn key_line(text: &str, section: &str, index: usize, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut seen = 0usize;
    let mut in_target = false;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                in_target = seen == index;
                seen += 1;
                if in_target && key.is_empty() {
                    return Some(i + 1);
                }
            } else {
                in_target = false;
            }
            continue;
        }
        let top_level = section.is_empty() && current.is_empty();
        if (in_target || top_level) && !key.is_empty() {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ScenarioError {
        let line =
            key_line(self.text, section, 0, key).or_else(|| key_line(self.text, section, 0, ""));
        let field = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        ScenarioError::Field {
            field,
            line,
            message: message.into(),
        }
    }

    fn require<T>(
        &self,
        v: Option<T>,
        section: &str,
        key: &str,
        why: &str,
    ) -> Result<T, ScenarioError> {
        v.ok_or_else(|| self.err(section, key, format!("missing; required {why}")))
    }

    fn positive(&self, v: f64, section: &str, key: &str) -> Result<f64, ScenarioError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(
                section,
                key,
                format!("must be positive and finite, got {v}"),
            ))
        }
    }

    fn finite(&self, v: f64, section: &str, key: &str) -> Result<f64, ScenarioError> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(section, key, format!("must be finite, got {v}")))
        }
    }
}

fn validate_deltas(deltas: &[f64], ctx: Option<&Ctx>) -> Result<(), ScenarioError> {
    let bad = deltas.is_empty()
        || deltas.iter().any(|d| !(*d > 0.0 && d.is_finite()))
        || deltas.windows(2).any(|w| w[1] <= w[0]);
    if !bad {
        return Ok(());
    }
    let message = "must be a non-empty, strictly increasing list of positive values";
    Err(match ctx {
        Some(c) => c.err("sequence", "deltas", message),
        None => ScenarioError::Field {
            field: "sequence.deltas".into(),
            line: None,
            message: message.into(),
        },
    })
}

fn spin_system(cx: &Ctx, s: &RawSystem) -> Result<SpinSystem, ScenarioError> {
    let spin = cx.require(s.spin.as_deref(), "system", "spin", "for spin scenarios")?;
    if spin != "1/2" {
        return Err(cx.err(
            "system",
            "spin",
            format!("only \"1/2\" is supported, got \"{spin}\""),
        ));
    }
    if s.channels.is_some() || s.excited_energy.is_some() {
        return Err(cx.err(
            "system",
            "channels",
            "continuum fields are not valid for spin scenarios",
        ));
    }
    let omega = cx.finite(s.omega.unwrap_or(0.0), "system", "omega")?;
    let hbar = cx.positive(s.hbar.unwrap_or(1.0), "system", "hbar")?;
    let initial = s.initial.unwrap_or(BlochAngles {
        theta: 0.0,
        phi: 0.0,
    });
    for (key, a) in [("initial", Some(initial)), ("observable", s.observable)] {
        if let Some(a) = a {
            if !(a.theta.is_finite() && a.phi.is_finite()) {
                return Err(cx.err("system", key, "angles must be finite"));
            }
        }
    }
    Ok(SpinSystem {
        omega,
        axis: s.axis.unwrap_or(Axis::X),
        hbar,
        initial,
        observable: s.observable,
    })
}

fn continuum_model(cx: &Ctx, s: &RawSystem) -> Result<ModelSpec, ScenarioError> {
    if s.spin.is_some() {
        return Err(cx.err(
            "system",
            "spin",
            "spin fields are not valid for continuum scenarios",
        ));
    }
    let channels = cx.require(
        s.channels.clone(),
        "system",
        "channels",
        "for continuum scenarios",
    )?;
    if channels.is_empty() {
        return Err(cx.err("system", "channels", "at least one channel is required"));
    }
    for (i, c) in channels.iter().enumerate() {
        let at = |key: &str, message: String| ScenarioError::Field {
            field: format!("system.channels[{i}].{key}"),
            line: key_line(cx.text, "system.channels", i, key),
            message,
        };
        if c.size < 3 || c.size % 2 == 0 {
            return Err(at("size", format!("must be odd and >= 3, got {}", c.size)));
        }
        if !(c.spacing > 0.0 && c.spacing.is_finite()) {
            return Err(at(
                "spacing",
                format!("must be positive and finite, got {}", c.spacing),
            ));
        }
    }
    Ok(ModelSpec {
        excited_energy: cx.finite(s.excited_energy.unwrap_or(0.0), "system", "excited_energy")?,
        channels,
        hbar: cx.positive(s.hbar.unwrap_or(1.0), "system", "hbar")?,
        bath_couplings: s.bath_couplings.clone(),
        cross_couplings: s.cross_couplings.clone(),
    })
}

fn n_schedule(cx: &Ctx, q: &RawSequence) -> Result<Vec<usize>, ScenarioError> {
    let schedule = match (&q.n_schedule, q.n_schedule_pow2) {
        (Some(_), Some(_)) => {
            return Err(cx.err(
                "sequence",
                "n_schedule_pow2",
                "give either n_schedule or n_schedule_pow2",
            ))
        }
        (Some(s), None) => s.clone(),
        (None, Some(p)) if p <= 24 => (0..=p).map(|k| 1usize << k).collect(),
        (None, Some(p)) => {
            return Err(cx.err(
                "sequence",
                "n_schedule_pow2",
                format!("must be <= 24, got {p}"),
            ))
        }
        (None, None) => {
            return Err(cx.err("sequence", "n_schedule", "missing; required for zeno_limit"))
        }
    };
    if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(cx.err(
            "sequence",
            "n_schedule",
            "must be non-empty, positive and strictly increasing",
        ));
    }
    Ok(schedule)
}

fn delta_total(cx: &Ctx, q: &RawSequence, kind: Kind) -> Result<(f64, f64), ScenarioError> {
    let why = format!("for {kind}");
    let delta = cx.positive(
        cx.require(q.delta, "sequence", "delta", &why)?,
        "sequence",
        "delta",
    )?;
    let total = cx.positive(
        cx.require(q.total, "sequence", "total", &why)?,
        "sequence",
        "total",
    )?;
    if delta >= total {
        return Err(cx.err(
            "sequence",
            "delta",
            format!("must be smaller than total ({total}), got {delta}"),
        ));
    }
    Ok((delta, total))
}

fn execution(cx: &Ctx, e: &RawExecution, default: Mode) -> Result<Execution, ScenarioError> {
    match e.mode.unwrap_or(default) {
        Mode::Expectation => {
            if e.trajectories.is_some() {
                return Err(cx.err(
                    "execution",
                    "trajectories",
                    "only valid with mode = \"monte_carlo\"",
                ));
            }
            Ok(Execution::Expectation {
                realizations: e.realizations.unwrap_or(1),
            })
        }
        Mode::MonteCarlo => {
            let t = cx.require(
                e.trajectories,
                "execution",
                "trajectories",
                "for monte_carlo",
            )?;
            if t == 0 {
                return Err(cx.err("execution", "trajectories", "must be >= 1"));
            }
            Ok(Execution::MonteCarlo { trajectories: t })
        }
    }
}

fn window(cx: &Ctx, w: Option<[f64; 2]>, key: &str) -> Result<Option<(f64, f64)>, ScenarioError> {
    match w {
        None => Ok(None),
        Some([lo, hi]) if lo.is_finite() && hi.is_finite() && lo < hi => Ok(Some((lo, hi))),
        Some(_) => Err(cx.err("sequence", key, "must be [lo, hi] with lo < hi")),
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let source: toml::Table =
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    if let Some(v) = source.get("format_version") {
        if v.as_integer() != Some(FORMAT_VERSION as i64) {
            return Err(ScenarioError::Field {
                field: "format_version".into(),
                line: key_line(text, "", 0, "format_version"),
                message: format!("unsupported version {v}; expected {FORMAT_VERSION}"),
            });
        }
    }
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    let cx = Ctx { text };
    debug_assert_eq!(raw.format_version, FORMAT_VERSION);
    if raw.name.trim().is_empty() || raw.name.contains(['/', '\\']) || raw.name.starts_with('.') {
        return Err(cx.err(
            "",
            "name",
            "must be non-empty and usable as a directory name",
        ));
    }

    let (q, e, s) = (&raw.sequence, &raw.execution, &raw.system);
    let seed_for = |why: &str| cx.require(e.seed, "execution", "seed", why);
    let experiment = match raw.kind {
        Kind::ZenoLimit => Experiment::ZenoLimit {
            system: spin_system(&cx, s)?,
            total: cx.positive(
                cx.require(q.total, "sequence", "total", "for zeno_limit")?,
                "sequence",
                "total",
            )?,
            n_schedule: n_schedule(&cx, q)?,
        },
        Kind::RandomAxis => {
            let execution = execution(&cx, e, Mode::MonteCarlo)?;
            if let Execution::Expectation { realizations } = execution {
                if realizations < 2 {
                    return Err(cx.err(
                        "execution",
                        "realizations",
                        "random-axis expectation needs >= 2 realizations",
                    ));
                }
            }
            let n = cx.require(q.n, "sequence", "n", "for random_axis")?;
            if n == 0 {
                return Err(cx.err("sequence", "n", "must be >= 1"));
            }
            Experiment::RandomAxis {
                system: spin_system(&cx, s)?,
                n,
                total: cx.positive(
                    cx.require(q.total, "sequence", "total", "for random_axis")?,
                    "sequence",
                    "total",
                )?,
                seed: seed_for("for random_axis")?,
                execution,
                check_steps: q.check_steps.unwrap_or(10).min(n),
            }
        }
        Kind::DerivativeProbe => Experiment::DerivativeProbe {
            system: spin_system(&cx, s)?,
            t_star: cx.finite(
                cx.require(q.t_star, "sequence", "t_star", "for derivative_probe")?,
                "sequence",
                "t_star",
            )?,
            step: q
                .step
                .map(|h| cx.positive(h, "sequence", "step"))
                .transpose()?,
        },
        Kind::GoldenRule => {
            let (delta, total) = delta_total(&cx, q, raw.kind)?;
            let execution = execution(&cx, e, Mode::Expectation)?;
            let seed = match execution {
                Execution::MonteCarlo { .. } => Some(seed_for("for monte_carlo")?),
                Execution::Expectation { .. } => None,
            };
            Experiment::GoldenRule {
                model: continuum_model(&cx, s)?,
                delta,
                total,
                fit_window: window(&cx, q.fit_window, "fit_window")?,
                execution,
                seed,
            }
        }
        Kind::Multichannel => {
            let (delta, total) = delta_total(&cx, q, raw.kind)?;
            let model = continuum_model(&cx, s)?;
            if model.channels.len() < 2 {
                return Err(cx.err(
                    "system",
                    "channels",
                    "multichannel needs at least two channels",
                ));
            }
            let trajectories = match execution(&cx, e, Mode::Expectation)? {
                Execution::MonteCarlo { trajectories } => Some(trajectories),
                Execution::Expectation { .. } => None,
            };
            let seed = match trajectories {
                Some(_) => Some(seed_for("for monte_carlo")?),
                None => None,
            };
            Experiment::Multichannel {
                model,
                delta,
                total,
                trajectories,
                seed,
            }
        }
        Kind::RateSweep => {
            let deltas = cx.require(q.deltas.clone(), "sequence", "deltas", "for rate_sweep")?;
            validate_deltas(&deltas, Some(&cx))?;
            let total = cx.positive(
                cx.require(q.total, "sequence", "total", "for rate_sweep")?,
                "sequence",
                "total",
            )?;
            let plateau = window(&cx, q.plateau, "plateau")?
                .ok_or_else(|| cx.err("sequence", "plateau", "missing; required for rate_sweep"))?;
            Experiment::RateSweep {
                model: continuum_model(&cx, s)?,
                deltas,
                total,
                plateau,
            }
        }
    };

    for (i, c) in raw.checks.iter().enumerate() {
        let at = |key: &str, message: String| ScenarioError::Field {
            field: format!("checks[{i}].{key}"),
            line: key_line(text, "checks", i, key).or_else(|| key_line(text, "checks", i, "")),
            message,
        };
        if !raw.kind.accepts_metric(&c.metric) {
            return Err(at(
                "metric",
                format!(
                    "unknown metric '{}' for kind {}; known: {}",
                    c.metric,
                    raw.kind,
                    raw.kind.metrics().join(", ")
                ),
            ));
        }
        match (c.equals, c.tolerance, c.relative_tolerance) {
            (Some(_), Some(t), None) | (Some(_), None, Some(t)) if t >= 0.0 => {}
            (Some(_), _, _) => {
                return Err(at(
                    "equals",
                    "needs exactly one nonnegative tolerance or relative_tolerance".into(),
                ))
            }
            (None, None, None) => {}
            (None, _, _) => return Err(at("tolerance", "only valid together with equals".into())),
        }
        if c.equals.is_none() && c.min.is_none() && c.max.is_none() {
            return Err(at("metric", "check needs equals, min or max".into()));
        }
    }

    let (csv, json) = match &raw.output.formats {
        None => (true, true),
        Some(f) => {
            if let Some(bad) = f.iter().find(|x| *x != "csv" && *x != "json") {
                return Err(cx.err(
                    "output",
                    "formats",
                    format!("unknown format '{bad}'; use \"csv\" or \"json\""),
                ));
            }
            (f.iter().any(|x| x == "csv"), f.iter().any(|x| x == "json"))
        }
    };
    let directory = raw
        .output
        .directory
        .unwrap_or_else(|| Path::new("out").join(&raw.name));

    Ok(Scenario {
        name: raw.name,
        description: raw.description,
        experiment,
        output: OutputSpec {
            directory,
            csv,
            json,
        },
        checks: raw.checks,
        source,
    })
}

/// Reads and parses a scenario file; a relative output directory is
/// resolved against the file's directory.
pub fn parse_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    let mut s = parse_scenario(&text).map_err(|e| match e {
        ScenarioError::Syntax(m) => ScenarioError::Syntax(format!("{}: {m}", path.display())),
        ScenarioError::Field {
            field,
            line,
            message,
        } => ScenarioError::Field {
            field,
            line,
            message: format!("{message} (in {})", path.display()),
        },
        other => other,
    })?;
    if s.output.directory.is_relative() {
        if let Some(parent) = path.parent() {
            s.output.directory = parent.join(&s.output.directory);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZENO: &str = r#"
format_version = 1
name = "rabi"
kind = "zeno_limit"

[system]
spin = "1/2"
omega = 1.0
axis = "x"

[sequence]
total = 3.141592653589793
n_schedule_pow2 = 14

[[checks]]
metric = "product_n10"
equals = 0.7805
tolerance = 1e-3
"#;

    const GOLDEN: &str = r#"
format_version = 1
name = "fgr"
kind = "golden_rule"

[system]
excited_energy = 0.0

[[system.channels]]
label = "a"
size = 201
spacing = 0.01
center = 0.0
coupling = 0.01

[sequence]
delta = 10.0
total = 100.0

[execution]
mode = "monte_carlo"
trajectories = 100
seed = 3
"#;

    #[test]
    fn minimal_zeno_document() {
        let s = parse_scenario(ZENO).unwrap();
        assert_eq!(s.kind(), Kind::ZenoLimit);
        match &s.experiment {
            Experiment::ZenoLimit {
                n_schedule, system, ..
            } => {
                assert_eq!(n_schedule.len(), 15);
                assert_eq!(*n_schedule.last().unwrap(), 1 << 14);
                assert_eq!(system.axis, Axis::X);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.output.directory, Path::new("out/rabi"));
    }

    #[test]
    fn missing_seed_names_the_field() {
        let doc = GOLDEN.replace("seed = 3\n", "");
        let err = parse_scenario(&doc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("execution.seed"), "{msg}");
        assert!(msg.contains("line 20"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn zero_spacing_is_a_range_error() {
        let doc = GOLDEN.replace("spacing = 0.01", "spacing = 0.0");
        let msg = parse_scenario(&doc).unwrap_err().to_string();
        assert!(msg.contains("system.channels[0].spacing"), "{msg}");
        assert!(msg.contains("line 12"), "{msg}");
    }

    #[test]
    fn unknown_kind_and_fields() {
        let msg = parse_scenario(&ZENO.replace("zeno_limit", "zeno"))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 4"), "{msg}");
        let msg = parse_scenario(&ZENO.replace("omega", "omgea"))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("omgea"), "{msg}");
    }

    #[test]
    fn bad_checks_rejected() {
        let msg = parse_scenario(&ZENO.replace("product_n10", "nonsense"))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("checks[0].metric"), "{msg}");
        let msg = parse_scenario(&ZENO.replace("tolerance = 1e-3", ""))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("checks[0].equals"), "{msg}");
    }

    #[test]
    fn version_and_kind_field_mismatches() {
        let msg = parse_scenario(&ZENO.replace("format_version = 1", "format_version = 2"))
            .unwrap_err()
            .to_string();
        assert!(
            msg.contains("format_version") && msg.contains("line 2"),
            "{msg}"
        );
        let msg = parse_scenario(&GOLDEN.replace("excited_energy = 0.0", "spin = \"1/2\""))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("system.spin"), "{msg}");
        let msg = parse_scenario(&GOLDEN.replace("delta = 10.0", "delta = 200.0"))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("sequence.delta"), "{msg}");
    }

    #[test]
    fn seed_override_only_touches_stochastic_runs() {
        let mut g = parse_scenario(GOLDEN).unwrap();
        g.override_seed(99);
        assert_eq!(g.experiment.seed(), Some(99));
        let mut z = parse_scenario(ZENO).unwrap();
        z.override_seed(99);
        assert_eq!(z.experiment.seed(), None);
    }

    #[test]
    fn golden_rule_converts_to_sweep() {
        let doc = GOLDEN.replace("delta = 10.0", "delta = 10.0\ndeltas = [0.1, 1.0, 10.0]");
        let s = parse_scenario(&doc).unwrap().into_sweep().unwrap();
        assert_eq!(s.kind(), Kind::RateSweep);
        assert!(parse_scenario(ZENO).unwrap().into_sweep().is_err());
    }

    #[test]
    fn key_line_tracks_array_tables() {
        let text = "[[checks]]\nmetric = 1\n[[checks]]\nmetric = 2\n";
        assert_eq!(key_line(text, "checks", 1, "metric"), Some(4));
        assert_eq!(key_line(text, "checks", 0, ""), Some(1));
    }
}
