//! Independent single-system runs with counter-based RNG streams.
//!
//! Trajectory `j` of a run seeded with `s` draws sequence axes from ChaCha
//! stream `2j` and measurement outcomes from stream `2j + 1`, so results do
//! not depend on scheduling. Tallies are integer histograms merged by
//! addition.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measurement::curve::{CurveMeta, DecayCurve};
use crate::measurement::engine::{
    conditional_product_curve, run_conditional, ConditionalPath, Prepared, Propagators,
};
use crate::measurement::sequence::{axis_projector, next_axis, stream_rng, MeasurementSequence};
use crate::operator::{DensityOperator, Operator};

/// How each trajectory obtains its measurement schedule.
#[derive(Debug, Clone)]
pub enum SequenceGenerator {
    /// One projector, `n` equal dwells.
    Fixed(Operator),
    /// Fresh area-uniform spin-1/2 axes per trajectory.
    RandomAxis,
    Custom(MeasurementSequence),
}

impl SequenceGenerator {
    fn name(&self) -> &'static str {
        match self {
            SequenceGenerator::Fixed(_) => "fixed",
            SequenceGenerator::RandomAxis => "random_axis",
            SequenceGenerator::Custom(_) => "custom",
        }
    }

    fn deterministic_sequence(&self, n: usize, total: f64) -> Result<Option<MeasurementSequence>> {
        match self {
            SequenceGenerator::Fixed(chi) => Ok(Some(MeasurementSequence::fixed(chi, n, total)?)),
            SequenceGenerator::Custom(seq) => Ok(Some(seq.clone())),
            SequenceGenerator::RandomAxis => Ok(None),
        }
    }
}

pub(crate) fn axis_stream(trajectory: u64) -> u64 {
    2 * trajectory
}

pub(crate) fn outcome_stream(trajectory: u64) -> u64 {
    2 * trajectory + 1
}

fn validate(rho0: &DensityOperator, h: &Operator, total: f64, n: usize) -> Result<()> {
    Error::check_dims(rho0.dim(), h.dim())?;
    if n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Argument(format!(
            "total duration must be positive, got {total}"
        )));
    }
    Ok(())
}

/// Number of consecutive found outcomes when sampling along a known path.
pub(crate) fn sample_survival(path: &ConditionalPath, seed: u64, trajectory: u64) -> usize {
    let mut rng = stream_rng(seed, outcome_stream(trajectory));
    let mut alive = 0;
    for &p in &path.probabilities {
        if rng.random::<f64>() < p {
            alive += 1;
        } else {
            break;
        }
    }
    alive
}

/// Conditional path of a random-axis trajectory, generated lazily while the
/// trajectory survives.
fn random_axis_survival(
    rho0: &DensityOperator,
    props: &mut Propagators,
    dwell: f64,
    n: usize,
    seed: u64,
    trajectory: u64,
) -> Result<usize> {
    let mut axes = stream_rng(seed, axis_stream(trajectory));
    let mut outcomes = stream_rng(seed, outcome_stream(trajectory));
    let mut state = Prepared::from_density(rho0);
    let u = props.get(dwell)?.clone();
    let mut prev = None;
    let mut alive = 0;
    for _ in 0..n {
        let axis = next_axis(&mut axes, prev);
        prev = Some(axis);
        let chi = axis_projector(axis);
        state.evolve(&u);
        let p = state.expectation(chi.matrix());
        if !(outcomes.random::<f64>() < p) {
            break;
        }
        if state.measure(chi.matrix()).is_err() {
            break;
        }
        alive += 1;
    }
    Ok(alive)
}

fn random_axis_path(
    rho0: &DensityOperator,
    props: &mut Propagators,
    dwell: f64,
    n: usize,
    seed: u64,
    trajectory: u64,
) -> Result<ConditionalPath> {
    let mut axes = stream_rng(seed, axis_stream(trajectory));
    let mut prev = None;
    let projectors: Vec<_> = (0..n)
        .map(|_| {
            let a = next_axis(&mut axes, prev);
            prev = Some(a);
            axis_projector(a).into_matrix()
        })
        .collect();
    run_conditional(
        rho0,
        props,
        projectors.iter().map(|m| (m, dwell)),
        |_, _| {},
    )
}

/// Histogram of survival lengths to a curve with binomial standard errors.
pub(crate) fn histogram_to_curve(
    hist: &[u64],
    dwell: &[f64],
    trajectories: u64,
    meta: CurveMeta,
) -> Result<DecayCurve> {
    let n = dwell.len();
    let nt = trajectories as f64;
    let mut survivors = trajectories;
    let (mut steps, mut times, mut probs, mut errs) = (vec![], vec![], vec![], vec![]);
    let mut t = 0.0;
    for k in 0..=n {
        if k > 0 {
            survivors -= hist[k - 1];
            t += dwell[k - 1];
        }
        let p = survivors as f64 / nt;
        steps.push(k);
        times.push(t);
        probs.push(p);
        errs.push((p * (1.0 - p) / nt).sqrt());
    }
    DecayCurve::new(steps, times, probs, errs, meta)
}

fn merge(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Fraction of trajectories whose first `k` measurements were all found.
pub fn monte_carlo_curve(
    rho0: &DensityOperator,
    h: &Operator,
    generator: &SequenceGenerator,
    total: f64,
    n: usize,
    trajectories: u64,
    seed: u64,
    hbar: f64,
) -> Result<DecayCurve> {
    validate(rho0, h, total, n)?;
    if trajectories == 0 {
        return Err(Error::Argument("trajectories must be >= 1".into()));
    }
    let props = Propagators::new(h, hbar)?;
    let seq = generator.deterministic_sequence(n, total)?;
    let dwell: Vec<f64> = match &seq {
        Some(s) => s.steps().iter().map(|x| x.dwell).collect(),
        None => vec![total / n as f64; n],
    };
    if dwell.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Argument(
            "decay curves need strictly positive dwell times".into(),
        ));
    }
    let len = dwell.len();
    // hist[k] counts trajectories that survived exactly k steps (k < len),
    // survivors of the whole sequence are not counted.
    let tally = |k: usize| {
        let mut v = vec![0u64; len];
        if k < len {
            v[k] = 1;
        }
        v
    };

    let hist = match &seq {
        Some(s) => {
            Error::check_dims(s.dim(), rho0.dim())?;
            let mut props = props;
            let path = run_conditional(
                rho0,
                &mut props,
                s.steps().iter().map(|x| (x.projector.matrix(), x.dwell)),
                |_, _| {},
            )?;
            (0..trajectories)
                .into_par_iter()
                .map(|j| tally(sample_survival(&path, seed, j)))
                .reduce(|| vec![0u64; len], merge)
        }
        None => {
            if rho0.dim() != 2 {
                return Err(Error::Argument(
                    "random-axis sequences are spin-1/2 only".into(),
                ));
            }
            let d = dwell[0];
            (0..trajectories)
                .into_par_iter()
                .map_init(
                    || props.clone(),
                    |p, j| random_axis_survival(rho0, p, d, n, seed, j).map(tally),
                )
                .try_reduce(|| vec![0u64; len], |a, b| Ok(merge(a, b)))?
        }
    };
    let meta = CurveMeta {
        generator: generator.name().into(),
        seed: Some(seed),
        trajectories: Some(trajectories),
        extinction_step: None,
    };
    histogram_to_curve(&hist, &dwell, trajectories, meta)
}

/// Exact conditional products averaged over `realizations` sequence draws.
///
/// For deterministic generators this is the conditional product itself.
/// For random axes, realization `j` uses the same axis stream as Monte Carlo
/// trajectory `j`; stderr is the standard error of the ensemble mean.
pub fn expectation_curve(
    rho0: &DensityOperator,
    h: &Operator,
    generator: &SequenceGenerator,
    total: f64,
    n: usize,
    realizations: u64,
    seed: u64,
    hbar: f64,
) -> Result<DecayCurve> {
    validate(rho0, h, total, n)?;
    if let Some(seq) = generator.deterministic_sequence(n, total)? {
        return conditional_product_curve(rho0, h, &seq, hbar);
    }
    if realizations < 2 {
        return Err(Error::Argument(
            "ensemble expectation needs >= 2 realizations".into(),
        ));
    }
    if rho0.dim() != 2 {
        return Err(Error::Argument(
            "random-axis sequences are spin-1/2 only".into(),
        ));
    }
    let dwell = total / n as f64;
    if !(dwell > 0.0) {
        return Err(Error::Argument("dwell time underflows to zero".into()));
    }
    let props = Propagators::new(h, hbar)?;
    // Collected in index order so the floating-point sums are schedule independent.
    let paths: Vec<Vec<f64>> = (0..realizations)
        .into_par_iter()
        .map_init(
            || props.clone(),
            |p, j| {
                let path = random_axis_path(rho0, p, dwell, n, seed, j)?;
                let mut running = 1.0;
                let mut row = vec![1.0];
                for k in 0..n {
                    running *= path.probabilities.get(k).copied().unwrap_or(0.0);
                    row.push(running);
                }
                Ok(row)
            },
        )
        .collect::<Result<_>>()?;
    let r = realizations as f64;
    let (mut steps, mut times, mut probs, mut errs) = (vec![], vec![], vec![], vec![]);
    for k in 0..=n {
        let mean = paths.iter().map(|row| row[k]).sum::<f64>() / r;
        let var = paths.iter().map(|row| (row[k] - mean).powi(2)).sum::<f64>() / (r - 1.0);
        steps.push(k);
        times.push(k as f64 * dwell);
        probs.push(mean);
        errs.push((var / r).sqrt());
    }
    let meta = CurveMeta {
        generator: "random_axis".into(),
        seed: Some(seed),
        trajectories: Some(realizations),
        extinction_step: None,
    };
    DecayCurve::new(steps, times, probs, errs, meta)
}
