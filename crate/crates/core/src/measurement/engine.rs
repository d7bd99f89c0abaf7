use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::curve::{CurveMeta, DecayCurve};
use crate::measurement::sequence::{stream_rng, Generator, MeasurementSequence};
use crate::operator::{
    symmetrize, DensityOperator, Matrix, Operator, OperatorKind, Spectrum, Tolerances, Vector, C64,
};
use crate::probability::trace_product;

/// Found-probabilities at or below this value end a branch.
pub const P_FLOOR: f64 = 1e-12;

/// Ideal projective measurement conditioned on the positive outcome:
/// returns `(Tr(χρ), χρχ / Tr(χρ))`.
pub fn collapse(rho: &DensityOperator, chi: &Operator) -> Result<(f64, DensityOperator)> {
    Error::check_dims(rho.dim(), chi.dim())?;
    if chi.kind() != OperatorKind::Projector {
        return Err(Error::Structural("collapse requires a projector".into()));
    }
    let mut state = Prepared::Mixed(rho.matrix().clone());
    let p = state.measure(chi.matrix())?;
    Ok((p, state.to_density()))
}

/// Conditional system state between measurements. Pure states stay pure
/// under unitary evolution and projection, so they are tracked as vectors.
#[derive(Debug, Clone)]
pub(crate) enum Prepared {
    Pure(Vector),
    Mixed(Matrix),
}

impl Prepared {
    pub(crate) fn from_density(rho: &DensityOperator) -> Self {
        match rho.as_pure(&Tolerances::DEFAULT) {
            Some(psi) => Prepared::Pure(psi.amplitudes().clone()),
            None => Prepared::Mixed(rho.matrix().clone()),
        }
    }

    pub(crate) fn to_density(&self) -> DensityOperator {
        match self {
            Prepared::Pure(v) => DensityOperator::trusted(v * v.adjoint()),
            Prepared::Mixed(m) => DensityOperator::trusted(m.clone()),
        }
    }

    pub(crate) fn evolve(&mut self, u: &Matrix) {
        match self {
            Prepared::Pure(v) => *v = u * &*v,
            Prepared::Mixed(m) => {
                let mut out = u * &*m * u.adjoint();
                symmetrize(&mut out);
                *m = out;
            }
        }
    }

    /// `Tr(Aρ)` for a hermitian `A`.
    pub(crate) fn expectation(&self, a: &Matrix) -> f64 {
        match self {
            Prepared::Pure(v) => v.dotc(&(a * v)).re,
            Prepared::Mixed(m) => trace_product(a, m).re,
        }
    }

    /// Population of a contiguous block of basis states.
    pub(crate) fn population(&self, range: std::ops::Range<usize>) -> f64 {
        match self {
            Prepared::Pure(v) => range.map(|k| v[k].norm_sqr()).sum(),
            Prepared::Mixed(m) => range.map(|k| m[(k, k)].re).sum(),
        }
    }

    /// Measures `χ`; on success the state becomes `χρχ/p` and `p` is returned.
    pub(crate) fn measure(&mut self, chi: &Matrix) -> Result<f64> {
        match self {
            Prepared::Pure(v) => {
                let image = chi * &*v;
                let p = image.norm_squared();
                if p <= P_FLOOR {
                    return Err(Error::ZeroProbabilityBranch {
                        probability: p,
                        floor: P_FLOOR,
                    });
                }
                *v = image / C64::new(p.sqrt(), 0.0);
                Ok(p)
            }
            Prepared::Mixed(m) => {
                let p = trace_product(chi, m).re;
                if p <= P_FLOOR {
                    return Err(Error::ZeroProbabilityBranch {
                        probability: p,
                        floor: P_FLOOR,
                    });
                }
                let mut out = chi * &*m * chi / C64::new(p, 0.0);
                symmetrize(&mut out);
                *m = out;
                Ok(p)
            }
        }
    }

    /// `(i/ħ) Tr([ρ, χ] H)` at this preparation.
    pub(crate) fn decay_rate(&self, chi: &Matrix, h: &Matrix, hbar: f64) -> f64 {
        match self {
            Prepared::Pure(v) => {
                // Tr(ρχH) − Tr(χρH) = 2i·Im⟨ψ|χH|ψ⟩
                let a = v.dotc(&(chi * (h * v)));
                -2.0 * a.im / hbar
            }
            Prepared::Mixed(m) => {
                let comm = m * chi - chi * m;
                (C64::new(0.0, 1.0) * trace_product(&comm, h)).re / hbar
            }
        }
    }
}

/// Propagators `U(δ)` keyed by the bit pattern of `δ`.
#[derive(Debug, Clone)]
pub(crate) struct Propagators {
    spectrum: Spectrum,
    hbar: f64,
    cache: HashMap<u64, Matrix>,
}

impl Propagators {
    pub(crate) fn new(h: &Operator, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::Argument(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        Ok(Self {
            spectrum: Spectrum::of(h)?,
            hbar,
            cache: HashMap::new(),
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub(crate) fn get(&mut self, dwell: f64) -> Result<&Matrix> {
        let key = dwell.to_bits();
        if !self.cache.contains_key(&key) {
            let u = self.spectrum.propagator(dwell, self.hbar)?.into_matrix();
            self.cache.insert(key, u);
        }
        Ok(&self.cache[&key])
    }
}

/// Per-step found-probabilities along the all-found branch of a sequence.
#[derive(Debug, Clone, Default)]
pub(crate) struct ConditionalPath {
    /// `p_i` for every completed step.
    pub probabilities: Vec<f64>,
    /// 1-based index of the step whose probability fell below [`P_FLOOR`].
    pub extinction_step: Option<usize>,
}

/// Runs `evolve → measure` over `(χ, δ)` pairs. `hook` sees the evolved,
/// pre-measurement state of each step.
pub(crate) fn run_conditional<'a, I, F>(
    rho0: &DensityOperator,
    props: &mut Propagators,
    steps: I,
    mut hook: F,
) -> Result<ConditionalPath>
where
    I: IntoIterator<Item = (&'a Matrix, f64)>,
    F: FnMut(usize, &Prepared),
{
    Error::check_dims(props.dim(), rho0.dim())?;
    let mut state = Prepared::from_density(rho0);
    let mut path = ConditionalPath::default();
    for (i, (chi, dwell)) in steps.into_iter().enumerate() {
        state.evolve(props.get(dwell)?);
        hook(i, &state);
        match state.measure(chi) {
            Ok(p) => path.probabilities.push(p),
            Err(Error::ZeroProbabilityBranch { .. }) => {
                path.extinction_step = Some(i + 1);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(path)
}

pub(crate) fn generator_name(g: &Generator) -> &'static str {
    match g {
        Generator::Fixed => "fixed",
        Generator::RandomAxis { .. } => "random_axis",
        Generator::Custom => "custom",
    }
}

pub(crate) fn require_positive_dwell(seq: &MeasurementSequence) -> Result<()> {
    if seq.steps().iter().any(|s| !(s.dwell > 0.0)) {
        return Err(Error::Argument(
            "decay curves need strictly positive dwell times".into(),
        ));
    }
    Ok(())
}

pub(crate) fn path_to_curve(
    seq: &MeasurementSequence,
    path: &ConditionalPath,
    meta: CurveMeta,
) -> Result<DecayCurve> {
    let mut steps = vec![0];
    let mut times = vec![0.0];
    let mut probs = vec![1.0];
    let (mut t, mut running) = (0.0, 1.0);
    for (i, p) in path.probabilities.iter().enumerate() {
        t += seq.steps()[i].dwell;
        running *= p;
        steps.push(i + 1);
        times.push(t);
        probs.push(running);
    }
    let n = times.len();
    DecayCurve::new(steps, times, probs, vec![0.0; n], meta)
}

/// Joint probability that every measurement of `seq` finds the system,
/// recorded after each step.
pub fn conditional_product_curve(
    rho0: &DensityOperator,
    h: &Operator,
    seq: &MeasurementSequence,
    hbar: f64,
) -> Result<DecayCurve> {
    Error::check_dims(seq.dim(), rho0.dim())?;
    Error::check_dims(h.dim(), rho0.dim())?;
    require_positive_dwell(seq)?;
    let mut props = Propagators::new(h, hbar)?;
    let path = run_conditional(
        rho0,
        &mut props,
        seq.steps().iter().map(|s| (s.projector.matrix(), s.dwell)),
        |_, _| {},
    )?;
    let (seed, _) = match seq.generator() {
        Generator::RandomAxis { seed, stream, .. } => (Some(*seed), Some(*stream)),
        _ => (None, None),
    };
    let meta = CurveMeta {
        generator: generator_name(seq.generator()).into(),
        seed,
        trajectories: None,
        extinction_step: path.extinction_step,
    };
    path_to_curve(seq, &path, meta)
}

/// One simulated single-system run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `ρ⁽⁰⁾ = ρ₀` followed by the state prepared by each found outcome.
    pub states: Vec<DensityOperator>,
    pub outcomes: Vec<bool>,
    /// Sum of log-probabilities of the sampled outcomes.
    pub joint_log_prob: f64,
    pub rng_stream_id: u64,
}

/// Samples outcomes for one run of `seq`; stops at the first not-found outcome.
pub fn sample_trajectory(
    rho0: &DensityOperator,
    h: &Operator,
    seq: &MeasurementSequence,
    hbar: f64,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    Error::check_dims(seq.dim(), rho0.dim())?;
    let mut props = Propagators::new(h, hbar)?;
    Error::check_dims(props.dim(), rho0.dim())?;
    let mut rng = stream_rng(seed, stream);
    let mut state = Prepared::from_density(rho0);
    let mut traj = Trajectory {
        states: vec![rho0.clone()],
        outcomes: Vec::new(),
        joint_log_prob: 0.0,
        rng_stream_id: stream,
    };
    for step in seq.steps() {
        state.evolve(props.get(step.dwell)?);
        let chi = step.projector.matrix();
        let p = state.expectation(chi).clamp(0.0, 1.0);
        let found = p > P_FLOOR && rng.random::<f64>() < p;
        traj.outcomes.push(found);
        if !found {
            traj.joint_log_prob += (1.0 - p).ln();
            break;
        }
        state.measure(chi)?;
        traj.joint_log_prob += p.ln();
        traj.states.push(state.to_density());
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZenoPoint {
    pub n: usize,
    /// n-fold conditional product `Π Tr(χρ⁽ⁱ⁾)`.
    pub product: f64,
    /// `exp(−δ Σ τᵢ⁻¹)` with `τᵢ⁻¹` evaluated at each preparation.
    pub predicted: f64,
    pub extinction_step: Option<usize>,
}

/// n-fold measurement of a fixed projector over a fixed duration, for each `n`.
pub fn zeno_limit_study(
    rho0: &DensityOperator,
    h: &Operator,
    chi: &Operator,
    total: f64,
    n_schedule: &[usize],
    hbar: f64,
) -> Result<Vec<ZenoPoint>> {
    Error::check_dims(rho0.dim(), h.dim())?;
    Error::check_dims(rho0.dim(), chi.dim())?;
    if chi.kind() != OperatorKind::Projector {
        return Err(Error::Structural("zeno study requires a projector".into()));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Argument(format!(
            "total duration must be positive, got {total}"
        )));
    }
    if n_schedule.is_empty() || n_schedule[0] == 0 || n_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(
            "n_schedule must be non-empty, positive and increasing".into(),
        ));
    }
    let mut props = Propagators::new(h, hbar)?;
    let (chi_m, h_m) = (chi.matrix(), h.matrix());
    let mut out = Vec::with_capacity(n_schedule.len());
    for &n in n_schedule {
        let dwell = total / n as f64;
        let mut state = Prepared::from_density(rho0);
        let u = props.get(dwell)?.clone();
        let (mut product, mut rate_sum) = (1.0, 0.0);
        let mut extinction_step = None;
        for i in 0..n {
            rate_sum += state.decay_rate(chi_m, h_m, hbar);
            state.evolve(&u);
            match state.measure(chi_m) {
                Ok(p) => product *= p,
                Err(Error::ZeroProbabilityBranch { .. }) => {
                    extinction_step = Some(i + 1);
                    product = 0.0;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        out.push(ZenoPoint {
            n,
            product,
            predicted: (-dwell * rate_sum).exp(),
            extinction_step,
        });
    }
    Ok(out)
}
