//! An excited level `|e⟩` coupled to discretized continua.
//!
//! Basis index 0 is `|e⟩`; each channel contributes a contiguous block of
//! bath states with energies `center + (k − (N−1)/2)·ΔE`. The density of
//! final states of a uniform channel is `1/ΔE`, and the golden-rule rate
//! `(2π/ħ)|g|²/ΔE` is compared against monitored-decay simulations that
//! repeatedly measure `Λ_u = |e⟩⟨e|`.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::engine::{run_conditional, Prepared, Propagators};
use crate::measurement::monte_carlo::outcome_stream;
use crate::measurement::sequence::stream_rng;
use crate::measurement::{
    conditional_product_curve, fit_exponential, monte_carlo_curve, CurveMeta, DecayCurve,
    ExponentialFit, MeasurementSequence, SequenceGenerator,
};
use crate::operator::{
    DensityOperator, Matrix, Operator, OperatorKind, StateVector, Tolerances, C64,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub label: String,
    pub size: usize,
    pub spacing: f64,
    pub center: f64,
    pub coupling: f64,
    /// Per-state energy overrides (length `size`, strictly increasing).
    #[serde(default)]
    pub energies: Option<Vec<f64>>,
    /// Per-state coupling overrides (length `size`).
    #[serde(default)]
    pub couplings: Option<Vec<f64>>,
}

impl ChannelSpec {
    pub fn uniform(label: &str, size: usize, spacing: f64, center: f64, coupling: f64) -> Self {
        Self {
            label: label.into(),
            size,
            spacing,
            center,
            coupling,
            energies: None,
            couplings: None,
        }
    }
}

/// Symmetric bath-bath coupling between two global basis indices (both ≥ 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathCoupling {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Adds `value·(|state⟩⟨e| + h.c.)` to the coupling operator of `channel`,
/// even when `state` belongs to another channel's bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossCoupling {
    pub channel: usize,
    pub state: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub excited_energy: f64,
    pub channels: Vec<ChannelSpec>,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default)]
    pub bath_couplings: Vec<BathCoupling>,
    #[serde(default)]
    pub cross_couplings: Vec<CrossCoupling>,
}

fn default_hbar() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(excited_energy: f64, channels: Vec<ChannelSpec>) -> Self {
        Self {
            excited_energy,
            channels,
            hbar: 1.0,
            bath_couplings: Vec::new(),
            cross_couplings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct Channel {
    label: String,
    range: Range<usize>,
    energies: Vec<f64>,
    couplings: Vec<f64>,
}

impl Channel {
    fn local_spacing(&self, k: usize) -> f64 {
        let e = &self.energies;
        let n = e.len();
        if k == 0 {
            e[1] - e[0]
        } else if k == n - 1 {
            e[n - 1] - e[n - 2]
        } else {
            (e[k + 1] - e[k - 1]) / 2.0
        }
    }

    fn covers(&self, energy: f64) -> bool {
        let n = self.energies.len();
        energy >= self.energies[0] - self.local_spacing(0) / 2.0
            && energy <= self.energies[n - 1] + self.local_spacing(n - 1) / 2.0
    }

    fn nearest(&self, energy: f64) -> usize {
        let mut best = 0;
        for (k, e) in self.energies.iter().enumerate() {
            if (e - energy).abs() < (self.energies[best] - energy).abs() {
                best = k;
            }
        }
        best
    }
}

/// Assembled Hamiltonian `H = H₀ + V` for one excited level and its baths.
#[derive(Debug, Clone)]
pub struct ContinuumModel {
    spec: ModelSpec,
    channels: Vec<Channel>,
    h0: Operator,
    channel_v: Vec<Operator>,
    v: Operator,
}

fn finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Model(format!("{what} must be finite, got {x}")))
    }
}

pub fn build_model(spec: ModelSpec) -> Result<ContinuumModel> {
    if !(spec.hbar > 0.0 && spec.hbar.is_finite()) {
        return Err(Error::Model(format!(
            "hbar must be positive, got {}",
            spec.hbar
        )));
    }
    finite(spec.excited_energy, "excited energy")?;
    if spec.channels.is_empty() {
        return Err(Error::Model("model needs at least one channel".into()));
    }
    let mut channels = Vec::with_capacity(spec.channels.len());
    let mut offset = 1;
    for c in &spec.channels {
        if c.size < 3 || c.size % 2 == 0 {
            return Err(Error::Model(format!(
                "channel '{}': size must be odd and >= 3, got {}",
                c.label, c.size
            )));
        }
        if !(c.spacing > 0.0 && c.spacing.is_finite()) {
            return Err(Error::Model(format!(
                "channel '{}': spacing must be positive, got {}",
                c.label, c.spacing
            )));
        }
        finite(c.center, "channel center")?;
        finite(c.coupling, "channel coupling")?;
        if channels.iter().any(|x: &Channel| x.label == c.label) {
            return Err(Error::Model(format!(
                "duplicate channel label '{}'",
                c.label
            )));
        }
        let half = (c.size as f64 - 1.0) / 2.0;
        let energies = match &c.energies {
            Some(e) => {
                if e.len() != c.size
                    || e.windows(2).any(|w| !(w[1] > w[0]))
                    || e.iter().any(|x| !x.is_finite())
                {
                    return Err(Error::Model(format!(
                        "channel '{}': energy overrides must be {} finite increasing values",
                        c.label, c.size
                    )));
                }
                e.clone()
            }
            None => (0..c.size)
                .map(|k| c.center + (k as f64 - half) * c.spacing)
                .collect(),
        };
        let couplings = match &c.couplings {
            Some(g) => {
                if g.len() != c.size || g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Model(format!(
                        "channel '{}': coupling overrides must be {} finite values",
                        c.label, c.size
                    )));
                }
                g.clone()
            }
            None => vec![c.coupling; c.size],
        };
        channels.push(Channel {
            label: c.label.clone(),
            range: offset..offset + c.size,
            energies,
            couplings,
        });
        offset += c.size;
    }
    let dim = offset;
    if !channels.iter().any(|c| c.covers(spec.excited_energy)) {
        return Err(Error::Model(format!(
            "no channel band covers the excited energy {}",
            spec.excited_energy
        )));
    }

    let mut diag = vec![spec.excited_energy];
    for c in &channels {
        diag.extend_from_slice(&c.energies);
    }
    let h0 = Operator::real_diagonal(&diag)?;

    let mut channel_v: Vec<Matrix> = channels
        .iter()
        .map(|c| {
            let mut m = Matrix::zeros(dim, dim);
            for (k, g) in c.range.clone().zip(&c.couplings) {
                m[(k, 0)] = C64::new(*g, 0.0);
                m[(0, k)] = C64::new(*g, 0.0);
            }
            m
        })
        .collect();
    for x in &spec.cross_couplings {
        if x.channel >= channels.len() || x.state == 0 || x.state >= dim {
            return Err(Error::Model(format!("cross coupling {x:?} out of range")));
        }
        finite(x.value, "cross coupling")?;
        let m = &mut channel_v[x.channel];
        m[(x.state, 0)] += C64::new(x.value, 0.0);
        m[(0, x.state)] += C64::new(x.value, 0.0);
    }
    let mut v = Matrix::zeros(dim, dim);
    for m in &channel_v {
        v += m;
    }
    for b in &spec.bath_couplings {
        if b.i == 0 || b.j == 0 || b.i >= dim || b.j >= dim || b.i == b.j {
            return Err(Error::Model(format!(
                "bath coupling ({}, {}) must join two distinct bath states",
                b.i, b.j
            )));
        }
        finite(b.value, "bath coupling")?;
        v[(b.i, b.j)] += C64::new(b.value, 0.0);
        v[(b.j, b.i)] += C64::new(b.value, 0.0);
    }
    let channel_v = channel_v
        .into_iter()
        .map(|m| Operator::trusted(m, OperatorKind::Hermitian))
        .collect();
    Ok(ContinuumModel {
        spec,
        channels,
        h0,
        channel_v,
        v: Operator::trusted(v, OperatorKind::Hermitian),
    })
}

impl ContinuumModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn hbar(&self) -> f64 {
        self.spec.hbar
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    pub fn v(&self) -> &Operator {
        &self.v
    }

    /// Coupling operator `V_a` of one channel.
    pub fn channel_coupling(&self, index: usize) -> &Operator {
        &self.channel_v[index]
    }

    pub fn channel_labels(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.label.as_str()).collect()
    }

    /// Global basis indices of a channel's bath states.
    pub fn channel_range(&self, index: usize) -> Range<usize> {
        self.channels[index].range.clone()
    }

    pub fn hamiltonian(&self) -> Operator {
        Operator::trusted(self.h0.matrix() + self.v.matrix(), OperatorKind::Hermitian)
    }

    /// Density of bath states per unit energy at the state nearest `E_e`.
    pub fn density_of_states(&self, index: usize) -> f64 {
        let c = &self.channels[index];
        1.0 / c.local_spacing(c.nearest(self.spec.excited_energy))
    }

    /// `2πħ/ΔE_min`, the revival time of the discretized baths.
    pub fn recurrence_time(&self) -> f64 {
        let min_spacing = self
            .channels
            .iter()
            .flat_map(|c| c.energies.windows(2).map(|w| w[1] - w[0]))
            .fold(f64::INFINITY, f64::min);
        2.0 * PI * self.spec.hbar / min_spacing
    }

    pub fn excited_state(&self) -> DensityOperator {
        DensityOperator::pure(&StateVector::basis(self.dim(), 0).expect("dim >= 1"))
    }

    /// `Λ_u = |e⟩⟨e|`
    pub fn undecayed_projector(&self) -> Operator {
        Operator::basis_projector(self.dim(), &[0]).expect("index 0 exists")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelRate {
    pub label: String,
    pub rate: f64,
    pub density_of_states: f64,
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelRates {
    pub per_channel: Vec<ChannelRate>,
    pub total: f64,
    pub diagnostics: Vec<String>,
}

impl ChannelRates {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.per_channel
            .iter()
            .find(|c| c.label == label)
            .map(|c| c.rate)
    }
}

/// `τ⁻¹ = (2π/ħ)|⟨k|V_a|e⟩|² λ(E_e)` per channel, summed over channels.
pub fn golden_rule_rate(model: &ContinuumModel) -> ChannelRates {
    let e = model.spec.excited_energy;
    let hbar = model.spec.hbar;
    let mut per_channel = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, c) in model.channels.iter().enumerate() {
        if !c.covers(e) {
            diagnostics.push(format!(
                "channel '{}': excited energy {e} lies outside the band [{}, {}]; rate set to 0",
                c.label,
                c.energies[0],
                c.energies[c.energies.len() - 1]
            ));
            per_channel.push(ChannelRate {
                label: c.label.clone(),
                rate: 0.0,
                density_of_states: 0.0,
                coupling: 0.0,
            });
            continue;
        }
        let k = c.nearest(e);
        let g = c.couplings[k];
        let lambda = model.density_of_states(i);
        per_channel.push(ChannelRate {
            label: c.label.clone(),
            rate: 2.0 * PI / hbar * g * g * lambda,
            density_of_states: lambda,
            coupling: g,
        });
    }
    let total = per_channel.iter().map(|c| c.rate).sum();
    ChannelRates {
        per_channel,
        total,
        diagnostics,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelPairCheck {
    pub a: String,
    pub b: String,
    pub orthogonal: bool,
}

/// For each channel pair, whether `V_a|e⟩` has no weight in channel b's bath
/// and vice versa.
pub fn channel_orthogonality_check(model: &ContinuumModel) -> Vec<ChannelPairCheck> {
    let eps = Tolerances::DEFAULT.structural;
    let leak = |a: usize, b: usize| -> f64 {
        let col = model.channel_v[a].matrix().column(0);
        model.channels[b]
            .range
            .clone()
            .map(|k| col[k].norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let mut out = Vec::new();
    for a in 0..model.channels.len() {
        for b in (a + 1)..model.channels.len() {
            out.push(ChannelPairCheck {
                a: model.channels[a].label.clone(),
                b: model.channels[b].label.clone(),
                orthogonal: leak(a, b) <= eps && leak(b, a) <= eps,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecayMode {
    Expectation,
    MonteCarlo { trajectories: u64, seed: u64 },
}

fn step_count(delta: f64, total: f64) -> Result<usize> {
    if !(delta > 0.0 && delta.is_finite() && total.is_finite() && delta < total) {
        return Err(Error::Argument(format!(
            "need 0 < delta < T, got delta={delta}, T={total}"
        )));
    }
    Ok((total / delta * (1.0 + 1e-12)).floor() as usize)
}

/// Evolve for `delta`, measure `|e⟩⟨e|`, keep the found branch; repeat up to `total`.
pub fn monitored_decay_experiment(
    model: &ContinuumModel,
    delta: f64,
    total: f64,
    mode: DecayMode,
) -> Result<DecayCurve> {
    let n = step_count(delta, total)?;
    let h = model.hamiltonian();
    let rho0 = model.excited_state();
    let chi = model.undecayed_projector();
    let span = delta * n as f64;
    match mode {
        DecayMode::Expectation => {
            let seq = MeasurementSequence::fixed(&chi, n, span)?;
            conditional_product_curve(&rho0, &h, &seq, model.hbar())
        }
        DecayMode::MonteCarlo { trajectories, seed } => monte_carlo_curve(
            &rho0,
            &h,
            &SequenceGenerator::Fixed(chi),
            span,
            n,
            trajectories,
            seed,
            model.hbar(),
        ),
    }
}

/// Fit window `[0, min(T, t_rec))` that stays before the bath revival.
pub fn fit_window(model: &ContinuumModel, total: f64) -> (f64, f64) {
    let guard = model.recurrence_time() * (1.0 - 1e-12);
    (0.0, total.min(guard))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub tau_inv: Option<f64>,
    pub r_squared: Option<f64>,
    pub error: Option<String>,
}

/// Expectation-mode experiment and exponential fit for each `delta`.
pub fn rate_sweep(model: &ContinuumModel, deltas: &[f64], total: f64) -> Result<Vec<SweepPoint>> {
    if deltas.is_empty()
        || deltas.iter().any(|d| !(*d > 0.0))
        || deltas.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::Argument("deltas must be positive and sorted".into()));
    }
    let window = fit_window(model, total);
    Ok(deltas
        .par_iter()
        .map(|&delta| {
            let fit = monitored_decay_experiment(model, delta, total, DecayMode::Expectation)
                .and_then(|c| fit_exponential(&c, window));
            match fit {
                Ok(f) => SweepPoint {
                    delta,
                    tau_inv: Some(f.tau_inv),
                    r_squared: Some(f.r_squared),
                    error: None,
                },
                Err(e) => SweepPoint {
                    delta,
                    tau_inv: None,
                    r_squared: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchingTally {
    pub trajectories: u64,
    /// Decays attributed to each channel, in channel order.
    pub counts: Vec<u64>,
    pub survivors: u64,
    /// `counts[0] / counts[1]` with its propagated binomial standard error.
    pub ratio: f64,
    pub ratio_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultichannelCheck {
    pub fitted_total: f64,
    pub fit: ExponentialFit,
    pub sum_of_channel_rates: f64,
    pub channel_rates: ChannelRates,
    /// `max_t |P(t) − Π_c exp(−t/τ_c)|` over the fit window.
    pub product_law_residual: f64,
    /// Expected fraction of the initial population decayed into each channel.
    pub decayed_fraction: Vec<f64>,
    pub branching: Option<BranchingTally>,
    #[serde(skip)]
    pub curve: DecayCurve,
}

/// Monitored decay of a multi-channel model compared against the sum of
/// golden-rule channel rates.
pub fn multichannel_decay_check(
    model: &ContinuumModel,
    delta: f64,
    total: f64,
    branching: Option<(u64, u64)>,
) -> Result<MultichannelCheck> {
    if model.channels.len() < 2 {
        return Err(Error::Model(
            "multichannel check needs at least two channels".into(),
        ));
    }
    if let Some(bad) = channel_orthogonality_check(model)
        .into_iter()
        .find(|c| !c.orthogonal)
    {
        return Err(Error::Model(format!(
            "channels '{}' and '{}' are not orthogonal decay channels",
            bad.a, bad.b
        )));
    }
    let n = step_count(delta, total)?;
    let rates = golden_rule_rate(model);
    let rho0 = model.excited_state();
    let chi = model.undecayed_projector();
    let mut props = Propagators::new(&model.hamiltonian(), model.hbar())?;
    let ranges: Vec<_> = model.channels.iter().map(|c| c.range.clone()).collect();

    let mut pops: Vec<Vec<f64>> = Vec::with_capacity(n);
    let path = run_conditional(
        &rho0,
        &mut props,
        std::iter::repeat_n((chi.matrix(), delta), n),
        |_, state: &Prepared| {
            pops.push(ranges.iter().map(|r| state.population(r.clone())).collect())
        },
    )?;

    let mut decayed = vec![0.0; ranges.len()];
    let mut running = 1.0;
    let (mut times, mut probs) = (vec![0.0], vec![1.0]);
    for (i, p) in path.probabilities.iter().enumerate() {
        for (d, pop) in decayed.iter_mut().zip(&pops[i]) {
            *d += running * pop;
        }
        running *= p;
        times.push(delta * (i + 1) as f64);
        probs.push(running);
    }
    let steps: Vec<usize> = (0..times.len()).collect();
    let meta = CurveMeta {
        generator: "fixed".into(),
        extinction_step: path.extinction_step,
        ..Default::default()
    };
    let curve = DecayCurve::new(
        steps,
        times,
        probs,
        vec![0.0; path.probabilities.len() + 1],
        meta,
    )?;
    let window = fit_window(model, total);
    let fit = fit_exponential(&curve, window)?;
    let product_law_residual = (0..curve.len())
        .filter(|&i| curve.times[i] >= window.0 && curve.times[i] <= window.1)
        .map(|i| (curve.nondecay_prob[i] - (-curve.times[i] * rates.total).exp()).abs())
        .fold(0.0, f64::max);

    let branching = branching.map(|(trajectories, seed)| {
        branching_tally(&path.probabilities, &pops, trajectories, seed)
    });

    Ok(MultichannelCheck {
        fitted_total: fit.tau_inv,
        fit,
        sum_of_channel_rates: rates.total,
        channel_rates: rates,
        product_law_residual,
        decayed_fraction: decayed,
        branching,
        curve,
    })
}

/// Samples one outcome per step from `u ~ U[0,1)`: found if `u < p`,
/// otherwise the channel whose cumulative population bracket contains `u`.
fn branching_tally(
    found: &[f64],
    pops: &[Vec<f64>],
    trajectories: u64,
    seed: u64,
) -> BranchingTally {
    let nc = pops.first().map_or(0, |p| p.len());
    // index nc counts survivors
    let hist = (0..trajectories)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, outcome_stream(j));
            let mut v = vec![0u64; nc + 1];
            for (p, pop) in found.iter().zip(pops) {
                let u: f64 = rng.random();
                if u < *p {
                    continue;
                }
                let mut edge = *p;
                let mut chosen = nc - 1;
                for (c, share) in pop.iter().enumerate() {
                    edge += share;
                    if u < edge {
                        chosen = c;
                        break;
                    }
                }
                v[chosen] += 1;
                return v;
            }
            v[nc] += 1;
            v
        })
        .reduce(
            || vec![0u64; nc + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let counts = hist[..nc].to_vec();
    let (a, b) = (counts[0] as f64, counts[1] as f64);
    let ratio = a / b;
    let ratio_sigma = ratio * (1.0 / a + 1.0 / b).sqrt();
    BranchingTally {
        trajectories,
        counts,
        survivors: hist[nc],
        ratio,
        ratio_sigma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumBin {
    pub channel: usize,
    pub energy: f64,
    pub population: f64,
}

/// Bath populations after evolving `|e⟩` for `delta`, before any measurement.
pub fn decay_spectrum(model: &ContinuumModel, delta: f64) -> Result<Vec<SpectrumBin>> {
    let mut props = Propagators::new(&model.hamiltonian(), model.hbar())?;
    let mut state = Prepared::from_density(&model.excited_state());
    state.evolve(props.get(delta)?);
    let mut out = Vec::new();
    for (c, ch) in model.channels.iter().enumerate() {
        for (k, e) in ch.range.clone().zip(&ch.energies) {
            out.push(SpectrumBin {
                channel: c,
                energy: *e,
                population: state.population(k..k + 1),
            });
        }
    }
    Ok(out)
}

/// Energy of the most populated bath state after one dwell.
pub fn spectral_peak(model: &ContinuumModel, delta: f64) -> Result<f64> {
    let bins = decay_spectrum(model, delta)?;
    bins.iter()
        .max_by(|a, b| a.population.total_cmp(&b.population))
        .map(|b| b.energy)
        .ok_or_else(|| Error::Model("model has no bath states".into()))
}
