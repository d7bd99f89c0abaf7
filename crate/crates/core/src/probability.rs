//! Observable probabilities, the autocorrelation, and initial decay rates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{
    commutator_norm, conjugate, max_norm, DensityOperator, Matrix, Operator, OperatorKind,
    Spectrum, Tolerances, C64,
};

/// `Tr(AB)` in O(n²).
pub(crate) fn trace_product(a: &Matrix, b: &Matrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `Λ = Σ w_ℓ χ_ℓ`, a detector described by weighted projectors.
#[derive(Debug, Clone)]
pub struct WeightedObservable {
    terms: Vec<(f64, Operator)>,
    assembled: Operator,
    overlapping: bool,
}

impl WeightedObservable {
    pub fn new(terms: Vec<(f64, Operator)>) -> Result<Self> {
        Self::with_tolerances(terms, &Tolerances::DEFAULT)
    }

    pub fn with_tolerances(terms: Vec<(f64, Operator)>, tol: &Tolerances) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Argument("weighted observable needs at least one term".into()))?;
        let dim = first.1.dim();
        let mut sum = Matrix::zeros(dim, dim);
        for (w, chi) in &terms {
            if !(0.0..=1.0).contains(w) {
                return Err(Error::Argument(format!(
                    "detector weight {w} outside [0, 1]"
                )));
            }
            Error::check_dims(dim, chi.dim())?;
            if chi.kind() != OperatorKind::Projector {
                return Err(Error::Structural(format!(
                    "observable term must be a projector, got {:?}",
                    chi.kind()
                )));
            }
            chi.validate(tol)?;
            sum += chi.matrix() * C64::new(*w, 0.0);
        }
        let mut overlapping = false;
        for (i, (_, a)) in terms.iter().enumerate() {
            for (_, b) in terms.iter().skip(i + 1) {
                if max_norm(&(a.matrix() * b.matrix())) > tol.structural {
                    overlapping = true;
                }
            }
        }
        let assembled = Operator::hermitian(sum)?;
        if !overlapping {
            let spec = Spectrum::of(&assembled)?;
            let vals = spec.values();
            let (lo, hi) = (vals[0], vals[vals.len() - 1]);
            if lo < -tol.numerical || hi > 1.0 + tol.numerical {
                return Err(Error::Structural(format!(
                    "observable spectrum [{lo}, {hi}] leaves [0, 1]"
                )));
            }
        }
        Ok(Self {
            terms,
            assembled,
            overlapping,
        })
    }

    /// A single unit-weight projector.
    pub fn from_projector(chi: Operator) -> Result<Self> {
        Self::new(vec![(1.0, chi)])
    }

    pub fn dim(&self) -> usize {
        self.assembled.dim()
    }

    pub fn terms(&self) -> &[(f64, Operator)] {
        &self.terms
    }

    pub fn operator(&self) -> &Operator {
        &self.assembled
    }

    /// True when some pair of terms is not mutually orthogonal.
    pub fn is_overlapping(&self) -> bool {
        self.overlapping
    }

    /// `Λ_d = 1 − Λ_u` as an operator.
    pub fn complement(&self) -> Operator {
        let n = self.dim();
        Operator::trusted(
            Matrix::identity(n, n) - self.assembled.matrix(),
            OperatorKind::Hermitian,
        )
    }
}

/// A probability with the unclamped value kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityValue {
    raw: f64,
}

impl ProbabilityValue {
    pub fn raw(&self) -> f64 {
        self.raw
    }

    /// Clamped to `[0, 1]`.
    pub fn value(&self) -> f64 {
        self.raw.clamp(0.0, 1.0)
    }
}

fn real_or_corrupt(z: C64, tol: f64) -> Result<f64> {
    if z.im.abs() > tol {
        Err(Error::ImaginaryProbability(z.im))
    } else {
        Ok(z.re)
    }
}

/// `Tr(Λρ)`
pub fn probability(lambda: &WeightedObservable, rho: &DensityOperator) -> Result<ProbabilityValue> {
    probability_of(lambda.operator(), rho)
}

pub(crate) fn probability_of(lambda: &Operator, rho: &DensityOperator) -> Result<ProbabilityValue> {
    Error::check_dims(lambda.dim(), rho.dim())?;
    let raw = real_or_corrupt(
        trace_product(lambda.matrix(), rho.matrix()),
        Tolerances::DEFAULT.numerical,
    )?;
    Ok(ProbabilityValue { raw })
}

/// `C = Tr(ρ(t₀) ρ(t))`
pub fn autocorrelation(rho0: &DensityOperator, rho_t: &DensityOperator) -> Result<f64> {
    Error::check_dims(rho0.dim(), rho_t.dim())?;
    real_or_corrupt(
        trace_product(rho0.matrix(), rho_t.matrix()),
        Tolerances::DEFAULT.numerical,
    )
}

/// `τ⁻¹ = (i/ħ)(Tr(ρΛH) − Tr(ΛρH))`, the negative initial slope of `Tr(Λρ(δ))`.
pub fn initial_decay_rate(
    rho: &DensityOperator,
    lambda: &WeightedObservable,
    h: &Operator,
    hbar: f64,
) -> Result<f64> {
    decay_rate_of(rho, lambda.operator(), h, hbar)
}

pub(crate) fn decay_rate_of(
    rho: &DensityOperator,
    lambda: &Operator,
    h: &Operator,
    hbar: f64,
) -> Result<f64> {
    Error::check_dims(rho.dim(), lambda.dim())?;
    Error::check_dims(rho.dim(), h.dim())?;
    if !h.is_hermitian() {
        return Err(Error::Structural("hamiltonian must be hermitian".into()));
    }
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::Argument(format!(
            "hbar must be positive, got {hbar}"
        )));
    }
    let (r, l) = (rho.matrix(), lambda.matrix());
    let comm = r * l - l * r;
    let t = trace_product(&comm, h.matrix());
    // [ρ,Λ] is anti-hermitian, so Tr([ρ,Λ]H) is purely imaginary.
    Ok((C64::new(0.0, 1.0) * t).re / hbar)
}

/// True iff `‖[ρ, χ]‖_max ≤ tol`.
pub fn zeno_condition_holds(rho: &DensityOperator, chi: &Operator, tol: f64) -> Result<bool> {
    Ok(commutator_norm(rho.operator(), chi)? <= tol)
}

/// Scale-aware finite-difference step `1e-5·ħ/‖H‖_max`.
pub fn default_step(h: &Operator, hbar: f64) -> f64 {
    let n = h.max_norm();
    if n > 0.0 {
        1e-5 * hbar / n
    } else {
        1e-5
    }
}

/// `−dP/dδ|₀` of `Tr(Λ ρ(δ))` by central differences, optionally with one
/// Richardson refinement (error O(h⁴) instead of O(h²)).
pub fn finite_difference_decay_rate(
    rho: &DensityOperator,
    lambda: &WeightedObservable,
    h: &Operator,
    hbar: f64,
    step: f64,
    richardson: bool,
) -> Result<f64> {
    let spec = Spectrum::of(h)?;
    let p = |d: f64| -> Result<f64> {
        let u = spec.propagator(d, hbar)?;
        Ok(probability(lambda, &conjugate(rho, &u)?)?.raw())
    };
    let central = |s: f64| -> Result<f64> { Ok((p(s)? - p(-s)?) / (2.0 * s)) };
    let d1 = central(step)?;
    let slope = if richardson {
        let d2 = central(step / 2.0)?;
        (4.0 * d2 - d1) / 3.0
    } else {
        d1
    };
    Ok(-slope)
}

/// Four numerical derivatives contrasting probability and autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeProbe {
    /// `d/dh P(ρ(t*+h))` at `h = 0`, re-based at `t*`.
    pub dp_shifted: f64,
    /// `d/dδ P(ρ(δ))` at `δ = t*`.
    pub dp_direct: f64,
    /// `d/dδ C(0, δ)` at `δ = t*`.
    pub dc_shifted: f64,
    /// `d/dh C(t*, t*+h)` at `h = 0`.
    pub dc_direct: f64,
}

pub fn derivative_probe(
    rho0: &DensityOperator,
    h: &Operator,
    lambda: &WeightedObservable,
    t_star: f64,
    step: f64,
    hbar: f64,
) -> Result<DerivativeProbe> {
    Error::check_dims(rho0.dim(), h.dim())?;
    Error::check_dims(rho0.dim(), lambda.dim())?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Argument(format!(
            "step must be positive, got {step}"
        )));
    }
    if !t_star.is_finite() {
        return Err(Error::Argument(format!(
            "t_star must be finite, got {t_star}"
        )));
    }
    let spec = Spectrum::of(h)?;
    let at = |rho: &DensityOperator, d: f64| -> Result<DensityOperator> {
        conjugate(rho, &spec.propagator(d, hbar)?)
    };
    let prob = |rho: &DensityOperator| -> Result<f64> { Ok(probability(lambda, rho)?.raw()) };
    let two_h = 2.0 * step;

    let rho_star = at(rho0, t_star)?;

    let dp_shifted = (prob(&at(&rho_star, step)?)? - prob(&at(&rho_star, -step)?)?) / two_h;
    let dp_direct = (prob(&at(rho0, t_star + step)?)? - prob(&at(rho0, t_star - step)?)?) / two_h;
    let dc_shifted = (autocorrelation(rho0, &at(rho0, t_star + step)?)?
        - autocorrelation(rho0, &at(rho0, t_star - step)?)?)
        / two_h;
    let dc_direct = (autocorrelation(&rho_star, &at(&rho_star, step)?)?
        - autocorrelation(&rho_star, &at(&rho_star, -step)?)?)
        / two_h;

    Ok(DerivativeProbe {
        dp_shifted,
        dp_direct,
        dc_shifted,
        dc_direct,
    })
}
