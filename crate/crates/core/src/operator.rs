//! Dense complex operators on finite Hilbert spaces.
//!
//! Every operator carries a structural [`OperatorKind`] that is checked at
//! construction. Hermitian generators are exponentiated through their
//! eigendecomposition, so propagators are exact to working precision.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;
pub type Vector = DVector<C64>;

/// Structural and numerical tolerances used by validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Bound on structural defects: `‖A − A†‖`, `|Tr ρ − 1|`, negative eigenvalues.
    pub structural: f64,
    /// Bound on accumulated floating-point error of composite operations.
    pub numerical: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        structural: 1e-10,
        numerical: 1e-9,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    General,
    Hermitian,
    Unitary,
    Projector,
}

/// Largest entry modulus, `‖A‖_max`.
pub fn max_norm(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn hermiticity_defect(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn unitarity_defect(m: &Matrix) -> f64 {
    let n = m.nrows();
    let prod = m.adjoint() * m;
    max_norm(&(prod - Matrix::identity(n, n)))
}

fn idempotency_defect(m: &Matrix) -> f64 {
    max_norm(&(m * m - m))
}

/// Replaces `m` by its hermitian part `(m + m†)/2`.
pub(crate) fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// A square complex matrix tagged with its verified structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    entries: Matrix,
    kind: OperatorKind,
}

impl Operator {
    pub fn new(entries: Matrix, kind: OperatorKind) -> Result<Self> {
        Self::with_tolerances(entries, kind, &Tolerances::DEFAULT)
    }

    pub fn with_tolerances(entries: Matrix, kind: OperatorKind, tol: &Tolerances) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() != entries.ncols() {
            return Err(Error::Structural(format!(
                "operator must be a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Structural("operator has non-finite entries".into()));
        }
        let eps = tol.structural;
        match kind {
            OperatorKind::General => {}
            OperatorKind::Hermitian => {
                let d = hermiticity_defect(&entries);
                if d > eps {
                    return Err(Error::Structural(format!(
                        "not hermitian: ‖A − A†‖ = {d:e}"
                    )));
                }
            }
            OperatorKind::Unitary => {
                let d = unitarity_defect(&entries);
                if d > eps {
                    return Err(Error::Structural(format!("not unitary: ‖A†A − 1‖ = {d:e}")));
                }
            }
            OperatorKind::Projector => {
                let h = hermiticity_defect(&entries);
                if h > eps {
                    return Err(Error::Structural(format!("projector not hermitian: {h:e}")));
                }
                let d = idempotency_defect(&entries);
                if d > eps {
                    return Err(Error::Structural(format!(
                        "not idempotent: ‖A² − A‖ = {d:e}"
                    )));
                }
            }
        }
        Ok(Self { entries, kind })
    }

    pub fn general(entries: Matrix) -> Result<Self> {
        Self::new(entries, OperatorKind::General)
    }

    pub fn hermitian(entries: Matrix) -> Result<Self> {
        Self::new(entries, OperatorKind::Hermitian)
    }

    pub fn unitary(entries: Matrix) -> Result<Self> {
        Self::new(entries, OperatorKind::Unitary)
    }

    pub fn projector(entries: Matrix) -> Result<Self> {
        Self::new(entries, OperatorKind::Projector)
    }

    /// Skips validation; for results of structure-preserving arithmetic.
    pub(crate) fn trusted(entries: Matrix, kind: OperatorKind) -> Self {
        Self { entries, kind }
    }

    pub fn identity(dim: usize) -> Self {
        Self::trusted(Matrix::identity(dim, dim), OperatorKind::Projector)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::trusted(Matrix::zeros(dim, dim), OperatorKind::Projector)
    }

    /// Hermitian diagonal operator from real entries.
    pub fn real_diagonal(diag: &[f64]) -> Result<Self> {
        let v = Vector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self::hermitian(Matrix::from_diagonal(&v))
    }

    /// `|ψ⟩⟨ψ|` for a normalized state.
    pub fn ket_projector(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        Self::trusted(a * a.adjoint(), OperatorKind::Projector)
    }

    /// Orthogonal projector onto the span of the given computational basis states.
    pub fn basis_projector(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut m = Matrix::zeros(dim, dim);
        for &i in indices {
            if i >= dim {
                return Err(Error::Argument(format!(
                    "basis index {i} out of range for dim {dim}"
                )));
            }
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        Ok(Self::trusted(m, OperatorKind::Projector))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn is_hermitian(&self) -> bool {
        matches!(self.kind, OperatorKind::Hermitian | OperatorKind::Projector)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix {
        self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn max_norm(&self) -> f64 {
        max_norm(&self.entries)
    }

    pub fn dagger(&self) -> Self {
        Self::trusted(self.entries.adjoint(), self.kind)
    }

    /// Real multiple of this operator; hermiticity survives, idempotency does not.
    pub fn scaled(&self, factor: f64) -> Self {
        let kind = match self.kind {
            OperatorKind::Projector | OperatorKind::Hermitian => OperatorKind::Hermitian,
            _ => OperatorKind::General,
        };
        Self::trusted(&self.entries * C64::new(factor, 0.0), kind)
    }

    /// Sum of two operators. Hermitian + hermitian stays hermitian.
    pub fn add(&self, other: &Operator) -> Result<Self> {
        Error::check_dims(self.dim(), other.dim())?;
        let kind = if self.is_hermitian() && other.is_hermitian() {
            OperatorKind::Hermitian
        } else {
            OperatorKind::General
        };
        Ok(Self::trusted(&self.entries + &other.entries, kind))
    }

    /// Re-validates the declared kind against the given tolerances.
    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        Self::with_tolerances(self.entries.clone(), self.kind, tol).map(|_| ())
    }

    fn require_hermitian(&self, what: &str) -> Result<()> {
        if self.is_hermitian() {
            Ok(())
        } else {
            Err(Error::Structural(format!(
                "{what} must be hermitian, got {:?}",
                self.kind
            )))
        }
    }
}

/// A unit-norm state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vector,
}

impl StateVector {
    pub fn new(amplitudes: Vector) -> Result<Self> {
        let n2 = amplitudes.norm_squared();
        if amplitudes.is_empty() || (n2 - 1.0).abs() > Tolerances::DEFAULT.structural {
            return Err(Error::Structural(format!(
                "state vector norm² = {n2}, expected 1"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes a non-zero vector.
    pub fn normalized(amplitudes: Vector) -> Result<Self> {
        let n = amplitudes.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Argument(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Ok(Self {
            amplitudes: amplitudes / C64::new(n, 0.0),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::Argument(format!(
                "basis index {index} out of range for dim {dim}"
            )));
        }
        let mut v = Vector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub(crate) fn trusted(amplitudes: Vector) -> Self {
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Vector {
        &self.amplitudes
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        Error::check_dims(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }
}

/// Positive semidefinite, unit-trace hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    op: Operator,
}

impl DensityOperator {
    pub fn new(op: Operator) -> Result<Self> {
        Self::with_tolerances(op, &Tolerances::DEFAULT)
    }

    pub fn with_tolerances(op: Operator, tol: &Tolerances) -> Result<Self> {
        op.require_hermitian("density operator")?;
        let rho = Self { op };
        rho.check_invariants(tol)?;
        Ok(rho)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        Self::new(Operator::hermitian(m)?)
    }

    pub fn pure(psi: &StateVector) -> Self {
        Self {
            op: Operator::trusted(
                Operator::ket_projector(psi).into_matrix(),
                OperatorKind::Hermitian,
            ),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = Matrix::identity(dim, dim) / C64::new(dim as f64, 0.0);
        Self {
            op: Operator::trusted(m, OperatorKind::Hermitian),
        }
    }

    pub(crate) fn trusted(m: Matrix) -> Self {
        Self {
            op: Operator::trusted(m, OperatorKind::Hermitian),
        }
    }

    /// Checks trace, positivity, and purity bounds.
    pub fn check_invariants(&self, tol: &Tolerances) -> Result<()> {
        let eps = tol.structural;
        let m = self.op.matrix();
        let h = hermiticity_defect(m);
        if h > eps {
            return Err(Error::Structural(format!(
                "density operator not hermitian: {h:e}"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > eps || tr.im.abs() > eps {
            return Err(Error::Structural(format!(
                "density operator trace {tr}, expected 1"
            )));
        }
        let mut herm = m.clone();
        symmetrize(&mut herm);
        let eig = SymmetricEigen::new(herm);
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -eps {
            return Err(Error::Structural(format!(
                "density operator has negative eigenvalue {min:e}"
            )));
        }
        let p = self.purity();
        let lo = 1.0 / self.dim() as f64 - eps;
        if p < lo || p > 1.0 + eps {
            return Err(Error::Structural(format!("purity {p} outside [1/dim, 1]")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn matrix(&self) -> &Matrix {
        self.op.matrix()
    }

    /// `Tr(ρ²)`
    pub fn purity(&self) -> f64 {
        let m = self.op.matrix();
        // Tr(ρ²) = Σ |ρ_ij|² for hermitian ρ
        m.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Returns the state vector if `ρ` is pure within `tol.structural`.
    pub fn as_pure(&self, tol: &Tolerances) -> Option<StateVector> {
        if (self.purity() - 1.0).abs() > tol.structural {
            return None;
        }
        let m = self.op.matrix();
        let (col, _) =
            (0..self.dim())
                .map(|j| (j, m[(j, j)].re))
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, c| if c.1 > best.1 { c } else { best },
                );
        // For ρ = |ψ⟩⟨ψ|, column j is ψ·conj(ψ_j).
        let v = m.column(col).into_owned();
        StateVector::normalized(v).ok()
    }
}

/// Eigendecomposition of a hermitian operator, cached for repeated exponentiation.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<f64>,
    vectors: Matrix,
}

impl Spectrum {
    pub fn of(h: &Operator) -> Result<Self> {
        h.require_hermitian("generator")?;
        let mut m = h.matrix().clone();
        symmetrize(&mut m);
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = Matrix::from_fn(h.dim(), h.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvalues in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Orthonormal eigenvectors as columns, ordered like [`Spectrum::values`].
    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    /// `exp(−iHt/ħ)`
    pub fn propagator(&self, t: f64, hbar: f64) -> Result<Operator> {
        check_time(t)?;
        check_hbar(hbar)?;
        let mut scaled = self.vectors.clone();
        for (j, &e) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -e * t / hbar);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= phase;
            }
        }
        Ok(Operator::trusted(
            scaled * self.vectors.adjoint(),
            OperatorKind::Unitary,
        ))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("duration must be finite, got {t}")))
    }
}

fn check_hbar(hbar: f64) -> Result<()> {
    if hbar > 0.0 && hbar.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "hbar must be positive and finite, got {hbar}"
        )))
    }
}

/// `U(t) = exp(−iHt/ħ)` for hermitian `H`.
pub fn propagator(h: &Operator, t: f64, hbar: f64) -> Result<Operator> {
    h.require_hermitian("hamiltonian")?;
    check_time(t)?;
    check_hbar(hbar)?;
    Spectrum::of(h)?.propagator(t, hbar)
}

/// `U ρ U†` for a unitary `U` of matching dimension.
pub fn conjugate(rho: &DensityOperator, u: &Operator) -> Result<DensityOperator> {
    Error::check_dims(rho.dim(), u.dim())?;
    let u = u.matrix();
    let mut out = u * rho.matrix() * u.adjoint();
    symmetrize(&mut out);
    Ok(DensityOperator::trusted(out))
}

/// `ρ(t₀+δ) = U(δ) ρ(t₀) U†(δ)`
pub fn evolve(
    rho: &DensityOperator,
    h: &Operator,
    delta: f64,
    hbar: f64,
) -> Result<DensityOperator> {
    Error::check_dims(rho.dim(), h.dim())?;
    let u = propagator(h, delta, hbar)?;
    conjugate(rho, &u)
}

/// `‖AB − BA‖_max`
pub fn commutator_norm(a: &Operator, b: &Operator) -> Result<f64> {
    Error::check_dims(a.dim(), b.dim())?;
    let (a, b) = (a.matrix(), b.matrix());
    Ok(max_norm(&(a * b - b * a)))
}

/// One eigenvalue with the orthogonal projector onto its eigenspace.
#[derive(Debug, Clone)]
pub struct Eigenspace {
    pub value: f64,
    pub projector: Operator,
}

/// Groups the spectrum of a hermitian operator into eigenspaces.
///
/// Eigenvalues closer than `ε_num·max(1, ‖A‖_max)` are treated as degenerate.
pub fn spectral_decompose(a: &Operator) -> Result<Vec<Eigenspace>> {
    let spec = Spectrum::of(a)?;
    let gap = Tolerances::DEFAULT.numerical * a.max_norm().max(1.0);
    let v = spec.vectors();
    let mut out: Vec<Eigenspace> = Vec::new();
    let mut start = 0;
    let vals = spec.values();
    while start < vals.len() {
        let mut end = start + 1;
        while end < vals.len() && vals[end] - vals[end - 1] <= gap {
            end += 1;
        }
        let cols = v.columns(start, end - start);
        let mut p = cols * cols.adjoint();
        symmetrize(&mut p);
        let value = vals[start..end].iter().sum::<f64>() / (end - start) as f64;
        out.push(Eigenspace {
            value,
            projector: Operator::trusted(p, OperatorKind::Projector),
        });
        start = end;
    }
    Ok(out)
}

/// Standard spin-1/2 operators and states.
pub mod pauli {
    use super::*;

    fn mat(a: [[C64; 2]; 2]) -> Matrix {
        Matrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]])
    }

    const O: C64 = C64::new(0.0, 0.0);
    const ONE: C64 = C64::new(1.0, 0.0);
    const I: C64 = C64::new(0.0, 1.0);

    pub fn sigma_x() -> Operator {
        Operator::trusted(mat([[O, ONE], [ONE, O]]), OperatorKind::Hermitian)
    }

    pub fn sigma_y() -> Operator {
        Operator::trusted(mat([[O, -I], [I, O]]), OperatorKind::Hermitian)
    }

    pub fn sigma_z() -> Operator {
        Operator::trusted(mat([[ONE, O], [O, -ONE]]), OperatorKind::Hermitian)
    }

    pub fn up_z() -> StateVector {
        StateVector::trusted(Vector::from_vec(vec![ONE, O]))
    }

    pub fn down_z() -> StateVector {
        StateVector::trusted(Vector::from_vec(vec![O, ONE]))
    }

    pub fn up_x() -> StateVector {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        StateVector::trusted(Vector::from_vec(vec![s, s]))
    }

    /// Spin-up state along the direction with polar angle `theta`, azimuth `phi`.
    pub fn up_along(theta: f64, phi: f64) -> StateVector {
        let (s, c) = (theta / 2.0).sin_cos();
        StateVector::trusted(Vector::from_vec(vec![
            C64::new(c, 0.0),
            C64::from_polar(s, phi),
        ]))
    }

    /// `(ħω/2) σ` for the chosen axis.
    pub fn precession(axis: Axis, omega: f64, hbar: f64) -> Operator {
        let s = match axis {
            Axis::X => sigma_x(),
            Axis::Y => sigma_y(),
            Axis::Z => sigma_z(),
        };
        s.scaled(hbar * omega / 2.0)
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
    #[serde(rename_all = "lowercase")]
    pub enum Axis {
        X,
        Y,
        Z,
    }
}
