#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use qzlab::{DensityOperator, Operator, OperatorKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M = DMatrix<C64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize) -> M {
    M::from_fn(n, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> Operator {
    let a = random_matrix(rng, n);
    Operator::new((&a + a.adjoint()).scale(0.5), OperatorKind::Hermitian).unwrap()
}

/// Random state of the given rank (full rank when `rank >= n`).
pub fn random_density_of_rank(rng: &mut impl Rng, n: usize, rank: usize) -> DensityOperator {
    let a = M::from_fn(n, rank.min(n), |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let m = &a * a.adjoint();
    let tr = m.trace().re;
    DensityOperator::from_matrix(m.unscale(tr)).unwrap()
}

pub fn random_density(rng: &mut impl Rng, n: usize) -> DensityOperator {
    let rank = rng.random_range(1..=n);
    random_density_of_rank(rng, n, rank)
}

pub fn random_unitary(rng: &mut impl Rng, n: usize) -> M {
    random_matrix(rng, n).qr().q()
}

/// Projector onto the span of the given columns of a unitary.
pub fn column_projector(q: &M, cols: &[usize]) -> M {
    let n = q.nrows();
    let mut p = M::zeros(n, n);
    for &c in cols {
        let v = q.column(c);
        p += v * v.adjoint();
    }
    p
}

pub fn random_projector(rng: &mut impl Rng, n: usize, rank: usize) -> Operator {
    let q = random_unitary(rng, n);
    let cols: Vec<usize> = (0..rank).collect();
    Operator::new(column_projector(&q, &cols), OperatorKind::Projector).unwrap()
}

pub fn max_abs(m: &M) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring of a degree-24 Taylor polynomial.
pub fn expm(a: &M) -> M {
    let n = a.nrows();
    let norm = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let squarings = norm.log2().ceil().max(0.0) as i32 + 1;
    let scaled = a.unscale(2f64.powi(squarings));
    let mut term = M::identity(n, n);
    let mut sum = M::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled / C64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `e^{-iHt/ħ} ρ e^{+iHt/ħ}` through [`expm`].
pub fn evolve_oracle(rho: &M, h: &M, t: f64, hbar: f64) -> M {
    let u = expm(&h.scale(t / hbar).map(|z| z * C64::new(0.0, -1.0)));
    &u * rho * u.adjoint()
}

pub fn trace_product(a: &M, b: &M) -> C64 {
    (a * b).trace()
}
