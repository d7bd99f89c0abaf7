mod common;

use common::*;
use proptest::prelude::*;
use qzlab::measurement::{
    collapse, conditional_product_curve, expectation_curve, fit_exponential, monte_carlo_curve,
    zeno_limit_study, MeasurementSequence, SequenceGenerator,
};
use qzlab::operator::pauli::{precession, up_z, Axis};
use qzlab::{DensityOperator, Operator, OperatorKind};
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn found_state_lies_in_projector_range(seed in any::<u64>(), n in 2usize..=12) {
        let mut r = rng(seed);
        let rho = random_density(&mut r, n);
        let rank = r.random_range(1..=n);
        let chi = random_projector(&mut r, n, rank);
        let (p, found) = collapse(&rho, &chi).unwrap();
        prop_assert!(p > 0.0);
        let t = (chi.matrix() * found.matrix()).trace();
        prop_assert!((t.re - 1.0).abs() <= 1e-9 && t.im.abs() <= 1e-9);
    }
}

fn random_sequence(
    seed: u64,
    n: usize,
    steps: usize,
) -> (DensityOperator, Operator, MeasurementSequence) {
    let mut r = rng(seed);
    let rho = random_density(&mut r, n);
    let h = random_hermitian(&mut r, n);
    let seq = (0..steps)
        .map(|_| {
            let rank = r.random_range(n / 2..n);
            (random_projector(&mut r, n, rank), r.random_range(0.05..0.5))
        })
        .collect();
    (rho, h, MeasurementSequence::custom(seq).unwrap())
}

#[test]
fn monte_carlo_is_unbiased_on_fixed_sequences() {
    let trajectories = 10_000u64;
    for seed in [1u64, 2, 3] {
        let (rho, h, seq) = random_sequence(seed, 4, 8);
        let exact = conditional_product_curve(&rho, &h, &seq, 1.0).unwrap();
        let gen = SequenceGenerator::Custom(seq.clone());
        let mc = monte_carlo_curve(
            &rho,
            &h,
            &gen,
            seq.total_duration(),
            seq.len(),
            trajectories,
            99,
            1.0,
        )
        .unwrap();
        assert_eq!(mc.times.len(), exact.times.len());
        for k in 0..exact.len() {
            assert!((mc.times[k] - exact.times[k]).abs() < 1e-12);
            let p = exact.nondecay_prob[k];
            let sigma = (p * (1.0 - p) / trajectories as f64).sqrt();
            let dev = (mc.nondecay_prob[k] - p).abs();
            assert!(
                dev <= 3.0 * sigma + 1e-12,
                "seed {seed} step {k}: {dev} > 3σ = {}",
                3.0 * sigma
            );
        }
    }
}

#[test]
fn identical_seed_gives_identical_tallies() {
    let (rho, h, seq) = random_sequence(5, 3, 6);
    let gen = SequenceGenerator::Custom(seq.clone());
    let run = |seed| {
        monte_carlo_curve(
            &rho,
            &h,
            &gen,
            seq.total_duration(),
            seq.len(),
            2_000,
            seed,
            1.0,
        )
        .unwrap()
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4).nondecay_prob, run(5).nondecay_prob);

    let rho = DensityOperator::pure(&up_z());
    let h = Operator::zeros(2);
    let random = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            monte_carlo_curve(
                &rho,
                &h,
                &SequenceGenerator::RandomAxis,
                10.0,
                10,
                3_000,
                8,
                1.0,
            )
            .unwrap()
        })
    };
    assert_eq!(random(1).to_csv(), random(4).to_csv());
}

#[test]
fn random_axis_decay_is_exponential_for_any_hamiltonian() {
    let rho = DensityOperator::pure(&up_z());
    let mut r = rng(17);
    let hamiltonians = [
        Operator::zeros(2),
        precession(Axis::Z, 0.8, 1.0),
        random_hermitian(&mut r, 2),
    ];
    for h in &hamiltonians {
        let curve = expectation_curve(
            &rho,
            h,
            &SequenceGenerator::RandomAxis,
            15.0,
            15,
            20_000,
            3,
            1.0,
        )
        .unwrap();
        let fit = fit_exponential(&curve, (0.0, 15.0)).unwrap();
        assert!(fit.r_squared >= 0.999, "R² {}", fit.r_squared);
        assert!(
            (fit.tau_inv - std::f64::consts::LN_2).abs() < 0.03,
            "rate {}",
            fit.tau_inv
        );
    }
}

/// Least-squares slope of ln(1 − P) against ln n.
fn order(points: &[(usize, f64)]) -> f64 {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, p)| ((n as f64).ln(), (1.0 - p).ln()))
        .collect();
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    -sxy / sxx
}

#[test]
fn commuting_preparations_approach_certainty_as_one_over_n() {
    // the prepared state is the measured projector, so every preparation commutes with it
    let mut r = rng(23);
    let h = random_hermitian(&mut r, 3);
    let q = random_unitary(&mut r, 3);
    let chi = Operator::new(column_projector(&q, &[0]), OperatorKind::Projector).unwrap();
    let rho = DensityOperator::from_matrix(chi.matrix().clone()).unwrap();
    let schedule: Vec<usize> = (6..=14).map(|k| 1usize << k).collect();
    let pts = zeno_limit_study(&rho, &h, &chi, 2.0, &schedule, 1.0).unwrap();
    assert!(pts.windows(2).all(|w| w[1].product > w[0].product));
    assert!(1.0 - pts.last().unwrap().product < 1e-2);
    let o = order(&pts.iter().map(|p| (p.n, p.product)).collect::<Vec<_>>());
    assert!((o - 1.0).abs() < 0.1, "order {o}");
    // per-step linear terms vanish, so the linear prediction is exactly one
    assert!(pts.iter().all(|p| (p.predicted - 1.0).abs() < 1e-12));
}

#[test]
fn rank_deficient_mixed_preparation_follows_same_limit() {
    let mut r = rng(29);
    let n = 4;
    let h = random_hermitian(&mut r, n);
    let q = random_unitary(&mut r, n);
    let chi = Operator::new(column_projector(&q, &[0, 1]), OperatorKind::Projector).unwrap();
    let qs = q.columns(0, 2).into_owned();
    let inner = random_density(&mut r, 2);
    let rho = DensityOperator::from_matrix(&qs * inner.matrix() * qs.adjoint()).unwrap();
    let pts = zeno_limit_study(&rho, &h, &chi, 1.0, &[1024, 4096, 16384], 1.0).unwrap();
    let o = order(&pts.iter().map(|p| (p.n, p.product)).collect::<Vec<_>>());
    assert!((o - 1.0).abs() < 0.1, "order {o}");
}
