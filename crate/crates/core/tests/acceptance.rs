//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use qzlab::golden_rule::{
    build_model, multichannel_decay_check, rate_sweep, ChannelSpec, ModelSpec,
};
use qzlab::measurement::{
    expectation_curve, fit_exponential, monte_carlo_curve, zeno_limit_study, SequenceGenerator,
};
use qzlab::operator::pauli::{precession, up_z, Axis};
use qzlab::scenario::{parse_scenario_file, run};
use qzlab::{
    autocorrelation, evolve, initial_decay_rate, DensityOperator, Operator, OperatorKind,
    WeightedObservable,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn autocorrelation_invariance() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(1..=16);
        let rho0 = random_density(&mut r, n);
        let h = random_hermitian(&mut r, n);
        let delta = r.random_range(-5.0..5.0);
        let shift = r.random_range(-5.0..5.0);
        let base = autocorrelation(&rho0, &evolve(&rho0, &h, delta, 1.0).unwrap()).unwrap();
        let a = evolve(&rho0, &h, shift, 1.0).unwrap();
        let b = evolve(&rho0, &h, shift + delta, 1.0).unwrap();
        worst = worst.max((autocorrelation(&a, &b).unwrap() - base).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!(
            "max deviation {worst:.2e} over 1000 instances, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn zero_initial_slope() -> Outcome {
    let mut r = rng(2);
    let mut bound_ok = true;
    let mut orders = Vec::new();
    let mut largest = 0.0f64;
    for _ in 0..5 {
        let n = r.random_range(2..=6);
        let rho0 = random_density(&mut r, n);
        let h = random_hermitian(&mut r, n);
        let hn = h.matrix().norm();
        // |C'''| ≤ 8‖H‖³ for the central-difference remainder h²/6·|C'''|
        let c_bound = 8.0 * hn.powi(3) / 6.0;
        for t0 in [0.0, 0.7, 2.3] {
            let base = evolve(&rho0, &h, t0, 1.0).unwrap();
            let c = |d: f64| autocorrelation(&base, &evolve(&base, &h, d, 1.0).unwrap()).unwrap();
            let steps: Vec<f64> = (0..5).map(|k| 0.1 / 2f64.powi(k)).collect();
            let slopes: Vec<f64> = steps
                .iter()
                .map(|&s| ((c(s) - c(-s)) / (2.0 * s)).abs())
                .collect();
            for (s, v) in steps.iter().zip(&slopes) {
                bound_ok &= *v <= c_bound * s * s;
                largest = largest.max(*v);
            }
            for w in slopes.windows(2) {
                orders.push((w[0] / w[1]).log2());
            }
        }
    }
    let mut finite: Vec<f64> = orders.iter().copied().filter(|o| o.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let median = finite.get(finite.len() / 2).copied().unwrap_or(f64::NAN);
    let mean = if finite.len() == orders.len() {
        finite.iter().sum::<f64>() / finite.len() as f64
    } else {
        f64::NAN
    };
    let order_ok = (mean - 2.0).abs() <= 0.2;
    outcome(
        bound_ok && order_ok,
        format!(
            "bound C·h² {} (largest slope {largest:.2e}); measured order {mean:.3} ({} of {} ratios finite, median {median:.2}), need 2.0 ± 0.2",
            if bound_ok { "holds" } else { "violated" },
            finite.len(),
            orders.len()
        ),
    )
}

fn decay_rate_formula() -> Outcome {
    let mut r = rng(3);
    let mut worst_rel = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(2..=8);
        let rho = random_density(&mut r, n);
        let h = random_hermitian(&mut r, n);
        let rank = r.random_range(1..n);
        let lambda = WeightedObservable::from_projector(random_projector(&mut r, n, rank)).unwrap();
        let rate = initial_decay_rate(&rho, &lambda, &h, 1.0).unwrap();
        let p = |d: f64| {
            trace_product(
                lambda.operator().matrix(),
                &evolve_oracle(rho.matrix(), h.matrix(), d, 1.0),
            )
            .re
        };
        let s = 1e-3;
        let fd = -(-p(2.0 * s) + 8.0 * p(s) - 8.0 * p(-s) + p(-2.0 * s)) / (12.0 * s);
        worst_rel = worst_rel.max((rate - fd).abs() / fd.abs());
    }

    let mut worst_zero = 0.0f64;
    for family in 0..2 {
        for _ in 0..500 {
            let n = r.random_range(2..=8);
            let q = random_unitary(&mut r, n);
            let weights: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let diag = |v: &[f64]| {
                let d = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    n,
                    v.iter().map(|x| num_complex::Complex64::new(*x, 0.0)),
                ));
                &q * d * q.adjoint()
            };
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let rho = DensityOperator::from_matrix(diag(&probs)).unwrap();
            let (h, lambda) = if family == 0 {
                // [ρ,Λ] = 0: Λ projects onto eigenvectors of ρ
                let k = r.random_range(1..=n);
                let lam = Operator::new(
                    column_projector(&q, &(0..k).collect::<Vec<_>>()),
                    OperatorKind::Projector,
                )
                .unwrap();
                (random_hermitian(&mut r, n), lam)
            } else {
                // [ρ,H] = 0: H diagonal in the eigenbasis of ρ
                let energies: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
                let h = Operator::new(diag(&energies), OperatorKind::Hermitian).unwrap();
                let rank = r.random_range(1..n);
                (h, random_projector(&mut r, n, rank))
            };
            let lambda = WeightedObservable::from_projector(lambda).unwrap();
            worst_zero = worst_zero.max(initial_decay_rate(&rho, &lambda, &h, 1.0).unwrap().abs());
        }
    }
    outcome(
        worst_rel <= 1e-6 && worst_zero <= 1e-12,
        format!("max relative deviation {worst_rel:.2e} (1000 instances); max |rate| on commuting families {worst_zero:.2e}"),
    )
}

fn zeno_limit() -> Outcome {
    let omega = 1.0;
    let total = PI / omega;
    let rho = DensityOperator::pure(&up_z());
    let chi = Operator::ket_projector(&up_z());
    let h = precession(Axis::X, omega, 1.0);
    let mut schedule: Vec<usize> = (1..=200).collect();
    schedule.extend((8..=14).map(|k| 1usize << k));
    schedule.extend([300, 777, 1000, 5000, 12345]);
    schedule.sort_unstable();
    schedule.dedup();
    let pts = zeno_limit_study(&rho, &h, &chi, total, &schedule, 1.0).unwrap();
    let closed = |n: usize| (PI / (2.0 * n as f64)).cos().powi(2 * n as i32);
    let max_err = pts
        .iter()
        .map(|p| (p.product - closed(p.n)).abs())
        .fold(0.0, f64::max);
    let p10 = pts.iter().find(|p| p.n == 10).unwrap().product;
    let tail: Vec<(f64, f64)> = pts
        .iter()
        .filter(|p| p.n >= 1024 && p.n.is_power_of_two())
        .map(|p| ((p.n as f64).ln(), (1.0 - p.product).ln()))
        .collect();
    let k = tail.len() as f64;
    let (mx, my) = (
        tail.iter().map(|p| p.0).sum::<f64>() / k,
        tail.iter().map(|p| p.1).sum::<f64>() / k,
    );
    let order = -tail.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / tail.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    outcome(
        max_err <= 1e-9 && (p10 - 0.7805).abs() <= 1e-3 && (order - 1.0).abs() <= 0.1,
        format!(
            "max |P^n - cos^2n(pi/2n)| {max_err:.2e} over {} n; P^10 = {p10:.6}; order {order:.4}",
            pts.len()
        ),
    )
}

fn uncontrolled_monitoring() -> Outcome {
    let start = Instant::now();
    let rho = DensityOperator::pure(&up_z());
    let h = precession(Axis::Z, 1e-9, 1.0);
    let trajectories = 10_000u64;
    let (n, total) = (20, 20.0);
    let mc = monte_carlo_curve(
        &rho,
        &h,
        &SequenceGenerator::RandomAxis,
        total,
        n,
        trajectories,
        5,
        1.0,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for k in 1..=10 {
        let p = 0.5f64.powi(k as i32);
        let sigma = (p * (1.0 - p) / trajectories as f64).sqrt();
        worst = worst.max((mc.nondecay_prob[k] - p).abs() / sigma);
    }
    let exp = expectation_curve(
        &rho,
        &h,
        &SequenceGenerator::RandomAxis,
        total,
        n,
        trajectories,
        5,
        1.0,
    )
    .unwrap();
    let fit = fit_exponential(&exp, (0.0, total)).unwrap();
    let elapsed = start.elapsed();
    outcome(
        worst <= 3.0 && fit.r_squared >= 0.999 && elapsed < Duration::from_secs(60),
        format!(
            "max deviation {worst:.2} sigma for k <= 10; expectation fit R^2 {:.6}, rate/step {:.4}; {:.2} s",
            fit.r_squared,
            fit.tau_inv * total / n as f64,
            elapsed.as_secs_f64()
        ),
    )
}

const DELTAS: [f64; 10] = [0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 8.0, 10.0, 15.0, 20.0];
const PLATEAU: (f64, f64) = (8.0, 20.0);

struct Sweep {
    gamma: f64,
    plateau: Vec<(f64, f64, f64)>,
    smallest: f64,
    guard: f64,
    elapsed: Duration,
}

fn sweep() -> Sweep {
    let start = Instant::now();
    let (g, de) = (0.01, 0.01);
    let model = build_model(ModelSpec::new(
        0.0,
        vec![ChannelSpec::uniform("a", 201, de, 0.0, g)],
    ))
    .unwrap();
    let total = 100.0;
    let points = rate_sweep(&model, &DELTAS, total).unwrap();
    let plateau = points
        .iter()
        .filter(|p| p.delta >= PLATEAU.0 && p.delta <= PLATEAU.1)
        .map(|p| {
            (
                p.delta,
                p.tau_inv.unwrap_or(f64::NAN),
                p.r_squared.unwrap_or(f64::NAN),
            )
        })
        .collect();
    Sweep {
        gamma: 2.0 * PI * g * g / de,
        plateau,
        smallest: points[0].tau_inv.unwrap_or(f64::NAN),
        guard: 2.0 * PI / de,
        elapsed: start.elapsed(),
    }
}

fn golden_rule(s: &Sweep) -> Outcome {
    let worst = s
        .plateau
        .iter()
        .map(|p| (p.1 - s.gamma).abs() / s.gamma)
        .fold(0.0, f64::max);
    let min_r2 = s.plateau.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let window_end = 100.0f64;
    outcome(
        worst <= 0.1 && min_r2 >= 0.99 && window_end < s.guard && s.elapsed < Duration::from_secs(300),
        format!(
            "plateau rates {:?} vs {:.5}: max relative deviation {worst:.3}, min R^2 {min_r2:.5}, window [0, {window_end}] < {:.1}; {:.2} s",
            s.plateau.iter().map(|p| (p.0, (p.1 * 1e5).round() / 1e5)).collect::<Vec<_>>(),
            s.gamma,
            s.guard,
            s.elapsed.as_secs_f64()
        ),
    )
}

fn zeno_suppression(s: &Sweep) -> Outcome {
    let plateau = s.plateau.iter().map(|p| p.1).sum::<f64>() / s.plateau.len() as f64;
    outcome(
        s.smallest <= 0.5 * plateau,
        format!(
            "rate at delta = {} is {:.5}, plateau {plateau:.5}",
            DELTAS[0], s.smallest
        ),
    )
}

fn multichannel() -> Outcome {
    let (ga, gb, de) = (0.01, 0.005, 0.01);
    let model = build_model(ModelSpec::new(
        0.0,
        vec![
            ChannelSpec::uniform("a", 201, de, 0.0, ga),
            ChannelSpec::uniform("b", 201, de, 0.0, gb),
        ],
    ))
    .unwrap();
    let (gamma_a, gamma_b) = (2.0 * PI * ga * ga / de, 2.0 * PI * gb * gb / de);
    let check = multichannel_decay_check(&model, 8.0, 100.0, Some((20_000, 8))).unwrap();
    let rel = (check.fitted_total - (gamma_a + gamma_b)).abs() / (gamma_a + gamma_b);
    let b = check.branching.unwrap();
    let expected = gamma_a / gamma_b;
    outcome(
        rel <= 0.1 && (b.ratio - expected).abs() <= 3.0 * b.ratio_sigma,
        format!(
            "fitted {:.5} vs {:.5} (relative {rel:.3}); branching {:.3} +/- {:.3} vs {expected}",
            check.fitted_total,
            gamma_a + gamma_b,
            b.ratio,
            b.ratio_sigma
        ),
    )
}

fn reproducibility() -> Outcome {
    let suite = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut compared = 0;
    let mut identical = true;
    for name in ["random-axis-monte-carlo", "multichannel"] {
        let mut bodies = Vec::new();
        for threads in [1, 2, 8] {
            let dir = tempfile::tempdir().unwrap();
            let mut s = parse_scenario_file(&suite.join(format!("{name}.toml"))).unwrap();
            s.output.directory = dir.path().to_path_buf();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run(&s)).unwrap();
            bodies.push(std::fs::read(dir.path().join("curve.csv")).unwrap());
        }
        identical &= bodies.windows(2).all(|w| w[0] == w[1]);
        compared += 1;
    }
    outcome(
        identical,
        format!("{compared} stochastic scenarios compared across 1, 2 and 8 threads"),
    )
}

fn main() -> ExitCode {
    let s = sweep();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (
            "autocorrelation invariance",
            Box::new(autocorrelation_invariance),
        ),
        ("zero initial slope of C", Box::new(zero_initial_slope)),
        ("decay-rate formula", Box::new(decay_rate_formula)),
        ("Zeno limit", Box::new(zeno_limit)),
        ("uncontrolled monitoring", Box::new(uncontrolled_monitoring)),
        ("golden-rule plateau", Box::new(|| golden_rule(&s))),
        ("Zeno suppression", Box::new(|| zeno_suppression(&s))),
        ("multichannel additivity", Box::new(multichannel)),
        ("reproducibility", Box::new(reproducibility)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
