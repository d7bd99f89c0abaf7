use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{Matrix, Operator, OperatorKind, C64};

/// Angular tolerance below which a random axis counts as repeating its predecessor.
pub const AXIS_COLLISION_TOL: f64 = 1e-12;

/// How a sequence was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Generator {
    Fixed,
    RandomAxis {
        seed: u64,
        stream: u64,
        spin: String,
    },
    Custom,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub projector: Arc<Operator>,
    pub dwell: f64,
    /// Measurement direction for spin-1/2 axis projectors.
    pub axis: Option<[f64; 3]>,
}

/// An ordered list of (projector, dwell) pairs: evolve for `dwell`, then measure.
#[derive(Debug, Clone)]
pub struct MeasurementSequence {
    steps: Vec<Step>,
    generator: Generator,
}

impl MeasurementSequence {
    pub fn new(steps: Vec<Step>, generator: Generator) -> Result<Self> {
        let dim = steps
            .first()
            .ok_or_else(|| Error::Argument("measurement sequence is empty".into()))?
            .projector
            .dim();
        let mut total = 0.0;
        for s in &steps {
            Error::check_dims(dim, s.projector.dim())?;
            if s.projector.kind() != OperatorKind::Projector {
                return Err(Error::Structural(
                    "sequence entries must be projectors".into(),
                ));
            }
            if !(s.dwell >= 0.0 && s.dwell.is_finite()) {
                return Err(Error::Argument(format!(
                    "dwell time {} must be finite and >= 0",
                    s.dwell
                )));
            }
            total += s.dwell;
        }
        if !total.is_finite() {
            return Err(Error::Argument(
                "total sequence duration is not finite".into(),
            ));
        }
        Ok(Self { steps, generator })
    }

    /// The same projector `n` times with equal dwell `total / n`.
    pub fn fixed(chi: &Operator, n: usize, total: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("n must be >= 1".into()));
        }
        let dwell = total / n as f64;
        let chi = Arc::new(chi.clone());
        let steps = (0..n)
            .map(|_| Step {
                projector: Arc::clone(&chi),
                dwell,
                axis: None,
            })
            .collect();
        Self::new(steps, Generator::Fixed)
    }

    pub fn custom(steps: Vec<(Operator, f64)>) -> Result<Self> {
        let steps = steps
            .into_iter()
            .map(|(projector, dwell)| Step {
                projector: Arc::new(projector),
                dwell,
                axis: None,
            })
            .collect();
        Self::new(steps, Generator::Custom)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.steps[0].projector.dim()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn total_duration(&self) -> f64 {
        self.steps.iter().map(|s| s.dwell).sum()
    }
}

/// `(1 + n·σ)/2`, the spin-1/2 projector onto spin-up along `n`.
pub fn axis_projector(n: [f64; 3]) -> Operator {
    let [x, y, z] = n;
    let m = Matrix::from_row_slice(
        2,
        2,
        &[
            C64::new((1.0 + z) / 2.0, 0.0),
            C64::new(x / 2.0, -y / 2.0),
            C64::new(x / 2.0, y / 2.0),
            C64::new((1.0 - z) / 2.0, 0.0),
        ],
    );
    Operator::trusted(m, OperatorKind::Projector)
}

/// Unit vector for polar angle `theta` and azimuth `phi`.
pub fn direction(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Projector onto spin-up along the direction `(theta, phi)`.
pub fn spin_projector(theta: f64, phi: f64) -> Operator {
    axis_projector(direction(theta, phi))
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    // atan2 form stays accurate for nearly parallel vectors
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let c = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    c.atan2(d)
}

/// Area-uniform direction on the unit sphere.
pub fn uniform_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let cos_theta = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    [sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta]
}

/// Draws the next axis, resampling while it repeats `prev`.
pub(crate) fn next_axis<R: Rng + ?Sized>(rng: &mut R, prev: Option<[f64; 3]>) -> [f64; 3] {
    loop {
        let n = uniform_direction(rng);
        match prev {
            Some(p) if angle_between(p, n) <= AXIS_COLLISION_TOL => continue,
            _ => return n,
        }
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` spin-1/2 measurements along random axes with equal dwell `total / n`.
pub fn random_axis_sequence(n: usize, total: f64, seed: u64) -> Result<MeasurementSequence> {
    random_axis_sequence_on_stream(n, total, seed, 0)
}

pub(crate) fn random_axis_sequence_on_stream(
    n: usize,
    total: f64,
    seed: u64,
    stream: u64,
) -> Result<MeasurementSequence> {
    if n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Argument(format!(
            "total duration must be positive, got {total}"
        )));
    }
    let mut rng = stream_rng(seed, stream);
    let dwell = total / n as f64;
    let mut prev = None;
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let axis = next_axis(&mut rng, prev);
        prev = Some(axis);
        steps.push(Step {
            projector: Arc::new(axis_projector(axis)),
            dwell,
            axis: Some(axis),
        });
    }
    MeasurementSequence::new(
        steps,
        Generator::RandomAxis {
            seed,
            stream,
            spin: "1/2".into(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{max_norm, pauli, Tolerances};

    #[test]
    fn pole_and_equator_projectors() {
        let up = Operator::ket_projector(&pauli::up_z());
        assert!(max_norm(&(spin_projector(0.0, 0.0).matrix() - up.matrix())) < 1e-15);
        let expect = (Operator::identity(2).add(&pauli::sigma_x()).unwrap()).scaled(0.5);
        let p = spin_projector(PI / 2.0, 0.0);
        assert!(max_norm(&(p.matrix() - expect.matrix())) < 1e-15);
    }

    #[test]
    fn projectors_are_valid_and_overlap_matches_bloch_formula() {
        let pairs = [
            (0.3, 1.0, 2.1, -0.4),
            (PI / 2.0, 0.0, PI / 2.0, PI),
            (1.0, 1.0, 1.0, 1.0),
        ];
        for (t1, p1, t2, p2) in pairs {
            let a = spin_projector(t1, p1);
            let b = spin_projector(t2, p2);
            a.validate(&Tolerances::DEFAULT).unwrap();
            let (d1, d2) = (direction(t1, p1), direction(t2, p2));
            let cos_g = d1[0] * d2[0] + d1[1] * d2[1] + d1[2] * d2[2];
            let overlap = (a.matrix() * b.matrix()).trace().re;
            assert!((overlap - (1.0 + cos_g) / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_step_sequence() {
        let s = random_axis_sequence(1, 2.5, 9).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.steps()[0].dwell, 2.5);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = random_axis_sequence(50, 1.0, 42).unwrap();
        let b = random_axis_sequence(50, 1.0, 42).unwrap();
        let c = random_axis_sequence(50, 1.0, 43).unwrap();
        let axes = |s: &MeasurementSequence| {
            s.steps()
                .iter()
                .map(|x| x.axis.unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(axes(&a), axes(&b));
        assert_ne!(axes(&a), axes(&c));
    }

    #[test]
    fn consecutive_axes_are_uncorrelated() {
        // Sphere average of n·n′ is 0 with variance 1/3 per pair.
        let n = 100_001;
        let s = random_axis_sequence(n, 1.0, 7).unwrap();
        let axes: Vec<_> = s.steps().iter().map(|x| x.axis.unwrap()).collect();
        let dots: Vec<f64> = axes
            .windows(2)
            .map(|w| w[0][0] * w[1][0] + w[0][1] * w[1][1] + w[0][2] * w[1][2])
            .collect();
        let mean = dots.iter().sum::<f64>() / dots.len() as f64;
        let sigma = (1.0f64 / 3.0).sqrt();
        assert!(
            mean.abs() < 3.0 * sigma / (dots.len() as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn collision_is_resampled() {
        let mut rng = stream_rng(1, 0);
        let first = uniform_direction(&mut rng);
        let mut rng = stream_rng(1, 0);
        let next = next_axis(&mut rng, Some(first));
        assert!(angle_between(first, next) > AXIS_COLLISION_TOL);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(random_axis_sequence(0, 1.0, 1).is_err());
        assert!(random_axis_sequence(3, 0.0, 1).is_err());
        assert!(MeasurementSequence::custom(vec![(Operator::identity(2), -1.0)]).is_err());
        assert!(MeasurementSequence::custom(vec![
            (Operator::identity(2), 1.0),
            (Operator::identity(3), 1.0)
        ])
        .is_err());
        assert!(MeasurementSequence::custom(vec![(pauli::sigma_x(), 1.0)]).is_err());
    }
}
