//! Sequences of ideal projective measurements.
//!
//! A sequence alternates free evolution for a dwell time with a measurement
//! that either finds the system in the range of the step's projector (and
//! collapses onto it) or absorbs it. Sequences run either as exact
//! conditional products or as sampled single-system trajectories.

pub mod curve;
pub mod engine;
pub mod fit;
pub mod monte_carlo;
pub mod sequence;

pub use curve::{CurveMeta, DecayCurve, SCHEMA_VERSION};
pub use engine::{
    collapse, conditional_product_curve, sample_trajectory, zeno_limit_study, Trajectory,
    ZenoPoint, P_FLOOR,
};
pub use fit::{fit_exponential, ExponentialFit};
pub use monte_carlo::{expectation_curve, monte_carlo_curve, SequenceGenerator};
pub use sequence::{
    axis_projector, direction, random_axis_sequence, spin_projector, Generator,
    MeasurementSequence, Step,
};
