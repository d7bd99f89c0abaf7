//! Numerical laboratory for sequences of ideal projective measurements.
//!
//! The crate contrasts the autocorrelation `Tr(ρ(t₀)ρ(t))` with genuine
//! observable probabilities `Tr(Λρ)`, computes initial decay rates and the
//! commutation condition under which frequent measurement inhibits decay,
//! runs measurement sequences both as exact conditional products and as
//! Monte Carlo trajectories, and checks golden-rule decay rates on
//! discretized continua.
//!
//! Modules, bottom-up:
//!
//! * [`operator`]: dense complex operators, density operators, propagators.
//! * [`probability`]: probabilities, autocorrelation, decay rates.
//! * [`measurement`]: sequences, collapse, conditional products, Monte Carlo.
//! * [`golden_rule`]: excited level coupled to discretized continua.
//! * [`scenario`]: scenario files, runs, reports, suite verification.

pub mod error;
pub mod golden_rule;
pub mod measurement;
pub mod operator;
pub mod probability;
pub mod scenario;

pub use error::{Error, Result};
pub use operator::{
    commutator_norm, evolve, propagator, spectral_decompose, DensityOperator, Operator,
    OperatorKind, StateVector, Tolerances,
};
pub use probability::{
    autocorrelation, derivative_probe, initial_decay_rate, probability, zeno_condition_holds,
    WeightedObservable,
};
