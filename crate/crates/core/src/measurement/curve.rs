use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::Tolerances;

/// Version stamped into every JSON sidecar.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CurveMeta {
    pub generator: String,
    pub seed: Option<u64>,
    pub trajectories: Option<u64>,
    /// First step whose found-probability fell below the extinction floor.
    pub extinction_step: Option<usize>,
}

/// Sampled non-decay probability: row `k` is the probability that every one
/// of the first `k` measurements found the system undecayed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub nondecay_prob: Vec<f64>,
    /// Zero for exact expectation curves.
    pub stderr: Vec<f64>,
    pub meta: CurveMeta,
}

impl DecayCurve {
    pub fn new(
        steps: Vec<usize>,
        times: Vec<f64>,
        nondecay_prob: Vec<f64>,
        stderr: Vec<f64>,
        meta: CurveMeta,
    ) -> Result<Self> {
        let n = times.len();
        if steps.len() != n || nondecay_prob.len() != n || stderr.len() != n {
            return Err(Error::Argument(
                "curve columns have different lengths".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument(
                "curve times must be strictly increasing".into(),
            ));
        }
        let eps = Tolerances::DEFAULT.numerical;
        if let Some(p) = nondecay_prob
            .iter()
            .find(|p| !(**p >= -eps && **p <= 1.0 + eps))
        {
            return Err(Error::Argument(format!(
                "curve probability {p} outside [0, 1]"
            )));
        }
        if stderr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Argument("stderr must be nonnegative".into()));
        }
        Ok(Self {
            steps,
            times,
            nondecay_prob,
            stderr,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV body with header `step,time,nondecay_prob,stderr`.
    ///
    /// Floats use Rust's shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time,nondecay_prob,stderr\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.steps[i], self.times[i], self.nondecay_prob[i], self.stderr[i]
            );
        }
        out
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "columns": ["step", "time", "nondecay_prob", "stderr"],
            "rows": self.len(),
            "meta": self.meta,
        })
    }
}
