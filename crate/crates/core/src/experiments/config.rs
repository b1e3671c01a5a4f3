//! Experiment configuration: a versioned JSON schema that rejects unknown keys.

use serde::{Deserialize, Serialize};

use crate::distributions::OffspringPmf;
use crate::field::FieldMode;

use super::ExperimentError;

/// The only schema version this build understands.
pub const SCHEMA_VERSION: u32 = 1;

/// Which experiment a configuration drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Magnetization,
    Gamma,
    Capacity,
    Tv,
    Validate,
}

/// How the field probability `p_n` depends on the depth `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PSchedule {
    /// `p_n = c`.
    Constant { c: f64 },
    /// `p_n = lambda^n`.
    Geometric { lambda: f64 },
    /// `p_n = c (nu tanh beta)^(-n)`.
    Threshold { c: f64 },
    /// `p_n = c (nu tanh beta)^(-n) lambda^n`.
    ThresholdTimes { c: f64, lambda: f64 },
}

impl PSchedule {
    /// `p_n` for mean offspring `nu` and coupling `beta`.
    pub fn p_n(&self, n: usize, nu: f64, beta: f64) -> Result<f64, ExperimentError> {
        let ln_rho = (nu * beta.tanh()).ln();
        let nn = n as f64;
        let p = match *self {
            PSchedule::Constant { c } => c,
            PSchedule::Geometric { lambda } => lambda.powi(n as i32),
            PSchedule::Threshold { c } => c * (-nn * ln_rho).exp(),
            PSchedule::ThresholdTimes { c, lambda } => c * (nn * (lambda.ln() - ln_rho)).exp(),
        };
        if p > 0.0 && p <= 1.0 {
            Ok(p)
        } else {
            Err(ExperimentError::ScheduleOutOfRange { n, p })
        }
    }
}

fn default_beta() -> f64 {
    0.8
}
fn default_replicas() -> usize {
    1000
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_epsilon_sweep() -> Vec<f64> {
    vec![0.01, 0.05, 0.2]
}
fn default_field_mode() -> FieldMode {
    FieldMode::WholeTree
}
fn default_capacity_p() -> f64 {
    1.5
}
fn default_q() -> f64 {
    2.0
}

/// Parameters of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub mode: Mode,
    pub base_pmf: OffspringPmf,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub p_schedule: PSchedule,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Magnetization threshold for `P(m > epsilon)`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Additional thresholds reported next to `epsilon`.
    #[serde(default = "default_epsilon_sweep")]
    pub epsilon_sweep: Vec<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_field_mode")]
    pub field_mode: FieldMode,
    /// Exponent of the capacity.
    #[serde(default = "default_capacity_p")]
    pub capacity_p: f64,
    /// Moment exponent `q in (1, 2]` for the pruned-law bounds.
    #[serde(default = "default_q")]
    pub q: f64,
}

impl ExperimentConfig {
    /// A configuration with defaults for everything but the essentials.
    pub fn new(mode: Mode, base_pmf: OffspringPmf, p_schedule: PSchedule, n_grid: Vec<usize>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mode,
            base_pmf,
            beta: default_beta(),
            p_schedule,
            n_grid,
            replicas: default_replicas(),
            epsilon: default_epsilon(),
            epsilon_sweep: default_epsilon_sweep(),
            master_seed: 0,
            field_mode: default_field_mode(),
            capacity_p: default_capacity_p(),
            q: default_q(),
        }
    }

    /// Parses and validates a JSON configuration.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every invariant, including that the schedule stays in `(0, 1]`.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        if self.n_grid.is_empty() {
            return bad("n_grid must not be empty".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta {} must be finite and nonnegative", self.beta));
        }
        for &eps in std::iter::once(&self.epsilon).chain(&self.epsilon_sweep) {
            if !(eps > 0.0 && eps < 1.0) {
                return bad(format!("epsilon {eps} must lie in (0, 1)"));
            }
        }
        if !(self.capacity_p > 1.0 && self.capacity_p.is_finite()) {
            return bad(format!("capacity_p {} must be finite and > 1", self.capacity_p));
        }
        if !(self.q > 1.0 && self.q <= 2.0) {
            return bad(format!("q {} must lie in (1, 2]", self.q));
        }
        let nu = self.base_pmf.mean();
        for &n in &self.n_grid {
            self.p_schedule.p_n(n, nu, self.beta)?;
        }
        Ok(())
    }

    /// `p_n` for every depth of the grid, in grid order.
    pub fn p_grid(&self) -> Result<Vec<(usize, f64)>, ExperimentError> {
        let nu = self.base_pmf.mean();
        self.n_grid
            .iter()
            .map(|&n| Ok((n, self.p_schedule.p_n(n, nu, self.beta)?)))
            .collect()
    }

    /// Thresholds to report: `epsilon` first, then the sweep without repeats.
    pub fn epsilons(&self) -> Vec<f64> {
        let mut out = vec![self.epsilon];
        for &e in &self.epsilon_sweep {
            if !out.contains(&e) {
                out.push(e);
            }
        }
        out
    }

    /// Requires `mode` to be `expected`.
    pub fn expect_mode(&self, expected: Mode) -> Result<(), ExperimentError> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(ExperimentError::WrongMode { expected, found: self.mode })
        }
    }
}
