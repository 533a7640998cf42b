use std::path::Path;

use serde::{Deserialize, Serialize};
use shelab::smallball::{EventKind, Method, TailStatistic};
use shelab::solver::{DriftPreset, SigmaPreset};
use shelab::{Grid, Metric};

use crate::error::{CliError, FieldError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Smallball,
    ExponentFit,
    TailCurve,
    Localize,
    Mollify,
    VerifyKernel,
    VerifyCovariance,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Smallball => "smallball",
            Command::ExponentFit => "exponent-fit",
            Command::TailCurve => "tail-curve",
            Command::Localize => "localize",
            Command::Mollify => "mollify",
            Command::VerifyKernel => "verify-kernel",
            Command::VerifyCovariance => "verify-covariance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_x: usize,
    pub n_t: usize,
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_x: 32, n_t: 32, horizon: 0.01 }
    }
}

/// Initial profile presets, sampled at the grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum U0Preset {
    Zero,
    Constant { value: f64 },
    /// `amplitude · sin(2π mode x)`
    Sine { amplitude: f64, mode: u32 },
    /// `amplitude · cos(2π mode x)`
    Cosine { amplitude: f64, mode: u32 },
}

impl Default for U0Preset {
    fn default() -> Self {
        U0Preset::Zero
    }
}

impl U0Preset {
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        let tau = 2.0 * std::f64::consts::PI;
        grid.points()
            .into_iter()
            .map(|x| match *self {
                U0Preset::Zero => 0.0,
                U0Preset::Constant { value } => value,
                U0Preset::Sine { amplitude, mode } => amplitude * (tau * mode as f64 * x).sin(),
                U0Preset::Cosine { amplitude, mode } => amplitude * (tau * mode as f64 * x).cos(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventConfig {
    #[serde(flatten)]
    pub kind: EventKind,
    pub theta: f64,
    pub epsilons: Vec<f64>,
    pub metric: Metric,
    pub stride: usize,
    pub block_rows: Option<usize>,
    /// Skip the initial-profile hypothesis check.
    pub allow_any_u0: bool,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            kind: EventKind::SpatialSup,
            theta: 0.45,
            epsilons: vec![0.7, 0.75, 0.8, 0.85, 0.9],
            metric: Metric::default(),
            stride: 1,
            block_rows: None,
            allow_any_u0: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub statistic: TailStatistic,
    pub epsilon: f64,
    pub alpha: f64,
    pub a: f64,
    /// λ grid; defaults to 21 points from the median to the maximum sample.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self { statistic: TailStatistic::SupN, epsilon: 0.5, alpha: 1.0, a: 0.2, lambdas: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub betas: Vec<f64>,
    pub level: usize,
    pub max_level: usize,
    pub level_beta: f64,
    pub p: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self { betas: vec![1.0, 3.0, 5.0, 7.0, 9.0], level: 5, max_level: 7, level_beta: 4.0, p: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MollifyConfig {
    pub beta: f64,
    pub gamma: f64,
    pub ns: Vec<usize>,
}

impl Default for MollifyConfig {
    fn default() -> Self {
        Self { beta: 0.5, gamma: 0.5, ns: vec![4, 8, 16, 32] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceConfig {
    pub epsilon: f64,
    pub theta: f64,
    pub c0: f64,
    pub c1: f64,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self { epsilon: 0.4, theta: 0.35, c0: 1.0, c1: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub command: Command,
    pub grid: GridConfig,
    pub sigma: SigmaPreset,
    pub drift: Option<DriftPreset>,
    pub u0: U0Preset,
    pub event: EventConfig,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub replications: usize,
    /// Tilt horizon for importance sampling; defaults to the grid horizon.
    pub t1: Option<f64>,
    pub base_seed: u64,
    pub tail: TailConfig,
    pub localize: LocalizeConfig,
    pub mollify: MollifyConfig,
    pub covariance: CovarianceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: Command::VerifyKernel,
            grid: GridConfig::default(),
            sigma: SigmaPreset::Const { value: 1.0 },
            drift: None,
            u0: U0Preset::Zero,
            event: EventConfig::default(),
            method: Method::Plain,
            n: 1000,
            m: 1000,
            replications: 20,
            t1: None,
            base_seed: 0,
            tail: TailConfig::default(),
            localize: LocalizeConfig::default(),
            mollify: MollifyConfig::default(),
            covariance: CovarianceConfig::default(),
        }
    }
}

fn theta_ok(theta: f64) -> bool {
    theta > 0.0 && theta <= 0.5
}

fn epsilon_ok(eps: f64) -> bool {
    eps > 0.0 && eps < 1.0
}

impl ExperimentConfig {
    pub fn for_command(command: Command) -> Self {
        Self { command, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.grid.n_x, self.grid.n_t, self.grid.horizon)?)
    }

    /// All field errors at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, msg: String| errs.push(FieldError { field: field.to_string(), message: msg });
        if self.schema_version != SCHEMA_VERSION {
            bad("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        let g = &self.grid;
        if g.n_x < 8 || !g.n_x.is_power_of_two() {
            bad("grid.n_x", format!("must be a power of two ≥ 8, got {}", g.n_x));
        }
        if g.n_t < 1 {
            bad("grid.n_t", "must be at least 1".into());
        }
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            bad("grid.horizon", format!("must be positive, got {}", g.horizon));
        }
        if !theta_ok(self.event.theta) {
            bad("event.theta", format!("must lie in (0, 1/2], got {}", self.event.theta));
        }
        if let Some(e) = self.event.epsilons.iter().find(|&&e| !epsilon_ok(e)) {
            bad("event.epsilons", format!("each epsilon must lie in (0, 1), got {e}"));
        }
        if self.event.stride == 0 {
            bad("event.stride", "must be at least 1".into());
        }
        if let Err(e) = self.sigma.build::<f64>() {
            bad("sigma", e.to_string());
        }
        if let Some(d) = &self.drift {
            if let Err(e) = d.build::<f64>() {
                bad("drift", e.to_string());
            }
        }
        match self.command {
            Command::Smallball | Command::ExponentFit => {
                if self.event.epsilons.is_empty() {
                    bad("event.epsilons", "at least one epsilon is required".into());
                }
                if self.command == Command::ExponentFit && self.event.epsilons.len() < 4 {
                    bad("event.epsilons", "exponent fit needs at least 4 epsilons".into());
                }
                match self.method {
                    Method::Splitting => {
                        if self.m < 2 {
                            bad("m", "splitting needs m ≥ 2".into());
                        }
                        if self.replications < 1 {
                            bad("replications", "must be at least 1".into());
                        }
                    }
                    _ => {
                        if self.n < 100 {
                            bad("n", format!("need at least 100 samples, got {}", self.n));
                        }
                    }
                }
            }
            Command::TailCurve => {
                let t = &self.tail;
                if !epsilon_ok(t.epsilon) {
                    bad("tail.epsilon", format!("must lie in (0, 1), got {}", t.epsilon));
                }
                if !(t.alpha > 0.0) {
                    bad("tail.alpha", "must be positive".into());
                }
                if self.n < 100 {
                    bad("n", format!("need at least 100 samples, got {}", self.n));
                }
            }
            Command::Localize => {
                let l = &self.localize;
                if l.betas.iter().any(|&b| !(b > 0.0)) {
                    bad("localize.betas", "betas must be positive".into());
                }
                if !(l.p >= 2.0) {
                    bad("localize.p", "moment order must be at least 2".into());
                }
                if self.n < 2 {
                    bad("n", "need at least 2 samples".into());
                }
            }
            Command::Mollify => {
                let m = &self.mollify;
                if !(m.beta > 0.0 && m.beta <= 1.0) {
                    bad("mollify.beta", format!("must lie in (0, 1], got {}", m.beta));
                }
                if !(m.gamma > 0.0 && m.gamma <= 1.0) {
                    bad("mollify.gamma", format!("must lie in (0, 1], got {}", m.gamma));
                }
                if m.ns.len() < 2 || m.ns.contains(&0) {
                    bad("mollify.ns", "need at least two positive n".into());
                }
            }
            Command::VerifyCovariance => {
                let c = &self.covariance;
                if !theta_ok(c.theta) {
                    bad("covariance.theta", format!("must lie in (0, 1/2], got {}", c.theta));
                }
                if !epsilon_ok(c.epsilon) {
                    bad("covariance.epsilon", format!("must lie in (0, 1), got {}", c.epsilon));
                }
                if !(c.c0 > 0.0 && c.c1 > 0.0) {
                    bad("covariance.c1", "c0 and c1 must be positive".into());
                }
            }
            Command::Simulate | Command::VerifyKernel => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(errs))
        }
    }
}
