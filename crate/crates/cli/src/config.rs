//! TOML scenario configuration: parsing, defaults and validation.
//!
//! A config names one scenario from the registry, a box domain, grid sizes,
//! a master seed and an ordered list of experiment blocks. Unknown keys are
//! rejected everywhere.

// `!(a < b)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use roughsde::geometry::{check_integrability, CoefficientField, Usage};
use roughsde::scenarios::{self, PiecewisePoly, Tabulated, ThresholdOu};
use roughsde::{BoundedDomain, Recording};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

fn default_horizon() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_sigma() -> f64 {
    1.0
}
fn default_exponent() -> f64 {
    4.0
}
fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Time horizon `T`.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Lyapunov candidate used by the `lyapunov` blocks.
    #[serde(default)]
    pub lyapunov_function: LyapunovChoice,
    pub scenario: ScenarioSpec,
    pub domain: DomainSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, rename = "experiment", skip_serializing_if = "Vec::is_empty")]
    pub experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovChoice {
    /// `1 + |x|^2`.
    #[default]
    OnePlusQuadratic,
    /// `|x|^2`.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    ThresholdOu {
        thetas: Vec<f64>,
        betas: Vec<f64>,
        alphas: Vec<f64>,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_exponent")]
        p: f64,
        #[serde(default = "default_exponent")]
        q: f64,
    },
    PiecewisePoly {
        thetas: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_exponent")]
        p: f64,
        #[serde(default = "default_exponent")]
        q: f64,
    },
    Custom {
        nodes: Vec<f64>,
        drift: Vec<f64>,
        sigma: Vec<f64>,
        kappa: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_exponent")]
        p: f64,
        #[serde(default = "default_exponent")]
        q: f64,
    },
    /// `dX = X^3 dt + dB`.
    Cubic {
        #[serde(default = "default_exponent")]
        p: f64,
        #[serde(default = "default_exponent")]
        q: f64,
    },
    /// `dX = (1 + sin(X)/2) dB`.
    Sinusoidal {
        #[serde(default = "default_exponent")]
        p: f64,
        #[serde(default = "default_exponent")]
        q: f64,
    },
}

impl ScenarioSpec {
    pub fn dim(&self) -> usize {
        1
    }

    pub fn exponents(&self) -> (f64, f64) {
        match *self {
            ScenarioSpec::ThresholdOu { p, q, .. }
            | ScenarioSpec::PiecewisePoly { p, q, .. }
            | ScenarioSpec::Custom { p, q, .. }
            | ScenarioSpec::Cubic { p, q }
            | ScenarioSpec::Sinusoidal { p, q } => (p, q),
        }
    }

    fn thresholds(&self) -> Option<&[f64]> {
        match self {
            ScenarioSpec::ThresholdOu { thetas, .. } | ScenarioSpec::PiecewisePoly { thetas, .. } => Some(thetas),
            _ => None,
        }
    }

    pub fn field(&self) -> roughsde::Result<CoefficientField> {
        match self.clone() {
            ScenarioSpec::ThresholdOu {
                thetas,
                betas,
                alphas,
                sigma,
                p,
                q,
            } => ThresholdOu {
                thetas,
                betas,
                alphas,
                sigma,
                p,
                q,
            }
            .field(),
            ScenarioSpec::PiecewisePoly {
                thetas,
                coefficients,
                sigma,
                p,
                q,
            } => PiecewisePoly {
                thetas,
                coefficients,
                sigma,
                p,
                q,
            }
            .field(),
            ScenarioSpec::Custom {
                nodes,
                drift,
                sigma,
                kappa,
                alpha,
                p,
                q,
            } => Tabulated {
                nodes,
                drift,
                sigma,
                kappa,
                alpha,
                p,
                q,
            }
            .field(),
            ScenarioSpec::Cubic { p, q } => scenarios::cubic_explosive(p, q),
            ScenarioSpec::Sinusoidal { p, q } => scenarios::sinusoidal_noise(p, q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainSpec {
    pub fn build(&self) -> roughsde::Result<BoundedDomain> {
        BoundedDomain::new(self.lo.clone(), self.hi.clone())
    }
}

fn default_nodes() -> usize {
    201
}
fn default_time_nodes() -> usize {
    1001
}

/// Spatial nodes per axis and time nodes of the PDE grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_time_nodes")]
    pub time_nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
            time_nodes: default_time_nodes(),
        }
    }
}

/// Scalar maps a config can name, applied per coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Zero,
    One,
    Identity,
    Sin,
    Cos,
}

impl Profile {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::One => 1.0,
            Profile::Identity => x,
            Profile::Sin => x.sin(),
            Profile::Cos => x.cos(),
        }
    }
}

/// Test function `f(t, x)` of the occupation-time check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Zero,
    One,
    /// `|x|` (Euclidean norm).
    Abs,
    /// `1{x_0 > threshold}`.
    IndicatorAbove { threshold: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::One => 1.0,
            TestFunction::Abs => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            TestFunction::IndicatorAbove { threshold } => {
                if x[0] > *threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Nonnegative path functional `beta(t, x)` of the exponential-moment check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Zero,
    One,
    /// `|sigma'(x)|^2` by central differences of the diffusion.
    #[default]
    SigmaDerivativeSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartSpec {
    pub time: f64,
    pub states: usize,
    pub paths_per_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub paths: usize,
    pub x0: Vec<f64>,
    pub dt: f64,
}

fn zero_point() -> Vec<f64> {
    vec![0.0]
}
fn default_mollification() -> usize {
    0
}
fn default_transform_nodes() -> usize {
    161
}
fn default_pde_dt() -> f64 {
    2.5e-4
}
fn default_round_trips() -> usize {
    1000
}
fn default_theta_samples() -> usize {
    1000
}
fn default_true() -> bool {
    true
}
fn default_norm_nodes() -> usize {
    201
}
fn default_norm_time_steps() -> usize {
    100
}
fn default_p0() -> Vec<f64> {
    vec![1.0]
}
fn default_region_radius() -> f64 {
    10.0
}
fn default_spacing() -> f64 {
    0.01
}
fn default_lyapunov_paths() -> usize {
    1000
}
fn default_schedule() -> Vec<f64> {
    vec![5.0, 10.0, 20.0, 40.0]
}
fn default_radii() -> Vec<f64> {
    vec![5.0, 10.0]
}
fn default_sizes() -> Vec<usize> {
    vec![1_000, 10_000, 100_000]
}
fn default_source() -> f64 {
    1.0
}
fn default_recording() -> Recording {
    Recording::Endpoints
}

/// One experiment block; blocks run in the order given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Stopped Euler-Maruyama paths on the domain, or globalized paths over
    /// the `global` radius schedule when it is set.
    Simulate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        paths: usize,
        #[serde(default = "zero_point")]
        x0: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        global: Option<Vec<f64>>,
        /// With `Full` or `Every`, trajectories of the first `trajectories`
        /// paths are written as well.
        #[serde(default = "default_recording")]
        recording: Recording,
        #[serde(default)]
        trajectories: usize,
    },
    /// Backward Dirichlet problem with constant source `f`.
    Pde {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_source")]
        source: f64,
        #[serde(default = "default_mollification")]
        mollification: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        monte_carlo: Option<MonteCarloSpec>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        decay_times: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
    /// Transform-based simulation, optionally compared with direct paths.
    Zvonkin {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        paths: usize,
        #[serde(default = "zero_point")]
        x0: Vec<f64>,
        #[serde(default = "default_transform_nodes")]
        nodes: usize,
        #[serde(default = "default_pde_dt")]
        pde_dt: f64,
        #[serde(default = "default_true")]
        compare_direct: bool,
        #[serde(default = "default_round_trips")]
        round_trips: usize,
        #[serde(default = "default_theta_samples")]
        theta_samples: usize,
    },
    Krylov {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "zero_point")]
        x0: Vec<f64>,
        intervals: Vec<(f64, f64)>,
        test_function: TestFunction,
        p: f64,
        q: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        paths: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
        #[serde(default = "default_norm_nodes")]
        norm_nodes: usize,
        #[serde(default = "default_norm_time_steps")]
        norm_time_steps: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        restart: Option<RestartSpec>,
    },
    Stability {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "zero_point")]
        x0: Vec<f64>,
        eps: Vec<f64>,
        #[serde(default = "default_p0")]
        p0: Vec<f64>,
        paths: usize,
        #[serde(default)]
        drift_direction: Profile,
        #[serde(default)]
        diffusion_direction: Profile,
        p: f64,
        q: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
        #[serde(default = "default_norm_nodes")]
        norm_nodes: usize,
        #[serde(default = "default_norm_time_steps")]
        norm_time_steps: usize,
    },
    /// Generator inequality, supermartingale and explosion-bound checks.
    Lyapunov {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "zero_point")]
        x0: Vec<f64>,
        /// Constant `C`; the fitted `C_hat` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constant: Option<f64>,
        /// Extra constants at which the supermartingale check is repeated
        /// as multiples of `C` (e.g. 0.5 for a negative test).
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        constant_factors: Vec<f64>,
        #[serde(default = "default_region_radius")]
        region_radius: f64,
        #[serde(default = "default_spacing")]
        spacing: f64,
        #[serde(default = "default_lyapunov_paths")]
        paths: usize,
        #[serde(default = "default_schedule")]
        schedule: Vec<f64>,
        #[serde(default = "default_radii")]
        explosion_radii: Vec<f64>,
        /// Supermartingale ladder (grid times); about 20 evenly spaced grid
        /// times when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        check_times: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
    },
    ExpMoment {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "zero_point")]
        x0: Vec<f64>,
        lambdas: Vec<f64>,
        #[serde(default = "default_sizes")]
        sizes: Vec<usize>,
        #[serde(default)]
        functional: Functional,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        widths: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate { .. } => "simulate",
            Experiment::Pde { .. } => "pde",
            Experiment::Zvonkin { .. } => "zvonkin",
            Experiment::Krylov { .. } => "krylov",
            Experiment::Stability { .. } => "stability",
            Experiment::Lyapunov { .. } => "lyapunov",
            Experiment::ExpMoment { .. } => "exp_moment",
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Experiment::Simulate { name, .. }
            | Experiment::Pde { name, .. }
            | Experiment::Zvonkin { name, .. }
            | Experiment::Krylov { name, .. }
            | Experiment::Stability { name, .. }
            | Experiment::Lyapunov { name, .. }
            | Experiment::ExpMoment { name, .. } => name.as_deref(),
        }
    }
}

/// Read and validate a config file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// Parse and validate config text.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let table: toml::Table = toml::from_str(text)?;
    if !table.contains_key("seed") {
        return Err(ConfigError::MissingSeed);
    }
    let config: ScenarioConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Check every invariant that does not need a simulation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(ConfigError::invalid("dt", format!("must lie in (0, horizon], got {}", self.dt)));
        }
        if let Some(th) = self.scenario.thresholds() {
            if th.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(ConfigError::ThresholdsNotIncreasing(th.to_vec()));
            }
        }
        self.scenario
            .field()
            .map_err(|e| ConfigError::invalid("scenario", e.to_string()))?;
        let domain = self.domain.build().map_err(|e| ConfigError::invalid("domain", e.to_string()))?;
        let d = self.scenario.dim();
        if domain.dim() != d {
            return Err(ConfigError::invalid(
                "domain",
                format!("dimension {} does not match the scenario dimension {d}", domain.dim()),
            ));
        }
        if self.grid.nodes < 3 || self.grid.time_nodes < 2 {
            return Err(ConfigError::invalid("grid", "need at least 3 nodes and 2 time nodes"));
        }
        for (i, block) in self.experiments.iter().enumerate() {
            let tag = format!("experiment {} ({})", i + 1, block.kind());
            let hyp = |p: f64, q: f64, usage: Usage| -> Result<(), ConfigError> {
                check_integrability(d, p, q, usage).map_err(|_| ConfigError::Hypothesis {
                    block: tag.clone(),
                    index: d as f64 / p + 2.0 / q,
                    dim: d,
                    p,
                    q,
                    bound: usage.bound(),
                })
            };
            let check_point = |x0: &[f64]| -> Result<(), ConfigError> {
                if x0.len() != d {
                    return Err(ConfigError::invalid(format!("{tag}.x0"), format!("needs {d} coordinates")));
                }
                Ok(())
            };
            match block {
                Experiment::Simulate { paths, x0, global, .. } => {
                    check_point(x0)?;
                    if *paths == 0 {
                        return Err(ConfigError::invalid(format!("{tag}.paths"), "must be positive"));
                    }
                    if let Some(s) = global {
                        if s.is_empty() || s.windows(2).any(|w| !(w[0] < w[1])) {
                            return Err(ConfigError::invalid(
                                format!("{tag}.global"),
                                "radius schedule must be nonempty and increasing",
                            ));
                        }
                    }
                }
                Experiment::Pde { monte_carlo, .. } => {
                    if let Some(mc) = monte_carlo {
                        check_point(&mc.x0)?;
                    }
                }
                Experiment::Zvonkin { x0, .. } => {
                    check_point(x0)?;
                    let (p, q) = self.scenario.exponents();
                    hyp(p, q, Usage::Transform)?;
                }
                Experiment::Krylov { x0, p, q, .. } => {
                    check_point(x0)?;
                    hyp(*p, *q, Usage::Krylov)?;
                }
                Experiment::Stability { x0, p, q, p0, .. } => {
                    check_point(x0)?;
                    hyp(*p, *q, Usage::Transform)?;
                    if p0.iter().any(|v| !(*v > 0.0)) {
                        return Err(ConfigError::invalid(format!("{tag}.p0"), "moment orders must be positive"));
                    }
                }
                Experiment::Lyapunov {
                    x0,
                    schedule,
                    explosion_radii,
                    ..
                } => {
                    check_point(x0)?;
                    if let Some(r) = explosion_radii.iter().find(|r| !schedule.contains(r)) {
                        return Err(ConfigError::invalid(
                            format!("{tag}.explosion_radii"),
                            format!("radius {r} is not in the schedule {schedule:?}"),
                        ));
                    }
                }
                Experiment::ExpMoment { x0, .. } => check_point(x0)?,
            }
        }
        Ok(())
    }
}
