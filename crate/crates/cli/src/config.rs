//! JSON experiment configurations: strict schemas, early validation.
//!
//! A configuration file has four top-level fields:
//!
//! ```json
//! {
//!   "experiment": "counterexample",
//!   "master_seed": 1,
//!   "out_dir": "results/counterexample",
//!   "params": { ... }
//! }
//! ```
//!
//! `params` is a kind-specific block; unknown fields anywhere are rejected
//! before any computation starts.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

/// Harness-level failure classification, mapped to process exit codes by the
/// binary: configuration/input errors exit 2, criterion failures exit 1.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparsable, schema-invalid, or physically invalid input;
    /// also raised when an engine rejects the run's parameters.
    Config(String),
    /// Filesystem failure while writing outputs.
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(msg) => write!(f, "output error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<splitsde::Error> for CliError {
    fn from(err: splitsde::Error) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: String,
    master_seed: u64,
    #[serde(default)]
    out_dir: Option<String>,
    params: serde_json::Value,
}

fn default_true() -> bool {
    true
}

fn default_horizon_one() -> f64 {
    1.0
}

fn default_counterexample_tol() -> f64 {
    1e-12
}

fn default_identity_paths() -> u64 {
    16
}

fn default_identity_tol() -> f64 {
    1e-10
}

fn default_min_ess() -> f64 {
    100.0
}

fn default_bootstrap() -> usize {
    200
}

fn default_ks_slack_se() -> f64 {
    2.0
}

fn default_floor_factor() -> f64 {
    2.0
}

fn default_rate_alpha() -> f64 {
    0.01
}

fn default_rate_delta() -> f64 {
    1.0
}

fn default_rate_rel_tol() -> f64 {
    0.0025
}

/// Convergence measurement of matrix-SDE splitting schemes on a named
/// benchmark system.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConvergeParams {
    /// One of the built-in benchmark systems; see `splitsde-cli list`.
    pub system_id: String,
    /// Scheme labels, e.g. `"euler-maruyama"`, `"trotter-piecewise"`.
    pub schemes: Vec<String>,
    /// Step counts; each must be a power of two ≤ `2^fine_level`.
    pub n_values: Vec<usize>,
    pub paths: u64,
    /// Dyadic refinement level of the coupled reference lattice.
    pub fine_level: u32,
    /// Optional window for the fitted log-log MSE slope of every scheme.
    #[serde(default)]
    pub slope_min: Option<f64>,
    #[serde(default)]
    pub slope_max: Option<f64>,
    /// Require MSE(2n) < MSE(n) at every consecutive pair (default on).
    #[serde(default = "default_true")]
    pub require_monotone: bool,
    /// For commuting systems: bound on the per-path sup deviation of each
    /// scheme from the closed-form flow.
    #[serde(default)]
    pub exactness_tol: Option<f64>,
}

/// The scalar split-product counterexample: the square of the one-factor
/// noise flow per step lands on `e^{t}` times the true solution, exactly,
/// for every path and every step count.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleParams {
    pub n_values: Vec<usize>,
    pub paths: u64,
    #[serde(default = "default_horizon_one")]
    pub horizon: f64,
    #[serde(default = "default_counterexample_tol")]
    pub tolerance: f64,
}

/// Mean-squared-norm preservation of the conservative grid product formula.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SseMartingaleParams {
    pub lambda: f64,
    pub horizon: f64,
    pub grid_half_width: f64,
    pub grid_points: usize,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
    pub sigma: f64,
    /// Step counts in increasing order; the bias comparison runs between the
    /// first and the last.
    pub n_values: Vec<usize>,
    pub paths: u64,
    #[serde(default = "default_true")]
    pub include_h: bool,
}

/// Mean-square growth of the raw (uncorrected) grid noise flow on the
/// indicator of `[0, 1]`, against the closed-form integral, plus the
/// conservative flow's unit-norm counterpart.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SseGrowthParams {
    pub grid_half_width: f64,
    pub grid_points: usize,
    pub n: usize,
    pub paths: u64,
    #[serde(default = "default_horizon_one")]
    pub horizon: f64,
}

/// Exact discrete/continuous equivalence with the kinetic factor off and the
/// linked scaling `μ = 2λ/α`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseEquivalenceParams {
    pub lambda: f64,
    pub alpha: f64,
    pub horizon: f64,
    pub grid_half_width: f64,
    pub grid_points: usize,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
    pub sigma: f64,
    pub paths: u64,
    /// Continuous-model step count (power of two, ≥ number of hits).
    pub n: usize,
    /// Paths checked for the pathwise wavefunction identity.
    #[serde(default = "default_identity_paths")]
    pub identity_paths: u64,
    #[serde(default = "default_identity_tol")]
    pub identity_tol: f64,
    /// Required effective sample size of the first hit's weights.
    #[serde(default = "default_min_ess")]
    pub min_ess: f64,
}

/// Scaling-limit study: discrete-model runs at decreasing localization
/// sharpness against one fine continuous reference, with bootstrap noise
/// floors.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumLimitParams {
    pub lambda: f64,
    pub horizon: f64,
    /// Strictly decreasing; each `α` runs at rate `μ = 2λ/α`.
    pub alphas: Vec<f64>,
    pub paths: u64,
    #[serde(default = "default_true")]
    pub include_h: bool,
    pub grid_half_width: f64,
    pub grid_points: usize,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
    pub sigma: f64,
    pub reference_steps: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// SE multiples of slack allowed in the non-increase comparison.
    #[serde(default = "default_ks_slack_se")]
    pub ks_slack_se: f64,
    /// The final level's KS must stay below this multiple of the
    /// same-distribution noise floor.
    #[serde(default = "default_floor_factor")]
    pub floor_factor: f64,
}

/// Two-point decoherence oracle for the kinetic-free continuous model, plus
/// the discrete model's exact-vs-linearized decoherence rate.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladCheckParams {
    pub lambda: f64,
    pub horizon: f64,
    pub grid_half_width: f64,
    pub grid_points: usize,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
    pub sigma: f64,
    pub paths: u64,
    pub n: usize,
    /// Grid-node pairs `(x, y)` to compare.
    pub pairs: Vec<[f64; 2]>,
    #[serde(default = "default_rate_alpha")]
    pub rate_alpha: f64,
    #[serde(default = "default_rate_delta")]
    pub rate_delta: f64,
    #[serde(default = "default_rate_rel_tol")]
    pub rate_rel_tol: f64,
}

/// One parsed, schema-valid experiment.
#[derive(Clone, Debug)]
pub enum Experiment {
    MatrixConverge(MatrixConvergeParams),
    Counterexample(CounterexampleParams),
    SseMartingale(SseMartingaleParams),
    SseGrowth(SseGrowthParams),
    CollapseEquivalence(CollapseEquivalenceParams),
    ContinuumLimit(ContinuumLimitParams),
    LindbladCheck(LindbladCheckParams),
}

/// Fully parsed configuration: kind, typed parameters, seed, output hint.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub kind: String,
    pub experiment: Experiment,
    pub master_seed: u64,
    pub out_dir: Option<String>,
}

fn parse_params<T: serde::de::DeserializeOwned>(
    kind: &str,
    value: serde_json::Value,
) -> CliResult<T> {
    serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("invalid parameters for '{kind}': {e}")))
}

fn require_dyadic(label: &str, values: &[usize]) -> CliResult<()> {
    if values.is_empty() {
        return Err(CliError::Config(format!("{label} must not be empty")));
    }
    for &n in values {
        if n < 2 || !n.is_power_of_two() {
            return Err(CliError::Config(format!(
                "{label} entries must be powers of two ≥ 2, got {n}"
            )));
        }
    }
    Ok(())
}

fn require_positive(label: &str, value: f64) -> CliResult<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(CliError::Config(format!(
            "{label} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

fn require_nonnegative(label: &str, value: f64) -> CliResult<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(CliError::Config(format!(
            "{label} must be nonnegative and finite, got {value}"
        )));
    }
    Ok(())
}

fn require_paths(paths: u64) -> CliResult<()> {
    if paths < 2 {
        return Err(CliError::Config(format!(
            "paths must be at least 2 for error estimates, got {paths}"
        )));
    }
    Ok(())
}

fn validate(config: &LoadedConfig) -> CliResult<()> {
    match &config.experiment {
        Experiment::MatrixConverge(p) => {
            require_dyadic("n_values", &p.n_values)?;
            require_paths(p.paths)?;
            if p.schemes.is_empty() {
                return Err(CliError::Config("schemes must not be empty".into()));
            }
            if p.fine_level == 0 || p.fine_level > 26 {
                return Err(CliError::Config(format!(
                    "fine_level must be in 1..=26, got {}",
                    p.fine_level
                )));
            }
            for &n in &p.n_values {
                if n > (1usize << p.fine_level) {
                    return Err(CliError::Config(format!(
                        "step count {n} exceeds the reference lattice 2^{}",
                        p.fine_level
                    )));
                }
            }
            match (p.slope_min, p.slope_max) {
                (Some(lo), Some(hi)) if lo >= hi => {
                    return Err(CliError::Config(format!(
                        "slope window is empty: [{lo}, {hi}]"
                    )));
                }
                _ => {}
            }
            if let Some(tol) = p.exactness_tol {
                require_positive("exactness_tol", tol)?;
            }
        }
        Experiment::Counterexample(p) => {
            require_dyadic("n_values", &p.n_values)?;
            require_paths(p.paths)?;
            require_positive("horizon", p.horizon)?;
            require_positive("tolerance", p.tolerance)?;
        }
        Experiment::SseMartingale(p) => {
            require_dyadic("n_values", &p.n_values)?;
            require_paths(p.paths)?;
            require_nonnegative("lambda", p.lambda)?;
            require_positive("horizon", p.horizon)?;
            require_positive("sigma", p.sigma)?;
            require_positive("grid_half_width", p.grid_half_width)?;
        }
        Experiment::SseGrowth(p) => {
            require_dyadic("n", std::slice::from_ref(&p.n))?;
            require_paths(p.paths)?;
            require_positive("horizon", p.horizon)?;
            if p.grid_half_width <= 1.0 {
                return Err(CliError::Config(format!(
                    "grid_half_width must exceed 1 so the box covers the unit-interval source, got {}",
                    p.grid_half_width
                )));
            }
        }
        Experiment::CollapseEquivalence(p) => {
            require_dyadic("n", std::slice::from_ref(&p.n))?;
            require_paths(p.paths)?;
            require_positive("lambda", p.lambda)?;
            require_positive("alpha", p.alpha)?;
            require_positive("horizon", p.horizon)?;
            require_positive("sigma", p.sigma)?;
            require_positive("identity_tol", p.identity_tol)?;
            require_positive("min_ess", p.min_ess)?;
            if p.identity_paths == 0 {
                return Err(CliError::Config(
                    "identity_paths must be at least 1".into(),
                ));
            }
        }
        Experiment::ContinuumLimit(p) => {
            require_dyadic("reference_steps", std::slice::from_ref(&p.reference_steps))?;
            require_paths(p.paths)?;
            require_positive("lambda", p.lambda)?;
            require_positive("horizon", p.horizon)?;
            require_positive("sigma", p.sigma)?;
            require_positive("ks_slack_se", p.ks_slack_se)?;
            require_positive("floor_factor", p.floor_factor)?;
            if p.alphas.len() < 2 {
                return Err(CliError::Config(
                    "alphas needs at least two levels for the trend comparison".into(),
                ));
            }
            for &a in &p.alphas {
                require_positive("alpha", a)?;
            }
        }
        Experiment::LindbladCheck(p) => {
            require_dyadic("n", std::slice::from_ref(&p.n))?;
            require_paths(p.paths)?;
            require_nonnegative("lambda", p.lambda)?;
            require_positive("horizon", p.horizon)?;
            require_positive("sigma", p.sigma)?;
            require_positive("rate_alpha", p.rate_alpha)?;
            require_nonnegative("rate_delta", p.rate_delta)?;
            require_positive("rate_rel_tol", p.rate_rel_tol)?;
            if p.pairs.is_empty() {
                return Err(CliError::Config("pairs must not be empty".into()));
            }
        }
    }
    Ok(())
}

/// Parses and validates a configuration from JSON text.
pub fn parse_config(text: &str) -> CliResult<LoadedConfig> {
    let file: ConfigFile = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("invalid configuration JSON: {e}")))?;
    let experiment = match file.experiment.as_str() {
        "matrix-converge" => {
            Experiment::MatrixConverge(parse_params(&file.experiment, file.params)?)
        }
        "counterexample" => {
            Experiment::Counterexample(parse_params(&file.experiment, file.params)?)
        }
        "sse-martingale" => {
            Experiment::SseMartingale(parse_params(&file.experiment, file.params)?)
        }
        "sse-growth" => Experiment::SseGrowth(parse_params(&file.experiment, file.params)?),
        "collapse-equivalence" => {
            Experiment::CollapseEquivalence(parse_params(&file.experiment, file.params)?)
        }
        "continuum-limit" => {
            Experiment::ContinuumLimit(parse_params(&file.experiment, file.params)?)
        }
        "lindblad-check" => {
            Experiment::LindbladCheck(parse_params(&file.experiment, file.params)?)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown experiment kind '{other}'; run `splitsde-cli list` for the catalog"
            )));
        }
    };
    let config = LoadedConfig {
        kind: file.experiment,
        experiment,
        master_seed: file.master_seed,
        out_dir: file.out_dir,
    };
    validate(&config)?;
    Ok(config)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> CliResult<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
