//! Command-line driver. Flags and config-file entries share one key space:
//! every flag is applied as `key = value` on top of the file, so both go
//! through the same validation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::estimators::scalar_mse_curves;
use crate::estimators::{
    bayes_posterior, eb_mse, least_squares, marginal_estimate, marginal_mse, EstimatorError, Prior,
};
use crate::experiments::log_grid;
use crate::experiments::{
    format_table, run_scenario, save_aggregates_csv, save_reports_csv, ExperimentError,
    ScenarioModel, ScenarioResult, ScenarioSpec, Sigma2Source,
};
use crate::filters::{
    batch_sigma2, recover_prior, run_backward, run_forward, FilterError, FilterTrace,
    RecoveredPrior, TerminalCondition,
};
use crate::model::{
    build_regressors, check_stability, fmt_f64, simulate_fixed, simulate_varying, ArxSpec, Dataset,
    ModelError, Orientation, ParamWalkSpec,
};
use crate::numerics::{SymMatrix, Vector};
use crate::rng::{self, STREAM_INPUT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;
pub const EXIT_FILE: i32 = 5;
pub const EXIT_SCENARIO: i32 = 6;

const AFTER_HELP: &str = "\
Exit codes:
  0  success
  2  invalid flags or config
  3  unstable model with a nonzero burn-in
  4  rank deficiency, missing hyperparameters or a failed estimate
  5  file errors
  6  a comparison scenario failed in every replicate

Config file (--config): flat `key = value` lines under [simulate], [fit],
[compare] and [curves] headers; `#` starts a comment and lists are
comma-separated. Keys are the long flag names with `_` for `-`, except
`--n-order`/`--m-order` (`n`/`m`) and `--N` (`samples`). Flags override the
file and unknown keys are rejected. Example:

  [compare]
  replicates = 100
  lambdas = 0,0.01,0.02
  pi_scales = 0.01,0.08
  sample_sizes = 50,100,200";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn estimation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ESTIMATION,
            message: message.into(),
        }
    }

    pub fn file(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FILE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::Io(_) | ModelError::Csv(_) | ModelError::Format(_) => EXIT_FILE,
            ModelError::UnstableModel { .. } => EXIT_UNSTABLE,
            ModelError::InsufficientData(_) => EXIT_ESTIMATION,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        let code = match e {
            EstimatorError::DimensionMismatch { .. } | EstimatorError::BadVariance(_) => EXIT_USAGE,
            EstimatorError::PriorNotPositiveDefinite { .. } => EXIT_USAGE,
            _ => EXIT_ESTIMATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        let code = match e {
            FilterError::DimensionMismatch { .. } | FilterError::WrongOrientation(..) => EXIT_USAGE,
            _ => EXIT_ESTIMATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidSpec(m) => CliError::usage(m),
            ExperimentError::Model(e) => e.into(),
            ExperimentError::Estimator(e) => e.into(),
            ExperimentError::Filter(e) => e.into(),
            ExperimentError::Numerics(e) => CliError::estimation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::file(e.to_string())
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{key}: `{v}` is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{key}: `{v}` is not a non-negative integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{key}: `{v}` is not a non-negative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::usage(format!("{key}: `{v}` is not a boolean"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_f64(key, x)).collect()
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>, CliError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_usize(key, x)).collect()
}

fn parse_opt<T>(
    v: &str,
    f: impl FnOnce(&str) -> Result<T, CliError>,
) -> Result<Option<T>, CliError> {
    if v.trim().is_empty() {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn list_text(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn usize_list_text(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn opt_text<T>(v: &Option<T>, f: impl Fn(&T) -> String) -> String {
    v.as_ref().map(f).unwrap_or_default()
}

fn unknown(section: &str, key: &str) -> CliError {
    CliError::usage(format!("unknown key `{key}` in [{section}]"))
}

/// Section of the config file.
trait Section {
    const NAME: &'static str;
    fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError>;
    fn entries(&self) -> Vec<(&'static str, String)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma2: f64,
    pub samples: usize,
    pub burn_in: usize,
    pub varying: bool,
    pub lambda: f64,
    pub decay: Vec<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let walk = ParamWalkSpec::default();
        Self {
            seed: 1,
            n: 2,
            m: 0,
            a: walk.mean,
            b: Vec::new(),
            sigma2: 1.0,
            samples: 200,
            burn_in: crate::model::DEFAULT_BURN_IN,
            varying: false,
            lambda: 0.0,
            decay: walk.decay,
        }
    }
}

impl Section for SimulateConfig {
    const NAME: &'static str = "simulate";

    fn apply(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = parse_u64(key, v)?,
            "n" => self.n = parse_usize(key, v)?,
            "m" => self.m = parse_usize(key, v)?,
            "a" => self.a = parse_list(key, v)?,
            "b" => self.b = parse_list(key, v)?,
            "sigma2" => self.sigma2 = parse_f64(key, v)?,
            "samples" => self.samples = parse_usize(key, v)?,
            "burn_in" => self.burn_in = parse_usize(key, v)?,
            "varying" => self.varying = parse_bool(key, v)?,
            "lambda" => self.lambda = parse_f64(key, v)?,
            "decay" => self.decay = parse_list(key, v)?,
            _ => return Err(unknown(Self::NAME, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("a", list_text(&self.a)),
            ("b", list_text(&self.b)),
            ("sigma2", self.sigma2.to_string()),
            ("samples", self.samples.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("varying", self.varying.to_string()),
            ("lambda", self.lambda.to_string()),
            ("decay", list_text(&self.decay)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ls,
    Marginal,
    Eb,
    ForwardKf,
    BackwardKf,
}

impl Method {
    fn parse(v: &str) -> Result<Self, CliError> {
        Ok(match v.trim() {
            "ls" => Method::Ls,
            "marginal" => Method::Marginal,
            "eb" => Method::Eb,
            "forward-kf" => Method::ForwardKf,
            "backward-kf" => Method::BackwardKf,
            other => {
                return Err(CliError::usage(format!(
                    "method: `{other}` is not one of ls, marginal, eb, forward-kf, backward-kf"
                )))
            }
        })
    }

    fn name(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Marginal => "marginal",
            Method::Eb => "eb",
            Method::ForwardKf => "forward-kf",
            Method::BackwardKf => "backward-kf",
        }
    }
}

/// Where the prior hyperparameters of `marginal` and `eb` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyper {
    Given,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Diffuse,
    Warm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub data: Option<String>,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub mu: Option<Vec<f64>>,
    pub sigma2: Option<f64>,
    pub pi: Option<Vec<f64>>,
    pub hyper: Hyper,
    pub theta0: Option<Vec<f64>>,
    pub terminal: Terminal,
    pub terminal_scale: f64,
    pub dof: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            data: None,
            method: Method::Ls,
            n: 2,
            m: 0,
            mu: None,
            sigma2: None,
            pi: None,
            hyper: Hyper::Given,
            theta0: None,
            terminal: Terminal::Diffuse,
            terminal_scale: crate::filters::DIFFUSE_TERMINAL_SCALE,
            dof: false,
        }
    }
}

impl Section for FitConfig {
    const NAME: &'static str = "fit";

    fn apply(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "data" => self.data = parse_opt(v, |s| Ok(s.trim().to_string()))?,
            "method" => self.method = Method::parse(v)?,
            "n" => self.n = parse_usize(key, v)?,
            "m" => self.m = parse_usize(key, v)?,
            "mu" => self.mu = parse_opt(v, |s| parse_list(key, s))?,
            "sigma2" => self.sigma2 = parse_opt(v, |s| parse_f64(key, s))?,
            "pi" => self.pi = parse_opt(v, |s| parse_list(key, s))?,
            "hyper" => {
                self.hyper = match v.trim() {
                    "given" => Hyper::Given,
                    "backward" => Hyper::Backward,
                    other => {
                        return Err(CliError::usage(format!(
                            "hyper: `{other}` is not given or backward"
                        )))
                    }
                }
            }
            "theta0" => self.theta0 = parse_opt(v, |s| parse_list(key, s))?,
            "terminal" => {
                self.terminal = match v.trim() {
                    "diffuse" => Terminal::Diffuse,
                    "warm" => Terminal::Warm,
                    other => {
                        return Err(CliError::usage(format!(
                            "terminal: `{other}` is not diffuse or warm"
                        )))
                    }
                }
            }
            "terminal_scale" => self.terminal_scale = parse_f64(key, v)?,
            "dof" => self.dof = parse_bool(key, v)?,
            _ => return Err(unknown(Self::NAME, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("data", self.data.clone().unwrap_or_default()),
            ("method", self.method.name().to_string()),
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("mu", opt_text(&self.mu, |v| list_text(v))),
            ("sigma2", opt_text(&self.sigma2, |v| v.to_string())),
            ("pi", opt_text(&self.pi, |v| list_text(v))),
            (
                "hyper",
                match self.hyper {
                    Hyper::Given => "given",
                    Hyper::Backward => "backward",
                }
                .to_string(),
            ),
            ("theta0", opt_text(&self.theta0, |v| list_text(v))),
            (
                "terminal",
                match self.terminal {
                    Terminal::Diffuse => "diffuse",
                    Terminal::Warm => "warm",
                }
                .to_string(),
            ),
            ("terminal_scale", self.terminal_scale.to_string()),
            ("dof", self.dof.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub seed: u64,
    pub a: Vec<f64>,
    pub sigma2: f64,
    pub decay: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub pi_scales: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub burn_in: usize,
    pub sigma2_source: Sigma2Source,
    pub curves: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        let walk = ParamWalkSpec::default();
        Self {
            seed: 2024,
            a: walk.mean,
            sigma2: 1.0,
            decay: walk.decay,
            lambdas: vec![0.0, 0.01, 0.02],
            pi_scales: vec![0.01, 0.08],
            sample_sizes: crate::experiments::DEFAULT_SAMPLE_SIZES.to_vec(),
            replicates: crate::experiments::DEFAULT_REPLICATES,
            burn_in: crate::model::DEFAULT_BURN_IN,
            sigma2_source: Sigma2Source::Backward,
            curves: false,
        }
    }
}

impl Section for CompareConfig {
    const NAME: &'static str = "compare";

    fn apply(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = parse_u64(key, v)?,
            "a" => self.a = parse_list(key, v)?,
            "sigma2" => self.sigma2 = parse_f64(key, v)?,
            "decay" => self.decay = parse_list(key, v)?,
            "lambdas" => self.lambdas = parse_list(key, v)?,
            "pi_scales" => self.pi_scales = parse_list(key, v)?,
            "sample_sizes" => self.sample_sizes = parse_usize_list(key, v)?,
            "replicates" => self.replicates = parse_usize(key, v)?,
            "burn_in" => self.burn_in = parse_usize(key, v)?,
            "sigma2_source" => {
                self.sigma2_source = match v.trim() {
                    "backward" => Sigma2Source::Backward,
                    "forward" => Sigma2Source::Forward,
                    other => {
                        return Err(CliError::usage(format!(
                            "sigma2_source: `{other}` is not backward or forward"
                        )))
                    }
                }
            }
            "curves" => self.curves = parse_bool(key, v)?,
            _ => return Err(unknown(Self::NAME, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("a", list_text(&self.a)),
            ("sigma2", self.sigma2.to_string()),
            ("decay", list_text(&self.decay)),
            ("lambdas", list_text(&self.lambdas)),
            ("pi_scales", list_text(&self.pi_scales)),
            ("sample_sizes", usize_list_text(&self.sample_sizes)),
            ("replicates", self.replicates.to_string()),
            ("burn_in", self.burn_in.to_string()),
            (
                "sigma2_source",
                match self.sigma2_source {
                    Sigma2Source::Backward => "backward",
                    Sigma2Source::Forward => "forward",
                }
                .to_string(),
            ),
            ("curves", self.curves.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvesConfig {
    pub theta0: f64,
    pub delta_sq: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub points: usize,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self {
            theta0: 0.9,
            delta_sq: 100.0,
            pi_min: 1e-4,
            pi_max: 1e2,
            points: 61,
        }
    }
}

impl Section for CurvesConfig {
    const NAME: &'static str = "curves";

    fn apply(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "theta0" => self.theta0 = parse_f64(key, v)?,
            "delta_sq" => self.delta_sq = parse_f64(key, v)?,
            "pi_min" => self.pi_min = parse_f64(key, v)?,
            "pi_max" => self.pi_max = parse_f64(key, v)?,
            "points" => self.points = parse_usize(key, v)?,
            _ => return Err(unknown(Self::NAME, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("theta0", self.theta0.to_string()),
            ("delta_sq", self.delta_sq.to_string()),
            ("pi_min", self.pi_min.to_string()),
            ("pi_max", self.pi_max.to_string()),
            ("points", self.points.to_string()),
        ]
    }
}

/// Parameters of every command, as read from a config file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub simulate: SimulateConfig,
    pub fit: FitConfig,
    pub compare: CompareConfig,
    pub curves: CurvesConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        CliError::usage(format!("line {lineno}: malformed section header"))
                    })?
                    .trim();
                match name {
                    SimulateConfig::NAME
                    | FitConfig::NAME
                    | CompareConfig::NAME
                    | CurvesConfig::NAME => section = Some(name.to_string()),
                    other => {
                        return Err(CliError::usage(format!(
                            "line {lineno}: unknown section [{other}]"
                        )))
                    }
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("line {lineno}: expected `key = value`")))?;
            let key = key.trim();
            let sec = section.clone().ok_or_else(|| {
                CliError::usage(format!("line {lineno}: `{key}` appears before any section"))
            })?;
            if let Some(prev) = seen.insert((sec.clone(), key.to_string()), lineno) {
                return Err(CliError::usage(format!(
                    "line {lineno}: `{key}` already set on line {prev}"
                )));
            }
            cfg.apply(&sec, key, value.trim())
                .map_err(|e| CliError::usage(format!("line {lineno}: {}", e.message)))?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), CliError> {
        match section {
            SimulateConfig::NAME => self.simulate.apply(key, value),
            FitConfig::NAME => self.fit.apply(key, value),
            CompareConfig::NAME => self.compare.apply(key, value),
            CurvesConfig::NAME => self.curves.apply(key, value),
            other => Err(CliError::usage(format!("unknown section [{other}]"))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut emit = |name: &str, entries: Vec<(&'static str, String)>| {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        };
        emit(SimulateConfig::NAME, self.simulate.entries());
        emit(FitConfig::NAME, self.fit.entries());
        emit(CompareConfig::NAME, self.compare.entries());
        emit(CurvesConfig::NAME, self.curves.entries());
        out
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::file(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ebarx",
    version,
    about = "Marginal and Empirical Bayes estimation of ARX models",
    after_help = AFTER_HELP
)]
struct Cli {
    /// RNG seed for simulate and compare.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (simulate, fit, curves) or directory (compare).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config file with [simulate], [fit], [compare] or [curves] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an ARX dataset (or an AR model with drifting coefficients).
    Simulate(SimulateArgs),
    /// Fit one estimator to a dataset CSV.
    Fit(FitArgs),
    /// Monte-Carlo comparison of the marginal and Empirical Bayes estimators.
    Compare(CompareArgs),
    /// Scalar MSE curves of both estimators over a prior-variance grid.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// AR order.
    #[arg(long = "n-order")]
    n_order: Option<String>,
    /// Input order.
    #[arg(long = "m-order")]
    m_order: Option<String>,
    /// AR coefficients, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// Input coefficients, comma-separated; the input is unit white noise.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long)]
    sigma2: Option<String>,
    /// Number of retained samples.
    #[arg(long = "N")]
    samples: Option<String>,
    #[arg(long = "burn-in")]
    burn_in: Option<String>,
    /// Let the AR coefficients drift around `a`; writes a `.theta.csv` sidecar.
    #[arg(long)]
    varying: bool,
    /// Standard deviation of the coefficient drift.
    #[arg(long)]
    lambda: Option<String>,
    /// Per-coefficient mean-reversion factors.
    #[arg(long)]
    decay: Option<String>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Dataset CSV written by `simulate`.
    #[arg(long)]
    data: Option<String>,
    /// ls, marginal, eb, forward-kf or backward-kf.
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "n-order")]
    n_order: Option<String>,
    #[arg(long = "m-order")]
    m_order: Option<String>,
    /// Prior mean (defaults to zero).
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Noise variance (defaults to the least squares residual variance).
    #[arg(long)]
    sigma2: Option<String>,
    /// Normalized prior variance: one value (scaled identity), p values
    /// (diagonal) or p*p values (row-major).
    #[arg(long, allow_hyphen_values = true)]
    pi: Option<String>,
    /// Hyperparameter source for marginal and eb: given or backward.
    #[arg(long)]
    hyper: Option<String>,
    /// True parameter; enables the MSE printout.
    #[arg(long, allow_hyphen_values = true)]
    theta0: Option<String>,
    /// Backward-filter start: diffuse or warm (forward pass first).
    #[arg(long)]
    terminal: Option<String>,
    #[arg(long = "terminal-scale")]
    terminal_scale: Option<String>,
    /// Use t - p in the batch residual variance.
    #[arg(long)]
    dof: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long)]
    sigma2: Option<String>,
    #[arg(long)]
    decay: Option<String>,
    /// Drift standard deviations, one scenario table each.
    #[arg(long)]
    lambdas: Option<String>,
    /// Initial prior scales `Π = π·I`.
    #[arg(long = "pi-scales")]
    pi_scales: Option<String>,
    #[arg(long = "sample-sizes")]
    sample_sizes: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long = "burn-in")]
    burn_in: Option<String>,
    /// backward or forward.
    #[arg(long = "sigma2-source")]
    sigma2_source: Option<String>,
    /// Emit the scalar curve grid instead of running scenarios.
    #[arg(long)]
    curves: bool,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[arg(long, allow_hyphen_values = true)]
    theta0: Option<String>,
    /// Regressor energy `Δ²`.
    #[arg(long = "delta-sq")]
    delta_sq: Option<String>,
    #[arg(long = "pi-min")]
    pi_min: Option<String>,
    #[arg(long = "pi-max")]
    pi_max: Option<String>,
    #[arg(long)]
    points: Option<String>,
}

fn overrides<S: Section>(
    target: &mut S,
    pairs: Vec<(&str, Option<String>)>,
) -> Result<(), CliError> {
    for (key, value) in pairs {
        if let Some(v) = value {
            target.apply(key, &v)?;
        }
    }
    Ok(())
}

fn flag(on: bool) -> Option<String> {
    on.then(|| "true".to_string())
}

struct Context<'a> {
    out: Option<PathBuf>,
    quiet: bool,
    stdout: &'a mut dyn Write,
}

impl Context<'_> {
    fn say(&mut self, text: &str) -> Result<(), CliError> {
        if !self.quiet {
            writeln!(self.stdout, "{text}")?;
        }
        Ok(())
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.map(|s| s.to_string());
    let mut ctx = Context {
        out: cli.out,
        quiet: cli.quiet,
        stdout,
    };
    match cli.command {
        Command::Simulate(a) => {
            overrides(
                &mut cfg.simulate,
                vec![
                    ("seed", seed),
                    ("n", a.n_order),
                    ("m", a.m_order),
                    ("a", a.a),
                    ("b", a.b),
                    ("sigma2", a.sigma2),
                    ("samples", a.samples),
                    ("burn_in", a.burn_in),
                    ("varying", flag(a.varying)),
                    ("lambda", a.lambda),
                    ("decay", a.decay),
                ],
            )?;
            cmd_simulate(&cfg.simulate, &mut ctx)
        }
        Command::Fit(a) => {
            overrides(
                &mut cfg.fit,
                vec![
                    ("data", a.data),
                    ("method", a.method),
                    ("n", a.n_order),
                    ("m", a.m_order),
                    ("mu", a.mu),
                    ("sigma2", a.sigma2),
                    ("pi", a.pi),
                    ("hyper", a.hyper),
                    ("theta0", a.theta0),
                    ("terminal", a.terminal),
                    ("terminal_scale", a.terminal_scale),
                    ("dof", flag(a.dof)),
                ],
            )?;
            cmd_fit(&cfg.fit, &mut ctx)
        }
        Command::Compare(a) => {
            overrides(
                &mut cfg.compare,
                vec![
                    ("seed", seed),
                    ("a", a.a),
                    ("sigma2", a.sigma2),
                    ("decay", a.decay),
                    ("lambdas", a.lambdas),
                    ("pi_scales", a.pi_scales),
                    ("sample_sizes", a.sample_sizes),
                    ("replicates", a.replicates),
                    ("burn_in", a.burn_in),
                    ("sigma2_source", a.sigma2_source),
                    ("curves", flag(a.curves)),
                ],
            )?;
            if cfg.compare.curves {
                cmd_curves(&cfg.curves, &mut ctx)
            } else {
                cmd_compare(&cfg.compare, &mut ctx)
            }
        }
        Command::Curves(a) => {
            overrides(
                &mut cfg.curves,
                vec![
                    ("theta0", a.theta0),
                    ("delta_sq", a.delta_sq),
                    ("pi_min", a.pi_min),
                    ("pi_max", a.pi_max),
                    ("points", a.points),
                ],
            )?;
            cmd_curves(&cfg.curves, &mut ctx)
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    format!(
        "[{}]",
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn fmt_matrix(m: &SymMatrix) -> String {
    let p = m.dim();
    let rows: Vec<String> = (0..p)
        .map(|i| fmt_vec(&(0..p).map(|j| m.get(i, j)).collect::<Vec<_>>()))
        .collect();
    format!("[{}]", rows.join(", "))
}

/// `x.csv` → `x.theta.csv`.
pub fn theta_sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.theta.csv"))
}

fn cmd_simulate(c: &SimulateConfig, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let out = ctx
        .out
        .clone()
        .ok_or_else(|| CliError::usage("simulate requires --out <FILE>"))?;
    if c.a.len() != c.n {
        return Err(CliError::usage(format!(
            "expected {} AR coefficients, got {}",
            c.n,
            c.a.len()
        )));
    }
    if c.varying {
        if c.m > 0 {
            return Err(CliError::usage("--varying supports AR models only"));
        }
        let walk = ParamWalkSpec {
            mean: c.a.clone(),
            decay: c.decay.clone(),
            lambda: c.lambda,
        };
        let stability = check_stability(&ArxSpec::ar(&c.a, c.sigma2)?);
        let sim = simulate_varying(&walk, c.sigma2, c.samples, c.seed, c.burn_in)?;
        sim.dataset.save_csv(&out)?;
        let side = theta_sidecar_path(&out);
        let mut w = std::io::BufWriter::new(fs::File::create(&side)?);
        sim.write_theta_csv(&mut w)?;
        w.flush()?;
        ctx.say(&format!("seed: {}", c.seed))?;
        ctx.say(&format!(
            "stable: {} (max root modulus {})",
            stability.stable,
            stability.moduli.first().copied().unwrap_or(0.0)
        ))?;
        ctx.say(&format!("wrote {} and {}", out.display(), side.display()))?;
        return Ok(());
    }
    if c.b.len() != c.m {
        return Err(CliError::usage(format!(
            "expected {} input coefficients, got {}",
            c.m,
            c.b.len()
        )));
    }
    let mut theta = c.a.clone();
    theta.extend_from_slice(&c.b);
    let spec = ArxSpec::new(c.n, c.m, &theta, c.sigma2)?;
    let stability = check_stability(&spec);
    let u = if c.m > 0 {
        rng::standard_normals(
            &mut rng::stream(c.seed, STREAM_INPUT),
            c.burn_in + c.samples,
        )
    } else {
        Vec::new()
    };
    ctx.say(&format!("seed: {}", c.seed))?;
    ctx.say(&format!(
        "stable: {} (max root modulus {})",
        stability.stable,
        stability.moduli.first().copied().unwrap_or(0.0)
    ))?;
    let d = simulate_fixed(&spec, &u, c.samples, c.seed, c.burn_in)?;
    d.save_csv(&out)?;
    ctx.say(&format!("wrote {} ({} samples)", out.display(), d.len()))?;
    Ok(())
}

fn pi_matrix(values: &[f64], p: usize) -> Result<SymMatrix, CliError> {
    let m = match values.len() {
        1 => SymMatrix::scaled_identity(p, values[0]),
        n if n == p => SymMatrix::from_diagonal(values),
        n if n == p * p => {
            SymMatrix::from_row_slice(p, values).map_err(|e| CliError::usage(format!("pi: {e}")))?
        }
        n => {
            return Err(CliError::usage(format!(
                "pi needs 1, {p} or {} values, got {n}",
                p * p
            )))
        }
    };
    Ok(m)
}

fn vector_arg(name: &str, v: &[f64], p: usize) -> Result<Vector, CliError> {
    if v.len() != p {
        return Err(CliError::usage(format!(
            "{name} needs {p} values, got {}",
            v.len()
        )));
    }
    Ok(Vector::from_column_slice(v))
}

struct BackwardFit {
    trace: FilterTrace,
    recovered: RecoveredPrior,
}

fn backward_fit(
    c: &FitConfig,
    d: &Dataset,
    p: usize,
    sigma2_ref: f64,
) -> Result<BackwardFit, CliError> {
    let bwd = build_regressors(d, c.n, c.m, Orientation::Backward)?;
    let mut terminal = match c.terminal {
        Terminal::Diffuse => TerminalCondition::diffuse_with(p, c.terminal_scale),
        Terminal::Warm => {
            let pi = c.pi.as_ref().ok_or_else(|| {
                CliError::estimation("--terminal warm needs --pi for the forward pass")
            })?;
            let prior = given_prior(c, p, sigma2_ref, pi)?;
            let fwd = build_regressors(d, c.n, c.m, Orientation::Forward)?;
            let forward = run_forward(&fwd, &prior)?;
            TerminalCondition::warm_start(forward.last(), prior.pi.clone())?
        }
    };
    terminal.sigma2_ref = sigma2_ref;
    let trace = run_backward(&bwd, &terminal)?;
    let recovered = recover_prior(trace.last(), &bwd.gram())?;
    Ok(BackwardFit { trace, recovered })
}

fn given_prior(c: &FitConfig, p: usize, sigma2: f64, pi: &[f64]) -> Result<Prior, CliError> {
    let mu = match &c.mu {
        Some(m) => vector_arg("mu", m, p)?,
        None => Vector::zeros(p),
    };
    Ok(Prior::new(mu, sigma2, pi_matrix(pi, p)?)?)
}

fn cmd_fit(c: &FitConfig, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let path = c
        .data
        .as_ref()
        .ok_or_else(|| CliError::usage("fit requires --data <FILE>"))?;
    let d = Dataset::load_csv(Path::new(path))?;
    let p = c.n + c.m;
    let fwd = build_regressors(&d, c.n, c.m, Orientation::Forward)?;
    let theta0 = c
        .theta0
        .as_ref()
        .map(|t| vector_arg("theta0", t, p))
        .transpose()?;
    let names: Vec<String> = (1..=c.n)
        .map(|i| format!("a{i}"))
        .chain((1..=c.m).map(|i| format!("b{i}")))
        .collect();
    ctx.say(&format!("method: {}", c.method.name()))?;
    ctx.say(&format!("parameters: {}", names.join(", ")))?;

    // Prior used by marginal and eb, and for the MSE printout.
    let resolve_prior = |ctx: &mut Context<'_>| -> Result<Prior, CliError> {
        match c.hyper {
            Hyper::Given => {
                let pi = c.pi.as_ref().ok_or_else(|| {
                    CliError::estimation(
                        "hyperparameters required: pass --pi (and optionally --mu, --sigma2) or --hyper backward",
                    )
                })?;
                let sigma2 = match c.sigma2 {
                    Some(s) => s,
                    None => least_squares(&fwd)?.sigma2,
                };
                given_prior(c, p, sigma2, pi)
            }
            Hyper::Backward => {
                let fit = backward_fit(c, &d, p, c.sigma2.unwrap_or(1.0))?;
                let sigma2 = fit.trace.last().sigma2_hat;
                ctx.say(&format!("backward sigma2_hat: {sigma2}"))?;
                ctx.say(&format!(
                    "recovered P0_hat: {}",
                    fmt_matrix(&fit.recovered.pi.scale(sigma2))
                ))?;
                if fit.recovered.ill_conditioned {
                    ctx.say("warning: recovered prior is ill-conditioned")?;
                }
                let mu = match &c.mu {
                    Some(m) => vector_arg("mu", m, p)?,
                    None => Vector::zeros(p),
                };
                Ok(Prior::new(mu, sigma2, fit.recovered.pi)?)
            }
        }
    };

    let mut report_rows: Vec<(String, f64, f64)> = Vec::new();
    match c.method {
        Method::Ls => {
            let r = least_squares(&fwd)?;
            ctx.say(&format!("estimate: {}", fmt_vec(r.estimate.as_slice())))?;
            ctx.say(&format!("variance: {}", fmt_matrix(&r.variance)))?;
            ctx.say(&format!("sigma2_hat: {}", r.sigma2))?;
            for (i, name) in names.iter().enumerate() {
                report_rows.push((name.clone(), r.estimate[i], r.variance.get(i, i)));
            }
            if let Some(t0) = &theta0 {
                ctx.say(&format!(
                    "squared error: {}",
                    (&r.estimate - t0).norm_squared()
                ))?;
            }
        }
        Method::Marginal | Method::Eb => {
            let prior = resolve_prior(ctx)?;
            let r = if c.method == Method::Marginal {
                marginal_estimate(&fwd, &prior)?
            } else {
                bayes_posterior(&fwd, &prior)?
            };
            ctx.say(&format!("estimate: {}", fmt_vec(r.estimate.as_slice())))?;
            ctx.say(&format!("variance: {}", fmt_matrix(&r.variance)))?;
            ctx.say(&format!("sigma2: {}", prior.sigma2))?;
            for (i, name) in names.iter().enumerate() {
                report_rows.push((name.clone(), r.estimate[i], r.variance.get(i, i)));
            }
            if let Some(t0) = &theta0 {
                let gram = fwd.gram();
                ctx.say(&format!(
                    "marginal MSE: {}",
                    marginal_mse(&gram, &prior.pi, prior.sigma2)?
                ))?;
                ctx.say(&format!("EB MSE: {}", eb_mse(&fwd, &prior, t0)?))?;
            }
        }
        Method::ForwardKf => {
            let pi = c.pi.as_ref().ok_or_else(|| {
                CliError::estimation("forward-kf requires --pi for the initial covariance")
            })?;
            let prior = given_prior(c, p, c.sigma2.unwrap_or(1.0), pi)?;
            let trace = run_forward(&fwd, &prior)?;
            let s = trace.last();
            ctx.say(&format!("estimate: {}", fmt_vec(s.xhat.as_slice())))?;
            ctx.say(&format!("P (normalized): {}", fmt_matrix(&s.p_norm)))?;
            ctx.say(&format!("sigma2_hat (recursive): {}", s.sigma2_hat))?;
            ctx.say(&format!(
                "sigma2_hat (batch): {}",
                batch_sigma2(&fwd, &s.xhat, c.dof)
            ))?;
            if let Some(t0) = &theta0 {
                let var = s.sigma2_hat * s.p_norm.trace();
                ctx.say(&format!("EB MSE: {}", (&s.xhat - t0).norm_squared() + var))?;
            }
            return write_trace(ctx, &trace);
        }
        Method::BackwardKf => {
            let fit = backward_fit(c, &d, p, c.sigma2.unwrap_or(1.0))?;
            let s = fit.trace.last();
            ctx.say(&format!("estimate: {}", fmt_vec(s.xhat.as_slice())))?;
            ctx.say(&format!("P (normalized): {}", fmt_matrix(&s.p_norm)))?;
            ctx.say(&format!("lambda2: {}", s.lambda2))?;
            ctx.say(&format!("sigma2_hat: {}", s.sigma2_hat))?;
            ctx.say(&format!(
                "Pi_hat inverse: {}",
                fmt_matrix(&fit.recovered.pi_inv)
            ))?;
            ctx.say(&format!("Pi_hat: {}", fmt_matrix(&fit.recovered.pi)))?;
            ctx.say(&format!(
                "P0_hat: {}",
                fmt_matrix(&fit.recovered.pi.scale(s.sigma2_hat))
            ))?;
            ctx.say(&format!(
                "clipped: {}, ill-conditioned: {}, condition: {}",
                fit.recovered.clipped, fit.recovered.ill_conditioned, fit.recovered.condition
            ))?;
            return write_trace(ctx, &fit.trace);
        }
    }
    if let Some(out) = &ctx.out {
        let mut w = std::io::BufWriter::new(fs::File::create(out)?);
        writeln!(w, "parameter,estimate,variance")?;
        for (name, est, var) in report_rows {
            writeln!(w, "{name},{},{}", fmt_f64(est), fmt_f64(var))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn write_trace(ctx: &mut Context<'_>, trace: &FilterTrace) -> Result<(), CliError> {
    if let Some(out) = &ctx.out {
        let mut w = std::io::BufWriter::new(fs::File::create(out)?);
        trace.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Scenario list of a compare run: one per (λ, π) pair.
pub fn compare_scenarios(c: &CompareConfig) -> Result<Vec<(f64, ScenarioSpec)>, CliError> {
    let p = c.a.len();
    let mut specs = Vec::new();
    for &lambda in &c.lambdas {
        for &pi in &c.pi_scales {
            let model = if lambda == 0.0 {
                ScenarioModel::Fixed(ArxSpec::ar(&c.a, c.sigma2)?)
            } else {
                let walk = ParamWalkSpec {
                    mean: c.a.clone(),
                    decay: c.decay.clone(),
                    lambda,
                };
                walk.validate()?;
                ScenarioModel::Varying {
                    walk,
                    sigma2: c.sigma2,
                }
            };
            specs.push((
                lambda,
                ScenarioSpec {
                    id: format!("lambda{lambda}_pi{pi}"),
                    model,
                    prior_init: Prior::isotropic(p, 1.0, pi)?,
                    sample_sizes: c.sample_sizes.clone(),
                    replicates: c.replicates,
                    base_seed: c.seed,
                    burn_in: c.burn_in,
                    sigma2_source: c.sigma2_source,
                },
            ));
        }
    }
    Ok(specs)
}

fn cmd_compare(c: &CompareConfig, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::file(format!("cannot create {}: {e}", dir.display())))?;
    let p = c.a.len();
    let specs = compare_scenarios(c)?;
    let mut results: Vec<(f64, ScenarioResult)> = Vec::new();
    for (lambda, spec) in &specs {
        results.push((*lambda, run_scenario(spec)?));
    }
    let mut failed = Vec::new();
    for &lambda in &c.lambdas {
        let group: Vec<&ScenarioResult> = results
            .iter()
            .filter(|(l, _)| *l == lambda)
            .map(|(_, r)| r)
            .collect();
        let reports: Vec<_> = group
            .iter()
            .flat_map(|r| r.reports.iter().cloned())
            .collect();
        let aggregates: Vec<_> = group
            .iter()
            .flat_map(|r| r.aggregates.iter().cloned())
            .collect();
        let table = dir.join(format!("table_lambda{lambda}.csv"));
        let agg = dir.join(format!("aggregate_lambda{lambda}.csv"));
        save_reports_csv(&reports, p, &table)?;
        save_aggregates_csv(&aggregates, p, &agg)?;
        ctx.say(&format!(
            "lambda = {lambda} ({} replicates, medians)",
            c.replicates
        ))?;
        ctx.say(&format_table(&aggregates))?;
        for r in &group {
            if !r.failures.is_empty() {
                ctx.say(&format!(
                    "{}: {} replicate(s) failed, first: {}",
                    r.spec.id,
                    r.failures.len(),
                    r.failures[0].message
                ))?;
            }
            if r.failed_entirely() {
                failed.push(r.spec.id.clone());
            }
        }
    }
    if !failed.is_empty() {
        return Err(CliError {
            code: EXIT_SCENARIO,
            message: format!("every replicate failed in: {}", failed.join(", ")),
        });
    }
    Ok(())
}

fn cmd_curves(c: &CurvesConfig, ctx: &mut Context<'_>) -> Result<(), CliError> {
    if !(c.delta_sq > 0.0) || !(c.pi_min > 0.0) || !(c.pi_max >= c.pi_min) || c.points == 0 {
        return Err(CliError::usage(
            "curves needs delta_sq > 0, 0 < pi_min <= pi_max and points >= 1",
        ));
    }
    let grid = log_grid(c.pi_min, c.pi_max, c.points);
    let mut text = String::from("pi,e2_eb,e2_m\n");
    for pt in scalar_mse_curves(c.theta0, c.delta_sq, &grid) {
        text.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(pt.pi),
            fmt_f64(pt.e2_eb),
            fmt_f64(pt.e2_m)
        ));
    }
    match &ctx.out {
        Some(out) => fs::write(out, text)?,
        None => write!(ctx.stdout, "{text}")?,
    }
    Ok(())
}
