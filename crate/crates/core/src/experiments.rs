//! Monte-Carlo comparison of the marginal and Empirical Bayes estimators.
//!
//! Each replicate simulates one record at the largest sample size and
//! evaluates every requested `N` on its prefix. Per `N`:
//!
//! 1. the forward filter is run from the initial prior (`x̂(N)`, `P(N)`);
//! 2. the backward filter is started at `x̂(N)` with the initial prior
//!    covariance and yields `σ̂²` and, through prior recovery, `P̂₀ = σ̂²Π̂`;
//! 3. marginal MSE is `σ̂²(trace (ΦᵀΦ)⁻¹ + trace Π̂)`;
//! 4. EB MSE is `‖x̂(N) − θ₀‖² + σ̂²·trace P(N)`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimators::{marginal_estimate, EstimatorError, Prior};
use crate::filters::{recover_prior, run_backward, run_forward, FilterError, TerminalCondition};
use crate::model::{
    build_regressors, fmt_f64, simulate_fixed, simulate_varying, ArxSpec, Dataset, ModelError,
    Orientation, ParamWalkSpec,
};
use crate::numerics::{spd_inverse, NumericsError, SymMatrix, Vector};
use crate::rng::replicate_seed;

pub const DEFAULT_SAMPLE_SIZES: [usize; 3] = [50, 100, 200];
pub const DEFAULT_REPLICATES: usize = 100;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioModel {
    Fixed(ArxSpec),
    Varying { walk: ParamWalkSpec, sigma2: f64 },
}

impl ScenarioModel {
    /// Parameter the errors are measured against: the true value, or the
    /// walk mean for varying parameters.
    pub fn theta0(&self) -> Vector {
        match self {
            ScenarioModel::Fixed(spec) => spec.theta.clone(),
            ScenarioModel::Varying { walk, .. } => Vector::from_column_slice(&walk.mean),
        }
    }

    pub fn order(&self) -> usize {
        match self {
            ScenarioModel::Fixed(spec) => spec.n,
            ScenarioModel::Varying { walk, .. } => walk.mean.len(),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            ScenarioModel::Fixed(_) => 0.0,
            ScenarioModel::Varying { walk, .. } => walk.lambda,
        }
    }

    fn simulate(&self, n: usize, seed: u64, burn_in: usize) -> Result<Dataset, ModelError> {
        match self {
            ScenarioModel::Fixed(spec) => simulate_fixed(spec, &[], n, seed, burn_in),
            ScenarioModel::Varying { walk, sigma2 } => {
                Ok(simulate_varying(walk, *sigma2, n, seed, burn_in)?.dataset)
            }
        }
    }
}

/// Which noise-variance estimate enters the MSE formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sigma2Source {
    Backward,
    Forward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub model: ScenarioModel,
    pub prior_init: Prior,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub burn_in: usize,
    pub sigma2_source: Sigma2Source,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replicates == 0 {
            return Err(ExperimentError::InvalidSpec(
                "replicates must be at least 1".into(),
            ));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::InvalidSpec(
                "sample sizes must be non-empty and strictly increasing".into(),
            ));
        }
        if let ScenarioModel::Fixed(spec) = &self.model {
            if spec.m > 0 {
                return Err(ModelError::BackwardWithInput.into());
            }
        }
        let p = self.model.order();
        if self.prior_init.p() != p {
            return Err(ExperimentError::InvalidSpec(format!(
                "prior has dimension {} but the model has {p} parameters",
                self.prior_init.p()
            )));
        }
        if self.sample_sizes[0] <= 2 * p {
            return Err(ExperimentError::InvalidSpec(format!(
                "smallest sample size must exceed {} for order {p}",
                2 * p
            )));
        }
        Ok(())
    }
}

/// One replicate evaluated at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub scenario: String,
    pub replicate: usize,
    pub n: usize,
    pub p0_init: SymMatrix,
    pub p0_hat: SymMatrix,
    pub marg_estimate: Vector,
    pub marg_mse: f64,
    pub eb_estimate: Vector,
    pub eb_mse: f64,
    pub sigma2_hat: f64,
    pub clipped: bool,
    pub ill_conditioned: bool,
    /// `σ̂²·trace P(N)`, the variance part of the EB MSE.
    pub eb_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub iqr: f64,
    pub p05: f64,
    pub p95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            median: quantile(&v, 0.5),
            iqr: quantile(&v, 0.75) - quantile(&v, 0.25),
            p05: quantile(&v, 0.05),
            p95: quantile(&v, 0.95),
        }
    }
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Replicate statistics at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct MseAggregate {
    pub scenario: String,
    pub n: usize,
    pub p0_init: SymMatrix,
    pub replicates: usize,
    pub failed: usize,
    /// Upper-triangle entries of `P̂₀`, row-major.
    pub p0_hat: Vec<Summary>,
    pub marg_estimate: Vec<Summary>,
    pub marg_mse: Summary,
    pub eb_estimate: Vec<Summary>,
    pub eb_mse: Summary,
    /// `‖mean x̂(N) − θ₀‖² + mean σ̂²·trace P(N)`, the EB MSE with the
    /// expectation taken over replicates.
    pub eb_mse_averaged: f64,
    pub clip_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    /// Ordered by replicate, then by sample size.
    pub reports: Vec<MseReport>,
    pub failures: Vec<ReplicateFailure>,
    pub aggregates: Vec<MseAggregate>,
}

impl ScenarioResult {
    pub fn failed_entirely(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn aggregate(&self, n: usize) -> Option<&MseAggregate> {
        self.aggregates.iter().find(|a| a.n == n)
    }
}

/// Evaluates both estimators on the prefixes of one record.
pub fn evaluate_dataset(
    d: &Dataset,
    theta0: &Vector,
    prior_init: &Prior,
    sample_sizes: &[usize],
    sigma2_source: Sigma2Source,
) -> Result<Vec<MseReport>, ExperimentError> {
    let p = prior_init.p();
    if theta0.len() != p {
        return Err(ExperimentError::InvalidSpec(format!(
            "true parameter has length {} but the prior has dimension {p}",
            theta0.len()
        )));
    }
    sample_sizes
        .iter()
        .map(|&n| {
            if n > d.len() {
                return Err(ModelError::InsufficientData(format!(
                    "need {n} samples, have {}",
                    d.len()
                ))
                .into());
            }
            evaluate_prefix(&d.prefix(n), theta0, prior_init, sigma2_source)
        })
        .collect()
}

fn evaluate_prefix(
    d: &Dataset,
    theta0: &Vector,
    prior_init: &Prior,
    sigma2_source: Sigma2Source,
) -> Result<MseReport, ExperimentError> {
    let p = prior_init.p();
    let fwd = build_regressors(d, p, 0, Orientation::Forward)?;
    let bwd = build_regressors(d, p, 0, Orientation::Backward)?;

    let forward = run_forward(&fwd, prior_init)?;
    let f = forward.last();
    let mut terminal = TerminalCondition::warm_start(f, prior_init.pi.clone())?;
    terminal.sigma2_ref = prior_init.sigma2;
    let backward = run_backward(&bwd, &terminal)?;
    let mut b = backward.last().clone();

    let sigma2_hat = match sigma2_source {
        Sigma2Source::Backward => b.sigma2_hat,
        Sigma2Source::Forward => f.sigma2_hat,
    };
    b.sigma2_hat = sigma2_hat;
    let recovered = recover_prior(&b, &bwd.gram())?;

    let marg_prior = Prior::new(Vector::zeros(p), sigma2_hat, recovered.pi.clone())?;
    let marg = marginal_estimate(&fwd, &marg_prior)?;

    let eb_variance = sigma2_hat * f.p_norm.trace();
    let eb_mse = (&f.xhat - theta0).norm_squared() + eb_variance;
    Ok(MseReport {
        scenario: String::new(),
        replicate: 0,
        n: d.len(),
        p0_init: prior_init.unnormalized(),
        p0_hat: recovered.pi.scale(sigma2_hat),
        marg_estimate: marg.estimate,
        marg_mse: marg.scalar_mse,
        eb_estimate: f.xhat.clone(),
        eb_mse,
        sigma2_hat,
        clipped: recovered.clipped,
        ill_conditioned: recovered.ill_conditioned,
        eb_variance,
    })
}

fn run_replicate(spec: &ScenarioSpec, replicate: usize) -> Result<Vec<MseReport>, ExperimentError> {
    let n_max = *spec.sample_sizes.last().expect("validated non-empty");
    let seed = replicate_seed(spec.base_seed, replicate);
    let d = spec.model.simulate(n_max, seed, spec.burn_in)?;
    let mut reports = evaluate_dataset(
        &d,
        &spec.model.theta0(),
        &spec.prior_init,
        &spec.sample_sizes,
        spec.sigma2_source,
    )?;
    for r in &mut reports {
        r.scenario = spec.id.clone();
        r.replicate = replicate;
    }
    Ok(reports)
}

/// Runs every replicate in parallel. Replicates that fail are listed in
/// [`ScenarioResult::failures`] and left out of the aggregates.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioResult, ExperimentError> {
    spec.validate()?;
    let outcomes: Vec<Result<Vec<MseReport>, ExperimentError>> = (0..spec.replicates)
        .into_par_iter()
        .map(|k| run_replicate(spec, k))
        .collect();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (replicate, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => reports.extend(r),
            Err(e) => failures.push(ReplicateFailure {
                replicate,
                message: e.to_string(),
            }),
        }
    }
    let theta0 = spec.model.theta0();
    let aggregates = spec
        .sample_sizes
        .iter()
        .map(|&n| {
            let at_n: Vec<&MseReport> = reports.iter().filter(|r| r.n == n).collect();
            aggregate(
                &spec.id,
                n,
                &spec.prior_init.unnormalized(),
                &at_n,
                failures.len(),
                &theta0,
            )
        })
        .collect();
    Ok(ScenarioResult {
        spec: spec.clone(),
        reports,
        failures,
        aggregates,
    })
}

/// Summarizes the reports of one sample size. The result does not depend on
/// the order of `reports`.
pub fn aggregate(
    scenario: &str,
    n: usize,
    p0_init: &SymMatrix,
    reports: &[&MseReport],
    failed: usize,
    theta0: &Vector,
) -> MseAggregate {
    let p = p0_init.dim();
    let column = |f: &dyn Fn(&MseReport) -> f64| {
        Summary::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    let mut p0_hat = Vec::new();
    for i in 0..p {
        for j in i..p {
            p0_hat.push(column(&|r| r.p0_hat.get(i, j)));
        }
    }
    let marg_estimate = (0..p).map(|i| column(&|r| r.marg_estimate[i])).collect();
    let eb_estimate = (0..p).map(|i| column(&|r| r.eb_estimate[i])).collect();
    let count = reports.len() as f64;
    let eb_mse_averaged = if reports.is_empty() {
        f64::NAN
    } else {
        let mut mean = Vector::zeros(p);
        let mut variance = 0.0;
        for r in reports {
            mean += &r.eb_estimate;
            variance += r.eb_variance;
        }
        mean /= count;
        (mean - theta0).norm_squared() + variance / count
    };
    MseAggregate {
        scenario: scenario.to_string(),
        n,
        p0_init: p0_init.clone(),
        replicates: reports.len(),
        failed,
        p0_hat,
        marg_estimate,
        marg_mse: column(&|r| r.marg_mse),
        eb_estimate,
        eb_mse: column(&|r| r.eb_mse),
        eb_mse_averaged,
        clip_rate: reports.iter().filter(|r| r.clipped).count() as f64 / count,
    }
}

fn upper_names(prefix: &str, p: usize) -> Vec<String> {
    let mut names = Vec::new();
    for i in 1..=p {
        for j in i..=p {
            names.push(format!("{prefix}_{i}{j}"));
        }
    }
    names
}

fn upper_values(m: &SymMatrix) -> Vec<f64> {
    let p = m.dim();
    let mut v = Vec::new();
    for i in 0..p {
        for j in i..p {
            v.push(m.get(i, j));
        }
    }
    v
}

fn report_columns(p: usize) -> Vec<String> {
    let mut cols = upper_names("p0_hat", p);
    cols.extend((1..=p).map(|i| format!("marg_a{i}")));
    cols.push("marg_mse".into());
    cols.extend((1..=p).map(|i| format!("eb_a{i}")));
    cols.push("eb_mse".into());
    cols
}

pub fn write_reports_csv<W: Write>(
    reports: &[MseReport],
    p: usize,
    mut w: W,
) -> Result<(), ModelError> {
    let mut header = vec!["scenario".to_string(), "replicate".into(), "N".into()];
    header.extend(upper_names("p0_init", p));
    header.extend(report_columns(p));
    writeln!(w, "{}", header.join(","))?;
    for r in reports {
        let mut row = vec![r.scenario.clone(), r.replicate.to_string(), r.n.to_string()];
        let mut values = upper_values(&r.p0_init);
        values.extend(upper_values(&r.p0_hat));
        values.extend(r.marg_estimate.iter());
        values.push(r.marg_mse);
        values.extend(r.eb_estimate.iter());
        values.push(r.eb_mse);
        row.extend(values.into_iter().map(fmt_f64));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_aggregates_csv<W: Write>(
    aggregates: &[MseAggregate],
    p: usize,
    mut w: W,
) -> Result<(), ModelError> {
    let mut header = vec![
        "scenario".to_string(),
        "N".into(),
        "replicates".into(),
        "failed".into(),
    ];
    header.extend(upper_names("p0_init", p));
    for c in report_columns(p) {
        header.push(format!("{c}_median"));
        header.push(format!("{c}_iqr"));
    }
    header.extend(
        [
            "eb_mse_averaged",
            "marg_mse_p05",
            "marg_mse_p95",
            "eb_mse_p05",
            "eb_mse_p95",
            "clip_rate",
        ]
        .map(String::from),
    );
    writeln!(w, "{}", header.join(","))?;
    for a in aggregates {
        let mut row = vec![
            a.scenario.clone(),
            a.n.to_string(),
            a.replicates.to_string(),
            a.failed.to_string(),
        ];
        let mut values = upper_values(&a.p0_init);
        let mut summaries: Vec<Summary> = a.p0_hat.clone();
        summaries.extend(a.marg_estimate.iter().copied());
        summaries.push(a.marg_mse);
        summaries.extend(a.eb_estimate.iter().copied());
        summaries.push(a.eb_mse);
        for s in summaries {
            values.push(s.median);
            values.push(s.iqr);
        }
        values.extend([
            a.eb_mse_averaged,
            a.marg_mse.p05,
            a.marg_mse.p95,
            a.eb_mse.p05,
            a.eb_mse.p95,
            a.clip_rate,
        ]);
        row.extend(values.into_iter().map(fmt_f64));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_reports_csv(reports: &[MseReport], p: usize, path: &Path) -> Result<(), ModelError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_reports_csv(reports, p, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn save_aggregates_csv(
    aggregates: &[MseAggregate],
    p: usize,
    path: &Path,
) -> Result<(), ModelError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_aggregates_csv(aggregates, p, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Rounds to five decimals in the layout of the published tables: one line
/// per (prior, N) with the diagonal of the initial prior, the recovered
/// prior, both estimates and both MSEs (medians when replicated).
pub fn format_table(aggregates: &[MseAggregate]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:>5} {:>9} {:>30} {:>22} {:>9} {:>22} {:>9}\n",
        "scenario", "N", "P0 init", "P0 hat (upper)", "marg", "marg MSE", "EB", "EB MSE"
    ));
    for a in aggregates {
        let r5 = |v: f64| format!("{v:.5}");
        let join = |s: &[Summary]| s.iter().map(|x| r5(x.median)).collect::<Vec<_>>().join(" ");
        out.push_str(&format!(
            "{:<22} {:>5} {:>9} {:>30} {:>22} {:>9} {:>22} {:>9}\n",
            a.scenario,
            a.n,
            r5(a.p0_init.get(0, 0)),
            join(&a.p0_hat),
            join(&a.marg_estimate),
            r5(a.marg_mse.median),
            join(&a.eb_estimate),
            r5(a.eb_mse.median),
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub pi: f64,
    pub bias2: f64,
    pub var_eb: f64,
    pub var_m: f64,
    pub mse_eb: f64,
    pub mse_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub points: Vec<CurvePoint>,
    /// Values of `π` where `mse_M − mse_EB` changes sign, interpolated
    /// linearly in `log π` between grid points.
    pub crossings: Vec<f64>,
}

/// Bias, variances and MSEs of both estimators over `Π = π·I`.
pub fn mse_curves(
    theta0: &Vector,
    gram: &SymMatrix,
    mu: &Vector,
    sigma2: f64,
    pi_grid: &[f64],
) -> Result<CurveTable, ExperimentError> {
    let p = gram.dim();
    if theta0.len() != p || mu.len() != p {
        return Err(ExperimentError::InvalidSpec(
            "curve inputs have inconsistent dimensions".into(),
        ));
    }
    let gram_inv = spd_inverse(gram)?;
    let delta0 = mu - theta0;
    let mut points = Vec::with_capacity(pi_grid.len());
    for &pi in pi_grid {
        if !(pi > 0.0 && pi.is_finite()) {
            return Err(ExperimentError::InvalidSpec(format!(
                "grid value {pi} is not positive"
            )));
        }
        let precision = gram.add(&SymMatrix::scaled_identity(p, 1.0 / pi))?;
        let chol = precision.cholesky()?;
        let bias = chol.solve_vec(&(&delta0 / pi));
        let bias2 = bias.norm_squared();
        let var_eb = sigma2 * chol.inverse().trace();
        let var_m = sigma2 * (gram_inv.trace() + p as f64 * pi);
        points.push(CurvePoint {
            pi,
            bias2,
            var_eb,
            var_m,
            mse_eb: bias2 + var_eb,
            mse_m: var_m,
        });
    }
    let mut crossings = Vec::new();
    for w in points.windows(2) {
        let d0 = w[0].mse_m - w[0].mse_eb;
        let d1 = w[1].mse_m - w[1].mse_eb;
        if d0 == 0.0 {
            crossings.push(w[0].pi);
        } else if d0 * d1 < 0.0 {
            let (l0, l1) = (w[0].pi.ln(), w[1].pi.ln());
            crossings.push((l0 + (l1 - l0) * d0 / (d0 - d1)).exp());
        }
    }
    Ok(CurveTable { points, crossings })
}

/// Geometric grid of `count` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect();
    grid[0] = lo;
    grid[count - 1] = hi;
    grid
}

pub fn write_curves_csv<W: Write>(table: &CurveTable, mut w: W) -> Result<(), ModelError> {
    writeln!(w, "pi,bias2,var_eb,var_m,mse_eb,mse_m")?;
    for c in &table.points {
        let row = [c.pi, c.bias2, c.var_eb, c.var_m, c.mse_eb, c.mse_m].map(fmt_f64);
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
