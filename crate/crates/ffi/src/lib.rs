//! C interface to `ebarx`.
//!
//! Every fallible function returns an [`EbarxStatus`]; on failure the message
//! is available from [`ebarx_last_error`] on the same thread. Objects are
//! opaque handles created by `ebarx_*` constructors and released with the
//! matching `_free` function. Matrices are `p*p` row-major `double` arrays.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use ebarx::cli::{compare_scenarios, CliError, RunConfig};
use ebarx::estimators::{
    bayes_posterior, eb_mse, least_squares, marginal_estimate, marginal_mse, scalar_mse_curves,
    EstimateReport, Prior,
};
use ebarx::experiments::{run_scenario, save_aggregates_csv, save_reports_csv, ScenarioResult};
use ebarx::filters::{recover_prior, run_backward, run_forward, FilterTrace, TerminalCondition};
use ebarx::model::{build_regressors, simulate_fixed, ArxSpec, Dataset, Orientation, RegressorSet};
use ebarx::numerics::{SymMatrix, Vector};
use ebarx::rng::{standard_normals, stream, STREAM_INPUT};

/// Status codes. 2 to 6 carry the same meaning as the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbarxStatus {
    Ok = 0,
    InvalidArgument = 2,
    Unstable = 3,
    Estimation = 4,
    File = 5,
    Scenario = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

impl EbarxStatus {
    fn from_code(code: i32) -> Self {
        match code {
            0 => Self::Ok,
            3 => Self::Unstable,
            4 => Self::Estimation,
            5 => Self::File,
            6 => Self::Scenario,
            7 => Self::NullPointer,
            8 => Self::BufferTooSmall,
            9 => Self::Panic,
            _ => Self::InvalidArgument,
        }
    }
}

pub struct EbarxDataset(Dataset);

pub struct EbarxTrace {
    trace: FilterTrace,
    gram: SymMatrix,
}

pub struct EbarxComparison {
    results: Vec<(f64, ScenarioResult)>,
    lambdas: Vec<f64>,
    p: usize,
}

/// One aggregate row of a comparison: a (λ, π, N) cell.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EbarxAggregateRow {
    pub lambda: f64,
    pub pi_scale: f64,
    pub n: usize,
    pub replicates: usize,
    pub failed: usize,
    pub marg_mse_median: f64,
    pub marg_mse_iqr: f64,
    pub eb_mse_median: f64,
    pub eb_mse_iqr: f64,
    pub eb_mse_averaged: f64,
    pub clip_rate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn failure(status: EbarxStatus, message: impl Into<String>) -> CliError {
    CliError {
        code: status as i32,
        message: message.into(),
    }
}

fn guard<F: FnOnce() -> Result<(), CliError>>(f: F) -> EbarxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EbarxStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&e.message);
            EbarxStatus::from_code(e.code)
        }
        Err(_) => {
            set_error("internal panic");
            EbarxStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], CliError> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(failure(EbarxStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], CliError> {
    if p.is_null() {
        return Err(failure(EbarxStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, CliError> {
    p.as_ref()
        .ok_or_else(|| failure(EbarxStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, CliError> {
    if p.is_null() {
        return Err(failure(EbarxStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| failure(EbarxStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), CliError> {
    if out.is_null() {
        return Err(failure(EbarxStatus::NullPointer, "output handle is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn prior_args(
    mu: *const f64,
    sigma2: f64,
    pi: *const f64,
    p: usize,
) -> Result<Prior, CliError> {
    let mu = if mu.is_null() {
        Vector::zeros(p)
    } else {
        Vector::from_column_slice(slice(mu, p, "mu")?)
    };
    let pi = SymMatrix::from_row_slice(p, slice(pi, p * p, "pi")?)
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(Prior::new(mu, sigma2, pi)?)
}

fn write_matrix(m: &SymMatrix, out: &mut [f64]) {
    let p = m.dim();
    for i in 0..p {
        for j in 0..p {
            out[i * p + j] = m.get(i, j);
        }
    }
}

unsafe fn write_report(
    r: &EstimateReport,
    estimate: *mut f64,
    variance: *mut f64,
) -> Result<(), CliError> {
    let p = r.estimate.len();
    slice_mut(estimate, p, "estimate")?.copy_from_slice(r.estimate.as_slice());
    if !variance.is_null() {
        write_matrix(&r.variance, slice_mut(variance, p * p, "variance")?);
    }
    Ok(())
}

fn forward(d: &EbarxDataset, n: usize, m: usize) -> Result<RegressorSet, CliError> {
    Ok(build_regressors(&d.0, n, m, Orientation::Forward)?)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next `ebarx_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ebarx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ebarx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Simulates `samples` points of an ARX model after `burn_in` discarded
/// ones. `b` may be null when `m` is 0; the input is unit white noise.
///
/// # Safety
/// `a` must point to `n` doubles, `b` to `m` doubles, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ebarx_dataset_simulate(
    a: *const f64,
    n: usize,
    b: *const f64,
    m: usize,
    sigma2: f64,
    samples: usize,
    burn_in: usize,
    seed: u64,
    out: *mut *mut EbarxDataset,
) -> EbarxStatus {
    guard(|| {
        let mut theta = slice(a, n, "a")?.to_vec();
        theta.extend_from_slice(slice(b, m, "b")?);
        let spec = ArxSpec::new(n, m, &theta, sigma2)?;
        let u = if m > 0 {
            standard_normals(&mut stream(seed, STREAM_INPUT), burn_in + samples)
        } else {
            Vec::new()
        };
        store(
            out,
            EbarxDataset(simulate_fixed(&spec, &u, samples, seed, burn_in)?),
        )
    })
}

/// Wraps a recorded series with a zero presample of length `lags`. `u` may be
/// null for a pure output series.
///
/// # Safety
/// `y` and (if non-null) `u` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ebarx_dataset_from_series(
    y: *const f64,
    u: *const f64,
    len: usize,
    lags: usize,
    out: *mut *mut EbarxDataset,
) -> EbarxStatus {
    guard(|| {
        let y = slice(y, len, "y")?.to_vec();
        let (u, u_pre) = if u.is_null() {
            (Vec::new(), Vec::new())
        } else {
            (slice(u, len, "u")?.to_vec(), vec![0.0; lags])
        };
        store(
            out,
            EbarxDataset(Dataset::new(y, u, vec![0.0; lags], u_pre)?),
        )
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ebarx_dataset_load(
    path: *const c_char,
    out: *mut *mut EbarxDataset,
) -> EbarxStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, EbarxDataset(Dataset::load_csv(&path)?))
    })
}

/// # Safety
/// `d` must be a live dataset handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ebarx_dataset_save(
    d: *const EbarxDataset,
    path: *const c_char,
) -> EbarxStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        Ok(d.0.save_csv(&path_arg(path)?)?)
    })
}

/// Number of samples, 0 for a null handle.
///
/// # Safety
/// `d` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ebarx_dataset_len(d: *const EbarxDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Copies the output series into `buf`.
///
/// # Safety
/// `d` must be a live dataset handle and `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ebarx_dataset_output(
    d: *const EbarxDataset,
    buf: *mut f64,
    cap: usize,
) -> EbarxStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        if cap < d.0.len() {
            return Err(failure(
                EbarxStatus::BufferTooSmall,
                format!("buffer holds {cap} values, dataset has {}", d.0.len()),
            ));
        }
        slice_mut(buf, d.0.len(), "buffer")?.copy_from_slice(&d.0.y);
        Ok(())
    })
}

/// # Safety
/// `d` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ebarx_dataset_free(d: *mut EbarxDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Least squares fit of an ARX(n, m) model. `variance` and `sigma2` may be
/// null.
///
/// # Safety
/// `estimate` must hold `n+m` doubles and `variance` `(n+m)^2`.
#[no_mangle]
pub unsafe extern "C" fn ebarx_least_squares(
    d: *const EbarxDataset,
    n: usize,
    m: usize,
    estimate: *mut f64,
    variance: *mut f64,
    sigma2: *mut f64,
) -> EbarxStatus {
    guard(|| {
        let r = least_squares(&forward(handle(d, "dataset")?, n, m)?)?;
        write_report(&r, estimate, variance)?;
        if !sigma2.is_null() {
            *sigma2 = r.sigma2;
        }
        Ok(())
    })
}

/// Marginal (fixed-effects) estimate under the prior `(0, sigma2, pi)`.
///
/// # Safety
/// `pi` must hold `(n+m)^2` doubles; output buffers as for
/// [`ebarx_least_squares`].
#[no_mangle]
pub unsafe extern "C" fn ebarx_marginal_estimate(
    d: *const EbarxDataset,
    n: usize,
    m: usize,
    sigma2: f64,
    pi: *const f64,
    estimate: *mut f64,
    variance: *mut f64,
) -> EbarxStatus {
    guard(|| {
        let prior = prior_args(ptr::null(), sigma2, pi, n + m)?;
        write_report(
            &marginal_estimate(&forward(handle(d, "dataset")?, n, m)?, &prior)?,
            estimate,
            variance,
        )
    })
}

/// Posterior mean and covariance under the prior `(mu, sigma2, pi)`; a null
/// `mu` means zero.
///
/// # Safety
/// `mu` holds `n+m` doubles, `pi` `(n+m)^2`; output buffers as for
/// [`ebarx_least_squares`].
#[no_mangle]
pub unsafe extern "C" fn ebarx_bayes_posterior(
    d: *const EbarxDataset,
    n: usize,
    m: usize,
    mu: *const f64,
    sigma2: f64,
    pi: *const f64,
    estimate: *mut f64,
    variance: *mut f64,
) -> EbarxStatus {
    guard(|| {
        let prior = prior_args(mu, sigma2, pi, n + m)?;
        write_report(
            &bayes_posterior(&forward(handle(d, "dataset")?, n, m)?, &prior)?,
            estimate,
            variance,
        )
    })
}

/// Scalar MSE of both estimators against the true parameter `theta0`.
///
/// # Safety
/// `theta0` and `mu` hold `n+m` doubles, `pi` `(n+m)^2`, and both outputs
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ebarx_mse(
    d: *const EbarxDataset,
    n: usize,
    m: usize,
    mu: *const f64,
    sigma2: f64,
    pi: *const f64,
    theta0: *const f64,
    marg_out: *mut f64,
    eb_out: *mut f64,
) -> EbarxStatus {
    guard(|| {
        let p = n + m;
        let prior = prior_args(mu, sigma2, pi, p)?;
        let theta0 = Vector::from_column_slice(slice(theta0, p, "theta0")?);
        let r = forward(handle(d, "dataset")?, n, m)?;
        let marg = marginal_mse(&r.gram(), &prior.pi, sigma2)?;
        let eb = eb_mse(&r, &prior, &theta0)?;
        slice_mut(marg_out, 1, "marg_out")?[0] = marg;
        slice_mut(eb_out, 1, "eb_out")?[0] = eb;
        Ok(())
    })
}

/// Scalar-model squared error of the EB and marginal estimators over a grid of prior
/// variances.
///
/// # Safety
/// `pi`, `e2_eb` and `e2_m` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ebarx_scalar_curves(
    theta0: f64,
    delta_sq: f64,
    pi: *const f64,
    len: usize,
    e2_eb: *mut f64,
    e2_m: *mut f64,
) -> EbarxStatus {
    guard(|| {
        if !(delta_sq > 0.0) {
            return Err(CliError::usage("delta_sq must be positive"));
        }
        let grid = slice(pi, len, "pi")?;
        let eb = slice_mut(e2_eb, len, "e2_eb")?;
        let marg = slice_mut(e2_m, len, "e2_m")?;
        for (k, pt) in scalar_mse_curves(theta0, delta_sq, grid)
            .into_iter()
            .enumerate()
        {
            eb[k] = pt.e2_eb;
            marg[k] = pt.e2_m;
        }
        Ok(())
    })
}

/// Runs the forward filter from the prior `(mu, sigma2, pi)`.
///
/// # Safety
/// Arguments as for [`ebarx_bayes_posterior`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ebarx_run_forward(
    d: *const EbarxDataset,
    n: usize,
    m: usize,
    mu: *const f64,
    sigma2: f64,
    pi: *const f64,
    out: *mut *mut EbarxTrace,
) -> EbarxStatus {
    guard(|| {
        let prior = prior_args(mu, sigma2, pi, n + m)?;
        let r = forward(handle(d, "dataset")?, n, m)?;
        let trace = run_forward(&r, &prior)?;
        store(
            out,
            EbarxTrace {
                trace,
                gram: r.gram(),
            },
        )
    })
}

/// Runs the backward filter of an AR(n) model. A null `terminal_p` starts
/// diffuse; a null `terminal_mean` starts at zero. `sigma2_ref` is the noise
/// variance the terminal covariance is normalized by.
///
/// # Safety
/// `terminal_mean` holds `n` doubles and `terminal_p` `n*n`; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ebarx_run_backward(
    d: *const EbarxDataset,
    n: usize,
    terminal_mean: *const f64,
    terminal_p: *const f64,
    sigma2_ref: f64,
    out: *mut *mut EbarxTrace,
) -> EbarxStatus {
    guard(|| {
        let r = build_regressors(&handle(d, "dataset")?.0, n, 0, Orientation::Backward)?;
        let mut term = if terminal_p.is_null() {
            TerminalCondition::diffuse(n)
        } else {
            let p = SymMatrix::from_row_slice(n, slice(terminal_p, n * n, "terminal_p")?)
                .map_err(|e| CliError::usage(e.to_string()))?;
            TerminalCondition::new(Vector::zeros(n), p)?
        };
        if !terminal_mean.is_null() {
            term.mean = Vector::from_column_slice(slice(terminal_mean, n, "terminal_mean")?);
        }
        term.sigma2_ref = sigma2_ref;
        let trace = run_backward(&r, &term)?;
        store(
            out,
            EbarxTrace {
                trace,
                gram: r.gram(),
            },
        )
    })
}

/// Number of processed rows; the trace holds one more state than this.
///
/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn ebarx_trace_steps(t: *const EbarxTrace) -> usize {
    t.as_ref().map_or(0, |t| t.trace.steps())
}

/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn ebarx_trace_dim(t: *const EbarxTrace) -> usize {
    t.as_ref().map_or(0, |t| t.trace.initial().xhat.len())
}

/// State `k` (0 is the initial condition). `p_norm` and `sigma2_hat` may be
/// null.
///
/// # Safety
/// `xhat` holds `dim` doubles and `p_norm` `dim^2`.
#[no_mangle]
pub unsafe extern "C" fn ebarx_trace_state(
    t: *const EbarxTrace,
    k: usize,
    xhat: *mut f64,
    p_norm: *mut f64,
    sigma2_hat: *mut f64,
) -> EbarxStatus {
    guard(|| {
        let t = handle(t, "trace")?;
        let s = t.trace.states.get(k).ok_or_else(|| {
            CliError::usage(format!(
                "state {k} out of range (trace has {})",
                t.trace.states.len()
            ))
        })?;
        let p = s.xhat.len();
        slice_mut(xhat, p, "xhat")?.copy_from_slice(s.xhat.as_slice());
        if !p_norm.is_null() {
            write_matrix(&s.p_norm, slice_mut(p_norm, p * p, "p_norm")?);
        }
        if !sigma2_hat.is_null() {
            *sigma2_hat = s.sigma2_hat;
        }
        Ok(())
    })
}

/// # Safety
/// `t` must be a live trace handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ebarx_trace_save_csv(
    t: *const EbarxTrace,
    path: *const c_char,
) -> EbarxStatus {
    guard(|| {
        let t = handle(t, "trace")?;
        let file = std::fs::File::create(path_arg(path)?)?;
        let mut w = std::io::BufWriter::new(file);
        t.trace.write_csv(&mut w)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    })
}

/// Recovers the normalized prior variance from the final state of a backward
/// trace. Multiply by that state's `sigma2_hat` for the unnormalized prior.
/// `clipped` and `ill_conditioned` may be null.
///
/// # Safety
/// `pi` holds `dim^2` doubles.
#[no_mangle]
pub unsafe extern "C" fn ebarx_recover_prior(
    t: *const EbarxTrace,
    pi: *mut f64,
    clipped: *mut c_int,
    ill_conditioned: *mut c_int,
) -> EbarxStatus {
    guard(|| {
        let t = handle(t, "trace")?;
        let rec = recover_prior(t.trace.last(), &t.gram)?;
        let p = rec.pi.dim();
        write_matrix(&rec.pi, slice_mut(pi, p * p, "pi")?);
        if !clipped.is_null() {
            *clipped = c_int::from(rec.clipped);
        }
        if !ill_conditioned.is_null() {
            *ill_conditioned = c_int::from(rec.ill_conditioned);
        }
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ebarx_trace_free(t: *mut EbarxTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Runs a Monte-Carlo comparison described by `[compare]` config text (the
/// CLI config format; other sections are parsed and ignored). Fails with
/// `Scenario` when every replicate of some scenario failed; the handle is
/// still produced in that case.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ebarx_compare_run(
    config: *const c_char,
    out: *mut *mut EbarxComparison,
) -> EbarxStatus {
    guard(|| {
        if config.is_null() {
            return Err(failure(EbarxStatus::NullPointer, "config is null"));
        }
        let text = CStr::from_ptr(config)
            .to_str()
            .map_err(|_| CliError::usage("config is not UTF-8"))?;
        let cfg = RunConfig::parse(text)?.compare;
        let mut results = Vec::new();
        for (lambda, spec) in compare_scenarios(&cfg)? {
            results.push((lambda, run_scenario(&spec)?));
        }
        let failed: Vec<String> = results
            .iter()
            .filter(|(_, r)| r.failed_entirely())
            .map(|(_, r)| r.spec.id.clone())
            .collect();
        store(
            out,
            EbarxComparison {
                results,
                lambdas: cfg.lambdas.clone(),
                p: cfg.a.len(),
            },
        )?;
        if failed.is_empty() {
            Ok(())
        } else {
            Err(failure(
                EbarxStatus::Scenario,
                format!("every replicate failed in: {}", failed.join(", ")),
            ))
        }
    })
}

fn rows(c: &EbarxComparison) -> impl Iterator<Item = EbarxAggregateRow> + '_ {
    c.results.iter().flat_map(|(lambda, r)| {
        let pi_scale = r.spec.prior_init.pi.get(0, 0);
        r.aggregates.iter().map(move |a| EbarxAggregateRow {
            lambda: *lambda,
            pi_scale,
            n: a.n,
            replicates: a.replicates,
            failed: a.failed,
            marg_mse_median: a.marg_mse.median,
            marg_mse_iqr: a.marg_mse.iqr,
            eb_mse_median: a.eb_mse.median,
            eb_mse_iqr: a.eb_mse.iqr,
            eb_mse_averaged: a.eb_mse_averaged,
            clip_rate: a.clip_rate,
        })
    })
}

/// Number of aggregate rows, ordered by λ, then π, then N.
///
/// # Safety
/// `c` must be null or a live comparison handle.
#[no_mangle]
pub unsafe extern "C" fn ebarx_comparison_len(c: *const EbarxComparison) -> usize {
    c.as_ref().map_or(0, |c| rows(c).count())
}

/// # Safety
/// `c` must be a live comparison handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ebarx_comparison_row(
    c: *const EbarxComparison,
    k: usize,
    out: *mut EbarxAggregateRow,
) -> EbarxStatus {
    guard(|| {
        let c = handle(c, "comparison")?;
        let row = rows(c)
            .nth(k)
            .ok_or_else(|| CliError::usage(format!("row {k} out of range")))?;
        let out = out
            .as_mut()
            .ok_or_else(|| failure(EbarxStatus::NullPointer, "output row is null"))?;
        *out = row;
        Ok(())
    })
}

/// Writes `table_lambda{λ}.csv` and `aggregate_lambda{λ}.csv` into `dir`,
/// the same files as `ebarx compare`.
///
/// # Safety
/// `c` must be a live comparison handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ebarx_comparison_save(
    c: *const EbarxComparison,
    dir: *const c_char,
) -> EbarxStatus {
    guard(|| {
        let c = handle(c, "comparison")?;
        let dir = path_arg(dir)?;
        std::fs::create_dir_all(&dir)?;
        for &lambda in &c.lambdas {
            let group: Vec<&ScenarioResult> = c
                .results
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
            save_reports_csv(&reports, c.p, &join(&dir, "table", lambda))?;
            save_aggregates_csv(&aggregates, c.p, &join(&dir, "aggregate", lambda))?;
        }
        Ok(())
    })
}

fn join(dir: &Path, stem: &str, lambda: f64) -> PathBuf {
    dir.join(format!("{stem}_lambda{lambda}.csv"))
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ebarx_comparison_free(c: *mut EbarxComparison) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
