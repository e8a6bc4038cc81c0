//! ARX model description, stability, simulation and regressor construction.
//!
//! The model is
//!
//! ```text
//! y(t) = a₁y(t−1) + … + a_n y(t−n) + b₁u(t−1) + … + b_m u(t−m) + w(t)
//! ```
//!
//! with `w` Gaussian white noise of variance `σ²`. Writing
//! `φ(t) = [y(t−1) … y(t−n) u(t−1) … u(t−m)]ᵀ` turns it into the
//! pseudo-linear regression `y(t) = φ(t)ᵀθ + w(t)`. For a pure AR model the
//! same parameters also describe the anticausal recursion
//! `y(t) = φ̄(t)ᵀθ + w̄(t)` with `φ̄(t) = [y(t+1) … y(t+n)]ᵀ`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Complex;
use thiserror::Error;

use crate::numerics::{Matrix, SymMatrix, Vector};
use crate::rng::{self, STREAM_NOISE, STREAM_WALK};

pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter vector has length {actual}, expected n + m = {expected}")]
    ThetaLength { expected: usize, actual: usize },
    #[error("noise variance must be positive and finite, got {0}")]
    BadVariance(f64),
    #[error(
        "model is unstable (largest root modulus {max_modulus}); refusing to simulate with burn-in"
    )]
    UnstableModel { max_modulus: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("input sequence has length {actual}, expected {expected}")]
    InputLength { expected: usize, actual: usize },
    #[error("invalid parameter walk: {0}")]
    InvalidWalk(String),
    #[error("backward regressors are only defined for pure AR models (m = 0)")]
    BackwardWithInput,
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset format: {0}")]
    Format(String),
}

/// Fixed-effects ARX model: orders, parameters `[a₁…a_n b₁…b_m]` and noise
/// variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxSpec {
    pub n: usize,
    pub m: usize,
    pub theta: Vector,
    pub sigma2: f64,
}

impl ArxSpec {
    pub fn new(n: usize, m: usize, theta: &[f64], sigma2: f64) -> Result<Self, ModelError> {
        if theta.len() != n + m {
            return Err(ModelError::ThetaLength {
                expected: n + m,
                actual: theta.len(),
            });
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(ModelError::BadVariance(sigma2));
        }
        Ok(Self {
            n,
            m,
            theta: Vector::from_column_slice(theta),
            sigma2,
        })
    }

    pub fn ar(a: &[f64], sigma2: f64) -> Result<Self, ModelError> {
        Self::new(a.len(), 0, a, sigma2)
    }

    pub fn p(&self) -> usize {
        self.n + self.m
    }

    pub fn ar_coefficients(&self) -> &[f64] {
        &self.theta.as_slice()[..self.n]
    }

    pub fn input_coefficients(&self) -> &[f64] {
        &self.theta.as_slice()[self.n..]
    }

    pub fn lags(&self) -> usize {
        self.n.max(self.m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stability {
    pub stable: bool,
    /// Root moduli of `zⁿ − a₁zⁿ⁻¹ − … − a_n`, sorted descending.
    pub moduli: Vec<f64>,
}

/// Checks that every root of `zⁿ − a₁zⁿ⁻¹ − … − a_n` lies strictly inside
/// the unit circle. Closed form for `n ≤ 2`, companion eigenvalues above.
pub fn check_stability(spec: &ArxSpec) -> Stability {
    ar_stability(spec.ar_coefficients())
}

pub fn ar_stability(a: &[f64]) -> Stability {
    let mut moduli = match a.len() {
        0 => Vec::new(),
        1 => vec![a[0].abs()],
        2 => {
            let disc = a[0] * a[0] + 4.0 * a[1];
            if disc >= 0.0 {
                let s = disc.sqrt();
                vec![((a[0] + s) / 2.0).abs(), ((a[0] - s) / 2.0).abs()]
            } else {
                let m = (-a[1]).sqrt();
                vec![m, m]
            }
        }
        n => {
            let mut companion = Matrix::zeros(n, n);
            for (j, &aj) in a.iter().enumerate() {
                companion[(0, j)] = aj;
            }
            for i in 1..n {
                companion[(i, i - 1)] = 1.0;
            }
            companion
                .complex_eigenvalues()
                .iter()
                .map(|z: &Complex<f64>| z.norm())
                .collect()
        }
    };
    moduli.sort_by(|x, y| y.total_cmp(x));
    let stable = moduli.iter().all(|&r| r < 1.0);
    Stability { stable, moduli }
}

/// Observed input/output record. `y[k]`/`u[k]` hold time `t = k + 1`; the
/// presample vectors hold the values before `t = 1` in chronological order,
/// so their last element is time `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub y_presample: Vec<f64>,
    pub u_presample: Vec<f64>,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        u: Vec<f64>,
        y_presample: Vec<f64>,
        u_presample: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if !u.is_empty() && u.len() != y.len() {
            return Err(ModelError::InputLength {
                expected: y.len(),
                actual: u.len(),
            });
        }
        if u.is_empty() && !u_presample.is_empty() {
            return Err(ModelError::Format(
                "input presample given without input".into(),
            ));
        }
        Ok(Self {
            y,
            u,
            y_presample,
            u_presample,
        })
    }

    /// Pure output series with a zero presample of length `lags`.
    pub fn from_output(y: Vec<f64>, lags: usize) -> Self {
        Self {
            y,
            u: Vec::new(),
            y_presample: vec![0.0; lags],
            u_presample: Vec::new(),
        }
    }

    /// Moves the first `lags` samples of `series` into the presample.
    pub fn from_series_with_leading_presample(
        series: &[f64],
        lags: usize,
    ) -> Result<Self, ModelError> {
        if series.len() < lags {
            return Err(ModelError::InsufficientData(format!(
                "series of length {} cannot supply {lags} presample values",
                series.len()
            )));
        }
        Ok(Self {
            y: series[lags..].to_vec(),
            u: Vec::new(),
            y_presample: series[..lags].to_vec(),
            u_presample: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn has_input(&self) -> bool {
        !self.u.is_empty()
    }

    /// Output at calendar time `t` (`t ≤ 0` reads the presample).
    pub fn y_at(&self, t: i64) -> Option<f64> {
        series_at(&self.y, &self.y_presample, t)
    }

    pub fn u_at(&self, t: i64) -> Option<f64> {
        series_at(&self.u, &self.u_presample, t)
    }

    /// First `len` samples, keeping the presample.
    pub fn prefix(&self, len: usize) -> Dataset {
        let len = len.min(self.len());
        Dataset {
            y: self.y[..len].to_vec(),
            u: if self.has_input() {
                self.u[..len].to_vec()
            } else {
                Vec::new()
            },
            y_presample: self.y_presample.clone(),
            u_presample: self.u_presample.clone(),
        }
    }

    /// Writes `t,y[,u]` rows, presample rows first (`t ≤ 0`), 17 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let with_u = self.has_input();
        writeln!(w, "{}", if with_u { "t,y,u" } else { "t,y" })?;
        let pre = self.y_presample.len().max(self.u_presample.len()) as i64;
        for t in (1 - pre)..=(self.len() as i64) {
            let y = self.y_at(t).unwrap_or(0.0);
            if with_u {
                let u = self.u_at(t).unwrap_or(0.0);
                writeln!(w, "{t},{},{}", fmt_f64(y), fmt_f64(u))?;
            } else {
                writeln!(w, "{t},{}", fmt_f64(y))?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), ModelError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ModelError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = reader.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let with_u = match names.as_slice() {
            ["t", "y"] => false,
            ["t", "y", "u"] => true,
            _ => {
                return Err(ModelError::Format(format!(
                    "expected header `t,y` or `t,y,u`, got `{}`",
                    names.join(",")
                )))
            }
        };
        let mut rows: Vec<(i64, f64, f64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64, ModelError> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| ModelError::Format(format!("bad number `{}`: {e}", &record[i])))
            };
            let t = record[0]
                .parse::<i64>()
                .map_err(|e| ModelError::Format(format!("bad time index `{}`: {e}", &record[0])))?;
            let y = parse(1)?;
            let u = if with_u { parse(2)? } else { 0.0 };
            rows.push((t, y, u));
        }
        for pair in rows.windows(2) {
            if pair[1].0 != pair[0].0 + 1 {
                return Err(ModelError::Format(
                    "time index must increase by one per row".into(),
                ));
            }
        }
        let mut d = Dataset {
            y: Vec::new(),
            u: Vec::new(),
            y_presample: Vec::new(),
            u_presample: Vec::new(),
        };
        for (t, y, u) in rows {
            if t <= 0 {
                d.y_presample.push(y);
                if with_u {
                    d.u_presample.push(u);
                }
            } else {
                d.y.push(y);
                if with_u {
                    d.u.push(u);
                }
            }
        }
        Ok(d)
    }

    pub fn load_csv(path: &Path) -> Result<Self, ModelError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn series_at(data: &[f64], presample: &[f64], t: i64) -> Option<f64> {
    if t >= 1 {
        data.get((t - 1) as usize).copied()
    } else {
        let back = (-t) as usize;
        presample.len().checked_sub(back + 1).map(|i| presample[i])
    }
}

/// Full-precision (17 significant digit) formatting used by every CSV writer.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Runs the ARX recursion on an explicit noise sequence. The output has the
/// length of `noise`; `u` must have the same length when `m > 0`. Presamples
/// shorter than the lag count are padded with leading zeros.
pub fn simulate_with_noise(
    spec: &ArxSpec,
    u: &[f64],
    noise: &[f64],
    y_presample: &[f64],
    u_presample: &[f64],
) -> Result<Dataset, ModelError> {
    let lags = spec.lags();
    if spec.m > 0 && u.len() != noise.len() {
        return Err(ModelError::InputLength {
            expected: noise.len(),
            actual: u.len(),
        });
    }
    let y_pre = pad_presample(y_presample, lags);
    let u_pre = if spec.m > 0 {
        pad_presample(u_presample, lags)
    } else {
        Vec::new()
    };
    let mut y_full = y_pre.clone();
    let mut u_full = u_pre.clone();
    if spec.m > 0 {
        u_full.extend_from_slice(u);
    }
    let a = spec.ar_coefficients();
    let b = spec.input_coefficients();
    for (k, &w) in noise.iter().enumerate() {
        let idx = lags + k;
        let value = arx_output(a, b, &y_full, &u_full, idx) + w;
        y_full.push(value);
    }
    Ok(Dataset {
        y: y_full[lags..].to_vec(),
        u: if spec.m > 0 { u.to_vec() } else { Vec::new() },
        y_presample: y_pre,
        u_presample: u_pre,
    })
}

#[inline]
fn arx_output(a: &[f64], b: &[f64], y: &[f64], u: &[f64], idx: usize) -> f64 {
    let mut acc = 0.0;
    for (k, &ak) in a.iter().enumerate() {
        acc += ak * y[idx - 1 - k];
    }
    for (k, &bk) in b.iter().enumerate() {
        acc += bk * u[idx - 1 - k];
    }
    acc
}

fn pad_presample(values: &[f64], lags: usize) -> Vec<f64> {
    if values.len() >= lags {
        values.to_vec()
    } else {
        let mut v = vec![0.0; lags - values.len()];
        v.extend_from_slice(values);
        v
    }
}

/// Drops the first `burn_in` samples of a simulated record, turning the last
/// `lags` of them into the presample.
fn discard_burn_in(full: Dataset, burn_in: usize, lags: usize) -> Dataset {
    let mut y_all = full.y_presample.clone();
    y_all.extend_from_slice(&full.y);
    let cut = full.y_presample.len() + burn_in;
    let y_presample = y_all[cut - lags.min(cut)..cut].to_vec();
    let (u, u_presample) = if full.has_input() {
        let mut u_all = full.u_presample.clone();
        u_all.extend_from_slice(&full.u);
        (
            u_all[cut..].to_vec(),
            u_all[cut - lags.min(cut)..cut].to_vec(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Dataset {
        y: y_all[cut..].to_vec(),
        u,
        y_presample,
        u_presample,
    }
}

/// Simulates `n_samples` retained samples of a fixed-parameter model after
/// discarding `burn_in` samples. `u` covers either the retained samples only
/// (the burn-in then sees zero input) or burn-in plus retained samples.
pub fn simulate_fixed(
    spec: &ArxSpec,
    u: &[f64],
    n_samples: usize,
    seed: u64,
    burn_in: usize,
) -> Result<Dataset, ModelError> {
    let stability = check_stability(spec);
    if burn_in > 0 && !stability.stable {
        return Err(ModelError::UnstableModel {
            max_modulus: stability.moduli.first().copied().unwrap_or(0.0),
        });
    }
    let total = burn_in + n_samples;
    let u_full: Vec<f64> = if spec.m == 0 {
        Vec::new()
    } else if u.len() == total {
        u.to_vec()
    } else if u.len() == n_samples {
        let mut v = vec![0.0; burn_in];
        v.extend_from_slice(u);
        v
    } else {
        return Err(ModelError::InputLength {
            expected: n_samples,
            actual: u.len(),
        });
    };
    let sd = spec.sigma2.sqrt();
    let noise: Vec<f64> = rng::standard_normals(&mut rng::stream(seed, STREAM_NOISE), total)
        .into_iter()
        .map(|z| sd * z)
        .collect();
    let full = simulate_with_noise(spec, &u_full, &noise, &[], &[])?;
    Ok(discard_burn_in(full, burn_in, spec.lags()))
}

/// Mean-reverting random walk for the AR coefficients:
/// `a(t+1) = mean + D (a(t) − mean) + λ v(t)` with `v` standard white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamWalkSpec {
    pub mean: Vec<f64>,
    pub decay: Vec<f64>,
    pub lambda: f64,
}

impl Default for ParamWalkSpec {
    fn default() -> Self {
        Self {
            mean: vec![1.5, -0.7],
            decay: vec![0.98, 0.97],
            lambda: 0.0,
        }
    }
}

impl ParamWalkSpec {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.mean.len() != self.decay.len() {
            return Err(ModelError::InvalidWalk(format!(
                "mean has {} entries but decay has {}",
                self.mean.len(),
                self.decay.len()
            )));
        }
        if let Some(d) = self.decay.iter().find(|d| !(d.abs() < 1.0)) {
            return Err(ModelError::InvalidWalk(format!(
                "decay {d} is outside (-1, 1)"
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ModelError::InvalidWalk(format!(
                "lambda {} must be >= 0",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Per-coordinate stationary standard deviation `λ / √(1 − dᵢ²)`.
    pub fn stationary_std(&self) -> Vec<f64> {
        self.decay
            .iter()
            .map(|d| self.lambda / (1.0 - d * d).sqrt())
            .collect()
    }
}

/// Output record plus the coefficient trajectory that generated it;
/// `theta[k]` is the coefficient vector used at time `t = k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaryingSimulation {
    pub dataset: Dataset,
    pub theta: Vec<Vec<f64>>,
}

impl VaryingSimulation {
    pub fn write_theta_csv<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let p = self.theta.first().map_or(0, Vec::len);
        let header: Vec<String> = (1..=p).map(|i| format!("a{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (k, row) in self.theta.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(w, "{},{}", k + 1, vals.join(","))?;
        }
        Ok(())
    }
}

/// Simulates an AR model whose coefficients follow `walk`, started at the
/// walk mean at the first burn-in sample. The measurement noise uses the
/// same stream as [`simulate_fixed`], so `λ = 0` reproduces it exactly.
pub fn simulate_varying(
    walk: &ParamWalkSpec,
    sigma2: f64,
    n_samples: usize,
    seed: u64,
    burn_in: usize,
) -> Result<VaryingSimulation, ModelError> {
    walk.validate()?;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(ModelError::BadVariance(sigma2));
    }
    let nominal = ArxSpec::ar(&walk.mean, sigma2)?;
    let stability = check_stability(&nominal);
    if burn_in > 0 && !stability.stable {
        return Err(ModelError::UnstableModel {
            max_modulus: stability.moduli.first().copied().unwrap_or(0.0),
        });
    }
    let n = walk.mean.len();
    let total = burn_in + n_samples;
    let sd = sigma2.sqrt();
    let noise = rng::standard_normals(&mut rng::stream(seed, STREAM_NOISE), total);
    let mut walk_rng = rng::stream(seed, STREAM_WALK);
    let mut y_full = vec![0.0; n];
    let mut a = walk.mean.clone();
    let mut trajectory = Vec::with_capacity(n_samples);
    for (k, z) in noise.iter().enumerate() {
        let idx = n + k;
        let value = arx_output(&a, &[], &y_full, &[], idx) + sd * z;
        y_full.push(value);
        if k >= burn_in {
            trajectory.push(a.clone());
        }
        let v = rng::standard_normals(&mut walk_rng, n);
        for i in 0..n {
            a[i] = walk.mean[i] + walk.decay[i] * (a[i] - walk.mean[i]) + walk.lambda * v[i];
        }
    }
    let full = Dataset {
        y: y_full[n..].to_vec(),
        u: Vec::new(),
        y_presample: y_full[..n].to_vec(),
        u_presample: Vec::new(),
    };
    Ok(VaryingSimulation {
        dataset: discard_burn_in(full, burn_in, n),
        theta: trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Forward,
    Backward,
}

/// Stacked regression `y = Φθ + w`. `times[k]` is the calendar time of row
/// `k`; forward rows increase in time, backward rows decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSet {
    pub phi: Matrix,
    pub y: Vector,
    pub times: Vec<i64>,
    pub orientation: Orientation,
}

impl RegressorSet {
    pub fn new(phi: Matrix, y: Vector, orientation: Orientation) -> Result<Self, ModelError> {
        if phi.nrows() != y.len() {
            return Err(ModelError::InsufficientData(format!(
                "{} regressor rows but {} targets",
                phi.nrows(),
                y.len()
            )));
        }
        let times = (1..=phi.nrows() as i64).collect();
        Ok(Self {
            phi,
            y,
            times,
            orientation,
        })
    }

    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn p(&self) -> usize {
        self.phi.ncols()
    }

    pub fn row(&self, k: usize) -> Vector {
        self.phi.row(k).transpose()
    }

    /// `ΦᵀΦ`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::gram(&self.phi)
    }

    /// `Φᵀy`.
    pub fn cross(&self) -> Vector {
        self.phi.transpose() * &self.y
    }

    /// The first `len` rows in processing order.
    pub fn head(&self, len: usize) -> RegressorSet {
        let len = len.min(self.rows());
        RegressorSet {
            phi: self.phi.rows(0, len).into_owned(),
            y: self.y.rows(0, len).into_owned(),
            times: self.times[..len].to_vec(),
            orientation: self.orientation,
        }
    }
}

/// Builds the forward (`φ(t)`, `t = 1…N`) or backward
/// (`φ̄(t)`, `t = N−n … 1`) regression for orders `(n, m)`.
pub fn build_regressors(
    d: &Dataset,
    n: usize,
    m: usize,
    orientation: Orientation,
) -> Result<RegressorSet, ModelError> {
    match orientation {
        Orientation::Forward => build_forward(d, n, m),
        Orientation::Backward => {
            if m > 0 {
                return Err(ModelError::BackwardWithInput);
            }
            build_backward(d, n)
        }
    }
}

fn build_forward(d: &Dataset, n: usize, m: usize) -> Result<RegressorSet, ModelError> {
    if d.y_presample.len() < n {
        return Err(ModelError::InsufficientData(format!(
            "forward rows need {n} presample outputs, have {}",
            d.y_presample.len()
        )));
    }
    if m > 0 {
        if !d.has_input() {
            return Err(ModelError::InsufficientData(format!(
                "m = {m} but the dataset has no input"
            )));
        }
        if d.u_presample.len() < m {
            return Err(ModelError::InsufficientData(format!(
                "forward rows need {m} presample inputs, have {}",
                d.u_presample.len()
            )));
        }
    }
    let rows = d.len();
    let p = n + m;
    let mut phi = Matrix::zeros(rows, p);
    let mut y = Vector::zeros(rows);
    for k in 0..rows {
        let t = k as i64 + 1;
        for j in 0..n {
            phi[(k, j)] = d.y_at(t - 1 - j as i64).expect("presample checked");
        }
        for j in 0..m {
            phi[(k, n + j)] = d.u_at(t - 1 - j as i64).expect("presample checked");
        }
        y[k] = d.y[k];
    }
    Ok(RegressorSet {
        phi,
        y,
        times: (1..=rows as i64).collect(),
        orientation: Orientation::Forward,
    })
}

fn build_backward(d: &Dataset, n: usize) -> Result<RegressorSet, ModelError> {
    let len = d.len();
    if len <= n {
        return Err(ModelError::InsufficientData(format!(
            "backward rows need more than n = {n} samples, have {len}"
        )));
    }
    let rows = len - n;
    let mut phi = Matrix::zeros(rows, n);
    let mut y = Vector::zeros(rows);
    let mut times = Vec::with_capacity(rows);
    for k in 0..rows {
        let t = (len - n - k) as i64;
        for j in 0..n {
            phi[(k, j)] = d.y_at(t + 1 + j as i64).expect("within range");
        }
        y[k] = d.y_at(t).expect("within range");
        times.push(t);
    }
    Ok(RegressorSet {
        phi,
        y,
        times,
        orientation: Orientation::Backward,
    })
}
