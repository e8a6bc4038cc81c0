//! Conditionally Gaussian Kalman filters for a static parameter.
//!
//! Both directions propagate the σ²-normalized covariance, so the gain
//! bracket is `φᵀPφ + 1`. The unnormalized covariance is `σ²·P` where `σ²`
//! is the reference variance the filter was started with
//! ([`FilterState::sigma2_ref`]).

use std::io::Write;

use thiserror::Error;

use crate::estimators::Prior;
use crate::model::{fmt_f64, ModelError, Orientation, RegressorSet};
use crate::numerics::{Matrix, NumericsError, SymMatrix, Vector};

/// Eigenvalue floor applied to a recovered prior precision.
pub const CLIP_EPSILON: f64 = 1e-8;
/// Condition number above which a recovered prior is flagged.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Default terminal covariance scale for the backward filter.
pub const DIFFUSE_TERMINAL_SCALE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("regressors have {actual} columns but the filter state has dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{0:?} filter cannot run on {1:?} regressors")]
    WrongOrientation(Direction, Orientation),
    #[error("noise variance estimate must be positive, got {0}")]
    BadVariance(f64),
    #[error("filter covariance is not invertible (leading minor {minor})")]
    SingularCovariance { minor: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// Time of the last observation absorbed; before any update this is one
    /// step outside the data (`0` forward, last time `+ 1` backward).
    pub t: i64,
    pub xhat: Vector,
    pub p_norm: SymMatrix,
    /// Running mean of squared post-fit residuals (backward only).
    pub lambda2: f64,
    pub sigma2_hat: f64,
    pub sigma2_ref: f64,
    pub direction: Direction,
    pub processed: usize,
}

impl FilterState {
    pub fn forward(prior: &Prior) -> Self {
        Self {
            t: 0,
            xhat: prior.mu.clone(),
            p_norm: prior.pi.clone(),
            lambda2: 0.0,
            sigma2_hat: prior.sigma2,
            sigma2_ref: prior.sigma2,
            direction: Direction::Forward,
            processed: 0,
        }
    }

    pub fn backward(t: i64, terminal: &TerminalCondition) -> Self {
        Self {
            t,
            xhat: terminal.mean.clone(),
            p_norm: terminal.p.clone(),
            lambda2: terminal.lambda2,
            sigma2_hat: terminal.lambda2,
            sigma2_ref: terminal.sigma2_ref,
            direction: Direction::Backward,
            processed: 0,
        }
    }

    pub fn p(&self) -> usize {
        self.xhat.len()
    }

    /// Unnormalized covariance `σ²_ref · P`.
    pub fn covariance(&self) -> SymMatrix {
        self.p_norm.scale(self.sigma2_ref)
    }
}

/// Quantities produced transiently by one measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: FilterState,
    /// Pre-fit innovation `y − φᵀx` using the state before the update.
    pub innovation: f64,
    /// Innovation scaled by `1/√(φᵀPφ + 1)`.
    pub normalized_innovation: f64,
    /// Post-fit residual `y − φᵀx'`.
    pub residual: f64,
    pub gain: Vector,
}

struct Update {
    xhat: Vector,
    p_norm: SymMatrix,
    innovation: f64,
    bracket: f64,
    gain: Vector,
}

fn measurement_update(xhat: &Vector, p_norm: &SymMatrix, phi: &Vector, y: f64) -> Update {
    let p_phi = p_norm.mul_vec(phi);
    let bracket = phi.dot(&p_phi) + 1.0;
    let gain = &p_phi / bracket;
    let innovation = y - phi.dot(xhat);
    let xhat = xhat + &gain * innovation;
    let p = p_norm.as_matrix() - (&p_phi * p_phi.transpose()) / bracket;
    Update {
        xhat,
        p_norm: SymMatrix::symmetrize(p),
        innovation,
        bracket,
        gain,
    }
}

/// One forward update with regressor `φ(t+1)` and observation `y(t+1)`.
/// `σ̂²` is the count-indexed running mean of `e²/(φᵀPφ + 1)`.
pub fn forward_step(s: &FilterState, phi: &Vector, y_next: f64) -> Result<StepOutput, FilterError> {
    check_step(s, phi, Direction::Forward)?;
    let u = measurement_update(&s.xhat, &s.p_norm, phi, y_next);
    let processed = s.processed + 1;
    let scaled = u.innovation * u.innovation / u.bracket;
    let sigma2_hat = if s.processed == 0 {
        scaled
    } else {
        running_mean(s.sigma2_hat, scaled, processed)
    };
    let residual = y_next - phi.dot(&u.xhat);
    Ok(StepOutput {
        state: FilterState {
            t: s.t + 1,
            xhat: u.xhat,
            p_norm: u.p_norm,
            lambda2: s.lambda2,
            sigma2_hat,
            sigma2_ref: s.sigma2_ref,
            direction: Direction::Forward,
            processed,
        },
        innovation: u.innovation,
        normalized_innovation: u.innovation / u.bracket.sqrt(),
        residual,
        gain: u.gain,
    })
}

/// Forward update in unnormalized form: covariance `P` carries `σ²` and the
/// gain bracket is `φᵀPφ + σ²`. Returns the updated `(x, P)`.
pub fn forward_step_unnormalized(
    xhat: &Vector,
    p: &SymMatrix,
    phi: &Vector,
    y_next: f64,
    sigma2: f64,
) -> (Vector, SymMatrix) {
    let p_phi = p.mul_vec(phi);
    let bracket = phi.dot(&p_phi) + sigma2;
    let x = xhat + &p_phi * ((y_next - phi.dot(xhat)) / bracket);
    let p = p.as_matrix() - (&p_phi * p_phi.transpose()) / bracket;
    (x, SymMatrix::symmetrize(p))
}

/// One backward update with regressor `φ̄(t−1)` and observation `y(t−1)`.
/// `λ̄²` averages squared post-fit residuals, starting from the first one,
/// and `σ̄² = λ̄²/(φ̄ᵀP̄'φ̄ + 1)`.
pub fn backward_step(
    s: &FilterState,
    phi_bar: &Vector,
    y_prev: f64,
) -> Result<StepOutput, FilterError> {
    check_step(s, phi_bar, Direction::Backward)?;
    let u = measurement_update(&s.xhat, &s.p_norm, phi_bar, y_prev);
    let processed = s.processed + 1;
    let residual = y_prev - phi_bar.dot(&u.xhat);
    let sq = residual * residual;
    let lambda2 = if s.processed == 0 {
        sq
    } else {
        running_mean(s.lambda2, sq, processed)
    };
    let sigma2_hat = lambda2 / (u.p_norm.quad_form(phi_bar) + 1.0);
    Ok(StepOutput {
        state: FilterState {
            t: s.t - 1,
            xhat: u.xhat,
            p_norm: u.p_norm,
            lambda2,
            sigma2_hat,
            sigma2_ref: s.sigma2_ref,
            direction: Direction::Backward,
            processed,
        },
        innovation: u.innovation,
        normalized_innovation: u.innovation / u.bracket.sqrt(),
        residual,
        gain: u.gain,
    })
}

fn running_mean(previous: f64, value: f64, count: usize) -> f64 {
    let c = count as f64;
    previous * ((c - 1.0) / c) + value / c
}

fn check_step(s: &FilterState, phi: &Vector, direction: Direction) -> Result<(), FilterError> {
    if s.direction != direction {
        return Err(FilterError::WrongOrientation(
            s.direction,
            orientation_of(direction),
        ));
    }
    if phi.len() != s.p() {
        return Err(FilterError::DimensionMismatch {
            expected: s.p(),
            actual: phi.len(),
        });
    }
    Ok(())
}

fn orientation_of(d: Direction) -> Orientation {
    match d {
        Direction::Forward => Orientation::Forward,
        Direction::Backward => Orientation::Backward,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterTrace {
    /// Initial state followed by one snapshot per processed row.
    pub states: Vec<FilterState>,
    pub innovations: Vec<f64>,
    pub normalized_innovations: Vec<f64>,
    pub residuals: Vec<f64>,
    pub gains: Vec<Vector>,
}

impl FilterTrace {
    fn start(state: FilterState) -> Self {
        Self {
            states: vec![state],
            ..Self::default()
        }
    }

    fn push(&mut self, out: StepOutput) {
        self.states.push(out.state);
        self.innovations.push(out.innovation);
        self.normalized_innovations.push(out.normalized_innovation);
        self.residuals.push(out.residual);
        self.gains.push(out.gain);
    }

    pub fn initial(&self) -> &FilterState {
        &self.states[0]
    }

    pub fn last(&self) -> &FilterState {
        self.states
            .last()
            .expect("trace always holds the initial state")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Writes one row per snapshot. The initial row has an empty innovation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let p = self.initial().p();
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((1..=p).map(|i| format!("xhat_{i}")));
        header.extend(["trP", "innovation", "sigma2_hat", "lambda2"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for (step, s) in self.states.iter().enumerate() {
            let mut row = vec![step.to_string(), s.t.to_string()];
            row.extend(s.xhat.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(s.p_norm.trace()));
            row.push(if step == 0 {
                String::new()
            } else {
                fmt_f64(self.innovations[step - 1])
            });
            row.push(fmt_f64(s.sigma2_hat));
            row.push(fmt_f64(s.lambda2));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Forward filter started at `x = μ`, `P = Π`, run over the rows in
/// increasing time.
pub fn run_forward(r: &RegressorSet, prior: &Prior) -> Result<FilterTrace, FilterError> {
    if r.orientation != Orientation::Forward {
        return Err(FilterError::WrongOrientation(
            Direction::Forward,
            r.orientation,
        ));
    }
    if r.p() != prior.p() {
        return Err(FilterError::DimensionMismatch {
            expected: prior.p(),
            actual: r.p(),
        });
    }
    let mut start = FilterState::forward(prior);
    if let Some(&t1) = r.times.first() {
        start.t = t1 - 1;
    }
    let mut trace = FilterTrace::start(start);
    for k in 0..r.rows() {
        let out = forward_step(trace.last(), &r.row(k), r.y[k])?;
        trace.push(out);
    }
    Ok(trace)
}

/// Batch residual variance `‖y − Φx‖²/t` over the regression, optionally
/// with the `t − p` degrees-of-freedom correction.
pub fn batch_sigma2(r: &RegressorSet, xhat: &Vector, dof_correction: bool) -> f64 {
    let t = r.rows() as f64;
    let denom = if dof_correction { t - r.p() as f64 } else { t };
    if denom <= 0.0 {
        return f64::NAN;
    }
    (&r.y - &r.phi * xhat).norm_squared() / denom
}

/// Starting point of the backward recursion at the end of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCondition {
    pub mean: Vector,
    pub p: SymMatrix,
    /// Reported in the initial snapshot only; the first residual replaces it.
    pub lambda2: f64,
    /// Variance that turns `p` into an unnormalized covariance.
    pub sigma2_ref: f64,
}

impl TerminalCondition {
    pub fn new(mean: Vector, p: SymMatrix) -> Result<Self, FilterError> {
        if mean.len() != p.dim() {
            return Err(FilterError::DimensionMismatch {
                expected: p.dim(),
                actual: mean.len(),
            });
        }
        Ok(Self {
            mean,
            p,
            lambda2: 0.0,
            sigma2_ref: 1.0,
        })
    }

    /// Zero mean with covariance `10³·I`.
    pub fn diffuse(p: usize) -> Self {
        Self::diffuse_with(p, DIFFUSE_TERMINAL_SCALE)
    }

    pub fn diffuse_with(p: usize, scale: f64) -> Self {
        Self {
            mean: Vector::zeros(p),
            p: SymMatrix::scaled_identity(p, scale),
            lambda2: 0.0,
            sigma2_ref: 1.0,
        }
    }

    /// Mean taken from a finished forward run, covariance supplied.
    pub fn warm_start(forward_final: &FilterState, p: SymMatrix) -> Result<Self, FilterError> {
        Self::new(forward_final.xhat.clone(), p)
    }
}

/// Backward filter over rows ordered by decreasing time.
pub fn run_backward(
    r: &RegressorSet,
    terminal: &TerminalCondition,
) -> Result<FilterTrace, FilterError> {
    if r.orientation != Orientation::Backward {
        return Err(FilterError::WrongOrientation(
            Direction::Backward,
            r.orientation,
        ));
    }
    if r.p() != terminal.mean.len() {
        return Err(FilterError::DimensionMismatch {
            expected: terminal.mean.len(),
            actual: r.p(),
        });
    }
    let t_start = r.times.first().map_or(0, |&t| t + 1);
    let mut trace = FilterTrace::start(FilterState::backward(t_start, terminal));
    for k in 0..r.rows() {
        let out = backward_step(trace.last(), &r.row(k), r.y[k])?;
        trace.push(out);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPrior {
    pub pi_inv: SymMatrix,
    pub pi: SymMatrix,
    /// Eigenvalues of the raw precision were raised to [`CLIP_EPSILON`].
    pub clipped: bool,
    pub ill_conditioned: bool,
    /// Condition number of the repaired precision.
    pub condition: f64,
}

/// `Π̂⁻¹ = σ̂²·(σ²_ref P)⁻¹ − ΦᵀΦ`, symmetrized and repaired by eigenvalue
/// clipping. Small differences of large matrices make this fragile, so
/// clipping and large condition numbers are flagged rather than hidden.
pub fn recover_prior(state: &FilterState, gram: &SymMatrix) -> Result<RecoveredPrior, FilterError> {
    if gram.dim() != state.p() {
        return Err(FilterError::DimensionMismatch {
            expected: state.p(),
            actual: gram.dim(),
        });
    }
    let s2 = state.sigma2_hat;
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(FilterError::BadVariance(s2));
    }
    let chol = state.covariance().cholesky().map_err(|e| match e {
        NumericsError::NotPositiveDefinite { minor } => FilterError::SingularCovariance { minor },
        other => other.into(),
    })?;
    let raw = chol.inverse().scale(s2).sub(gram)?;
    let eig = raw.as_matrix().clone().symmetric_eigen();
    let clipped = eig.eigenvalues.iter().any(|&l| l < CLIP_EPSILON);
    let lambdas: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| l.max(CLIP_EPSILON))
        .collect();
    let v = &eig.eigenvectors;
    let rebuild = |f: &dyn Fn(f64) -> f64| {
        let d = Matrix::from_diagonal(&Vector::from_iterator(
            lambdas.len(),
            lambdas.iter().map(|&l| f(l)),
        ));
        SymMatrix::symmetrize(v * d * v.transpose())
    };
    let pi_inv = if clipped { rebuild(&|l| l) } else { raw };
    let pi = rebuild(&|l| 1.0 / l);
    let max = lambdas.iter().cloned().fold(f64::MIN, f64::max);
    let min = lambdas.iter().cloned().fold(f64::MAX, f64::min);
    let condition = max / min;
    Ok(RecoveredPrior {
        pi_inv,
        pi,
        clipped,
        ill_conditioned: clipped || condition > CONDITION_LIMIT,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::bayes_posterior;
    use crate::model::{build_regressors, simulate_fixed, ArxSpec};
    use crate::numerics::{relative_frobenius, spd_inverse};

    fn ar2(n: usize, seed: u64, orientation: Orientation) -> RegressorSet {
        let spec = ArxSpec::ar(&[1.5, -0.7], 1.0).unwrap();
        let d = simulate_fixed(&spec, &[], n, seed, 500).unwrap();
        build_regressors(&d, 2, 0, orientation).unwrap()
    }

    fn prior(pi: f64) -> Prior {
        Prior::isotropic(2, 1.0, pi).unwrap()
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let s = FilterState::forward(&prior(0.5));
        let phi = Vector::from_column_slice(&[1.0, 2.0]);
        let out = forward_step(&s, &phi, phi.dot(&s.xhat)).unwrap();
        assert_eq!(out.state.xhat, s.xhat);
        assert!(out.state.p_norm.trace() < s.p_norm.trace());
    }

    #[test]
    fn zero_regressor_is_uninformative() {
        let s = FilterState::forward(&prior(0.5));
        let out = forward_step(&s, &Vector::zeros(2), 3.0).unwrap();
        assert_eq!(out.state.xhat, s.xhat);
        assert_eq!(out.state.p_norm, s.p_norm);
    }

    #[test]
    fn ten_steps_match_batch_posterior() {
        let r = ar2(10, 17, Orientation::Forward);
        let pr = Prior::new(
            Vector::from_column_slice(&[0.1, 0.2]),
            1.0,
            SymMatrix::from_row_slice(2, &[0.05, 0.01, 0.01, 0.02]).unwrap(),
        )
        .unwrap();
        let trace = run_forward(&r, &pr).unwrap();
        let batch = bayes_posterior(&r, &pr).unwrap();
        let last = trace.last();
        assert!((&last.xhat - &batch.estimate).norm() / batch.estimate.norm() < 1e-9);
        assert!(relative_frobenius(last.p_norm.as_matrix(), batch.variance.as_matrix()) < 1e-9);
        assert_eq!(trace.steps(), 10);
        assert_eq!(last.t, 10);
    }

    #[test]
    fn unnormalized_step_is_scaled_normalized_step() {
        let r = ar2(30, 4, Orientation::Forward);
        let sigma2 = 2.5;
        let pr = Prior::isotropic(2, sigma2, 0.03).unwrap();
        let mut s = FilterState::forward(&pr);
        let mut x = pr.mu.clone();
        let mut p = pr.unnormalized();
        for k in 0..r.rows() {
            s = forward_step(&s, &r.row(k), r.y[k]).unwrap().state;
            (x, p) = forward_step_unnormalized(&x, &p, &r.row(k), r.y[k], sigma2);
        }
        assert!((&s.xhat - &x).amax() < 1e-12);
        assert!(relative_frobenius(s.covariance().as_matrix(), p.as_matrix()) < 1e-12);
    }

    #[test]
    fn empty_run_holds_prior() {
        let r =
            RegressorSet::new(Matrix::zeros(0, 2), Vector::zeros(0), Orientation::Forward).unwrap();
        let trace = run_forward(&r, &prior(0.01)).unwrap();
        assert_eq!(trace.states.len(), 1);
        assert!(trace.innovations.is_empty());
    }

    #[test]
    fn long_run_shrinks_covariance() {
        let r = ar2(2000, 9, Orientation::Forward);
        let trace = run_forward(&r, &prior(0.08)).unwrap();
        assert!(trace.last().p_norm.trace() < 0.01 * 0.16);
    }

    #[test]
    fn recursive_and_batch_sigma2_agree() {
        let r = ar2(3000, 21, Orientation::Forward);
        let trace = run_forward(&r, &prior(0.05)).unwrap();
        let last = trace.last();
        let batch = batch_sigma2(&r, &last.xhat, false);
        assert!((last.sigma2_hat - batch).abs() / batch < 0.02);
        assert!((batch - 1.0).abs() < 0.1);
        assert!(batch_sigma2(&r, &last.xhat, true) > batch);
    }

    #[test]
    fn backward_zero_innovation_and_zero_regressor() {
        let term = TerminalCondition::new(
            Vector::from_column_slice(&[0.4, 0.1]),
            SymMatrix::identity(2),
        )
        .unwrap();
        let s = FilterState::backward(11, &term);
        let phi = Vector::from_column_slice(&[0.5, -1.0]);
        let out = backward_step(&s, &phi, phi.dot(&s.xhat)).unwrap();
        assert_eq!(out.state.xhat, s.xhat);
        assert_eq!(out.state.t, 10);

        // residual of 2 on the first step, then 0: the mean halves
        let a = backward_step(&s, &Vector::zeros(2), 2.0).unwrap().state;
        assert_eq!(a.p_norm, s.p_norm);
        assert_eq!(a.lambda2, 4.0);
        let b = backward_step(&a, &Vector::zeros(2), 0.0).unwrap().state;
        assert_eq!(b.lambda2, 2.0);
        assert_eq!(b.sigma2_hat, 2.0);
    }

    #[test]
    fn single_backward_row_by_hand() {
        let phi = Matrix::from_row_slice(1, 1, &[2.0]);
        let r = RegressorSet::new(
            phi,
            Vector::from_column_slice(&[3.0]),
            Orientation::Backward,
        )
        .unwrap();
        let term = TerminalCondition::new(
            Vector::from_column_slice(&[1.0]),
            SymMatrix::from_diagonal(&[0.5]),
        )
        .unwrap();
        let trace = run_backward(&r, &term).unwrap();
        let s = trace.last();
        // bracket = 2·0.5·2 + 1 = 3, gain = 1/3, innovation = 1
        assert!((s.xhat[0] - (1.0 + 1.0 / 3.0)).abs() < 1e-15);
        assert!((s.p_norm.get(0, 0) - (0.5 - 1.0 / 3.0)).abs() < 1e-15);
        let resid = 3.0 - 2.0 * s.xhat[0];
        assert!((s.lambda2 - resid * resid).abs() < 1e-15);
    }

    #[test]
    fn backward_pass_matches_batch_posterior() {
        let r = ar2(120, 33, Orientation::Backward);
        let term = TerminalCondition::new(
            Vector::from_column_slice(&[1.0, -0.5]),
            SymMatrix::from_row_slice(2, &[0.3, 0.05, 0.05, 0.2]).unwrap(),
        )
        .unwrap();
        let trace = run_backward(&r, &term).unwrap();
        let oracle = bayes_posterior(
            &r,
            &Prior::new(term.mean.clone(), 1.0, term.p.clone()).unwrap(),
        )
        .unwrap();
        let last = trace.last();
        assert!((&last.xhat - &oracle.estimate).norm() / oracle.estimate.norm() < 1e-9);
        assert!(relative_frobenius(last.p_norm.as_matrix(), oracle.variance.as_matrix()) < 1e-9);
        assert_eq!(last.t, 1);
        assert_eq!(trace.initial().t, 119);
    }

    #[test]
    fn wrong_orientation_is_rejected() {
        let r = ar2(20, 1, Orientation::Backward);
        assert!(run_forward(&r, &prior(0.01)).is_err());
        let r = ar2(20, 1, Orientation::Forward);
        assert!(run_backward(&r, &TerminalCondition::diffuse(2)).is_err());
    }

    #[test]
    fn exact_inputs_recover_prior_precision() {
        let r = ar2(60, 2, Orientation::Forward);
        let pi = SymMatrix::from_row_slice(2, &[0.02, 0.004, 0.004, 0.05]).unwrap();
        let pr = Prior::new(Vector::zeros(2), 1.7, pi.clone()).unwrap();
        let mut state = run_forward(&r, &pr).unwrap().last().clone();
        state.sigma2_hat = 1.7;
        let rec = recover_prior(&state, &r.gram()).unwrap();
        let truth = spd_inverse(&pi).unwrap();
        assert!(relative_frobenius(rec.pi_inv.as_matrix(), truth.as_matrix()) < 1e-6);
        assert!(relative_frobenius(rec.pi.as_matrix(), pi.as_matrix()) < 1e-6);
        assert!(!rec.clipped);
    }

    #[test]
    fn perturbed_variance_breaks_recovery_loudly() {
        let r = ar2(5000, 3, Orientation::Forward);
        let pi = SymMatrix::scaled_identity(2, 0.01);
        let pr = Prior::new(Vector::zeros(2), 1.0, pi.clone()).unwrap();
        let mut state = run_forward(&r, &pr).unwrap().last().clone();
        state.sigma2_hat = 0.99;
        let rec = recover_prior(&state, &r.gram()).unwrap();
        assert!(relative_frobenius(rec.pi.as_matrix(), pi.as_matrix()) > 1e3);
        assert!(rec.clipped && rec.ill_conditioned);
        assert!(rec.pi.is_positive_definite());
    }

    #[test]
    fn recovery_rejects_zero_variance() {
        let mut s = FilterState::forward(&prior(0.01));
        s.sigma2_hat = 0.0;
        assert!(matches!(
            recover_prior(&s, &SymMatrix::identity(2)),
            Err(FilterError::BadVariance(_))
        ));
    }

    #[test]
    fn trace_csv_layout() {
        let r = ar2(3, 5, Orientation::Forward);
        let trace = run_forward(&r, &prior(0.01)).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "step,t,xhat_1,xhat_2,trP,innovation,sigma2_hat,lambda2"
        );
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1].split(',').nth(5), Some(""));
    }
}
