//! Batch estimators for the conditionally Gaussian regression `y = Φx + w`.
//!
//! With the prior `x ~ N(μ, σ²Π)` the marginal law of `y` is
//! `N(Φμ, σ²R)` where `R = I + ΦΠΦᵀ`. Everything here is evaluated in the
//! `p`-dimensional parameter space; `R` is never formed.

use thiserror::Error;

use crate::model::RegressorSet;
use crate::numerics::{spd_inverse, NumericsError, SymMatrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("regressor Gram matrix is rank deficient (leading minor {minor})")]
    RankDeficient { minor: usize },
    #[error("prior variance is not positive definite (leading minor {minor})")]
    PriorNotPositiveDefinite { minor: usize },
    #[error("posterior precision is not positive definite (leading minor {minor})")]
    NotPositiveDefinite { minor: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("noise variance must be positive and finite, got {0}")]
    BadVariance(f64),
    #[error("regression has no rows")]
    NoData,
    #[error(transparent)]
    Numerics(NumericsError),
}

fn rank_deficient(e: NumericsError) -> EstimatorError {
    match e {
        NumericsError::NotPositiveDefinite { minor } => EstimatorError::RankDeficient { minor },
        other => EstimatorError::Numerics(other),
    }
}

fn not_pd(e: NumericsError) -> EstimatorError {
    match e {
        NumericsError::NotPositiveDefinite { minor } => {
            EstimatorError::NotPositiveDefinite { minor }
        }
        other => EstimatorError::Numerics(other),
    }
}

fn prior_not_pd(e: NumericsError) -> EstimatorError {
    match e {
        NumericsError::NotPositiveDefinite { minor } => {
            EstimatorError::PriorNotPositiveDefinite { minor }
        }
        other => EstimatorError::Numerics(other),
    }
}

/// Gaussian prior `x ~ N(μ, σ²Π)` with `Π` the normalized prior variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub mu: Vector,
    pub sigma2: f64,
    pub pi: SymMatrix,
}

impl Prior {
    pub fn new(mu: Vector, sigma2: f64, pi: SymMatrix) -> Result<Self, EstimatorError> {
        if mu.len() != pi.dim() {
            return Err(EstimatorError::DimensionMismatch {
                expected: pi.dim(),
                actual: mu.len(),
            });
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(EstimatorError::BadVariance(sigma2));
        }
        pi.cholesky().map_err(prior_not_pd)?;
        Ok(Self { mu, sigma2, pi })
    }

    /// Zero-mean prior with `Π = scale · I`.
    pub fn isotropic(p: usize, sigma2: f64, scale: f64) -> Result<Self, EstimatorError> {
        Self::new(
            Vector::zeros(p),
            sigma2,
            SymMatrix::scaled_identity(p, scale),
        )
    }

    /// Prior from an unnormalized variance `P₀ = σ²Π`.
    pub fn from_unnormalized(
        mu: Vector,
        sigma2: f64,
        p0: &SymMatrix,
    ) -> Result<Self, EstimatorError> {
        Self::new(mu, sigma2, p0.scale(1.0 / sigma2))
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    /// `P₀ = σ²Π`.
    pub fn unnormalized(&self) -> SymMatrix {
        self.pi.scale(self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: Vector,
    /// Unnormalized error variance (carries the `σ²` factor).
    pub variance: SymMatrix,
    pub bias: Option<Vector>,
    /// `‖bias‖² + trace(variance)`; the bias term is zero when absent.
    pub scalar_mse: f64,
    /// Noise variance used for `variance`.
    pub sigma2: f64,
}

impl EstimateReport {
    fn new(estimate: Vector, variance: SymMatrix, bias: Option<Vector>, sigma2: f64) -> Self {
        let bias_sq = bias.as_ref().map_or(0.0, |b| b.norm_squared());
        let scalar_mse = bias_sq + variance.trace();
        Self {
            estimate,
            variance,
            bias,
            scalar_mse,
            sigma2,
        }
    }

    /// Attaches a bias vector and refreshes the scalar MSE.
    pub fn with_bias(self, bias: Vector) -> Self {
        Self::new(self.estimate, self.variance, Some(bias), self.sigma2)
    }
}

fn check_prior(r: &RegressorSet, prior: &Prior) -> Result<(), EstimatorError> {
    if r.p() != prior.p() {
        return Err(EstimatorError::DimensionMismatch {
            expected: r.p(),
            actual: prior.p(),
        });
    }
    Ok(())
}

/// Least squares / PEM: `θ̂ = (ΦᵀΦ)⁻¹Φᵀy`, `σ̂² = ‖y − Φθ̂‖²/N`.
pub fn least_squares(r: &RegressorSet) -> Result<EstimateReport, EstimatorError> {
    if r.rows() == 0 {
        return Err(EstimatorError::NoData);
    }
    let chol = r.gram().cholesky().map_err(rank_deficient)?;
    let estimate = chol.solve_vec(&r.cross());
    let resid = &r.y - &r.phi * &estimate;
    let sigma2 = resid.norm_squared() / r.rows() as f64;
    let variance = chol.inverse().scale(sigma2);
    Ok(EstimateReport::new(estimate, variance, None, sigma2))
}

/// Residual variance `‖y − Φθ‖²/N` for a given parameter.
pub fn residual_variance(r: &RegressorSet, theta: &Vector) -> f64 {
    if r.rows() == 0 {
        return 0.0;
    }
    (&r.y - &r.phi * theta).norm_squared() / r.rows() as f64
}

/// Marginal estimator of the prior mean. In parameter space the
/// information matrix is `ΦᵀR⁻¹Φ = ((ΦᵀΦ)⁻¹ + Π)⁻¹` and, by push-through,
/// `ΦᵀR⁻¹y = (ΦᵀR⁻¹Φ)(ΦᵀΦ)⁻¹Φᵀy`. The two factors of the GLS solution cancel,
/// so the point estimate is the least squares one for every `Π`; forming
/// the product numerically would only add roundoff when `Π` is large. `Π`
/// enters through the variance `σ²[(ΦᵀΦ)⁻¹ + Π]`.
pub fn marginal_estimate(
    r: &RegressorSet,
    prior: &Prior,
) -> Result<EstimateReport, EstimatorError> {
    check_prior(r, prior)?;
    if r.rows() == 0 {
        return Err(EstimatorError::NoData);
    }
    prior.pi.cholesky().map_err(prior_not_pd)?;
    let gram_chol = r.gram().cholesky().map_err(rank_deficient)?;
    let normalized_var = gram_chol
        .inverse()
        .add(&prior.pi)
        .map_err(EstimatorError::Numerics)?;
    normalized_var.cholesky().map_err(not_pd)?;
    let estimate = gram_chol.solve_vec(&r.cross());
    Ok(EstimateReport::new(
        estimate,
        normalized_var.scale(prior.sigma2),
        None,
        prior.sigma2,
    ))
}

/// `σ²·trace[(ΦᵀΦ)⁻¹ + Π]`, the MSE of the (unbiased) marginal estimator.
pub fn marginal_mse(gram: &SymMatrix, pi: &SymMatrix, sigma2: f64) -> Result<f64, EstimatorError> {
    let gram_inv = spd_inverse(gram).map_err(rank_deficient)?;
    Ok(sigma2 * (gram_inv.trace() + pi.trace()))
}

/// Gaussian posterior `x̂ = μ + (ΦᵀΦ + Π⁻¹)⁻¹Φᵀ(y − Φμ)` with error variance
/// `σ²(ΦᵀΦ + Π⁻¹)⁻¹`. Zero rows return the prior.
pub fn bayes_posterior(r: &RegressorSet, prior: &Prior) -> Result<EstimateReport, EstimatorError> {
    check_prior(r, prior)?;
    let pi_inv = spd_inverse(&prior.pi).map_err(prior_not_pd)?;
    let precision = r.gram().add(&pi_inv).map_err(EstimatorError::Numerics)?;
    let chol = precision.cholesky().map_err(not_pd)?;
    let resid = &r.y - &r.phi * &prior.mu;
    let estimate = &prior.mu + chol.solve_vec(&(r.phi.transpose() * resid));
    Ok(EstimateReport::new(
        estimate,
        chol.inverse().scale(prior.sigma2),
        None,
        prior.sigma2,
    ))
}

/// Bias `E_θ₀[x̂] − θ₀ = (Δ + Π⁻¹)⁻¹Π⁻¹(μ − θ₀)` of the posterior mean.
pub fn eb_bias(r: &RegressorSet, prior: &Prior, theta0: &Vector) -> Result<Vector, EstimatorError> {
    check_prior(r, prior)?;
    bias_from_gram(&r.gram(), prior, theta0)
}

pub fn bias_from_gram(
    gram: &SymMatrix,
    prior: &Prior,
    theta0: &Vector,
) -> Result<Vector, EstimatorError> {
    if theta0.len() != prior.p() {
        return Err(EstimatorError::DimensionMismatch {
            expected: prior.p(),
            actual: theta0.len(),
        });
    }
    let pi_inv = spd_inverse(&prior.pi).map_err(prior_not_pd)?;
    let precision = gram.add(&pi_inv).map_err(EstimatorError::Numerics)?;
    let chol = precision.cholesky().map_err(not_pd)?;
    let delta0 = &prior.mu - theta0;
    Ok(chol.solve_vec(&pi_inv.mul_vec(&delta0)))
}

/// Scalar MSE of the posterior mean:
/// `‖(Δ + Π⁻¹)⁻¹Π⁻¹δ₀‖² + σ²·trace(Δ + Π⁻¹)⁻¹`.
pub fn eb_mse(r: &RegressorSet, prior: &Prior, theta0: &Vector) -> Result<f64, EstimatorError> {
    check_prior(r, prior)?;
    eb_mse_from_gram(&r.gram(), prior, theta0)
}

pub fn eb_mse_from_gram(
    gram: &SymMatrix,
    prior: &Prior,
    theta0: &Vector,
) -> Result<f64, EstimatorError> {
    let bias = bias_from_gram(gram, prior, theta0)?;
    let pi_inv = spd_inverse(&prior.pi).map_err(prior_not_pd)?;
    let precision = gram.add(&pi_inv).map_err(EstimatorError::Numerics)?;
    let var = spd_inverse(&precision).map_err(not_pd)?;
    Ok(bias.norm_squared() + prior.sigma2 * var.trace())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarErrorPoint {
    pub pi: f64,
    pub e2_eb: f64,
    pub e2_m: f64,
}

/// Normalized errors of the scalar AR(1) case with `μ = 0` and unit noise:
/// `e²_EB = (θ₀² + π + Δ²π²)/(1 + 2Δ²π + Δ⁴π²)` and `e²_M = 1/Δ² + π`,
/// where `delta_sq` is `Δ²`.
pub fn scalar_mse_curves(theta0: f64, delta_sq: f64, pi_grid: &[f64]) -> Vec<ScalarErrorPoint> {
    pi_grid
        .iter()
        .map(|&pi| {
            let num = theta0 * theta0 + pi + delta_sq * pi * pi;
            let den = 1.0 + 2.0 * delta_sq * pi + delta_sq * delta_sq * pi * pi;
            ScalarErrorPoint {
                pi,
                e2_eb: num / den,
                e2_m: 1.0 / delta_sq + pi,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_regressors, simulate_fixed, ArxSpec, Orientation};
    use crate::numerics::{relative_frobenius, Matrix};

    fn ar2_regressors(n: usize, seed: u64) -> RegressorSet {
        let spec = ArxSpec::ar(&[1.5, -0.7], 1.0).unwrap();
        let d = simulate_fixed(&spec, &[], n, seed, 500).unwrap();
        build_regressors(&d, 2, 0, Orientation::Forward).unwrap()
    }

    /// Normal equations solved with a general LU solve on `[ΦᵀΦ + ridge]`.
    fn normal_equation_oracle(phi: &Matrix, y: &Vector, ridge: &Matrix, shift: &Vector) -> Vector {
        let a = phi.transpose() * phi + ridge;
        let b = phi.transpose() * (y - phi * shift);
        shift + a.lu().solve(&b).unwrap()
    }

    #[test]
    fn least_squares_exact_recursion() {
        let d =
            crate::model::Dataset::from_series_with_leading_presample(&[1.0, 0.5, 0.25, 0.125], 1)
                .unwrap();
        let r = build_regressors(&d, 1, 0, Orientation::Forward).unwrap();
        let rep = least_squares(&r).unwrap();
        assert_eq!(rep.estimate[0], 0.5);
        assert_eq!(rep.sigma2, 0.0);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let r = ar2_regressors(120, 3);
        let rep = least_squares(&r).unwrap();
        let oracle = normal_equation_oracle(&r.phi, &r.y, &Matrix::zeros(2, 2), &Vector::zeros(2));
        assert!((rep.estimate - oracle).amax() < 1e-12);
    }

    #[test]
    fn least_squares_orthonormal_projection() {
        let phi = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let y = Vector::from_column_slice(&[3.0, -2.0, 5.0, 7.0]);
        let r = RegressorSet::new(phi, y, Orientation::Forward).unwrap();
        let rep = least_squares(&r).unwrap();
        assert_eq!(rep.estimate.as_slice(), &[3.0, -2.0]);
    }

    #[test]
    fn least_squares_rank_deficient() {
        let phi = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let r = RegressorSet::new(phi, Vector::zeros(3), Orientation::Forward).unwrap();
        assert!(matches!(
            least_squares(&r),
            Err(EstimatorError::RankDeficient { minor: 2 })
        ));
    }

    #[test]
    fn marginal_tends_to_least_squares_for_small_prior() {
        let r = ar2_regressors(80, 5);
        let prior = Prior::isotropic(2, 1.0, 1e-14).unwrap();
        let m = marginal_estimate(&r, &prior).unwrap();
        let ls = least_squares(&r).unwrap();
        assert!((&m.estimate - &ls.estimate).amax() < 1e-8);
        let gram_inv = spd_inverse(&r.gram()).unwrap();
        assert!(relative_frobenius(m.variance.as_matrix(), gram_inv.as_matrix()) < 1e-8);
    }

    #[test]
    fn marginal_matches_n_space_formula() {
        let r = ar2_regressors(60, 8);
        let pi = SymMatrix::from_row_slice(2, &[0.05, 0.01, 0.01, 0.03]).unwrap();
        let prior = Prior::new(Vector::zeros(2), 1.3, pi.clone()).unwrap();
        let m = marginal_estimate(&r, &prior).unwrap();
        // oracle: explicit N×N R and its inverse
        let n = r.rows();
        let big_r = Matrix::identity(n, n) + &r.phi * pi.as_matrix() * r.phi.transpose();
        let r_inv = big_r.try_inverse().unwrap();
        let info = r.phi.transpose() * &r_inv * &r.phi;
        let info_inv = info.clone().try_inverse().unwrap();
        let est = &info_inv * r.phi.transpose() * &r_inv * &r.y;
        assert!((&m.estimate - &est).amax() < 1e-9);
        assert!(relative_frobenius(m.variance.as_matrix(), &(info_inv * 1.3)) < 1e-9);
        assert!((m.scalar_mse - m.variance.trace()).abs() < 1e-15);
    }

    #[test]
    fn marginal_rejects_bad_prior() {
        let r = ar2_regressors(30, 1);
        let prior = Prior {
            mu: Vector::zeros(2),
            sigma2: 1.0,
            pi: SymMatrix::from_diagonal(&[1.0, -1.0]),
        };
        assert!(matches!(
            marginal_estimate(&r, &prior),
            Err(EstimatorError::PriorNotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn posterior_without_data_is_prior() {
        let r =
            RegressorSet::new(Matrix::zeros(0, 2), Vector::zeros(0), Orientation::Forward).unwrap();
        let prior = Prior::new(
            Vector::from_column_slice(&[0.3, -0.1]),
            2.0,
            SymMatrix::from_diagonal(&[0.5, 0.25]),
        )
        .unwrap();
        let post = bayes_posterior(&r, &prior).unwrap();
        assert_eq!(post.estimate, prior.mu);
        assert!(
            relative_frobenius(post.variance.as_matrix(), prior.unnormalized().as_matrix()) < 1e-15
        );
    }

    #[test]
    fn diffuse_posterior_approaches_least_squares() {
        let r = ar2_regressors(100, 2);
        let prior = Prior::isotropic(2, 1.0, 1e12).unwrap();
        let post = bayes_posterior(&r, &prior).unwrap();
        let ls = least_squares(&r).unwrap();
        assert!((&post.estimate - &ls.estimate).amax() < 1e-4);
    }

    #[test]
    fn posterior_matches_ridge_oracle() {
        let r = ar2_regressors(50, 4);
        let pi = SymMatrix::from_row_slice(2, &[0.02, 0.005, 0.005, 0.04]).unwrap();
        let mu = Vector::from_column_slice(&[1.0, -0.5]);
        let prior = Prior::new(mu.clone(), 1.0, pi.clone()).unwrap();
        let post = bayes_posterior(&r, &prior).unwrap();
        let ridge = pi.as_matrix().clone().try_inverse().unwrap();
        let oracle = normal_equation_oracle(&r.phi, &r.y, &ridge, &mu);
        assert!((&post.estimate - &oracle).amax() < 1e-10);
    }

    #[test]
    fn bias_vanishes_when_prior_mean_is_truth() {
        let r = ar2_regressors(50, 6);
        let theta0 = Vector::from_column_slice(&[1.5, -0.7]);
        let prior = Prior::new(theta0.clone(), 1.0, SymMatrix::scaled_identity(2, 0.01)).unwrap();
        assert!(eb_bias(&r, &prior, &theta0).unwrap().amax() < 1e-15);
    }

    #[test]
    fn bias_matches_direct_substitution() {
        let r = ar2_regressors(70, 10);
        let theta0 = Vector::from_column_slice(&[1.5, -0.7]);
        let prior = Prior::new(
            Vector::from_column_slice(&[0.2, 0.1]),
            1.0,
            SymMatrix::from_row_slice(2, &[0.03, 0.01, 0.01, 0.02]).unwrap(),
        )
        .unwrap();
        // E y = Φθ₀ substituted into the posterior mean.
        let noiseless =
            RegressorSet::new(r.phi.clone(), &r.phi * &theta0, Orientation::Forward).unwrap();
        let expected = bayes_posterior(&noiseless, &prior).unwrap().estimate - &theta0;
        let bias = eb_bias(&r, &prior, &theta0).unwrap();
        assert!((bias - expected).amax() < 1e-12);
    }

    #[test]
    fn bias_vanishes_for_diffuse_prior() {
        let r = ar2_regressors(70, 12);
        let theta0 = Vector::from_column_slice(&[1.5, -0.7]);
        let prior = Prior::isotropic(2, 1.0, 1e12).unwrap();
        let bias = eb_bias(&r, &prior, &theta0).unwrap();
        assert!(bias.norm() < 1e-6 * (&prior.mu - &theta0).norm());
    }

    #[test]
    fn scalar_eb_mse_evaluations() {
        let gram = SymMatrix::from_diagonal(&[100.0]);
        let prior = Prior::new(
            Vector::from_column_slice(&[0.4]),
            1.0,
            SymMatrix::from_diagonal(&[0.01]),
        )
        .unwrap();
        let mse = eb_mse_from_gram(&gram, &prior, &Vector::from_column_slice(&[0.4])).unwrap();
        assert!((mse - 0.005).abs() < 1e-15);

        let diffuse = Prior::new(Vector::zeros(1), 1.0, SymMatrix::from_diagonal(&[1e12])).unwrap();
        let mse = eb_mse_from_gram(&gram, &diffuse, &Vector::from_column_slice(&[0.9])).unwrap();
        assert!((mse - 0.01).abs() < 1e-8);

        let prior = Prior::new(Vector::zeros(1), 1.0, SymMatrix::from_diagonal(&[0.01])).unwrap();
        let mse = eb_mse_from_gram(&gram, &prior, &Vector::from_column_slice(&[0.9])).unwrap();
        assert!((mse - 0.2075).abs() < 1e-12);
        let marg = marginal_mse(&gram, &prior.pi, 1.0).unwrap();
        assert!((marg - 0.02).abs() < 1e-15);
    }

    #[test]
    fn scalar_curve_limits_and_value() {
        let pts = scalar_mse_curves(0.9, 100.0, &[0.0, 0.01]);
        assert!((pts[0].e2_eb - 0.81).abs() < 1e-15);
        assert!((pts[0].e2_m - 0.01).abs() < 1e-15);
        assert!((pts[1].e2_eb - 0.2075).abs() < 1e-12);
        assert!((pts[1].e2_m - 0.02).abs() < 1e-15);

        let big = scalar_mse_curves(0.9, 10.0, &[1e6])[0];
        assert!((big.e2_eb - 0.1).abs() < 0.01 * 0.1);
        assert!((big.e2_m - 1e6).abs() < 1.0);
    }
}
