//! Bayesian linear regression on the network basis.
//!
//! Output weights get a zero-mean Gaussian prior with precision `alpha`;
//! observation noise has precision `beta`. A convex quadratic prior mean
//! `eta(x) = lambda + (x-c)' Lambda (x-c)` encodes the belief that the
//! optimum sits in the interior of the unit hypercube; the regression then
//! fits the residual targets `y - eta(x)`.
//!
//! With the (N x D) design matrix `phi` the posterior over weights is
//! Gaussian with precision `K = beta phi'phi + alpha I` and mean
//! `m = beta K^-1 phi' yhat`, so predictions cost O(D^2) and refits cost
//! O(N D^2 + D^3) regardless of how large N grows.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::util::exp_e1;

/// Regression hyperparameters Theta: precisions plus the quadratic prior
/// mean's offset, diagonal scales, and center.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionHyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda_offset: f64,
    pub lambda_diag: Vec<f64>,
    pub center: Vec<f64>,
}

impl RegressionHyperparams {
    pub fn default_for_dim(k: usize) -> Self {
        Self {
            alpha: 1.0,
            beta: 100.0,
            lambda_offset: 0.0,
            lambda_diag: vec![1.0; k],
            center: vec![0.5; k],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.lambda_diag.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(
                "alpha and beta must be positive".into(),
            ));
        }
        if self.lambda_diag.len() != self.center.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lambda_diag.len(),
                got: self.center.len(),
            });
        }
        if self.lambda_diag.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter(
                "quadratic scales must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Quadratic prior mean eta(x).
pub fn prior_mean(theta: &RegressionHyperparams, x: &[f64]) -> Result<f64> {
    if x.len() != theta.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.input_dim(),
            got: x.len(),
        });
    }
    let mut v = theta.lambda_offset;
    for ((xi, ci), li) in x.iter().zip(&theta.center).zip(&theta.lambda_diag) {
        let d = xi - ci;
        v += li * d * d;
    }
    Ok(v)
}

/// Design matrix plus the theta-independent products the evidence needs.
///
/// Built once per trained basis; every hyperparameter evaluation afterwards
/// costs O(ND + D^3) instead of O(ND^2 + D^3).
#[derive(Debug, Clone)]
pub struct BasisDesign {
    phi: DMatrix<f64>,
    gram: DMatrix<f64>,
    xs: Vec<Vec<f64>>,
    y: DVector<f64>,
}

impl BasisDesign {
    pub fn new(phi: DMatrix<f64>, xs: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if phi.nrows() != xs.len() || phi.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: phi.nrows(),
                got: xs.len().max(y.len()),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        let gram = phi.transpose() * &phi;
        Ok(Self {
            phi,
            gram,
            xs,
            y: DVector::from_vec(y),
        })
    }

    /// Prior-only design: N = 0.
    pub fn empty(d: usize) -> Self {
        Self {
            phi: DMatrix::zeros(0, d),
            gram: DMatrix::zeros(d, d),
            xs: Vec::new(),
            y: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn d(&self) -> usize {
        self.phi.ncols()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    /// Residual targets yhat = y - eta(x) under theta.
    fn residual_targets(&self, theta: &RegressionHyperparams) -> Result<DVector<f64>> {
        let mut yhat = self.y.clone();
        for (i, x) in self.xs.iter().enumerate() {
            yhat[i] -= prior_mean(theta, x)?;
        }
        Ok(yhat)
    }
}

/// Everything needed to answer predictive queries under one theta.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub theta: RegressionHyperparams,
    k_mat: DMatrix<f64>,
    /// beta * phi' yhat, the right-hand side the mean solves against.
    rhs: DVector<f64>,
    l_factor: DMatrix<f64>,
    pub weight_mean: DVector<f64>,
    log_det_k: f64,
}

fn cholesky_with_jitter(k_mat: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(k_mat.clone()) {
        return Ok(c);
    }
    let d = k_mat.nrows();
    for jitter in [1e-10, 1e-8, 1e-6] {
        let mut jittered = k_mat.clone();
        for i in 0..d {
            jittered[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    Err(Error::Factorization(format!(
        "posterior precision not positive definite at jitter 1e-6 (D = {d})"
    )))
}

/// Condition the Bayesian layer on the design under `theta`.
///
/// N = 0 recovers the prior (m = 0, K = alpha I).
pub fn fit_posterior(design: &BasisDesign, theta: &RegressionHyperparams) -> Result<PosteriorState> {
    theta.validate()?;
    let d = design.d();
    let mut k_mat = &design.gram * theta.beta;
    for i in 0..d {
        k_mat[(i, i)] += theta.alpha;
    }
    let rhs = if design.n() == 0 {
        DVector::zeros(d)
    } else {
        let yhat = design.residual_targets(theta)?;
        design.phi.transpose() * yhat * theta.beta
    };
    PosteriorState::from_parts(theta.clone(), k_mat, rhs)
}

impl PosteriorState {
    fn from_parts(
        theta: RegressionHyperparams,
        k_mat: DMatrix<f64>,
        rhs: DVector<f64>,
    ) -> Result<Self> {
        let chol = cholesky_with_jitter(&k_mat)?;
        let l_factor = chol.l();
        let log_det_k = 2.0 * (0..l_factor.nrows()).map(|i| l_factor[(i, i)].ln()).sum::<f64>();
        let weight_mean = chol.solve(&rhs);
        Ok(Self {
            theta,
            k_mat,
            rhs,
            l_factor,
            weight_mean,
            log_det_k,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.weight_mean.nrows()
    }

    pub fn log_det_precision(&self) -> f64 {
        self.log_det_k
    }

    /// Predictive mean and variance at a point with features `phi_x` and
    /// prior mean `eta_x`.
    ///
    /// The variance is `phi' K^-1 phi + 1/beta`, so it never drops below the
    /// noise floor `1/beta`.
    pub fn predict(&self, phi_x: &DVector<f64>, eta_x: f64) -> Result<(f64, f64)> {
        if phi_x.nrows() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim(),
                got: phi_x.nrows(),
            });
        }
        let mu = self.weight_mean.dot(phi_x) + eta_x;
        let half = self
            .l_factor
            .solve_lower_triangular(phi_x)
            .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
        let sigma2 = half.norm_squared() + 1.0 / self.theta.beta;
        Ok((mu, sigma2))
    }

    /// Posterior after also conditioning on one residual observation
    /// (phi_j, yhat_j); used to absorb fantasy outcomes at pending points.
    pub fn augmented(&self, phi_j: &DVector<f64>, yhat_j: f64) -> Result<PosteriorState> {
        let beta = self.theta.beta;
        let mut k_mat = self.k_mat.clone();
        k_mat.ger(beta, phi_j, phi_j, 1.0);
        let rhs = &self.rhs + phi_j * (beta * yhat_j);
        PosteriorState::from_parts(self.theta.clone(), k_mat, rhs)
    }
}

/// Log evidence of the residual targets with the output weights integrated
/// out: the exact Gaussian marginal, computed in weight space.
pub fn log_marginal_likelihood(design: &BasisDesign, theta: &RegressionHyperparams) -> Result<f64> {
    theta.validate()?;
    let n = design.n() as f64;
    let d = design.d() as f64;
    let state = fit_posterior(design, theta)?;
    if design.n() == 0 {
        return Ok(0.0);
    }
    let yhat = design.residual_targets(theta)?;
    let resid = &yhat - &design.phi * &state.weight_mean;
    let m_sq = state.weight_mean.norm_squared();
    Ok(0.5 * d * theta.alpha.ln() + 0.5 * n * theta.beta.ln()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * theta.beta * resid.norm_squared()
        - 0.5 * theta.alpha * m_sq
        - 0.5 * state.log_det_k)
}

// Hyperprior constants. alpha and beta get truncated log-uniform priors; the
// quadratic center is Gaussian around the middle of the unit cube; the
// offset is Gaussian on the standardized-target scale; the diagonal scales
// get the horseshoe so the quadratic effect can shrink away entirely.
pub const PRECISION_RANGE: (f64, f64) = (1e-4, 1e4);
const CENTER_MEAN: f64 = 0.5;
const CENTER_STD: f64 = 1.0;
const OFFSET_STD: f64 = 1.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of the one-group horseshoe prior on a positive scale,
/// p(x) = 2 (2 pi^3)^(-1/2) e^(x^2/2) E1(x^2/2), x > 0.
pub fn horseshoe_log_density(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    // ln(2 / sqrt(2 pi^3))
    const LOG_CONST: f64 = -1.3705212384941276;
    LOG_CONST + exp_e1(0.5 * x * x).ln()
}

fn log_uniform_log_density(x: f64, range: (f64, f64)) -> f64 {
    if x < range.0 || x > range.1 {
        return f64::NEG_INFINITY;
    }
    -x.ln() - (range.1.ln() - range.0.ln()).ln()
}

fn gaussian_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * LN_2PI
}

/// Joint log hyperprior over Theta. Returns -inf outside the support, which
/// is how constraint violations are signalled to the slice sampler.
pub fn log_hyperprior(theta: &RegressionHyperparams) -> f64 {
    let mut lp = 0.0;
    lp += log_uniform_log_density(theta.alpha, PRECISION_RANGE);
    lp += log_uniform_log_density(theta.beta, PRECISION_RANGE);
    lp += gaussian_log_density(theta.lambda_offset, 0.0, OFFSET_STD);
    for &c in &theta.center {
        lp += gaussian_log_density(c, CENTER_MEAN, CENTER_STD);
    }
    for &l in &theta.lambda_diag {
        lp += horseshoe_log_density(l);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
    }
    lp
}
