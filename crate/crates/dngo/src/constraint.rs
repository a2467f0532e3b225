//! Probability-of-validity model.
//!
//! A separate basis network is trained on the 0/1 validity labels with a
//! sigmoid cross-entropy head; Bayesian logistic regression on its features
//! (plus a bias) then gets a Laplace approximation around the MAP output
//! weights. Queries marginalize the weight uncertainty through the scalar
//! activation, whose Gaussian distribution the Laplace posterior induces.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::net::{train_classifier, BasisNetwork, NetworkConfig};
use crate::space::Dataset;
use crate::util::norm_cdf;

/// Likelihood used when fitting the output weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintLikelihood {
    /// Plain logistic likelihood (noisy constraint observations).
    Logistic,
    /// Steep logistic standing in for a step function (noiseless
    /// constraints); the activation is scaled by `1/STEP_TEMPERATURE`.
    StepApprox,
}

/// Inverse of the activation scale used by the step-function stand-in.
pub const STEP_TEMPERATURE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintHyperparams {
    pub weight_prior_precision: f64,
    pub likelihood: ConstraintLikelihood,
}

impl Default for ConstraintHyperparams {
    fn default() -> Self {
        Self {
            weight_prior_precision: 1.0,
            likelihood: ConstraintLikelihood::Logistic,
        }
    }
}

/// Laplace posterior over the constraint head weights (bias appended last).
#[derive(Debug, Clone)]
pub struct ConstraintPosterior {
    w_map: DVector<f64>,
    hessian_l: DMatrix<f64>,
    basis: BasisNetwork,
    fit_scale: f64,
    psi: ConstraintHyperparams,
    /// Negative log posterior after each Newton iteration.
    pub objective_trace: Vec<f64>,
}

const MAX_NEWTON_ITERS: usize = 200;
const GRAD_TOL: f64 = 1e-8;

fn activation_scale(likelihood: ConstraintLikelihood) -> f64 {
    match likelihood {
        ConstraintLikelihood::Logistic => 1.0,
        ConstraintLikelihood::StepApprox => 1.0 / STEP_TEMPERATURE,
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn softplus(a: f64) -> f64 {
    if a > 30.0 {
        a
    } else {
        a.exp().ln_1p()
    }
}

/// Fit the constraint surrogate on the full dataset (valid and invalid).
///
/// Empty data yields the prior: zero weights and precision `psi` times the
/// identity, so every query answers 0.5.
pub fn fit_constraint(
    data: &Dataset,
    net_config: &NetworkConfig,
    psi: &ConstraintHyperparams,
    seed: u64,
) -> Result<ConstraintPosterior> {
    if psi.weight_prior_precision <= 0.0 {
        return Err(Error::InvalidParameter(
            "constraint weight prior precision must be positive".into(),
        ));
    }
    let scale = activation_scale(psi.likelihood);

    let (basis, rows): (BasisNetwork, Vec<(DVector<f64>, f64)>) = if data.is_empty() {
        let net = crate::net::init_params(net_config, 1, seed)?;
        (net, Vec::new())
    } else {
        let xs: Vec<Vec<f64>> = data.all().iter().map(|o| o.x_unit().to_vec()).collect();
        let labels: Vec<f64> = data
            .all()
            .iter()
            .map(|o| if o.is_valid() { 1.0 } else { 0.0 })
            .collect();
        let trained = train_classifier(net_config, &xs, &labels, seed)?;
        let rows = xs
            .iter()
            .zip(&labels)
            .map(|(x, &c)| Ok((augmented_features(&trained.net, x)?, c)))
            .collect::<Result<Vec<_>>>()?;
        (trained.net, rows)
    };

    let dim = basis.feature_dim() + 1;
    let prior = psi.weight_prior_precision;
    let mut w = DVector::zeros(dim);
    let mut trace = Vec::new();

    let objective = |w: &DVector<f64>| -> f64 {
        let mut obj = 0.5 * prior * w.norm_squared();
        for (phi, c) in &rows {
            let a = scale * w.dot(phi);
            obj += softplus(-a) + (1.0 - c) * a;
        }
        obj
    };

    if !rows.is_empty() {
        let mut converged = false;
        trace.push(objective(&w));
        for _ in 0..MAX_NEWTON_ITERS {
            let mut grad = &w * prior;
            let mut hess = DMatrix::identity(dim, dim) * prior;
            for (phi, c) in &rows {
                let a = scale * w.dot(phi);
                let p = sigmoid(a);
                grad += phi * (scale * (p - c));
                hess.ger(scale * scale * (p * (1.0 - p)).max(1e-12), phi, phi, 1.0);
            }
            if grad.norm() < GRAD_TOL {
                converged = true;
                break;
            }
            let chol = nalgebra::Cholesky::new(hess)
                .ok_or_else(|| Error::Factorization("constraint Hessian".into()))?;
            let direction = chol.solve(&grad);
            // backtracking keeps the negative log posterior non-increasing
            let f0 = objective(&w);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let candidate = &w - &direction * step;
                if objective(&candidate) <= f0 {
                    w = candidate;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                converged = true; // no descent left at machine precision
                break;
            }
            trace.push(objective(&w));
        }
        if !converged {
            // Gradient norms near the prior-only floor still count when the
            // line search cannot improve further.
            let mut grad = &w * prior;
            for (phi, c) in &rows {
                let a = scale * w.dot(phi);
                grad += phi * (scale * (sigmoid(a) - c));
            }
            if grad.norm() >= GRAD_TOL {
                return Err(Error::IrlsNonConvergence(MAX_NEWTON_ITERS));
            }
        }
    }

    // Hessian of the negative log posterior at the MAP
    let mut hess = DMatrix::identity(dim, dim) * prior;
    for (phi, c) in &rows {
        let _ = c;
        let a = scale * w.dot(phi);
        let p = sigmoid(a);
        hess.ger(scale * scale * (p * (1.0 - p)).max(0.0), phi, phi, 1.0);
    }
    let hessian_l = nalgebra::Cholesky::new(hess)
        .ok_or_else(|| Error::Factorization("constraint Hessian at MAP".into()))?
        .l();

    Ok(ConstraintPosterior {
        w_map: w,
        hessian_l,
        basis,
        fit_scale: scale,
        psi: psi.clone(),
        objective_trace: trace,
    })
}

fn augmented_features(net: &BasisNetwork, x: &[f64]) -> Result<DVector<f64>> {
    let phi = net.forward_features(x)?;
    let mut out = DVector::zeros(phi.nrows() + 1);
    out.rows_mut(0, phi.nrows()).copy_from(&phi);
    out[phi.nrows()] = 1.0;
    Ok(out)
}

impl ConstraintPosterior {
    pub fn weight_map(&self) -> &DVector<f64> {
        &self.w_map
    }

    pub fn hyperparams(&self) -> &ConstraintHyperparams {
        &self.psi
    }

    /// Mean and variance of the (unscaled) activation under the Laplace
    /// Gaussian.
    fn activation_moments(&self, x: &[f64]) -> Result<(f64, f64)> {
        let phi = augmented_features(&self.basis, x)?;
        let mu = self.w_map.dot(&phi);
        let half = self
            .hessian_l
            .solve_lower_triangular(&phi)
            .ok_or_else(|| Error::Factorization("singular constraint Hessian".into()))?;
        Ok((mu, half.norm_squared()))
    }

    fn prob_with_scale(&self, x: &[f64], scale: f64) -> Result<f64> {
        let (mu, s2) = self.activation_moments(x)?;
        let p = logistic_gaussian_integral(scale * mu, scale * scale * s2);
        Ok(p.clamp(1e-300, 1.0 - f64::EPSILON))
    }

    /// Marginalized probability of validity under the logistic likelihood.
    pub fn prob_valid(&self, x: &[f64]) -> Result<f64> {
        self.prob_with_scale(x, 1.0)
    }

    /// Same marginalization with the step-function stand-in.
    pub fn prob_valid_noiseless(&self, x: &[f64]) -> Result<f64> {
        self.prob_with_scale(x, activation_scale(ConstraintLikelihood::StepApprox))
    }

    /// Probability matching the likelihood the posterior was fit with.
    pub fn prob(&self, x: &[f64]) -> Result<f64> {
        self.prob_with_scale(x, self.fit_scale)
    }
}

/// E[sigmoid(a)] for a ~ N(mu, s2), to ~1e-7 absolute accuracy.
///
/// Gauss-Hermite handles narrow activation Gaussians; for wide ones the
/// integral splits into the step-function part Phi(mu/s) plus a correction
/// integral of sigmoid(a) - step(a), which decays like e^-|a| and lives on
/// [-40, 40] whatever the variance.
pub fn logistic_gaussian_integral(mu: f64, s2: f64) -> f64 {
    if s2 <= 0.0 {
        return sigmoid(mu);
    }
    if s2 <= 4.0 {
        let (nodes, weights) = gauss_hermite_32();
        let s = (2.0 * s2).sqrt();
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            acc += w * sigmoid(mu + s * x);
        }
        acc / std::f64::consts::PI.sqrt()
    } else {
        let s = s2.sqrt();
        let mut total = norm_cdf(mu / s);
        let dens = |a: f64| (-(a - mu) * (a - mu) / (2.0 * s2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        for (lo, step) in [(-40.0, 0.0), (0.0, 1.0)] {
            let hi = lo + 40.0;
            let n = 400; // panels per side
            let h = (hi - lo) / n as f64;
            let f = |a: f64| (sigmoid(a) - step) * dens(a);
            let mut acc = f(lo) + f(hi);
            for i in 1..n {
                let a = lo + i as f64 * h;
                acc += f(a) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            total += acc * h / 3.0;
        }
        total
    }
}

fn gauss_hermite_32() -> (&'static [f64], &'static [f64]) {
    static TABLE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (n, w) = TABLE.get_or_init(|| {
        let n = 32;
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (
                    eig.eigenvalues[i],
                    std::f64::consts::PI.sqrt() * v0 * v0,
                )
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        (
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    });
    (n, w)
}
