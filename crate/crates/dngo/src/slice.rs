//! Univariate slice sampling and the coordinate-wise hyperparameter chain.
//!
//! The single-variable step follows Neal's stepping-out/shrinkage procedure:
//! draw a level under the density at the current point, widen a randomly
//! placed bracket until both ends are below the level, then sample uniformly
//! inside and shrink on rejection.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bayes::{
    log_hyperprior, log_marginal_likelihood, BasisDesign, RegressionHyperparams, PRECISION_RANGE,
};
use crate::error::{Error, Result};

/// Chain settings for hyperparameter inference.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
    pub slice_width: f64,
    pub max_stepout: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            burn_in: 50,
            n_samples: 10,
            thinning: 2,
            slice_width: 1.0,
            max_stepout: 256,
        }
    }
}

/// One slice-sampling update of a scalar coordinate.
///
/// `log_density` may return -inf to mark points outside the support. The
/// returned point always lies on the slice through `x0`.
pub fn slice_sample_step<F, R>(
    mut log_density: F,
    x0: f64,
    width: f64,
    max_stepout: usize,
    rng: &mut R,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    R: Rng,
{
    let ly0 = log_density(x0);
    if !ly0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "slice sampler started at a point with non-finite log density ({ly0})"
        )));
    }
    // u in (0, 1]: the level stays strictly below the density at x0 almost
    // surely, and never above it.
    let level = ly0 + (1.0 - rng.random::<f64>()).ln();

    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    let mut steps = 0;
    while log_density(left) > level {
        left -= width;
        steps += 1;
        if steps > max_stepout {
            return Err(Error::SliceStepOut(max_stepout));
        }
    }
    steps = 0;
    while log_density(right) > level {
        right += width;
        steps += 1;
        if steps > max_stepout {
            return Err(Error::SliceStepOut(max_stepout));
        }
    }

    loop {
        let x1 = left + rng.random::<f64>() * (right - left);
        if log_density(x1) > level {
            return Ok(x1);
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        // Degenerate densities shrink the bracket onto x0 itself.
        if right - left < f64::EPSILON * (x0.abs() + 1.0) {
            return Ok(x0);
        }
    }
}

// Coordinate layout for the sampled vector: [ln alpha, ln beta, lambda,
// c_1..c_K, ln Lambda_1..ln Lambda_K]. Precisions and quadratic scales are
// sampled in log space.
fn theta_to_coords(theta: &RegressionHyperparams) -> Vec<f64> {
    let k = theta.input_dim();
    let mut v = Vec::with_capacity(3 + 2 * k);
    v.push(theta.alpha.ln());
    v.push(theta.beta.ln());
    v.push(theta.lambda_offset);
    v.extend_from_slice(&theta.center);
    v.extend(theta.lambda_diag.iter().map(|l| l.ln()));
    v
}

fn coords_to_theta(v: &[f64], k: usize) -> RegressionHyperparams {
    RegressionHyperparams {
        alpha: v[0].exp(),
        beta: v[1].exp(),
        lambda_offset: v[2],
        center: v[3..3 + k].to_vec(),
        lambda_diag: v[3 + k..3 + 2 * k].iter().map(|l| l.exp()).collect(),
    }
}

/// Log target density in coordinate space: evidence + hyperprior + the
/// Jacobian of the log transforms.
fn coord_log_target(design: &BasisDesign, v: &[f64], k: usize) -> Result<f64> {
    let theta = coords_to_theta(v, k);
    if theta.alpha < PRECISION_RANGE.0
        || theta.alpha > PRECISION_RANGE.1
        || theta.beta < PRECISION_RANGE.0
        || theta.beta > PRECISION_RANGE.1
    {
        return Ok(f64::NEG_INFINITY);
    }
    let prior = log_hyperprior(&theta);
    if prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let jacobian: f64 = v[0] + v[1] + v[3 + k..3 + 2 * k].iter().sum::<f64>();
    Ok(log_marginal_likelihood(design, &theta)? + prior + jacobian)
}

/// Sample regression hyperparameters by coordinate-wise slice sampling over
/// the marginal likelihood. Deterministic given the seed; factorization
/// failures abort the chain.
pub fn slice_sample_hyperparams(
    design: &BasisDesign,
    theta0: &RegressionHyperparams,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Vec<RegressionHyperparams>> {
    theta0.validate()?;
    let k = theta0.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = theta_to_coords(theta0);
    let mut samples = Vec::with_capacity(config.n_samples);

    let mut sweep = |coords: &mut Vec<f64>, rng: &mut ChaCha8Rng| -> Result<()> {
        for i in 0..coords.len() {
            let mut failure: Option<Error> = None;
            let current = coords[i];
            let new = {
                let mut probe = coords.clone();
                let f = |x: f64| -> f64 {
                    probe[i] = x;
                    match coord_log_target(design, &probe, k) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            f64::NEG_INFINITY
                        }
                    }
                };
                slice_sample_step(f, current, config.slice_width, config.max_stepout, rng)?
            };
            if let Some(e) = failure {
                return Err(e);
            }
            coords[i] = new;
        }
        Ok(())
    };

    for _ in 0..config.burn_in {
        sweep(&mut coords, &mut rng)?;
    }
    for _ in 0..config.n_samples {
        for _ in 0..config.thinning.max(1) {
            sweep(&mut coords, &mut rng)?;
        }
        samples.push(coords_to_theta(&coords, k));
    }
    Ok(samples)
}
