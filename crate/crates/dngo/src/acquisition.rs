//! Acquisition functions and the proxy optimizer that proposes points.
//!
//! Everything here works on the standardized-target scale and in unit-cube
//! coordinates. Expected improvement comes from the closed form
//! `sigma * (gamma Phi(gamma) + phi(gamma))`; the constrained variant
//! multiplies by the modeled probability of validity; pending evaluations
//! are marginalized by averaging over fantasy outcomes drawn from the
//! posterior predictive; and hyperparameter uncertainty is averaged over
//! the slice-sampled Theta set.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bayes::{prior_mean, PosteriorState, RegressionHyperparams};
use crate::constraint::ConstraintPosterior;
use crate::error::{Error, Result};
use crate::net::BasisNetwork;
use crate::util::{norm_cdf, norm_pdf, HaltonSequence};

/// Settings for fantasy marginalization and the inner optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    /// Low-discrepancy candidates scored per suggestion.
    pub n_candidates: usize,
    /// How many top candidates get local refinement.
    pub n_local: usize,
    /// Coordinate-search sweeps per refined candidate.
    pub local_sweeps: usize,
    /// Fantasy sets drawn per Theta sample when jobs are pending.
    pub n_fantasies: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            n_candidates: 1000,
            n_local: 10,
            local_sweeps: 50,
            n_fantasies: 10,
        }
    }
}

/// Expected improvement of a Gaussian predictive (mu, sigma) over the
/// incumbent, for minimization. The sigma = 0 limit is max(f_best - mu, 0).
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64) -> f64 {
    if sigma <= 0.0 {
        return (f_best - mu).max(0.0);
    }
    let gamma = (f_best - mu) / sigma;
    (sigma * (gamma * norm_cdf(gamma) + norm_pdf(gamma))).max(0.0)
}

/// One slice-sampled Theta with its fitted posterior.
#[derive(Debug, Clone)]
pub struct ThetaModel {
    pub theta: RegressionHyperparams,
    pub posterior: PosteriorState,
}

/// A fantasy-augmented view of one model: the posterior conditioned on
/// hypothetical outcomes at the pending points, plus the incumbent those
/// outcomes imply.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub posterior: PosteriorState,
    pub f_best: Option<f64>,
}

/// Draw `n_fantasies` augmented scenarios for one model.
///
/// Within a set the pending outcomes are drawn sequentially, each draw
/// conditioning the next, which samples the joint predictive. When a
/// constraint model is present the validity of each pending point is drawn
/// first; invalid fantasies contribute no target. With nothing pending this
/// returns unmodified copies of the posterior.
pub fn fantasy_augment<R: Rng>(
    basis: &BasisNetwork,
    base: &PosteriorState,
    pending: &[Vec<f64>],
    constraint: Option<&ConstraintPosterior>,
    f_best: Option<f64>,
    n_fantasies: usize,
    rng: &mut R,
) -> Result<Vec<Scenario>> {
    let phis: Vec<DVector<f64>> = pending
        .iter()
        .map(|x| basis.forward_features(x))
        .collect::<Result<_>>()?;
    let etas: Vec<f64> = pending
        .iter()
        .map(|x| prior_mean(&base.theta, x))
        .collect::<Result<_>>()?;
    let probs: Vec<f64> = match constraint {
        Some(c) => pending.iter().map(|x| c.prob(x)).collect::<Result<_>>()?,
        None => vec![1.0; pending.len()],
    };

    (0..n_fantasies)
        .map(|_| {
            let mut posterior = base.clone();
            let mut best = f_best;
            for ((phi_j, &eta_j), &p_valid) in phis.iter().zip(&etas).zip(&probs) {
                let valid = constraint.is_none() || rng.random::<f64>() < p_valid;
                if !valid {
                    continue;
                }
                let (mu, s2) = posterior.predict(phi_j, eta_j)?;
                let draw: f64 = rng.sample(StandardNormal);
                let y = mu + s2.sqrt() * draw;
                posterior = posterior.augmented(phi_j, y - eta_j)?;
                best = Some(best.map_or(y, |b| b.min(y)));
            }
            Ok(Scenario { posterior, f_best: best })
        })
        .collect()
}

/// Everything a suggestion needs to score a candidate point.
pub struct AcquisitionContext<'a> {
    basis: &'a BasisNetwork,
    models: Vec<ThetaModel>,
    /// Per model: fantasy scenarios, empty when nothing is pending so the
    /// no-pending path is bit-identical to plain constrained EI.
    scenarios: Vec<Vec<Scenario>>,
    constraint: Option<&'a ConstraintPosterior>,
    f_best: Option<f64>,
}

impl<'a> AcquisitionContext<'a> {
    /// Build a context, drawing fantasy sets now (deterministic in `seed`).
    pub fn new(
        basis: &'a BasisNetwork,
        models: Vec<ThetaModel>,
        constraint: Option<&'a ConstraintPosterior>,
        f_best: Option<f64>,
        pending: &[Vec<f64>],
        n_fantasies: usize,
        seed: u64,
    ) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParameter(
                "acquisition needs at least one Theta sample".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scenarios = if pending.is_empty() {
            vec![Vec::new(); models.len()]
        } else {
            models
                .iter()
                .map(|m| {
                    fantasy_augment(
                        basis,
                        &m.posterior,
                        pending,
                        constraint,
                        f_best,
                        n_fantasies,
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()?
        };
        Ok(Self {
            basis,
            models,
            scenarios,
            constraint,
            f_best,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.basis.input_dim()
    }

    pub fn models(&self) -> &[ThetaModel] {
        &self.models
    }

    /// The integrated acquisition: fantasy-averaged constrained EI, averaged
    /// over the Theta samples. With no valid incumbent anywhere this
    /// degrades to the probability of validity (pure feasibility search).
    pub fn evaluate(&self, x_unit: &[f64]) -> Result<f64> {
        let p_valid = match self.constraint {
            Some(c) => c.prob(x_unit)?,
            None => 1.0,
        };
        if self.f_best.is_none() {
            return Ok(p_valid);
        }
        let phi = self.basis.forward_features(x_unit)?;
        let mut total = 0.0;
        for (model, scenarios) in self.models.iter().zip(&self.scenarios) {
            let eta = prior_mean(&model.theta, x_unit)?;
            if scenarios.is_empty() {
                let (mu, s2) = model.posterior.predict(&phi, eta)?;
                total += expected_improvement(mu, s2.sqrt(), self.f_best.unwrap());
            } else {
                let mut acc = 0.0;
                for s in scenarios {
                    if let Some(fb) = s.f_best {
                        let (mu, s2) = s.posterior.predict(&phi, eta)?;
                        acc += expected_improvement(mu, s2.sqrt(), fb);
                    }
                }
                total += acc / scenarios.len() as f64;
            }
        }
        Ok(total / self.models.len() as f64 * p_valid)
    }

    /// Mean predictive standard deviation across Theta samples; the
    /// exploration fallback when the acquisition is identically zero.
    pub fn mean_sigma(&self, x_unit: &[f64]) -> Result<f64> {
        let phi = self.basis.forward_features(x_unit)?;
        let mut acc = 0.0;
        for model in &self.models {
            let eta = prior_mean(&model.theta, x_unit)?;
            let (_, s2) = model.posterior.predict(&phi, eta)?;
            acc += s2.sqrt();
        }
        Ok(acc / self.models.len() as f64)
    }
}

/// The integrated acquisition function at a point.
pub fn integrated_acquisition(x_unit: &[f64], ctx: &AcquisitionContext) -> Result<f64> {
    ctx.evaluate(x_unit)
}

/// Deterministic multistart maximizer on the unit cube: score every
/// candidate, refine the best few by coordinate search with a shrinking
/// step, return the best point found. Ties break toward the lowest
/// candidate index.
pub fn maximize_on_unit_cube<F>(
    score: F,
    candidates: &[Vec<f64>],
    n_local: usize,
    sweeps: usize,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidates to score".into()));
    }
    let k = candidates[0].len();
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        let v = score(c)?;
        if v.is_nan() {
            return Err(Error::NonFinite("acquisition value"));
        }
        scored.push((i, v));
    }
    let mut order = scored.clone();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let (mut best_x, mut best_v) = {
        let (i, v) = order[0];
        (candidates[i].clone(), v)
    };

    for &(start_idx, start_val) in order.iter().take(n_local) {
        let mut x = candidates[start_idx].clone();
        let mut val = start_val;
        let mut step = 0.1;
        for _ in 0..sweeps {
            let mut improved = false;
            for d in 0..k {
                for dir in [-1.0, 1.0] {
                    let coord = (x[d] + dir * step).clamp(0.0, 1.0);
                    if coord == x[d] {
                        continue;
                    }
                    let old = x[d];
                    x[d] = coord;
                    let v = score(&x)?;
                    if v > val {
                        val = v;
                        improved = true;
                    } else {
                        x[d] = old;
                    }
                }
            }
            if !improved {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
        if val > best_v {
            best_v = val;
            best_x = x;
        }
    }
    Ok((best_x, best_v))
}

/// Propose the next point: scramble a Halton set, score the integrated
/// acquisition, refine locally. Falls back to maximizing the mean
/// predictive sigma when the acquisition is identically zero over the
/// candidate set. Deterministic given the seed.
pub fn optimize_acquisition(
    ctx: &AcquisitionContext,
    config: &AcquisitionConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let k = ctx.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let halton = HaltonSequence::new(k, &mut rng);
    let candidates: Vec<Vec<f64>> = (0..config.n_candidates)
        .map(|i| halton.nth(i as u64))
        .collect();

    let (x, v) = maximize_on_unit_cube(
        |x| ctx.evaluate(x),
        &candidates,
        config.n_local,
        config.local_sweeps,
    )?;
    if v > 0.0 {
        return Ok(x);
    }
    // Exhausted acquisition: every candidate scored zero. Explore where the
    // model is least certain instead.
    let (x, _) = maximize_on_unit_cube(
        |x| ctx.mean_sigma(x),
        &candidates,
        config.n_local,
        config.local_sweeps,
    )?;
    Ok(x)
}
