//! Minimal exact Gaussian process with EI, used as the cubic-cost contrast
//! for suggestion-time scaling studies. Kernel hyperparameters are fixed by
//! a median-distance heuristic; modeling quality is secondary to cost shape.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{expected_improvement, maximize_on_unit_cube, AcquisitionConfig};
use crate::error::{Error, Result};
use crate::util::HaltonSequence;

/// Squared-exponential kernel with per-dimension lengthscales.
#[derive(Debug, Clone, PartialEq)]
pub struct GpKernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpKernelParams {
    fn validate(&self) -> Result<()> {
        if self.lengthscales.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter(
                "lengthscales must be strictly positive".into(),
            ));
        }
        if !(self.signal_variance > 0.0) || self.noise_variance < 0.0 {
            return Err(Error::InvalidParameter(
                "signal variance must be positive, noise nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((&ai, &bi), &l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (ai - bi) / l;
            q += d * d;
        }
        self.signal_variance * (-0.5 * q).exp()
    }
}

/// Per-dimension median absolute difference over (a subsample of) training
/// pairs; the usual quick lengthscale heuristic.
pub fn median_lengthscales(xs: &[Vec<f64>]) -> Vec<f64> {
    let k = xs[0].len();
    let cap = 300.min(xs.len());
    (0..k)
        .map(|d| {
            let mut diffs = Vec::with_capacity(cap * (cap - 1) / 2);
            for i in 0..cap {
                for j in (i + 1)..cap {
                    let v = (xs[i][d] - xs[j][d]).abs();
                    if v > 0.0 {
                        diffs.push(v);
                    }
                }
            }
            if diffs.is_empty() {
                return 0.3;
            }
            diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            diffs[diffs.len() / 2].max(1e-3)
        })
        .collect()
}

/// Exact GP conditioned on (xs, y) via one dense Cholesky factorization.
#[derive(Debug, Clone)]
pub struct GpModel {
    xs: Vec<Vec<f64>>,
    params: GpKernelParams,
    l_factor: DMatrix<f64>,
    /// K^-1 y, for O(N) predictive means.
    dual: DVector<f64>,
}

pub fn gp_fit(xs: Vec<Vec<f64>>, y: &[f64], params: GpKernelParams) -> Result<GpModel> {
    params.validate()?;
    let n = xs.len();
    if n == 0 || y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n.max(1),
            got: y.len(),
        });
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = params.kernel(&xs[i], &xs[j]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        cov[(i, i)] += params.noise_variance;
    }
    let chol = {
        let mut attempt = nalgebra::Cholesky::new(cov.clone());
        if attempt.is_none() {
            for jitter in [1e-10, 1e-8, 1e-6] {
                let mut jittered = cov.clone();
                for i in 0..n {
                    jittered[(i, i)] += jitter;
                }
                attempt = nalgebra::Cholesky::new(jittered);
                if attempt.is_some() {
                    break;
                }
            }
        }
        attempt.ok_or_else(|| {
            Error::Factorization(format!("GP covariance not positive definite (N = {n})"))
        })?
    };
    let dual = chol.solve(&DVector::from_column_slice(y));
    Ok(GpModel {
        xs,
        params,
        l_factor: chol.l(),
        dual,
    })
}

impl GpModel {
    pub fn n(&self) -> usize {
        self.xs.len()
    }

    /// Predictive mean and variance (including observation noise).
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let n = self.xs.len();
        let k_star = DVector::from_fn(n, |i, _| self.params.kernel(&self.xs[i], x));
        let mu = k_star.dot(&self.dual);
        let half = self
            .l_factor
            .solve_lower_triangular(&k_star)
            .ok_or_else(|| Error::Factorization("singular GP factor".into()))?;
        let var = self.params.signal_variance + self.params.noise_variance
            - half.norm_squared();
        Ok((mu, var.max(1e-12)))
    }
}

/// EI suggestion on the GP posterior through the shared inner optimizer.
pub fn gp_suggest(
    model: &GpModel,
    f_best: f64,
    config: &AcquisitionConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let k = model.xs[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let halton = HaltonSequence::new(k, &mut rng);
    let candidates: Vec<Vec<f64>> = (0..config.n_candidates)
        .map(|i| halton.nth(i as u64))
        .collect();
    let (x, _) = maximize_on_unit_cube(
        |x| {
            let (mu, var) = model.predict(x)?;
            Ok(expected_improvement(mu, var.sqrt(), f_best))
        },
        &candidates,
        config.n_local,
        config.local_sweeps,
    )?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn default_params(k: usize) -> GpKernelParams {
        GpKernelParams {
            lengthscales: vec![0.3; k],
            signal_variance: 1.0,
            noise_variance: 1e-6,
        }
    }

    #[test]
    fn single_point_interpolates() {
        let model = gp_fit(vec![vec![0.4]], &[2.5], default_params(1)).unwrap();
        let (mu, var) = model.predict(&[0.4]).unwrap();
        assert_relative_eq!(mu, 2.5, epsilon = 1e-4);
        assert!(var < 1e-4);
    }

    #[test]
    fn zero_lengthscale_rejected() {
        let params = GpKernelParams {
            lengthscales: vec![0.0],
            signal_variance: 1.0,
            noise_variance: 1e-6,
        };
        assert!(gp_fit(vec![vec![0.1]], &[0.0], params).is_err());
    }

    #[test]
    fn matches_dense_conditioning_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let params = GpKernelParams {
            lengthscales: vec![0.25, 0.4],
            signal_variance: 1.7,
            noise_variance: 1e-4,
        };
        let model = gp_fit(xs.clone(), &y, params.clone()).unwrap();

        // oracle: explicit joint covariance and generic Gaussian conditioning
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] = params.kernel(&xs[i], &xs[j]);
            }
            cov[(i, i)] += params.noise_variance;
        }
        let cov_inv = cov.try_inverse().unwrap();
        for _ in 0..5 {
            let x_star = vec![rng.random::<f64>(), rng.random::<f64>()];
            let k_star = DVector::from_fn(n, |i, _| params.kernel(&xs[i], &x_star));
            let mu_oracle = k_star.dot(&(&cov_inv * DVector::from_column_slice(&y)));
            let var_oracle = params.signal_variance + params.noise_variance
                - (k_star.transpose() * &cov_inv * &k_star)[(0, 0)];
            let (mu, var) = model.predict(&x_star).unwrap();
            assert_relative_eq!(mu, mu_oracle, epsilon = 1e-8);
            assert_relative_eq!(var, var_oracle, epsilon = 1e-8);
        }
    }

    #[test]
    fn suggestion_is_deterministic_and_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random::<f64>()]).collect();
        let y: Vec<f64> = xs.iter().map(|x| (x[0] - 0.3) * (x[0] - 0.3)).collect();
        let model = gp_fit(xs, &y, default_params(1)).unwrap();
        let cfg = AcquisitionConfig {
            n_candidates: 100,
            ..AcquisitionConfig::default()
        };
        let a = gp_suggest(&model, 0.01, &cfg, 7).unwrap();
        let b = gp_suggest(&model, 0.01, &cfg, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|u| (0.0..=1.0).contains(u)));
    }

    #[test]
    fn median_heuristic_is_sane() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 49.0]).collect();
        let ls = median_lengthscales(&xs);
        assert_eq!(ls.len(), 1);
        assert!(ls[0] > 0.0 && ls[0] < 1.0);
    }
}
