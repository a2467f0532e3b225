//! Small numeric helpers shared across the crate.

use rand::Rng;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF via erfc, accurate in both tails.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// e^z * E1(z) for z > 0, computed without overflow.
///
/// Series for small z, modified-Lentz continued fraction otherwise.
pub fn exp_e1(z: f64) -> f64 {
    assert!(z > 0.0, "exp_e1 requires z > 0");
    if z <= 1.0 {
        // E1(z) = -gamma - ln z + sum_{k>=1} (-1)^{k+1} z^k / (k * k!)
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..=40 {
            term *= -z / k as f64;
            let contrib = -term / k as f64;
            sum += contrib;
            if contrib.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        (-EULER_GAMMA - z.ln() + sum) * z.exp()
    } else {
        // e^z E1(z) = 1/(z+1 - 1^2/(z+3 - 2^2/(z+5 - ...))), modified Lentz
        let tiny = 1e-300;
        let mut f = tiny;
        let mut c = f;
        let mut d = 0.0_f64;
        for k in 1..200u64 {
            let a = if k == 1 {
                1.0
            } else {
                -(((k - 1) * (k - 1)) as f64)
            };
            let b = z + (2 * k - 1) as f64;
            d = b + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        f
    }
}

/// First `n` primes, for Halton bases.
fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while out.len() < n {
        if out.iter().all(|p| candidate % p != 0) {
            out.push(candidate);
        }
        candidate += 1;
    }
    out
}

/// Halton low-discrepancy sequence in [0,1)^k with a seeded Cranley-Patterson
/// rotation. Deterministic given the shift vector.
pub struct HaltonSequence {
    bases: Vec<u64>,
    shifts: Vec<f64>,
    index: u64,
}

impl HaltonSequence {
    pub fn new<R: Rng>(k: usize, rng: &mut R) -> Self {
        let shifts = (0..k).map(|_| rng.random::<f64>()).collect();
        Self {
            bases: primes(k),
            shifts,
            index: 0,
        }
    }

    /// Unscrambled sequence (zero shifts); used where a fixed grid is wanted.
    pub fn unshifted(k: usize) -> Self {
        Self {
            bases: primes(k),
            shifts: vec![0.0; k],
            index: 0,
        }
    }

    pub fn nth(&self, i: u64) -> Vec<f64> {
        self.bases
            .iter()
            .zip(&self.shifts)
            .map(|(&b, &s)| {
                let v = radical_inverse(i + 1, b) + s;
                v - v.floor()
            })
            .collect()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let p = self.nth(self.index);
        self.index += 1;
        p
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 0.0;
    let mut scale = 1.0 / base as f64;
    while i > 0 {
        inv += (i % base) as f64 * scale;
        i /= base;
        scale /= base as f64;
    }
    inv
}

/// Ordinary least-squares slope of y against x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Affine map between raw targets and the zero-mean/unit-variance scale the
/// surrogates are fit on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 1.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    pub fn encode(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn decode(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn decode_scale(&self, s: f64) -> f64 {
        s * self.std
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn norm_cdf_reference_values() {
        assert_relative_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(norm_cdf(1.0), 0.841344746068543, epsilon = 1e-12);
        assert_relative_eq!(norm_cdf(-2.0), 0.022750131948179, epsilon = 1e-12);
    }

    #[test]
    fn exp_e1_matches_reference_values() {
        // exp(z)*E1(z) reference values from an external special-function library.
        for (z, want) in [
            (1e-8, 17.843465267485485),
            (0.1, 2.014642544708452),
            (0.5, 0.9229106324837305),
            (2.0, 0.36132861688822265),
            (10.0, 0.09156333393978809),
            (50.0, 0.01961510993011487),
            (500.0, 0.0019960159047604114),
            (5e5, 1.9999960000159999e-6),
        ] {
            assert_relative_eq!(exp_e1(z), want, max_relative = 1e-11);
        }
        // continuity across the series/fraction switch
        assert_relative_eq!(
            exp_e1(1.0 - 1e-9),
            exp_e1(1.0 + 1e-9),
            max_relative = 1e-7
        );
    }

    #[test]
    fn halton_first_points_base2_base3() {
        let h = HaltonSequence::unshifted(2);
        let p0 = h.nth(0);
        let p1 = h.nth(1);
        assert_relative_eq!(p0[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(p0[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p1[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(p1[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn slope_of_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert_relative_eq!(ols_slope(&x, &y), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn standardizer_round_trip() {
        let s = Standardizer::fit(&[1.0, 2.0, 3.0, 10.0]);
        let y = 7.3;
        assert_relative_eq!(s.decode(s.encode(y)), y, epsilon = 1e-12);
        let degenerate = Standardizer::fit(&[4.0, 4.0, 4.0]);
        assert_eq!(degenerate.std, 1.0);
    }
}
