//! Built-in objective functions for closed-loop runs and tests.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::space::{Outcome, ParameterSpace};

type Evaluator = Arc<dyn Fn(&[f64]) -> Outcome + Send + Sync>;
type DurationModel = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A named objective with its search space.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub space: ParameterSpace,
    evaluator: Evaluator,
    pub known_optimum: Option<f64>,
    duration_model: Option<DurationModel>,
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        space: ParameterSpace,
        evaluator: Evaluator,
        known_optimum: Option<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            space,
            evaluator,
            known_optimum,
            duration_model: None,
        }
    }

    pub fn evaluate(&self, x_native: &[f64]) -> Outcome {
        (self.evaluator)(x_native)
    }

    /// Simulated runtime of one evaluation; unit duration when no model is
    /// attached.
    pub fn duration(&self, x_native: &[f64]) -> f64 {
        self.duration_model
            .as_ref()
            .map(|d| d(x_native))
            .unwrap_or(1.0)
    }

    pub fn with_duration_model(mut self, model: DurationModel) -> Self {
        self.duration_model = Some(model);
        self
    }
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.space.dim())
            .field("known_optimum", &self.known_optimum)
            .finish()
    }
}

pub const BRANIN_OPTIMUM: f64 = 0.39788735772973816;
pub const HARTMANN6_OPTIMUM: f64 = -3.322368011391339;

/// Branin on [-5,10] x [0,15]; three global minima at value ~0.397887.
pub fn branin(x1: f64, x2: f64) -> f64 {
    use std::f64::consts::PI;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    let inner = x2 - b * x1 * x1 + c * x1 - 6.0;
    inner * inner + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

const HARTMANN6_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

/// Hartmann 6-D on the unit cube; global minimum ~ -3.32237.
pub fn hartmann6(x: &[f64; 6]) -> f64 {
    let mut outer = 0.0;
    for i in 0..4 {
        let mut inner = 0.0;
        for j in 0..6 {
            let d = x[j] - HARTMANN6_P[i][j];
            inner += HARTMANN6_A[i][j] * d * d;
        }
        outer += HARTMANN6_ALPHA[i] * (-inner).exp();
    }
    -outer
}

// Feasible disk for the constrained Branin variant: centered on one global
// minimizer with a radius that excludes the other two.
pub const CONSTRAINT_DISK_CENTER: (f64, f64) = (std::f64::consts::PI, 2.275);
pub const CONSTRAINT_DISK_RADIUS: f64 = 4.0;

fn inside_disk(x1: f64, x2: f64) -> bool {
    let dx = x1 - CONSTRAINT_DISK_CENTER.0;
    let dy = x2 - CONSTRAINT_DISK_CENTER.1;
    (dx * dx + dy * dy).sqrt() <= CONSTRAINT_DISK_RADIUS
}

fn branin_space() -> ParameterSpace {
    ParameterSpace::from_bounds(&[("x1", -5.0, 10.0), ("x2", 0.0, 15.0)]).unwrap()
}

fn check_in_space(space: &ParameterSpace, x: &[f64]) -> Result<()> {
    space.scale_to_unit(x).map(|_| ())
}

pub fn branin_problem() -> Problem {
    let space = branin_space();
    Problem::new(
        "branin",
        space,
        Arc::new(|x: &[f64]| Outcome::Value(branin(x[0], x[1]))),
        Some(BRANIN_OPTIMUM),
    )
}

pub fn hartmann6_problem() -> Problem {
    let space = ParameterSpace::from_bounds(&[
        ("x1", 0.0, 1.0),
        ("x2", 0.0, 1.0),
        ("x3", 0.0, 1.0),
        ("x4", 0.0, 1.0),
        ("x5", 0.0, 1.0),
        ("x6", 0.0, 1.0),
    ])
    .unwrap();
    Problem::new(
        "hartmann6",
        space,
        Arc::new(|x: &[f64]| {
            let arr: [f64; 6] = x.try_into().expect("hartmann6 takes 6 coordinates");
            Outcome::Value(hartmann6(&arr))
        }),
        Some(HARTMANN6_OPTIMUM),
    )
}

/// Branin restricted to a disk that keeps exactly one of its three global
/// minimizers feasible; everything outside evaluates as invalid.
pub fn constrained_branin_problem() -> Problem {
    Problem::new(
        "constrained-branin",
        branin_space(),
        Arc::new(|x: &[f64]| {
            if inside_disk(x[0], x[1]) {
                Outcome::Value(branin(x[0], x[1]))
            } else {
                Outcome::Invalid
            }
        }),
        Some(BRANIN_OPTIMUM),
    )
}

/// Wrap a problem with seeded additive Gaussian noise. Each evaluation uses
/// a stream keyed by its index, so concurrent callers see a deterministic
/// sequence regardless of scheduling.
pub fn with_noise(problem: Problem, sigma_noise: f64, seed: u64) -> Result<Problem> {
    if sigma_noise < 0.0 {
        return Err(Error::InvalidParameter(
            "noise standard deviation must be nonnegative".into(),
        ));
    }
    if sigma_noise == 0.0 {
        return Ok(problem);
    }
    let counter = Arc::new(AtomicU64::new(0));
    let inner = problem.evaluator.clone();
    let name = format!("{}+noise", problem.name);
    let evaluator: Evaluator = Arc::new(move |x: &[f64]| {
        let index = counter.fetch_add(1, Ordering::SeqCst);
        match inner(x) {
            Outcome::Value(v) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let z: f64 = rng.sample(StandardNormal);
                Outcome::Value(v + sigma_noise * z)
            }
            Outcome::Invalid => Outcome::Invalid,
        }
    });
    Ok(Problem {
        name,
        space: problem.space,
        evaluator,
        known_optimum: None,
        duration_model: problem.duration_model,
    })
}

/// Problems addressable by name from the CLI.
pub fn by_name(name: &str) -> Result<Problem> {
    match name {
        "branin" => Ok(branin_problem()),
        "hartmann6" => Ok(hartmann6_problem()),
        "constrained-branin" => Ok(constrained_branin_problem()),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

pub fn problem_names() -> &'static [&'static str] {
    &["branin", "hartmann6", "constrained-branin"]
}

/// Evaluate with an in-space check, for callers holding raw coordinates.
pub fn evaluate_checked(problem: &Problem, x: &[f64]) -> Result<Outcome> {
    check_in_space(&problem.space, x)?;
    Ok(problem.evaluate(x))
}
