//! The closed-loop engine: observe results, retrain the basis, sample
//! hyperparameters, and suggest the next point with pending-job awareness.

use std::collections::BinaryHeap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{
    optimize_acquisition, AcquisitionConfig, AcquisitionContext, ThetaModel,
};
use crate::bayes::{fit_posterior, BasisDesign, RegressionHyperparams};
use crate::benchmarks::Problem;
use crate::constraint::{fit_constraint, ConstraintHyperparams};
use crate::error::{Error, Result};
use crate::gp::{gp_fit, gp_suggest, median_lengthscales, GpKernelParams};
use crate::net::{train_map, NetworkConfig};
use crate::slice::{slice_sample_hyperparams, SamplerConfig};
use crate::space::{Dataset, Observation, Outcome, ParameterSpace};
use crate::util::{HaltonSequence, Standardizer};

/// Which surrogate drives suggestions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    /// Adaptive basis regression on the neural network's last layer.
    Dngo,
    /// Exact GP baseline (cost contrast; ignores pending jobs).
    Gp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub surrogate: SurrogateKind,
    pub net: NetworkConfig,
    pub sampler: SamplerConfig,
    pub acquisition: AcquisitionConfig,
    pub constraint: ConstraintHyperparams,
    /// Initial design size as a multiple of the input dimension.
    pub initial_design_factor: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            surrogate: SurrogateKind::Dngo,
            net: NetworkConfig::default(),
            sampler: SamplerConfig::default(),
            acquisition: AcquisitionConfig::default(),
            constraint: ConstraintHyperparams::default(),
            initial_design_factor: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PendingPoint {
    x_unit: Vec<f64>,
    x_native: Vec<f64>,
}

/// Single-owner optimizer state. `suggest` and `observe` are serialized on
/// it; evaluations may complete out of order.
#[derive(Debug, Clone)]
pub struct Optimizer {
    space: ParameterSpace,
    dataset: Dataset,
    pending: Vec<PendingPoint>,
    config: EngineConfig,
    rng: ChaCha8Rng,
    design: HaltonSequence,
    design_issued: u64,
    iteration: u64,
    external_observations: u64,
}

impl Optimizer {
    pub fn new(space: ParameterSpace, config: EngineConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = HaltonSequence::new(space.dim(), &mut rng);
        Self {
            space,
            dataset: Dataset::new(),
            pending: Vec::new(),
            config,
            rng,
            design,
            design_issued: 0,
            iteration: 0,
            external_observations: 0,
        }
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn pending_units(&self) -> Vec<Vec<f64>> {
        self.pending.iter().map(|p| p.x_unit.clone()).collect()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn external_observations(&self) -> u64 {
        self.external_observations
    }

    fn initial_design_size(&self) -> u64 {
        (self.config.initial_design_factor * self.space.dim()) as u64
    }

    /// Propose the next evaluation point, in native coordinates. The point
    /// joins the pending set until observed.
    ///
    /// Cold start: until `initial_design_factor * K` valid observations
    /// exist, points come from the scrambled low-discrepancy design instead
    /// of the model.
    pub fn suggest(&mut self) -> Result<Vec<f64>> {
        let x_unit = if (self.dataset.n_valid() as u64) < self.initial_design_size() {
            let p = self.design.nth(self.design_issued);
            self.design_issued += 1;
            p
        } else {
            match self.config.surrogate {
                SurrogateKind::Dngo => self.suggest_dngo()?,
                SurrogateKind::Gp => self.suggest_gp()?,
            }
        };
        let x_native = self.space.unscale(&x_unit)?;
        self.pending.push(PendingPoint {
            x_unit,
            x_native: x_native.clone(),
        });
        self.iteration += 1;
        Ok(x_native)
    }

    fn valid_training_data(&self) -> (Vec<Vec<f64>>, Vec<f64>, Standardizer) {
        let xs: Vec<Vec<f64>> = self
            .dataset
            .valid()
            .map(|o| o.x_unit().to_vec())
            .collect();
        let ys: Vec<f64> = self.dataset.valid().map(|o| o.y().unwrap()).collect();
        let standardizer = Standardizer::fit(&ys);
        let ys_std: Vec<f64> = ys.iter().map(|&y| standardizer.encode(y)).collect();
        (xs, ys_std, standardizer)
    }

    fn suggest_dngo(&mut self) -> Result<Vec<f64>> {
        let k = self.space.dim();
        let (xs, ys_std, standardizer) = self.valid_training_data();
        let f_best_std = ys_std.iter().cloned().fold(f64::INFINITY, f64::min);
        let _ = standardizer;

        let seed_net: u64 = self.rng.random();
        let seed_sampler: u64 = self.rng.random();
        let seed_constraint: u64 = self.rng.random();
        let seed_ctx: u64 = self.rng.random();
        let seed_acq: u64 = self.rng.random();

        let trained = train_map(&self.config.net, &xs, &ys_std, seed_net)?;
        let phi = trained.net.features_matrix(&xs)?;
        let design = BasisDesign::new(phi, xs, ys_std)?;
        let theta0 = RegressionHyperparams::default_for_dim(k);
        let thetas =
            slice_sample_hyperparams(&design, &theta0, &self.config.sampler, seed_sampler)?;
        let models: Vec<ThetaModel> = thetas
            .into_iter()
            .map(|theta| {
                let posterior = fit_posterior(&design, &theta)?;
                Ok(ThetaModel { theta, posterior })
            })
            .collect::<Result<_>>()?;

        let constraint_post = if self.dataset.n_invalid() > 0 {
            Some(fit_constraint(
                &self.dataset,
                &self.config.net,
                &self.config.constraint,
                seed_constraint,
            )?)
        } else {
            None
        };

        let pending = self.pending_units();
        let ctx = AcquisitionContext::new(
            &trained.net,
            models,
            constraint_post.as_ref(),
            Some(f_best_std),
            &pending,
            self.config.acquisition.n_fantasies,
            seed_ctx,
        )?;
        optimize_acquisition(&ctx, &self.config.acquisition, seed_acq)
    }

    fn suggest_gp(&mut self) -> Result<Vec<f64>> {
        let (xs, ys_std, _) = self.valid_training_data();
        let seed_acq: u64 = self.rng.random();
        let f_best_std = ys_std.iter().cloned().fold(f64::INFINITY, f64::min);
        let params = GpKernelParams {
            lengthscales: median_lengthscales(&xs),
            signal_variance: 1.0,
            noise_variance: 1e-4,
        };
        let model = gp_fit(xs, &ys_std, params)?;
        gp_suggest(&model, f_best_std, &self.config.acquisition, seed_acq)
    }

    /// Record an outcome at a point. Suggested points leave the pending set;
    /// never-suggested points are accepted as external data injections.
    /// A non-finite "value" is recorded as invalid.
    pub fn observe(&mut self, x_native: &[f64], outcome: Outcome) -> Result<()> {
        let x_unit = self.space.scale_to_unit(x_native)?;
        match self
            .pending
            .iter()
            .position(|p| p.x_native.as_slice() == x_native)
        {
            Some(pos) => {
                self.pending.remove(pos);
            }
            None => {
                self.external_observations += 1;
                log::info!("observation at never-suggested point (external injection)");
            }
        }
        let obs = match outcome {
            Outcome::Value(y) if y.is_finite() => Observation::valid(x_unit, y)?,
            _ => Observation::invalid(x_unit)?,
        };
        self.dataset.push(obs);
        Ok(())
    }

    /// Lowest valid observation so far, in native coordinates. Ties resolve
    /// to the earliest observation.
    pub fn best_observed(&self) -> Result<(Vec<f64>, f64)> {
        let (_, obs) = self.dataset.best_valid().ok_or(Error::NoValidObservations)?;
        Ok((self.space.unscale(obs.x_unit())?, obs.y().unwrap()))
    }
}

/// One completed evaluation, as recorded by `run`. Records appear in
/// completion order; `iteration` is the dispatch index.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub iteration: u64,
    pub x_native: Vec<f64>,
    pub x_unit: Vec<f64>,
    pub outcome: Outcome,
    pub suggest_seconds: f64,
    pub pending_at_suggest: usize,
    pub incumbent: Option<f64>,
}

/// Journal of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunJournal {
    pub problem: String,
    pub seed: u64,
    pub budget: usize,
    pub parallelism: usize,
    pub records: Vec<RunRecord>,
}

impl RunJournal {
    pub fn best_value(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| match r.outcome {
            Outcome::Value(v) => Some(v),
            Outcome::Invalid => None,
        }).fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }
}

struct InFlight {
    finish_time: f64,
    dispatch_index: u64,
    x_native: Vec<f64>,
    x_unit: Vec<f64>,
    suggest_seconds: f64,
    pending_at_suggest: usize,
}

impl PartialEq for InFlight {
    fn eq(&self, other: &Self) -> bool {
        self.finish_time == other.finish_time && self.dispatch_index == other.dispatch_index
    }
}
impl Eq for InFlight {}
impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for InFlight {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; reverse for earliest-finish-first with
        // dispatch order breaking ties.
        other
            .finish_time
            .partial_cmp(&self.finish_time)
            .unwrap()
            .then(other.dispatch_index.cmp(&self.dispatch_index))
    }
}

/// Drive a problem for `budget` completed evaluations with `parallelism`
/// simulated workers. Suggestions are made against the live pending set;
/// worker completion order follows the problem's duration model (unit
/// durations when absent). Evaluator panics record as invalid outcomes.
pub fn run(
    problem: &Problem,
    config: EngineConfig,
    budget: usize,
    parallelism: usize,
    seed: u64,
) -> Result<RunJournal> {
    if parallelism == 0 || budget < parallelism {
        return Err(Error::InvalidParameter(
            "need budget >= parallelism >= 1".into(),
        ));
    }
    let mut optimizer = Optimizer::new(problem.space.clone(), config, seed);
    let mut queue: BinaryHeap<InFlight> = BinaryHeap::new();
    let mut records = Vec::with_capacity(budget);
    let mut dispatched: usize = 0;
    let mut completed: usize = 0;
    let mut now = 0.0;

    while completed < budget {
        while optimizer.pending_len() < parallelism && dispatched < budget {
            let pending_at_suggest = optimizer.pending_len();
            let t0 = Instant::now();
            let x_native = optimizer.suggest()?;
            let suggest_seconds = t0.elapsed().as_secs_f64();
            let x_unit = problem.space.scale_to_unit(&x_native)?;
            let duration = problem.duration(&x_native);
            queue.push(InFlight {
                finish_time: now + duration.max(0.0),
                dispatch_index: dispatched as u64,
                x_native,
                x_unit,
                suggest_seconds,
                pending_at_suggest,
            });
            dispatched += 1;
        }
        let job = queue.pop().expect("pending work must exist");
        now = job.finish_time;
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            problem.evaluate(&job.x_native)
        }))
        .unwrap_or(Outcome::Invalid);
        let recorded = match outcome {
            Outcome::Value(v) if v.is_finite() => Outcome::Value(v),
            _ => Outcome::Invalid,
        };
        optimizer.observe(&job.x_native, recorded)?;
        completed += 1;
        records.push(RunRecord {
            iteration: job.dispatch_index,
            x_native: job.x_native,
            x_unit: job.x_unit,
            outcome: recorded,
            suggest_seconds: job.suggest_seconds,
            pending_at_suggest: job.pending_at_suggest,
            incumbent: optimizer.best_observed().ok().map(|(_, f)| f),
        });
    }
    Ok(RunJournal {
        problem: problem.name.clone(),
        seed,
        budget,
        parallelism,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use std::sync::Arc;

    fn quick_config() -> EngineConfig {
        EngineConfig {
            net: NetworkConfig {
                layer_widths: vec![10, 10],
                epochs: 60,
                ..NetworkConfig::default()
            },
            sampler: SamplerConfig {
                burn_in: 4,
                n_samples: 3,
                thinning: 1,
                ..SamplerConfig::default()
            },
            acquisition: AcquisitionConfig {
                n_candidates: 60,
                n_local: 3,
                local_sweeps: 10,
                n_fantasies: 3,
            },
            ..EngineConfig::default()
        }
    }

    fn quadratic_1d() -> Problem {
        let space = ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap();
        Problem::new(
            "quadratic",
            space,
            Arc::new(|x: &[f64]| Outcome::Value((x[0] - 0.7) * (x[0] - 0.7))),
            Some(0.0),
        )
    }

    #[test]
    fn cold_start_returns_design_points_without_training() {
        // K = 1, factor 2: the first two suggestions are design points.
        let mut opt = Optimizer::new(
            ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap(),
            quick_config(),
            0,
        );
        let a = opt.suggest().unwrap();
        opt.observe(&a, Outcome::Value(1.0)).unwrap();
        let b = opt.suggest().unwrap();
        opt.observe(&b, Outcome::Value(2.0)).unwrap();
        assert_ne!(a, b);
        // both came from the Halton design stream
        let mut check = Optimizer::new(
            ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap(),
            quick_config(),
            0,
        );
        assert_eq!(check.design.nth(0), opt.space.scale_to_unit(&a).unwrap());
        assert_eq!(check.design.nth(1), opt.space.scale_to_unit(&b).unwrap());
        let _ = check.suggest();
    }

    #[test]
    fn suggestion_is_deterministic_for_cloned_state() {
        let mut opt = Optimizer::new(
            ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap(),
            quick_config(),
            3,
        );
        for i in 0..6 {
            let x = opt.suggest().unwrap();
            opt.observe(&x, Outcome::Value((x[0] - 0.4).abs() + i as f64 * 0.01))
                .unwrap();
        }
        let mut clone = opt.clone();
        assert_eq!(opt.suggest().unwrap(), clone.suggest().unwrap());
    }

    #[test]
    fn observe_updates_partitions_and_incumbent() {
        let mut opt = Optimizer::new(
            ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap(),
            quick_config(),
            1,
        );
        let a = opt.suggest().unwrap();
        opt.observe(&a, Outcome::Value(3.0)).unwrap();
        assert_eq!(opt.best_observed().unwrap().1, 3.0);

        let b = opt.suggest().unwrap();
        opt.observe(&b, Outcome::Invalid).unwrap();
        assert_eq!(opt.dataset().n_invalid(), 1);
        assert_eq!(opt.best_observed().unwrap().1, 3.0);

        let c = opt.suggest().unwrap();
        opt.observe(&c, Outcome::Value(1.5)).unwrap();
        assert_eq!(opt.best_observed().unwrap().1, 1.5);

        // duplicates are retained: observe the same point again
        opt.observe(&c, Outcome::Value(1.5)).unwrap();
        assert_eq!(opt.dataset().len(), 4);
        assert_eq!(opt.external_observations(), 1);
    }

    #[test]
    fn non_finite_value_records_as_invalid() {
        let mut opt = Optimizer::new(
            ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap(),
            quick_config(),
            1,
        );
        let a = opt.suggest().unwrap();
        opt.observe(&a, Outcome::Value(f64::NAN)).unwrap();
        assert_eq!(opt.dataset().n_invalid(), 1);
        assert!(opt.best_observed().is_err());
    }

    #[test]
    fn best_observed_tie_goes_to_earliest() {
        let mut opt = Optimizer::new(
            ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap(),
            quick_config(),
            1,
        );
        opt.observe(&[0.2], Outcome::Value(1.0)).unwrap();
        opt.observe(&[0.8], Outcome::Value(1.0)).unwrap();
        let (x, f) = opt.best_observed().unwrap();
        assert_eq!((x[0], f), (0.2, 1.0));
    }

    #[test]
    fn sequential_run_keeps_pending_empty_at_suggest_time() {
        let journal = run(&quadratic_1d(), quick_config(), 8, 1, 0).unwrap();
        assert_eq!(journal.records.len(), 8);
        for r in &journal.records {
            assert_eq!(r.pending_at_suggest, 0);
        }
        // completion order == dispatch order for unit durations
        let iters: Vec<u64> = journal.records.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, (0..8).collect::<Vec<u64>>());
    }

    #[test]
    fn saturated_parallel_run_issues_everything_before_observing() {
        let journal = run(&quadratic_1d(), quick_config(), 8, 8, 1).unwrap();
        assert_eq!(journal.records.len(), 8);
        for (i, r) in journal.records.iter().enumerate() {
            assert_eq!(r.pending_at_suggest, i);
        }
    }

    #[test]
    fn run_is_replay_deterministic() {
        let a = run(&quadratic_1d(), quick_config(), 9, 2, 5).unwrap();
        let b = run(&quadratic_1d(), quick_config(), 9, 2, 5).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.iteration, rb.iteration);
            assert_eq!(ra.x_native, rb.x_native);
            assert_eq!(ra.outcome, rb.outcome);
            assert_eq!(ra.incumbent, rb.incumbent);
        }
    }

    #[test]
    fn incumbent_is_monotone_in_completion_order() {
        let journal = run(&quadratic_1d(), quick_config(), 10, 2, 7).unwrap();
        let mut last = f64::INFINITY;
        for r in &journal.records {
            if let Some(inc) = r.incumbent {
                assert!(inc <= last + 1e-15);
                last = inc;
            }
        }
        assert!(journal.best_value().is_some());
    }

    #[test]
    fn out_of_order_completions_are_tolerated() {
        // durations shrink with x: later dispatches can finish first
        let space = ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap();
        let problem = Problem::new(
            "varying-durations",
            space,
            Arc::new(|x: &[f64]| Outcome::Value(x[0])),
            None,
        )
        .with_duration_model(Arc::new(|x: &[f64]| 2.0 - x[0]));
        let journal = run(&problem, quick_config(), 10, 3, 2).unwrap();
        assert_eq!(journal.records.len(), 10);
        let iters: Vec<u64> = journal.records.iter().map(|r| r.iteration).collect();
        let mut sorted = iters.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<u64>>());
    }

    #[test]
    fn evaluator_panic_records_invalid() {
        let space = ParameterSpace::from_bounds(&[("x", 0.0, 1.0)]).unwrap();
        let problem = Problem::new(
            "panics-sometimes",
            space,
            Arc::new(|x: &[f64]| {
                if x[0] > 0.0 {
                    panic!("evaluator crash");
                }
                Outcome::Value(0.0)
            }),
            None,
        );
        let journal = run(&problem, quick_config(), 4, 1, 0).unwrap();
        assert_eq!(journal.records.len(), 4);
        assert!(journal
            .records
            .iter()
            .any(|r| matches!(r.outcome, Outcome::Invalid)));
    }
}
