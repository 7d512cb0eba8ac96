//! Monte Carlo estimate of a strategy's success probability.
//!
//! Every trial draws from its own ChaCha8 stream: the generator is seeded
//! from the run seed and then switched to stream number `trial`. Results are
//! therefore a function of `(spec, thresholds, trials, seed)` only, whatever
//! the number of workers, and aggregation is exact integer counting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ProblemSpec, ResponseModel};
use crate::numeric::Scalar;
use crate::policy::{relative_ranks, run_strategy, PolicyError, ResponseSource, TraceStep};
use crate::policy::{run_strategy_traced, EpisodeOutcome};
use crate::solver::ThresholdSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("trials must be positive")]
    NoTrials,
    #[error("parallelism must be positive")]
    NoWorkers,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub parallelism: usize,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64, parallelism: usize) -> Result<Self, SimError> {
        if trials == 0 {
            return Err(SimError::NoTrials);
        }
        if parallelism == 0 {
            return Err(SimError::NoWorkers);
        }
        Ok(SimConfig {
            trials,
            seed,
            parallelism,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimResult {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub mean_queries: f64,
    pub seed: u64,
}

impl SimResult {
    /// Distance between the estimate and `reference`, in standard errors.
    pub fn gap_in_stderr(&self, reference: f64) -> f64 {
        let gap = (self.estimate - reference).abs();
        if self.stderr > 0.0 {
            gap / self.stderr
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Generator for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Uniform permutation of `1..=n` (Fisher-Yates).
pub fn sample_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.shuffle(rng);
    perm
}

/// Draws a response level from `p` (best candidate) or `q` (any other).
pub fn sample_response<R: Rng + ?Sized>(
    rng: &mut R,
    model: &ResponseModel<f64>,
    is_best: bool,
) -> usize {
    let dist = if is_best {
        model.p_values()
    } else {
        model.q_values()
    };
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in dist.iter().enumerate() {
        acc += w;
        if u < acc {
            return i + 1;
        }
    }
    // u landed in the rounding slack above the cumulative sum
    dist.iter().rposition(|&w| w > 0.0).map_or(1, |i| i + 1)
}

/// Expert that answers from the response model, knowing the hidden values.
pub struct SimulatedGenie<'a, R: ?Sized> {
    model: &'a ResponseModel<f64>,
    permutation: &'a [usize],
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> SimulatedGenie<'a, R> {
    pub fn new(model: &'a ResponseModel<f64>, permutation: &'a [usize], rng: &'a mut R) -> Self {
        SimulatedGenie {
            model,
            permutation,
            rng,
        }
    }
}

impl<R: Rng + ?Sized> ResponseSource for SimulatedGenie<'_, R> {
    fn respond(&mut self, time: usize) -> Option<usize> {
        let is_best = self.permutation[time - 1] == 1;
        Some(sample_response(self.rng, self.model, is_best))
    }
}

/// Plays trial number `trial` of a run and returns its outcome.
pub fn simulate_episode<S: Scalar>(
    spec: &ProblemSpec<f64>,
    thresholds: &ThresholdSet<S>,
    seed: u64,
    trial: u64,
) -> Result<EpisodeOutcome, SimError> {
    let mut rng = trial_rng(seed, trial);
    let perm = sample_permutation(&mut rng, spec.horizon());
    let stream = relative_ranks(&perm)?;
    let mut genie = SimulatedGenie::new(spec.model(), &perm, &mut rng);
    Ok(run_strategy(thresholds, &stream, &mut genie)?)
}

/// Same as [`simulate_episode`] with a step-by-step trace.
pub fn trace_episode<S: Scalar>(
    spec: &ProblemSpec<f64>,
    thresholds: &ThresholdSet<S>,
    seed: u64,
    trial: u64,
) -> Result<(EpisodeOutcome, Vec<TraceStep>), SimError> {
    let mut rng = trial_rng(seed, trial);
    let perm = sample_permutation(&mut rng, spec.horizon());
    let stream = relative_ranks(&perm)?;
    let mut genie = SimulatedGenie::new(spec.model(), &perm, &mut rng);
    Ok(run_strategy_traced(thresholds, &stream, &mut genie)?)
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    successes: u64,
    queries: u64,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            successes: self.successes + other.successes,
            queries: self.queries + other.queries,
        }
    }
}

/// Estimates the success probability of `thresholds` on `spec`.
pub fn monte_carlo<S: Scalar>(
    spec: &ProblemSpec<f64>,
    thresholds: &ThresholdSet<S>,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    if cfg.trials == 0 {
        return Err(SimError::NoTrials);
    }
    if thresholds.horizon() != spec.horizon() {
        return Err(PolicyError::HorizonMismatch {
            thresholds: thresholds.horizon(),
            stream: spec.horizon(),
        }
        .into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;

    let tally = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                simulate_episode(spec, thresholds, cfg.seed, trial).map(|out| Tally {
                    successes: u64::from(out.success),
                    queries: out.queries.len() as u64,
                })
            })
            .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
    })?;

    let trials = cfg.trials as f64;
    let estimate = tally.successes as f64 / trials;
    Ok(SimResult {
        estimate,
        stderr: (estimate * (1.0 - estimate) / trials).sqrt(),
        trials: cfg.trials,
        mean_queries: tally.queries as f64 / trials,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::symmetric_binary_model;
    use crate::solver::solve;
    use std::collections::HashMap;

    #[test]
    fn single_element_permutation() {
        let mut rng = trial_rng(7, 0);
        assert_eq!(sample_permutation(&mut rng, 1), vec![1]);
    }

    #[test]
    fn permutations_are_uniform() {
        // chi-square over the 6 permutations of 3 elements; 25.7 is about the
        // 0.9999 quantile at 5 degrees of freedom.
        let draws = 60_000u64;
        let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
        let mut rng = trial_rng(2024, 0);
        for _ in 0..draws {
            *counts.entry(sample_permutation(&mut rng, 3)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 25.7, "chi2 = {chi2}");
        for &c in counts.values() {
            let sigma = (draws as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
            assert!((c as f64 - expected).abs() <= 4.0 * sigma);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a: Vec<Vec<usize>> = (0..5)
            .map(|i| sample_permutation(&mut trial_rng(11, i), 8))
            .collect();
        let b: Vec<Vec<usize>> = (0..5)
            .map(|i| sample_permutation(&mut trial_rng(11, i), 8))
            .collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn infallible_best_always_level_one() {
        let model = symmetric_binary_model(1.0).unwrap();
        let mut rng = trial_rng(1, 0);
        for _ in 0..1000 {
            assert_eq!(sample_response(&mut rng, &model, true), 1);
            assert_eq!(sample_response(&mut rng, &model, false), 2);
        }
    }

    #[test]
    fn response_frequency_matches_model() {
        let model = symmetric_binary_model(0.9).unwrap();
        let mut rng = trial_rng(3, 0);
        let draws = 1_000_000;
        let ones = (0..draws)
            .filter(|_| sample_response(&mut rng, &model, true) == 1)
            .count() as f64;
        let sigma = (draws as f64 * 0.9 * 0.1).sqrt();
        assert!((ones - 0.9 * draws as f64).abs() <= 4.0 * sigma);
    }

    #[test]
    fn uniform_model_ignores_best_flag() {
        let model = symmetric_binary_model(0.5).unwrap();
        let mut rng = trial_rng(5, 0);
        let draws = 200_000;
        let sigma = (draws as f64 * 0.25).sqrt();
        for is_best in [true, false] {
            let ones = (0..draws)
                .filter(|_| sample_response(&mut rng, &model, is_best) == 1)
                .count() as f64;
            assert!((ones - 0.5 * draws as f64).abs() <= 4.0 * sigma);
        }
    }

    #[test]
    fn inert_levels_are_never_drawn() {
        let model =
            crate::model::validate_model(3, vec![0.5, 0.0, 0.5], vec![0.0, 0.0, 1.0]).unwrap();
        let mut rng = trial_rng(9, 0);
        for _ in 0..10_000 {
            assert_ne!(sample_response(&mut rng, &model, true), 2);
            assert_eq!(sample_response(&mut rng, &model, false), 3);
        }
    }

    #[test]
    fn config_validation() {
        assert_eq!(SimConfig::new(0, 1, 1), Err(SimError::NoTrials));
        assert_eq!(SimConfig::new(1, 1, 0), Err(SimError::NoWorkers));
    }

    #[test]
    fn horizon_mismatch_is_reported() {
        let spec = ProblemSpec::<f64>::classical(10).unwrap();
        let (_, other) = solve(&ProblemSpec::<f64>::classical(11).unwrap());
        let cfg = SimConfig::new(10, 0, 1).unwrap();
        assert!(matches!(
            monte_carlo(&spec, &other, &cfg),
            Err(SimError::Policy(PolicyError::HorizonMismatch { .. }))
        ));
    }

    #[test]
    fn no_queries_without_budget() {
        let spec = ProblemSpec::<f64>::classical(20).unwrap();
        let (_, th) = solve(&spec);
        let res = monte_carlo(&spec, &th, &SimConfig::new(5_000, 4, 2).unwrap()).unwrap();
        assert_eq!(res.mean_queries, 0.0);
        assert!(res.estimate >= 0.0 && res.estimate <= 1.0);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let spec = ProblemSpec::new(30, 4, symmetric_binary_model(0.8).unwrap()).unwrap();
        let (_, th) = solve(&spec);
        let one = monte_carlo(&spec, &th, &SimConfig::new(20_000, 99, 1).unwrap()).unwrap();
        let many = monte_carlo(&spec, &th, &SimConfig::new(20_000, 99, 6).unwrap()).unwrap();
        assert_eq!(one, many);
        assert!(one.mean_queries <= 4.0);
    }
}
