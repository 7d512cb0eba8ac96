use crate::model::ProblemSpec;
use crate::numeric::Scalar;
use crate::policy::{hindsight_best, relative_ranks, run_strategy, PolicyError, ScriptedGenie};
use crate::solver::ThresholdSet;

use super::{all_permutations, factorial, EnumerationBudget, OracleError};

/// Success probability of `thresholds` by full enumeration.
///
/// Each arrival order has weight `1/n!`. The strategy is replayed with a
/// scripted expert; whenever it asks for a response the script does not have,
/// the run forks into one branch per level `m`, weighted by `p(m)` or `q(m)`
/// depending on whether the queried candidate is the best.
pub fn exact_success_probability<S: Scalar, T: Scalar>(
    spec: &ProblemSpec<S>,
    thresholds: &ThresholdSet<T>,
    budget: &EnumerationBudget,
) -> Result<S, OracleError> {
    let n = spec.horizon();
    budget.check_horizon("permutation enumeration", n)?;
    let model = spec.model();
    let mut total = S::zero();

    for perm in all_permutations(n) {
        let stream = relative_ranks(&perm)?;
        let best_time = hindsight_best(&perm)?;
        let mut pending = vec![(Vec::new(), S::one())];
        while let Some((script, weight)) = pending.pop() {
            let mut genie = ScriptedGenie::new(script.clone());
            match run_strategy(thresholds, &stream, &mut genie) {
                Ok(outcome) => {
                    debug_assert_eq!(outcome.success, outcome.selected == Some(best_time));
                    if outcome.selected == Some(best_time) {
                        total = total + weight;
                    }
                }
                Err(PolicyError::GenieExhausted { time, .. }) => {
                    let is_best = time == best_time;
                    for level in 1..=model.levels() {
                        let likelihood = model.likelihood(level, is_best);
                        if *likelihood == S::zero() {
                            continue;
                        }
                        let mut longer = script.clone();
                        longer.push(level);
                        pending.push((longer, weight.clone() * likelihood.clone()));
                    }
                }
                Err(other) => return Err(other.into()),
            }
        }
    }

    Ok(total * S::ratio(1, factorial(n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::symmetric_binary_model;
    use crate::solver::{classical_threshold, solve};
    use num_rational::BigRational;
    use num_traits::One;

    #[test]
    fn single_candidate() {
        let spec = ProblemSpec::new(
            1,
            1,
            symmetric_binary_model(BigRational::ratio(3, 5)).unwrap(),
        )
        .unwrap();
        let (_, th) = solve(&spec);
        let p = exact_success_probability(&spec, &th, &EnumerationBudget::default()).unwrap();
        assert!(p.is_one());
    }

    #[test]
    fn classical_four_matches_recursion() {
        let spec = ProblemSpec::<BigRational>::classical(4).unwrap();
        let (_, th) = solve(&spec);
        let p = exact_success_probability(&spec, &th, &EnumerationBudget::default()).unwrap();
        let (_, expected) = classical_threshold::<BigRational>(4).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn symmetric_five_two() {
        let exact = ProblemSpec::new(
            5,
            2,
            symmetric_binary_model(BigRational::ratio(4, 5)).unwrap(),
        )
        .unwrap();
        let (tables, th) = solve(&exact);
        let p = exact_success_probability(&exact, &th, &EnumerationBudget::default()).unwrap();
        assert_eq!(&p, tables.success_probability());

        let float = exact.to_f64();
        let (ftables, fth) = solve(&float);
        let fp = exact_success_probability(&float, &fth, &EnumerationBudget::default()).unwrap();
        assert!((fp - ftables.success_probability()).abs() <= 1e-12);
    }

    #[test]
    fn refuses_large_horizons() {
        let spec = ProblemSpec::<f64>::classical(9).unwrap();
        let (_, th) = solve(&spec);
        assert!(matches!(
            exact_success_probability(&spec, &th, &EnumerationBudget::default()),
            Err(OracleError::BudgetExceeded { .. })
        ));
    }
}
