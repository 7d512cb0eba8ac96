//! Exact small-scale verification.
//!
//! Everything here works by enumerating all `n!` arrival orders (and, where
//! the expert is involved, every response branch) with exact weights. None of
//! it uses the solver's tables, so agreement with the solver is evidence
//! rather than a tautology.

mod exact;
mod exhaustive;
mod lemmas;

pub use exact::exact_success_probability;
pub use exhaustive::exhaustive_optimal;
pub use lemmas::{verify_lemma1, verify_lemma2, IdentityCheck, LemmaReport};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use thiserror::Error;

use crate::model::{validate_model, ModelError, ResponseModel};
use crate::policy::PolicyError;
use crate::sim::trial_rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{what} needs {required} but the budget allows {cap}")]
    BudgetExceeded {
        what: &'static str,
        required: u128,
        cap: u128,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Caps on enumeration size; oversized requests fail instead of running on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    /// Largest horizon whose permutations may be enumerated.
    pub max_n: usize,
    /// Largest number of histories (or weighted atoms) a search may visit.
    pub max_states: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_n: 7,
            max_states: 10_000_000,
        }
    }
}

impl EnumerationBudget {
    pub(crate) fn check_horizon(&self, what: &'static str, n: usize) -> Result<(), OracleError> {
        if n > self.max_n {
            return Err(OracleError::BudgetExceeded {
                what,
                required: n as u128,
                cap: self.max_n as u128,
            });
        }
        Ok(())
    }
}

pub(crate) fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// All permutations of `1..=n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (1..=n).collect();
    let mut out = Vec::with_capacity(factorial(n) as usize);
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
}

/// A model with small-integer weights drawn from `seed`, normalised exactly.
/// Levels may come out inert (`p = q = 0`), which is legal.
pub fn random_model(seed: u64, levels: usize) -> ResponseModel<BigRational> {
    fn draw(rng: &mut impl Rng, levels: usize) -> Vec<BigRational> {
        loop {
            let weights: Vec<u64> = (0..levels).map(|_| rng.random_range(0..10)).collect();
            let total: u64 = weights.iter().sum();
            if total > 0 {
                return weights
                    .into_iter()
                    .map(|w| BigRational::new(BigInt::from(w), BigInt::from(total)))
                    .collect();
            }
        }
    }
    let mut rng = trial_rng(seed, u64::MAX);
    let p = draw(&mut rng, levels);
    let q = draw(&mut rng, levels);
    validate_model(levels, p, q).expect("normalised weights form a valid model")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_complete_and_distinct() {
        for n in 1..=6 {
            let perms = all_permutations(n);
            assert_eq!(perms.len() as u64, factorial(n));
            let mut sorted = perms.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), perms.len());
            assert_eq!(perms, sorted, "lexicographic order");
        }
    }

    #[test]
    fn random_models_are_valid_and_reproducible() {
        for seed in 0..20 {
            let a = random_model(seed, 3);
            assert_eq!(a, random_model(seed, 3));
            assert_eq!(a.levels(), 3);
        }
        assert_ne!(random_model(1, 2), random_model(2, 2));
    }

    #[test]
    fn horizon_cap() {
        let budget = EnumerationBudget::default();
        assert!(budget.check_horizon("x", 7).is_ok());
        assert!(matches!(
            budget.check_horizon("x", 12),
            Err(OracleError::BudgetExceeded {
                required: 12,
                cap: 7,
                ..
            })
        ));
    }
}
