use std::collections::BTreeMap;

use crate::model::{ProblemSpec, ResponseModel};
use crate::numeric::Scalar;
use crate::policy::relative_ranks;

use super::{all_permutations, factorial, EnumerationBudget, OracleError};

/// Best success probability over every deterministic policy, found by
/// backward induction over complete observation histories.
///
/// A history is the sequence of relative ranks seen so far together with all
/// responses received. Each node keeps the arrival orders consistent with its
/// history, weighted by `1/n!` times the likelihood of the responses; the
/// weights are unnormalised posteriors, so comparing sums of them compares
/// conditional values. After observing `z_t` a policy may stop, move on, or
/// (at a record, with budget left) query once and then stop or move on. Each
/// history is reached along exactly one path, so the recursion tree is the
/// history tree and needs no memo table.
pub fn exhaustive_optimal<S: Scalar>(
    spec: &ProblemSpec<S>,
    budget: &EnumerationBudget,
) -> Result<S, OracleError> {
    let n = spec.horizon();
    budget.check_horizon("exhaustive policy search", n)?;
    let perms = all_permutations(n);
    let ranks = perms
        .iter()
        .map(|p| relative_ranks(p).map(|z| z.ranks().to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut search = Search {
        n,
        model: spec.model(),
        perms,
        ranks,
        visited: 0,
        cap: budget.max_states,
    };
    let start_weight = S::ratio(1, factorial(n));
    let atoms = (0..search.perms.len())
        .map(|i| (i, start_weight.clone()))
        .collect::<Vec<_>>();
    search.advance(0, &atoms, spec.budget())
}

// (permutation index, weight)
type Atom<S> = (usize, S);

struct Search<'a, S> {
    n: usize,
    model: &'a ResponseModel<S>,
    perms: Vec<Vec<usize>>,
    ranks: Vec<Vec<usize>>,
    visited: u64,
    cap: u64,
}

impl<S: Scalar> Search<'_, S> {
    /// Mass of histories in which the candidate at `t` is the best.
    fn stop_value(&self, t: usize, atoms: &[Atom<S>]) -> S {
        atoms
            .iter()
            .filter(|(i, _)| self.perms[*i][t - 1] == 1)
            .fold(S::zero(), |acc, (_, w)| acc + w.clone())
    }

    /// Value of passing on time `t` (0 = before the first arrival).
    fn advance(&mut self, t: usize, atoms: &[Atom<S>], left: usize) -> Result<S, OracleError> {
        if t == self.n {
            return Ok(S::zero());
        }
        let mut by_rank: BTreeMap<usize, Vec<Atom<S>>> = BTreeMap::new();
        for (i, w) in atoms {
            by_rank
                .entry(self.ranks[*i][t])
                .or_default()
                .push((*i, w.clone()));
        }
        let mut total = S::zero();
        for group in by_rank.into_values() {
            total = total + self.observe(t + 1, &group, left)?;
        }
        Ok(total)
    }

    /// Optimal value right after `z_t` has been observed.
    fn observe(&mut self, t: usize, atoms: &[Atom<S>], left: usize) -> Result<S, OracleError> {
        self.visited += 1;
        if self.visited > self.cap {
            return Err(OracleError::BudgetExceeded {
                what: "exhaustive policy search",
                required: u128::from(self.visited),
                cap: u128::from(self.cap),
            });
        }
        let mut best = self.stop_value(t, atoms).max(self.advance(t, atoms, left)?);

        let is_record = self.ranks[atoms[0].0][t - 1] == 1;
        if is_record && left > 0 {
            let mut query = S::zero();
            for level in 1..=self.model.levels() {
                let branch: Vec<Atom<S>> = atoms
                    .iter()
                    .filter_map(|(i, w)| {
                        let is_best = self.perms[*i][t - 1] == 1;
                        let likelihood = self.model.likelihood(level, is_best);
                        (*likelihood != S::zero()).then(|| (*i, w.clone() * likelihood.clone()))
                    })
                    .collect();
                if branch.is_empty() {
                    continue;
                }
                let stop = self.stop_value(t, &branch);
                let go_on = self.advance(t, &branch, left - 1)?;
                query = query + stop.max(go_on);
            }
            best = best.max(query);
        }
        Ok(best)
    }
}
