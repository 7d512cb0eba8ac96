use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::model::ResponseModel;
use crate::numeric::{abs_diff, format_rational};
use crate::policy::relative_ranks;

use super::{all_permutations, factorial, EnumerationBudget, OracleError};

/// Outcome of checking one identity over every case it applies to.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub identity: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub worst_deviation: BigRational,
    pub worst_case: String,
}

impl IdentityCheck {
    fn new(identity: &'static str) -> Self {
        IdentityCheck {
            identity,
            cases: 0,
            failures: 0,
            worst_deviation: BigRational::zero(),
            worst_case: String::new(),
        }
    }

    fn record(
        &mut self,
        expected: &BigRational,
        actual: &BigRational,
        case: impl FnOnce() -> String,
    ) {
        self.cases += 1;
        let deviation = abs_diff(expected, actual);
        if deviation.is_zero() {
            return;
        }
        self.failures += 1;
        if deviation > self.worst_deviation {
            self.worst_deviation = deviation;
            self.worst_case = format!(
                "{}: expected {}, got {}",
                case(),
                format_rational(expected),
                format_rational(actual)
            );
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

impl fmt::Display for IdentityCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} cases, {} failures",
            self.identity, self.cases, self.failures
        )?;
        if self.failures > 0 {
            write!(f, " (worst {})", self.worst_case)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub checks: Vec<IdentityCheck>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(IdentityCheck::passed)
    }
}

fn rat(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn indicator(condition: bool) -> BigRational {
    if condition {
        BigRational::one()
    } else {
        BigRational::zero()
    }
}

// (event mass, mass of the event intersected with the target)
type Tally<K> = HashMap<K, (BigRational, BigRational)>;

fn tally<K: std::hash::Hash + Eq>(map: &mut Tally<K>, key: K, weight: &BigRational, hit: bool) {
    let entry = map
        .entry(key)
        .or_insert_with(|| (BigRational::zero(), BigRational::zero()));
    entry.0 += weight;
    if hit {
        entry.1 += weight;
    }
}

/// Every rank prefix of length `t`, built directly rather than from permutations.
fn rank_prefixes(t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for len in 1..=t {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (1..=len).map(move |z| {
                    let mut next = prefix.clone();
                    next.push(z);
                    next
                })
            })
            .collect();
    }
    out
}

/// Checks the rank-distribution identities for horizon `n` by enumeration.
pub fn verify_lemma1(n: usize, budget: &EnumerationBudget) -> Result<LemmaReport, OracleError> {
    budget.check_horizon("rank identity enumeration", n)?;
    let perms = all_permutations(n);
    let ranks = perms
        .iter()
        .map(|p| relative_ranks(p).map(|z| z.ranks().to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    let unit = rat(1, factorial(n) as usize);

    let mut joint = IdentityCheck::new("joint_values");
    let mut coverage = IdentityCheck::new("joint_values_coverage");
    let mut prefix = IdentityCheck::new("rank_prefix");
    let mut conditional = IdentityCheck::new("rank_conditional");
    let mut best_now = IdentityCheck::new("best_with_prefix");
    let mut best_earlier = IdentityCheck::new("earlier_best");

    for t in 1..=n {
        let mut values: HashMap<&[usize], usize> = HashMap::new();
        for p in &perms {
            *values.entry(&p[..t]).or_default() += 1;
        }
        let expected = rat(factorial(n - t) as usize, factorial(n) as usize);
        for (key, count) in &values {
            joint.record(&expected, &(&unit * BigInt::from(*count)), || {
                format!("t={t}, values={key:?}")
            });
        }
        coverage.record(
            &rat(factorial(n) as usize / factorial(n - t) as usize, 1),
            &rat(values.len(), 1),
            || format!("t={t}"),
        );

        // counts[prefix] = (all, best at t, best at each t1 <= t)
        let mut counts: HashMap<&[usize], (usize, Vec<usize>)> = HashMap::new();
        for (p, z) in perms.iter().zip(&ranks) {
            let entry = counts.entry(&z[..t]).or_insert_with(|| (0, vec![0; t]));
            entry.0 += 1;
            if let Some(t1) = p[..t].iter().position(|&v| v == 1) {
                entry.1[t1] += 1;
            }
        }
        let mut shorter: HashMap<&[usize], usize> = HashMap::new();
        for z in &ranks {
            *shorter.entry(&z[..t - 1]).or_default() += 1;
        }

        let base = rat(1, factorial(t - 1) as usize * n);
        for zs in rank_prefixes(t) {
            let (all, best_at) = counts
                .get(zs.as_slice())
                .cloned()
                .unwrap_or((0, vec![0; t]));
            prefix.record(
                &rat(1, factorial(t) as usize),
                &(&unit * BigInt::from(all)),
                || format!("prefix={zs:?}"),
            );
            let parent = shorter.get(&zs[..t - 1]).copied().unwrap_or(0);
            if parent > 0 {
                conditional.record(&rat(1, t), &rat(all, parent), || format!("prefix={zs:?}"));
            }
            best_now.record(
                &(&base * indicator(zs[t - 1] == 1)),
                &(&unit * BigInt::from(best_at[t - 1])),
                || format!("t={t}, prefix={zs:?}"),
            );
            for t1 in 1..=t {
                let clear = zs[t1..].iter().all(|&z| z > 1);
                best_earlier.record(
                    &(&base * indicator(zs[t1 - 1] == 1 && clear)),
                    &(&unit * BigInt::from(best_at[t1 - 1])),
                    || format!("t1={t1}, t={t}, prefix={zs:?}"),
                );
            }
        }
    }

    Ok(LemmaReport {
        checks: vec![joint, coverage, prefix, conditional, best_now, best_earlier],
    })
}

struct Atom {
    perm: usize,
    responses: Vec<usize>,
    weight: BigRational,
}

/// All (arrival order, responses at `queries`) outcomes with nonzero weight.
fn response_atoms(
    perms: &[Vec<usize>],
    queries: &[usize],
    model: &ResponseModel<BigRational>,
) -> Vec<Atom> {
    let unit = rat(1, perms.len());
    let mut out = Vec::new();
    for (idx, perm) in perms.iter().enumerate() {
        let mut partial = vec![(Vec::new(), unit.clone())];
        for &time in queries {
            let is_best = perm[time - 1] == 1;
            partial = partial
                .into_iter()
                .flat_map(|(responses, weight)| {
                    (1..=model.levels()).filter_map(move |level| {
                        let likelihood = model.likelihood(level, is_best);
                        if likelihood.is_zero() {
                            return None;
                        }
                        let mut longer = responses.clone();
                        longer.push(level);
                        Some((longer, &weight * likelihood))
                    })
                })
                .collect();
        }
        out.extend(partial.into_iter().map(|(responses, weight)| Atom {
            perm: idx,
            responses,
            weight,
        }));
    }
    out
}

/// Checks the response/posterior identities for horizon `n` and `model`.
///
/// Every nonempty set of query times is tried. A response is drawn at each
/// query time whether or not that candidate is a record; the identities hold
/// either way.
pub fn verify_lemma2(
    n: usize,
    model: &ResponseModel<BigRational>,
    budget: &EnumerationBudget,
) -> Result<LemmaReport, OracleError> {
    budget.check_horizon("response identity enumeration", n)?;
    let required =
        u128::from(factorial(n)) * ((model.levels() as u128 + 1).saturating_pow(n as u32) - 1);
    if required > u128::from(budget.max_states) {
        return Err(OracleError::BudgetExceeded {
            what: "response identity enumeration",
            required,
            cap: u128::from(budget.max_states),
        });
    }
    let perms = all_permutations(n);
    let ranks = perms
        .iter()
        .map(|p| relative_ranks(p).map(|z| z.ranks().to_vec()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut current = IdentityCheck::new("current_best");
    let mut posterior = IdentityCheck::new("query_posterior");
    let mut marginal = IdentityCheck::new("response_marginal");
    let mut next_record = IdentityCheck::new("next_record");

    for mask in 1u32..(1 << n) {
        let queries: Vec<usize> = (1..=n).filter(|t| mask & (1 << (t - 1)) != 0).collect();
        let tk = *queries.last().unwrap();
        let atoms = response_atoms(&perms, &queries, model);
        let case = |what: &str| format!("queries={queries:?}, {what}");

        let mut at_query: Tally<(&[usize], &[usize])> = HashMap::new();
        let mut before_query: Vec<Tally<(&[usize], &[usize])>> =
            (0..model.levels()).map(|_| HashMap::new()).collect();
        for atom in &atoms {
            let z = &ranks[atom.perm];
            let best = perms[atom.perm][tk - 1] == 1;
            tally(
                &mut at_query,
                (&z[..tk], &atom.responses),
                &atom.weight,
                best,
            );
            if z[tk - 1] == 1 {
                let earlier = &atom.responses[..queries.len() - 1];
                let last = atom.responses[queries.len() - 1];
                for (level, map) in before_query.iter_mut().enumerate() {
                    tally(map, (&z[..tk], earlier), &atom.weight, last == level + 1);
                }
            }
        }
        for ((z, responses), (mass, hit)) in &at_query {
            let zeta = responses[responses.len() - 1];
            let expected = if z[tk - 1] == 1 {
                let lead = model.p(zeta) * rat(tk, 1);
                &lead / (&lead + model.q(zeta) * rat(n - tk, 1))
            } else {
                BigRational::zero()
            };
            posterior.record(&expected, &(hit / mass), || {
                case(&format!("prefix={z:?}, responses={responses:?}"))
            });
        }
        let frac = rat(tk, n);
        for (level, map) in before_query.iter().enumerate() {
            let m = level + 1;
            let expected = model.p(m) * &frac + model.q(m) * (BigRational::one() - &frac);
            for ((z, earlier), (mass, hit)) in map {
                marginal.record(&expected, &(hit / mass), || {
                    case(&format!("prefix={z:?}, earlier={earlier:?}, level={m}"))
                });
            }
        }

        for t in tk + 1..=n {
            let mut now: Tally<(&[usize], &[usize])> = HashMap::new();
            let mut next: Tally<(&[usize], &[usize])> = HashMap::new();
            for atom in &atoms {
                let z = &ranks[atom.perm];
                let best = perms[atom.perm][t - 1] == 1;
                tally(&mut now, (&z[..t], &atom.responses), &atom.weight, best);
                if z[tk - 1] == 1 {
                    tally(
                        &mut next,
                        (&z[..t - 1], &atom.responses),
                        &atom.weight,
                        z[t - 1] == 1,
                    );
                }
            }
            for ((z, responses), (mass, hit)) in &now {
                let expected = rat(t, n) * indicator(z[t - 1] == 1);
                current.record(&expected, &(hit / mass), || {
                    case(&format!("t={t}, prefix={z:?}, responses={responses:?}"))
                });
            }
            for ((z, responses), (mass, hit)) in &next {
                let zeta = responses[responses.len() - 1];
                let (p, q) = (model.p(zeta), model.q(zeta));
                let clear = z[tk..].iter().all(|&r| r > 1);
                let correction = if clear {
                    rat(t - 1, 1) * (p - q) / (p * rat(t - 1, 1) + q * rat(n - t + 1, 1))
                } else {
                    BigRational::zero()
                };
                let expected = (BigRational::one() - correction) / rat(t, 1);
                next_record.record(&expected, &(hit / mass), || {
                    case(&format!("t={t}, prefix={z:?}, responses={responses:?}"))
                });
            }
        }
    }

    Ok(LemmaReport {
        checks: vec![current, posterior, marginal, next_record],
    })
}
