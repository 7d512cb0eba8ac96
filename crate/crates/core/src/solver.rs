//! Backward recursion for the optimal success probability and the
//! threshold form of the optimal strategy.
//!
//! Two families of sequences are computed for `t = 0..=n`:
//!
//! * `A[k][t]`, `k = 0..=K`: optimal probability of still selecting the best
//!   candidate when `k` queries have been spent and the search continues past
//!   time `t`. `A[k][n] = 0`.
//! * `U[k][t]`, `k = 1..=K+1`: optimal value of issuing the `k`-th query at a
//!   record time `t` and acting on the response. `U[K+1][t] = t/n` is the value
//!   of stopping outright once the budget is gone.
//!
//! ```text
//! A[k][t-1] = A[k][t] (1 - 1/t) + max(U[k+1][t], A[k][t]) / t
//! U[k][t]   = sum_m max(p(m) t/n, q(m) A[k][t])
//! ```
//!
//! Since `sum_m q(m) = 1`, `A[k][t-1]` lies between `A[k][t]` and
//! `U[k+1][t]` (and equals `A[k][t]` when `U[k+1][t] <= A[k][t]`), while
//! `U[k][t] >= max(A[k][t], t/n)` with `U[k][0] = A[k][0]`. The recursion
//! applies these facts explicitly. Nothing changes in exact arithmetic; in
//! floating point the tables stay monotone instead of drifting by an ulp
//! across stretches where they are mathematically constant.
//!
//! `A[0][0]` is the maximal success probability. Rows are filled for
//! `k = K` down to `0` so that `U[k+1]` is complete before `A[k]` needs it.

use serde_json::json;

use crate::model::{ModelError, ProblemSpec};
use crate::numeric::{format_significant, round_significant, NumericMode, Scalar};

/// Digits used for probabilities in machine-readable output.
pub const MACHINE_DIGITS: usize = 10;

/// Dense value tables of one solve.
#[derive(Debug, Clone)]
pub struct ValueTables<S> {
    spec: ProblemSpec<S>,
    // a[k][t] for k in 0..=K
    a: Vec<Vec<S>>,
    // u[k][t] for k in 1..=K+1; u[0] is left empty
    u: Vec<Vec<S>>,
}

impl<S: Scalar> ValueTables<S> {
    pub fn spec(&self) -> &ProblemSpec<S> {
        &self.spec
    }

    pub fn mode(&self) -> NumericMode {
        S::MODE
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    pub fn budget(&self) -> usize {
        self.spec.budget()
    }

    /// `A[k][t]`, `0 <= k <= K`, `0 <= t <= n`.
    pub fn a(&self, k: usize, t: usize) -> &S {
        &self.a[k][t]
    }

    /// `U[k][t]`, `1 <= k <= K + 1`, `0 <= t <= n`.
    pub fn u(&self, k: usize, t: usize) -> &S {
        assert!(k >= 1, "U is indexed from k = 1");
        &self.u[k][t]
    }

    pub fn success_probability(&self) -> &S {
        &self.a[0][0]
    }

    /// `k,t,A,U` rows for `k = 0..=K+1`; a cell is blank where the sequence is
    /// not defined (`U` at `k = 0`, `A` at `k = K + 1`).
    pub fn to_csv(&self) -> String {
        let n = self.horizon();
        let budget = self.budget();
        let mut out = String::from("k,t,A,U\n");
        for k in 0..=budget + 1 {
            for t in 0..=n {
                let a = if k <= budget {
                    format_significant(self.a[k][t].to_f64(), MACHINE_DIGITS)
                } else {
                    String::new()
                };
                let u = if k >= 1 {
                    format_significant(self.u[k][t].to_f64(), MACHINE_DIGITS)
                } else {
                    String::new()
                };
                out.push_str(&format!("{k},{t},{a},{u}\n"));
            }
        }
        out
    }
}

/// Runs the double backward recursion.
pub fn compute_tables<S: Scalar>(spec: &ProblemSpec<S>) -> ValueTables<S> {
    let n = spec.horizon();
    let budget = spec.budget();
    let model = spec.model();
    let n64 = n as u64;

    let mut a: Vec<Vec<S>> = vec![Vec::new(); budget + 1];
    let mut u: Vec<Vec<S>> = vec![Vec::new(); budget + 2];
    u[budget + 1] = (0..=n).map(|t| S::ratio(t as u64, n64)).collect();

    for k in (0..=budget).rev() {
        let mut row = vec![S::zero(); n + 1];
        for t in (1..=n).rev() {
            let t64 = t as u64;
            let here = row[t].clone();
            let next = u[k + 1][t].clone();
            row[t - 1] = if next <= here {
                here
            } else {
                let mixed = here.clone() * S::ratio(t64 - 1, t64) + next.clone() * S::ratio(1, t64);
                mixed.max(here).min(next)
            };
        }
        if k >= 1 {
            u[k] = (0..=n)
                .map(|t| {
                    if t == 0 {
                        return row[0].clone();
                    }
                    let stop_share = S::ratio(t as u64, n64);
                    let total = (1..=model.levels()).fold(S::zero(), |acc, m| {
                        let stop = model.p(m).clone() * stop_share.clone();
                        let go_on = model.q(m).clone() * row[t].clone();
                        acc + stop.max(go_on)
                    });
                    total.max(stop_share).max(row[t].clone())
                })
                .collect();
        }
        a[k] = row;
    }

    ValueTables {
        spec: spec.clone(),
        a,
        u,
    }
}

/// The optimal strategy in threshold form.
///
/// * `r_f`: once the budget is spent, stop at the first record at or after
///   `r_f`.
/// * `r[k-1]`: the `k`-th query goes to the first record at or after `r_k`
///   (and after the previous query).
/// * `s[k-1][m-1]`: after the `k`-th query answers `m` at time `t`, stop iff
///   `t >= s_k(m)`.
///
/// Thresholds of a query sitting below its `r_k` never bind; a query at `t`
/// already has `t >= r_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet<S> {
    n: usize,
    r_f: usize,
    r: Vec<usize>,
    s: Vec<Vec<usize>>,
    success_probability: S,
}

impl<S: Scalar> ThresholdSet<S> {
    /// Assembles a threshold set by hand, e.g. to probe perturbed strategies.
    pub fn from_parts(
        n: usize,
        r_f: usize,
        r: Vec<usize>,
        s: Vec<Vec<usize>>,
        success_probability: S,
    ) -> Self {
        assert_eq!(r.len(), s.len(), "one decision row per query");
        ThresholdSet {
            n,
            r_f,
            r,
            s,
            success_probability,
        }
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn budget(&self) -> usize {
        self.r.len()
    }

    pub fn final_threshold(&self) -> usize {
        self.r_f
    }

    /// `r_k`, 1-based.
    pub fn query_threshold(&self, k: usize) -> usize {
        self.r[k - 1]
    }

    pub fn query_thresholds(&self) -> &[usize] {
        &self.r
    }

    /// `s_k(m)`, both 1-based.
    pub fn decision_threshold(&self, k: usize, level: usize) -> usize {
        self.s[k - 1][level - 1]
    }

    pub fn decision_thresholds(&self) -> &[Vec<usize>] {
        &self.s
    }

    pub fn success_probability(&self) -> &S {
        &self.success_probability
    }

    /// `{"r_f", "r", "s", "success_probability"}` with the probability at
    /// ten significant digits.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "r_f": self.r_f,
            "r": self.r,
            "s": self.s,
            "success_probability":
                round_significant(self.success_probability.to_f64(), MACHINE_DIGITS),
        })
    }
}

fn first_time(n: usize, holds: impl Fn(usize) -> bool) -> usize {
    // t = n always qualifies for every threshold below; n is a safe fallback.
    (1..=n).find(|&t| holds(t)).unwrap_or(n)
}

/// Reads the thresholds off solved tables; every comparison is `>=`, so ties
/// resolve towards acting earlier.
pub fn extract_thresholds<S: Scalar>(tables: &ValueTables<S>) -> ThresholdSet<S> {
    let n = tables.horizon();
    let budget = tables.budget();
    let model = tables.spec().model();
    let n64 = n as u64;

    let r_f = first_time(n, |t| S::ratio(t as u64, n64) >= tables.a[budget][t]);
    let r = (1..=budget)
        .map(|k| first_time(n, |t| tables.u[k][t] >= tables.a[k - 1][t]))
        .collect();
    let s = (1..=budget)
        .map(|k| {
            (1..=model.levels())
                .map(|m| {
                    first_time(n, |t| {
                        model.p(m).clone() * S::ratio(t as u64, n64)
                            >= model.q(m).clone() * tables.a[k][t].clone()
                    })
                })
                .collect()
        })
        .collect();

    ThresholdSet {
        n,
        r_f,
        r,
        s,
        success_probability: tables.a[0][0].clone(),
    }
}

/// Tables and thresholds in one call.
pub fn solve<S: Scalar>(spec: &ProblemSpec<S>) -> (ValueTables<S>, ThresholdSet<S>) {
    let tables = compute_tables(spec);
    let thresholds = extract_thresholds(&tables);
    (tables, thresholds)
}

/// Threshold and success probability of the classical problem (no queries).
pub fn classical_threshold<S: Scalar>(n: usize) -> Result<(usize, S), ModelError> {
    let spec = ProblemSpec::<S>::classical(n)?;
    let (_, thresholds) = solve(&spec);
    Ok((thresholds.r_f, thresholds.success_probability))
}
