//! Runs a threshold strategy over one stream of candidates.
//!
//! Candidates carry hidden values forming a permutation of `1..=n`, value 1
//! being the best. The strategy only sees relative ranks: `z_t = 1` means the
//! candidate at time `t` is the best seen so far (a record). Querying or
//! stopping anywhere else cannot catch the best candidate, so the executor
//! acts on records only.

use std::fmt;

use thiserror::Error;

use crate::numeric::Scalar;
use crate::solver::ThresholdSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("input is not a permutation of 1..={n}")]
    NotAPermutation { n: usize },
    #[error("relative rank {rank} at time {time} is outside 1..={time}")]
    InvalidRank { time: usize, rank: usize },
    #[error("thresholds are for n = {thresholds} but the stream has n = {stream}")]
    HorizonMismatch { thresholds: usize, stream: usize },
    #[error("no scripted response left for query {query} at time {time}")]
    GenieExhausted { time: usize, query: usize },
    #[error("response level {level} at time {time} is outside 1..={levels}")]
    InvalidResponse {
        time: usize,
        level: usize,
        levels: usize,
    },
}

/// Relative ranks `z_1..z_n` of one stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankStream {
    ranks: Vec<usize>,
}

impl RankStream {
    pub fn new(ranks: Vec<usize>) -> Result<Self, PolicyError> {
        for (i, &rank) in ranks.iter().enumerate() {
            let time = i + 1;
            if rank == 0 || rank > time {
                return Err(PolicyError::InvalidRank { time, rank });
            }
        }
        Ok(RankStream { ranks })
    }

    pub fn horizon(&self) -> usize {
        self.ranks.len()
    }

    /// `z_t`, 1-based.
    pub fn rank(&self, time: usize) -> usize {
        self.ranks[time - 1]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn is_record(&self, time: usize) -> bool {
        self.ranks[time - 1] == 1
    }

    /// Time of the last record, which is where the overall best arrived.
    pub fn last_record(&self) -> usize {
        self.ranks
            .iter()
            .rposition(|&z| z == 1)
            .map_or(0, |i| i + 1)
    }
}

fn check_permutation(permutation: &[usize]) -> Result<(), PolicyError> {
    let n = permutation.len();
    let mut seen = vec![false; n + 1];
    for &v in permutation {
        if v == 0 || v > n || std::mem::replace(&mut seen[v], true) {
            return Err(PolicyError::NotAPermutation { n });
        }
    }
    Ok(())
}

/// `z_t = 1 + #{l < t : x_l < x_t}`, counted with a Fenwick tree.
pub fn relative_ranks(permutation: &[usize]) -> Result<RankStream, PolicyError> {
    check_permutation(permutation)?;
    let n = permutation.len();
    let mut tree = vec![0usize; n + 1];
    let mut ranks = Vec::with_capacity(n);
    for &v in permutation {
        let mut smaller = 0;
        let mut i = v - 1;
        while i > 0 {
            smaller += tree[i];
            i &= i - 1;
        }
        ranks.push(smaller + 1);
        let mut i = v;
        while i <= n {
            tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }
    Ok(RankStream { ranks })
}

/// Arrival time of the best candidate (value 1).
pub fn hindsight_best(permutation: &[usize]) -> Result<usize, PolicyError> {
    check_permutation(permutation)?;
    Ok(permutation
        .iter()
        .position(|&v| v == 1)
        .map_or(0, |i| i + 1))
}

/// Something that answers queries with a response level in `1..=M`.
pub trait ResponseSource {
    /// Response to a query at `time`, or `None` if the source has run dry.
    fn respond(&mut self, time: usize) -> Option<usize>;
}

/// Replays a fixed list of responses, one per query.
#[derive(Debug, Clone, Default)]
pub struct ScriptedGenie {
    responses: Vec<usize>,
    next: usize,
}

impl ScriptedGenie {
    pub fn new(responses: Vec<usize>) -> Self {
        ScriptedGenie { responses, next: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl ResponseSource for ScriptedGenie {
    fn respond(&mut self, _time: usize) -> Option<usize> {
        let level = self.responses.get(self.next).copied();
        if level.is_some() {
            self.next += 1;
        }
        level
    }
}

/// Result of one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeOutcome {
    /// Time of the selected candidate, if any.
    pub selected: Option<usize>,
    /// `(time, response level)` of every query, in time order.
    pub queries: Vec<(usize, usize)>,
    /// Whether the stop followed a query response rather than the final rule.
    pub stopped_at_query: bool,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Skip,
    Query,
    FinalStop,
    QueryStop,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Skip => "skip",
            Action::Query => "query",
            Action::FinalStop => "final-stop",
            Action::QueryStop => "query-stop",
        })
    }
}

/// One line of an episode trace: `t,z_t,action,response,stopped`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub time: usize,
    pub rank: usize,
    pub action: Action,
    pub response: Option<usize>,
    pub stopped: bool,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let response = self.response.map(|m| m.to_string()).unwrap_or_default();
        write!(
            f,
            "{},{},{},{},{}",
            self.time, self.rank, self.action, response, self.stopped
        )
    }
}

/// Executes the threshold strategy on `stream`.
pub fn run_strategy<S: Scalar, G: ResponseSource>(
    thresholds: &ThresholdSet<S>,
    stream: &RankStream,
    genie: &mut G,
) -> Result<EpisodeOutcome, PolicyError> {
    execute(thresholds, stream, genie, None)
}

/// Like [`run_strategy`], also returning one trace step per time visited.
pub fn run_strategy_traced<S: Scalar, G: ResponseSource>(
    thresholds: &ThresholdSet<S>,
    stream: &RankStream,
    genie: &mut G,
) -> Result<(EpisodeOutcome, Vec<TraceStep>), PolicyError> {
    let mut trace = Vec::with_capacity(stream.horizon());
    let outcome = execute(thresholds, stream, genie, Some(&mut trace))?;
    Ok((outcome, trace))
}

fn execute<S: Scalar, G: ResponseSource>(
    thresholds: &ThresholdSet<S>,
    stream: &RankStream,
    genie: &mut G,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<EpisodeOutcome, PolicyError> {
    let n = stream.horizon();
    if thresholds.horizon() != n {
        return Err(PolicyError::HorizonMismatch {
            thresholds: thresholds.horizon(),
            stream: n,
        });
    }
    let budget = thresholds.budget();
    let mut outcome = EpisodeOutcome {
        selected: None,
        queries: Vec::new(),
        stopped_at_query: false,
        success: false,
    };
    // index of the next query, 1-based
    let mut k = 1;

    for t in 1..=n {
        let rank = stream.rank(t);
        let mut step = TraceStep {
            time: t,
            rank,
            action: Action::Skip,
            response: None,
            stopped: false,
        };
        if rank == 1 {
            if k <= budget {
                if t >= thresholds.query_threshold(k) {
                    let level = genie
                        .respond(t)
                        .ok_or(PolicyError::GenieExhausted { time: t, query: k })?;
                    let levels = thresholds.decision_thresholds()[k - 1].len();
                    if level == 0 || level > levels {
                        return Err(PolicyError::InvalidResponse {
                            time: t,
                            level,
                            levels,
                        });
                    }
                    outcome.queries.push((t, level));
                    step.response = Some(level);
                    if t >= thresholds.decision_threshold(k, level) {
                        step.action = Action::QueryStop;
                        step.stopped = true;
                        outcome.selected = Some(t);
                        outcome.stopped_at_query = true;
                    } else {
                        step.action = Action::Query;
                        k += 1;
                    }
                }
            } else if t >= thresholds.final_threshold() {
                step.action = Action::FinalStop;
                step.stopped = true;
                outcome.selected = Some(t);
            }
        }
        let stopped = step.stopped;
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(step);
        }
        if stopped {
            break;
        }
    }

    outcome.success = outcome.selected == Some(stream.last_record());
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{symmetric_binary_model, ProblemSpec};
    use crate::solver::{classical_threshold, solve};

    fn stream(ranks: &[usize]) -> RankStream {
        RankStream::new(ranks.to_vec()).unwrap()
    }

    #[test]
    fn relative_rank_examples() {
        assert_eq!(relative_ranks(&[3, 1, 2]).unwrap().ranks(), &[1, 1, 2]);
        let up: Vec<usize> = (1..=7).collect();
        assert_eq!(relative_ranks(&up).unwrap().ranks(), up.as_slice());
        let down: Vec<usize> = (1..=7).rev().collect();
        assert_eq!(relative_ranks(&down).unwrap().ranks(), &[1; 7]);
    }

    #[test]
    fn relative_ranks_match_direct_count() {
        let perm = [5, 2, 7, 1, 3, 6, 4];
        let z = relative_ranks(&perm).unwrap();
        for t in 0..perm.len() {
            let direct = 1 + perm[..t].iter().filter(|&&v| v < perm[t]).count();
            assert_eq!(z.ranks()[t], direct);
        }
    }

    #[test]
    fn rejects_non_permutations() {
        assert_eq!(
            relative_ranks(&[1, 1, 2]),
            Err(PolicyError::NotAPermutation { n: 3 })
        );
        assert!(relative_ranks(&[0, 1]).is_err());
        assert!(hindsight_best(&[1, 4]).is_err());
        assert!(RankStream::new(vec![1, 3]).is_err());
        assert!(RankStream::new(vec![2]).is_err());
    }

    #[test]
    fn hindsight_examples() {
        assert_eq!(hindsight_best(&[3, 1, 2]), Ok(2));
        assert_eq!(hindsight_best(&[1, 2, 3]), Ok(1));
        assert_eq!(hindsight_best(&[2, 3, 1]), Ok(3));
    }

    #[test]
    fn classical_four_selects_second() {
        let (r_f, _) = classical_threshold::<f64>(4).unwrap();
        assert_eq!(r_f, 2);
        let (_, th) = solve(&ProblemSpec::<f64>::classical(4).unwrap());
        let perm = [2, 1, 3, 4];
        let z = relative_ranks(&perm).unwrap();
        assert_eq!(z.ranks(), &[1, 1, 3, 4]);
        let out = run_strategy(&th, &z, &mut ScriptedGenie::default()).unwrap();
        assert_eq!(out.selected, Some(2));
        assert!(out.success);
        assert!(!out.stopped_at_query);
        assert!(out.queries.is_empty());
    }

    fn infallible_hundred() -> ThresholdSet<f64> {
        let spec = ProblemSpec::new(100, 10, symmetric_binary_model(1.0).unwrap()).unwrap();
        solve(&spec).1
    }

    #[test]
    fn infallible_level_one_stops_immediately() {
        let th = infallible_hundred();
        // records at 1, 30, 60
        let mut ranks: Vec<usize> = (1..=100).map(|t| if t == 1 { 1 } else { 2 }).collect();
        ranks[29] = 1;
        ranks[59] = 1;
        let z = stream(&ranks);
        let first_query = th.query_threshold(1);
        assert!(first_query <= 30);
        let out = run_strategy(&th, &z, &mut ScriptedGenie::new(vec![2, 2, 1])).unwrap();
        assert_eq!(out.selected, Some(60));
        assert!(out.stopped_at_query);
        assert_eq!(out.queries.last(), Some(&(60, 1)));
        assert!(out.success);
    }

    #[test]
    fn no_selection_when_no_rule_fires() {
        let (_, th) = solve(&ProblemSpec::<f64>::classical(100).unwrap());
        // one record at t = 1, before the threshold
        let mut ranks = vec![2usize; 100];
        ranks[0] = 1;
        let z = stream(&ranks);
        let out = run_strategy(&th, &z, &mut ScriptedGenie::default()).unwrap();
        assert_eq!(out.selected, None);
        assert!(!out.success);
        assert!(out.queries.is_empty());
    }

    #[test]
    fn horizon_and_script_errors() {
        let th = infallible_hundred();
        let z = stream(&[1, 1, 1]);
        assert_eq!(
            run_strategy(&th, &z, &mut ScriptedGenie::default()),
            Err(PolicyError::HorizonMismatch {
                thresholds: 100,
                stream: 3
            })
        );
        let ranks = vec![1usize; 100];
        let err = run_strategy(&th, &stream(&ranks), &mut ScriptedGenie::new(vec![2])).unwrap_err();
        assert!(matches!(err, PolicyError::GenieExhausted { query: 2, .. }));
        let err = run_strategy(&th, &stream(&ranks), &mut ScriptedGenie::new(vec![3])).unwrap_err();
        assert!(matches!(err, PolicyError::InvalidResponse { level: 3, .. }));
    }

    #[test]
    fn trace_lines() {
        let (_, th) = solve(&ProblemSpec::<f64>::classical(4).unwrap());
        let z = relative_ranks(&[2, 1, 3, 4]).unwrap();
        let (out, trace) = run_strategy_traced(&th, &z, &mut ScriptedGenie::default()).unwrap();
        assert_eq!(out.selected, Some(2));
        let lines: Vec<String> = trace.iter().map(ToString::to_string).collect();
        assert_eq!(lines, ["1,1,skip,,false", "2,1,final-stop,,true"]);
    }

    #[test]
    fn trace_records_queries() {
        let spec = ProblemSpec::new(3, 1, symmetric_binary_model(1.0).unwrap()).unwrap();
        let (_, th) = solve(&spec);
        assert_eq!(th.query_threshold(1), 1);
        let z = relative_ranks(&[2, 3, 1]).unwrap();
        let (out, trace) = run_strategy_traced(&th, &z, &mut ScriptedGenie::new(vec![2])).unwrap();
        assert_eq!(trace[0].to_string(), "1,1,query,2,false");
        assert_eq!(trace[1].to_string(), "2,2,skip,,false");
        assert_eq!(trace[2].to_string(), "3,1,final-stop,,true");
        assert!(out.success);
    }
}
