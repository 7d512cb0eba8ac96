//! Problem instances: the expert's response model, the horizon and the
//! query budget, plus the JSON config format they are loaded from.
//!
//! Response levels are numbered `1..=M`. `p(m)` is the probability that the
//! expert answers `m` when the current candidate is the overall best and
//! `q(m)` the probability when it is not.

use std::fmt;

use num_rational::BigRational;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::numeric::{format_rational, parse_rational, Scalar};

/// Which of the two conditional distributions an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Best,
    NotBest,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Best => f.write_str("p"),
            Distribution::NotBest => f.write_str("q"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("response model needs at least one level")]
    NoLevels,
    #[error("expected {levels} response levels, got {p_len} entries in p and {q_len} in q")]
    LengthMismatch {
        levels: usize,
        p_len: usize,
        q_len: usize,
    },
    #[error("{which}({level}) = {value} is outside [0, 1]")]
    ProbabilityOutOfRange {
        which: Distribution,
        level: usize,
        value: String,
    },
    #[error("{which} sums to 1 + ({deviation}), not 1")]
    SumNotOne {
        which: Distribution,
        deviation: String,
    },
    #[error("horizon n must be at least 1")]
    EmptyHorizon,
    #[error("query budget K = {budget} exceeds horizon n = {n}")]
    BudgetExceedsHorizon { budget: usize, n: usize },
    #[error("invalid number `{0}` (expected a decimal or `a/b`)")]
    InvalidNumber(String),
    #[error("labels has {labels} entries but M = {levels}")]
    LabelCount { labels: usize, levels: usize },
    #[error("malformed config: {0}")]
    Config(String),
}

/// Conditional response distributions of the expert.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseModel<S> {
    p: Vec<S>,
    q: Vec<S>,
}

impl<S: Scalar> ResponseModel<S> {
    pub fn levels(&self) -> usize {
        self.p.len()
    }

    /// Probability of answering `level` (1-based) for the best candidate.
    pub fn p(&self, level: usize) -> &S {
        &self.p[level - 1]
    }

    /// Probability of answering `level` (1-based) for any other candidate.
    pub fn q(&self, level: usize) -> &S {
        &self.q[level - 1]
    }

    pub fn p_values(&self) -> &[S] {
        &self.p
    }

    pub fn q_values(&self) -> &[S] {
        &self.q
    }

    /// Likelihood of `level` given whether the queried candidate is the best.
    pub fn likelihood(&self, level: usize, is_best: bool) -> &S {
        if is_best {
            self.p(level)
        } else {
            self.q(level)
        }
    }

    /// `p(m) == q(m)` for every level: responses carry no information.
    pub fn is_uninformative(&self) -> bool {
        self.p.iter().zip(&self.q).all(|(a, b)| a == b)
    }

    pub fn to_f64(&self) -> ResponseModel<f64> {
        ResponseModel {
            p: self.p.iter().map(Scalar::to_f64).collect(),
            q: self.q.iter().map(Scalar::to_f64).collect(),
        }
    }

    /// Same model with levels in reverse order.
    pub fn reversed(&self) -> Self {
        ResponseModel {
            p: self.p.iter().rev().cloned().collect(),
            q: self.q.iter().rev().cloned().collect(),
        }
    }
}

/// Checks a response model. Nothing is normalised: inputs that do not sum to
/// one are rejected.
///
/// Levels with `p(m) = q(m) = 0` are accepted; they are never emitted.
pub fn validate_model<S: Scalar>(
    levels: usize,
    p: Vec<S>,
    q: Vec<S>,
) -> Result<ResponseModel<S>, ModelError> {
    if levels == 0 {
        return Err(ModelError::NoLevels);
    }
    if p.len() != levels || q.len() != levels {
        return Err(ModelError::LengthMismatch {
            levels,
            p_len: p.len(),
            q_len: q.len(),
        });
    }
    for (which, dist) in [(Distribution::Best, &p), (Distribution::NotBest, &q)] {
        let mut sum = S::zero();
        for (i, v) in dist.iter().enumerate() {
            // NaN fails both comparisons and is rejected here too.
            if !(*v >= S::zero() && *v <= S::one()) {
                return Err(ModelError::ProbabilityOutOfRange {
                    which,
                    level: i + 1,
                    value: v.to_string(),
                });
            }
            sum = sum + v.clone();
        }
        if !S::is_unit_sum(&sum) {
            return Err(ModelError::SumNotOne {
                which,
                deviation: (sum - S::one()).to_string(),
            });
        }
    }
    Ok(ResponseModel { p, q })
}

/// Two-level model with `p(1) = q(2) = p` and `p(2) = q(1) = 1 - p`.
pub fn symmetric_binary_model<S: Scalar>(p: S) -> Result<ResponseModel<S>, ModelError> {
    if !(p >= S::zero() && p <= S::one()) {
        return Err(ModelError::ProbabilityOutOfRange {
            which: Distribution::Best,
            level: 1,
            value: p.to_string(),
        });
    }
    let complement = S::one() - p.clone();
    validate_model(2, vec![p.clone(), complement.clone()], vec![complement, p])
}

/// One level answered with certainty: the expert says nothing.
pub fn silent_model<S: Scalar>() -> ResponseModel<S> {
    ResponseModel {
        p: vec![S::one()],
        q: vec![S::one()],
    }
}

/// A complete instance: horizon `n`, query budget `K` and response model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<S> {
    n: usize,
    budget: usize,
    model: ResponseModel<S>,
}

impl<S: Scalar> ProblemSpec<S> {
    pub fn new(n: usize, budget: usize, model: ResponseModel<S>) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::EmptyHorizon);
        }
        if budget > n {
            return Err(ModelError::BudgetExceedsHorizon { budget, n });
        }
        Ok(ProblemSpec { n, budget, model })
    }

    /// The classical problem: no queries.
    pub fn classical(n: usize) -> Result<Self, ModelError> {
        Self::new(n, 0, silent_model())
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn model(&self) -> &ResponseModel<S> {
        &self.model
    }

    pub fn with_budget(&self, budget: usize) -> Result<Self, ModelError> {
        Self::new(self.n, budget, self.model.clone())
    }

    pub fn to_f64(&self) -> ProblemSpec<f64> {
        ProblemSpec {
            n: self.n,
            budget: self.budget,
            model: self.model.to_f64(),
        }
    }
}

/// A probability as written in a config file.
///
/// JSON numbers stay `f64` so float mode round-trips bit-identically;
/// strings such as `"2/3"` are exact.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigNumber {
    Float(f64),
    Exact(BigRational),
}

impl ConfigNumber {
    pub fn to_scalar<S: Scalar>(&self) -> S {
        match self {
            ConfigNumber::Float(v) => S::from_f64(*v),
            ConfigNumber::Exact(r) => S::from_rational(r),
        }
    }

    fn from_json(value: &Value) -> Result<Self, ModelError> {
        match value {
            Value::Number(num) => num
                .as_f64()
                .map(ConfigNumber::Float)
                .ok_or_else(|| ModelError::InvalidNumber(num.to_string())),
            Value::String(text) => parse_rational(text)
                .map(ConfigNumber::Exact)
                .ok_or_else(|| ModelError::InvalidNumber(text.clone())),
            other => Err(ModelError::InvalidNumber(other.to_string())),
        }
    }
}

impl Serialize for ConfigNumber {
    fn serialize<Se: Serializer>(&self, serializer: Se) -> Result<Se::Ok, Se::Error> {
        match self {
            ConfigNumber::Float(v) => serializer.serialize_f64(*v),
            ConfigNumber::Exact(r) => serializer.serialize_str(&format_rational(r)),
        }
    }
}

impl<'de> Deserialize<'de> for ConfigNumber {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        ConfigNumber::from_json(&value).map_err(D::Error::custom)
    }
}

/// On-disk instance description:
/// `{"n": 100, "K": 10, "M": 2, "p": [0.9, 0.1], "q": ["1/10", "9/10"]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    #[serde(rename = "K")]
    pub budget: usize,
    #[serde(rename = "M")]
    pub levels: usize,
    pub p: Vec<ConfigNumber>,
    pub q: Vec<ConfigNumber>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ModelConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Symmetric two-level instance, written with exact decimal strings.
    pub fn symmetric(n: usize, budget: usize, p: &BigRational) -> Self {
        let one: BigRational = Scalar::one();
        let complement = one - p;
        ModelConfig {
            n,
            budget,
            levels: 2,
            p: vec![
                ConfigNumber::Exact(p.clone()),
                ConfigNumber::Exact(complement.clone()),
            ],
            q: vec![
                ConfigNumber::Exact(complement),
                ConfigNumber::Exact(p.clone()),
            ],
            labels: None,
        }
    }

    /// Validates and converts to a problem in the requested scalar type.
    pub fn to_spec<S: Scalar>(&self) -> Result<ProblemSpec<S>, ModelError> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.levels {
                return Err(ModelError::LabelCount {
                    labels: labels.len(),
                    levels: self.levels,
                });
            }
        }
        let p = self.p.iter().map(ConfigNumber::to_scalar).collect();
        let q = self.q.iter().map(ConfigNumber::to_scalar).collect();
        let model = validate_model(self.levels, p, q)?;
        ProblemSpec::new(self.n, self.budget, model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn infallible_and_uniform_models_are_valid() {
        assert!(validate_model(2, vec![1.0, 0.0], vec![0.0, 1.0]).is_ok());
        assert!(validate_model(2, vec![0.5, 0.5], vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn rejects_p_not_summing_to_one() {
        let err = validate_model(2, vec![0.7, 0.2], vec![0.2, 0.8]).unwrap_err();
        match err {
            ModelError::SumNotOne { which, deviation } => {
                assert_eq!(which, Distribution::Best);
                let dev: f64 = deviation.parse().unwrap();
                assert!((dev + 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_length_and_range_errors() {
        assert_eq!(
            validate_model(3, vec![0.5, 0.5], vec![0.2, 0.3, 0.5]),
            Err(ModelError::LengthMismatch {
                levels: 3,
                p_len: 2,
                q_len: 3
            })
        );
        assert!(matches!(
            validate_model(2, vec![1.5, -0.5], vec![0.5, 0.5]),
            Err(ModelError::ProbabilityOutOfRange { level: 1, .. })
        ));
        assert!(matches!(
            validate_model(1, vec![f64::NAN], vec![1.0]),
            Err(ModelError::ProbabilityOutOfRange { .. })
        ));
        assert_eq!(
            validate_model::<f64>(0, vec![], vec![]),
            Err(ModelError::NoLevels)
        );
    }

    #[test]
    fn rational_sums_are_exact() {
        let third = rat(1, 3);
        assert!(validate_model(3, vec![third.clone(); 3], vec![third.clone(); 3]).is_ok());
        let almost = vec![rat(333, 1000), rat(333, 1000), rat(333, 1000)];
        assert!(validate_model(3, almost.clone(), almost).is_err());
    }

    #[test]
    fn float_sum_tolerance_is_tight() {
        let third = 1.0 / 3.0;
        assert!(validate_model(3, vec![third; 3], vec![third; 3]).is_ok());
        assert!(validate_model(2, vec![0.5, 0.5 + 1e-11], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn inert_levels_are_accepted() {
        assert!(validate_model(3, vec![0.5, 0.5, 0.0], vec![0.25, 0.75, 0.0]).is_ok());
    }

    #[test]
    fn symmetric_binary_examples() {
        let m = symmetric_binary_model(1.0).unwrap();
        assert_eq!(m.p_values(), &[1.0, 0.0]);
        assert_eq!(m.q_values(), &[0.0, 1.0]);

        let m = symmetric_binary_model(0.5).unwrap();
        assert_eq!(m.p_values(), &[0.5, 0.5]);
        assert_eq!(m.q_values(), &[0.5, 0.5]);
        assert!(m.is_uninformative());

        let m = symmetric_binary_model(rat(9, 10)).unwrap();
        assert_eq!(m.p_values(), &[rat(9, 10), rat(1, 10)]);
        assert_eq!(m.q_values(), &[rat(1, 10), rat(9, 10)]);

        assert!(symmetric_binary_model(1.2).is_err());
        assert!(symmetric_binary_model(-0.1).is_err());
    }

    #[test]
    fn budget_bounds() {
        let m = symmetric_binary_model(0.9).unwrap();
        assert!(ProblemSpec::new(5, 0, m.clone()).is_ok());
        assert!(ProblemSpec::new(5, 5, m.clone()).is_ok());
        assert_eq!(
            ProblemSpec::new(5, 6, m.clone()),
            Err(ModelError::BudgetExceedsHorizon { budget: 6, n: 5 })
        );
        assert_eq!(ProblemSpec::new(0, 0, m), Err(ModelError::EmptyHorizon));
    }

    #[test]
    fn config_accepts_floats_and_fractions() {
        let cfg = ModelConfig::from_json_str(
            r#"{"n": 5, "K": 2, "M": 2, "p": [0.8, "1/5"], "q": ["0.2", 0.8],
                "labels": ["yes", "no"]}"#,
        )
        .unwrap();
        let exact: ProblemSpec<BigRational> = cfg.to_spec().unwrap();
        assert_eq!(exact.model().p_values(), &[rat(4, 5), rat(1, 5)]);
        assert_eq!(exact.model().q_values(), &[rat(1, 5), rat(4, 5)]);
        let float: ProblemSpec<f64> = cfg.to_spec().unwrap();
        assert_eq!(float.model().p_values(), &[0.8, 0.2]);
        assert_eq!(float.budget(), 2);
    }

    #[test]
    fn config_errors() {
        let bad_label = ModelConfig::from_json_str(
            r#"{"n": 5, "K": 2, "M": 2, "p": [1, 0], "q": [0, 1], "labels": ["a"]}"#,
        )
        .unwrap();
        assert!(matches!(
            bad_label.to_spec::<f64>(),
            Err(ModelError::LabelCount { .. })
        ));
        assert!(
            ModelConfig::from_json_str(r#"{"n": 5, "K": 2, "M": 2, "p": ["x"], "q": [1]}"#)
                .is_err()
        );
        assert!(ModelConfig::from_json_str(r#"{"n": 5, "K": 2}"#).is_err());
        let over =
            ModelConfig::from_json_str(r#"{"n": 2, "K": 3, "M": 1, "p": [1], "q": [1]}"#).unwrap();
        assert!(matches!(
            over.to_spec::<f64>(),
            Err(ModelError::BudgetExceedsHorizon { .. })
        ));
    }
}
