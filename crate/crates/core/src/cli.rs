//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 a verification check
//! failed, 3 an enumeration budget was exceeded.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::model::{symmetric_binary_model, ModelConfig, ModelError, ProblemSpec, ResponseModel};
use crate::numeric::{format_rational, format_significant, parse_rational, NumericMode, Scalar};
use crate::oracle::{
    exact_success_probability, exhaustive_optimal, random_model, verify_lemma1, verify_lemma2,
    EnumerationBudget, LemmaReport, OracleError,
};
use crate::sim::{monte_carlo, trace_episode, SimConfig, SimError};
use crate::solver::{classical_threshold, solve, MACHINE_DIGITS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Horizon, budget and expert accuracies of the reference grid.
pub const TABLE2_N: usize = 100;
pub const TABLE2_K: usize = 10;
pub const TABLE2_P: [&str; 8] = [
    "0.50", "0.60", "0.70", "0.80", "0.90", "0.95", "0.98", "1.00",
];

#[derive(Debug, Parser)]
#[command(
    name = "noisy-secretary",
    version,
    about = "Optimal stopping with a limited number of queries to a noisy expert"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and print its threshold strategy as JSON.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "float")]
        mode: NumericMode,
        /// Also write the full value tables as CSV.
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Thresholds and success probabilities for n = 100, K = 10 and the
    /// symmetric expert at p = 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 1.
    Table2 {
        #[arg(long, default_value = "float")]
        mode: NumericMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Success probability over a grid of budgets and symmetric accuracies.
    Sweep {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        k_min: usize,
        #[arg(long)]
        k_max: usize,
        /// Comma-separated accuracies, decimals or fractions.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<String>,
        #[arg(long, default_value = "float")]
        mode: NumericMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the optimal strategy's success rate.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Write a step-by-step CSV trace of the first trial.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact enumeration checks on small instances.
    Verify {
        #[arg(long, default_value_t = 5)]
        max_n: usize,
        /// Number of randomly drawn models added to the fixed suite.
        #[arg(long, default_value_t = 3)]
        random_models: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0} verification check(s) failed")]
    VerificationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerificationFailed(_) => EXIT_VERIFY_FAILED,
            CliError::Oracle(OracleError::BudgetExceeded { .. }) => EXIT_BUDGET,
            _ => EXIT_INVALID,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Machine output goes to `stdout` unless `--out` is given.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(
    command: Command,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    match command {
        Command::Solve {
            config,
            mode,
            tables,
            out,
        } => {
            let cfg = read_config(&config)?;
            let (report, summary) = match mode {
                NumericMode::Float => solve_report::<f64>(&cfg, tables.as_deref())?,
                NumericMode::Rational => solve_report::<BigRational>(&cfg, tables.as_deref())?,
            };
            emit(out.as_deref(), stdout, &format!("{report}\n"))?;
            writeln!(stderr, "{summary}").ok();
        }
        Command::Table2 { mode, out } => {
            emit(out.as_deref(), stdout, &table2_csv(mode))?;
        }
        Command::Sweep {
            n,
            k_min,
            k_max,
            p,
            mode,
            out,
        } => {
            let rows = sweep(n, k_min, k_max, &p, mode)?;
            let mut csv = String::from("p,K,success\n");
            for row in rows {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    row.p,
                    row.budget,
                    format_significant(row.success, MACHINE_DIGITS)
                ));
            }
            emit(out.as_deref(), stdout, &csv)?;
        }
        Command::Simulate {
            config,
            trials,
            seed,
            parallelism,
            trace,
            out,
        } => {
            let cfg = read_config(&config)?;
            let spec = cfg.to_spec::<f64>()?;
            let workers = parallelism
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
            let sim_cfg = SimConfig::new(trials, seed, workers)?;
            let (_, thresholds) = solve(&spec);
            let reference = *thresholds.success_probability();
            let result = monte_carlo(&spec, &thresholds, &sim_cfg)?;
            if let Some(path) = trace {
                let (_, steps) = trace_episode(&spec, &thresholds, seed, 0)?;
                let mut text = String::from("t,z_t,action,response,stopped\n");
                for step in steps {
                    text.push_str(&format!("{step}\n"));
                }
                write_file(&path, &text)?;
            }
            let gap = result.gap_in_stderr(reference);
            let report = json!({
                "estimate": result.estimate,
                "stderr": result.stderr,
                "trials": result.trials,
                "mean_queries": result.mean_queries,
                "seed": result.seed,
                "solver_value": reference,
                "gap_in_stderr": gap,
            });
            emit(out.as_deref(), stdout, &format!("{report:#}\n"))?;
            writeln!(
                stderr,
                "estimate {:.4} +/- {:.4}, solver {:.4}",
                result.estimate, result.stderr, reference
            )
            .ok();
        }
        Command::Verify {
            max_n,
            random_models,
            seed,
            out,
        } => {
            let entries = verify_suite(max_n, random_models, seed, &EnumerationBudget::default())?;
            let failed = entries.iter().filter(|e| !e.pass).count();
            let text = serde_json::to_string_pretty(&entries).expect("report serialises");
            emit(out.as_deref(), stdout, &format!("{text}\n"))?;
            writeln!(stderr, "{} checks, {failed} failed", entries.len()).ok();
            if failed > 0 {
                return Err(CliError::VerificationFailed(failed));
            }
        }
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<ModelConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ModelConfig::from_json_str(&text)?)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn solve_report<S: Scalar>(
    cfg: &ModelConfig,
    tables_path: Option<&Path>,
) -> Result<(serde_json::Value, String), CliError> {
    let spec = cfg.to_spec::<S>()?;
    let (tables, thresholds) = solve(&spec);
    if let Some(path) = tables_path {
        write_file(path, &tables.to_csv())?;
    }
    let summary = format!(
        "n = {}, K = {}: success probability {:.4}, r_f = {}",
        spec.horizon(),
        spec.budget(),
        thresholds.success_probability().to_f64(),
        thresholds.final_threshold()
    );
    Ok((thresholds.to_json(), summary))
}

fn symmetric_spec<S: Scalar>(
    n: usize,
    budget: usize,
    p: &BigRational,
) -> Result<ProblemSpec<S>, ModelError> {
    ProblemSpec::new(n, budget, symmetric_binary_model(S::from_rational(p))?)
}

fn parse_accuracy(text: &str) -> Result<BigRational, CliError> {
    parse_rational(text).ok_or_else(|| ModelError::InvalidNumber(text.to_string()).into())
}

/// The reference grid as CSV: thresholds as integers, success to 4 decimals.
pub fn table2_csv(mode: NumericMode) -> String {
    let mut csv = String::from("p,r_f");
    for k in 1..=TABLE2_K {
        csv.push_str(&format!(",r_{k}"));
    }
    for m in 1..=2 {
        for k in 1..=TABLE2_K {
            csv.push_str(&format!(",s_{k}({m})"));
        }
    }
    csv.push_str(",P_succ\n");

    let rows: Vec<String> = TABLE2_P
        .par_iter()
        .map(|text| {
            let p = parse_rational(text).expect("grid accuracies parse");
            match mode {
                NumericMode::Float => table2_row::<f64>(text, &p),
                NumericMode::Rational => table2_row::<BigRational>(text, &p),
            }
        })
        .collect();
    for row in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    csv
}

fn table2_row<S: Scalar>(label: &str, p: &BigRational) -> String {
    let spec = symmetric_spec::<S>(TABLE2_N, TABLE2_K, p).expect("grid instances are valid");
    let (_, th) = solve(&spec);
    let mut fields = vec![label.to_string(), th.final_threshold().to_string()];
    fields.extend(th.query_thresholds().iter().map(usize::to_string));
    for level in 1..=2 {
        fields.extend((1..=TABLE2_K).map(|k| th.decision_threshold(k, level).to_string()));
    }
    fields.push(format!("{:.4}", th.success_probability().to_f64()));
    fields.join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: String,
    pub budget: usize,
    pub success: f64,
}

/// Optimal success for every symmetric accuracy in `p_values` and every
/// budget in `k_min..=k_max`, plus the `K = 0` baseline. Rows are ordered by
/// accuracy, then budget.
pub fn sweep(
    n: usize,
    k_min: usize,
    k_max: usize,
    p_values: &[String],
    mode: NumericMode,
) -> Result<Vec<SweepRow>, CliError> {
    if n == 0 {
        return Err(ModelError::EmptyHorizon.into());
    }
    if k_min > k_max || k_max > n {
        return Err(CliError::Invalid(format!(
            "budget range {k_min}..={k_max} must lie within 0..={n}"
        )));
    }
    let mut accuracies = p_values
        .iter()
        .map(|text| {
            let p = parse_accuracy(text.trim())?;
            symmetric_binary_model(p.clone())?;
            Ok(p)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    accuracies.sort();
    accuracies.dedup();
    let mut budgets: Vec<usize> = (k_min..=k_max).collect();
    if k_min > 0 {
        budgets.insert(0, 0);
    }

    let cells: Vec<(BigRational, usize)> = accuracies
        .iter()
        .flat_map(|p| budgets.iter().map(move |&k| (p.clone(), k)))
        .collect();
    cells
        .par_iter()
        .map(|(p, k)| {
            let success = match mode {
                NumericMode::Float => solve(&symmetric_spec::<f64>(n, *k, p)?)
                    .1
                    .success_probability()
                    .to_f64(),
                NumericMode::Rational => solve(&symmetric_spec::<BigRational>(n, *k, p)?)
                    .1
                    .success_probability()
                    .to_f64(),
            };
            Ok(SweepRow {
                p: p.to_f64().to_string(),
                budget: *k,
                success,
            })
        })
        .collect()
}

/// One line of the `verify` report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub check: String,
    pub instance: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

fn value_check(
    check: &str,
    instance: String,
    expected: &BigRational,
    actual: &BigRational,
) -> CheckEntry {
    CheckEntry {
        check: check.to_string(),
        instance,
        expected: format_rational(expected),
        actual: format_rational(actual),
        pass: expected == actual,
    }
}

fn lemma_entries(check: &str, instance: &str, report: &LemmaReport) -> Vec<CheckEntry> {
    report
        .checks
        .iter()
        .map(|c| CheckEntry {
            check: format!("{check}.{}", c.identity),
            instance: instance.to_string(),
            expected: format!("0 failures over {} cases", c.cases),
            actual: if c.failures == 0 {
                format!("0 failures over {} cases", c.cases)
            } else {
                format!("{} failures; worst {}", c.failures, c.worst_case)
            },
            pass: c.passed(),
        })
        .collect()
}

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(num.into(), den.into())
}

/// Fixed models plus `random_models` drawn from `seed`, each with a name.
pub fn model_suite(random_models: usize, seed: u64) -> Vec<(String, ResponseModel<BigRational>)> {
    let mut suite = vec![
        (
            "infallible".to_string(),
            symmetric_binary_model(rat(1, 1)).expect("valid"),
        ),
        (
            "uniform".to_string(),
            symmetric_binary_model(rat(1, 2)).expect("valid"),
        ),
        (
            "symmetric-4/5".to_string(),
            symmetric_binary_model(rat(4, 5)).expect("valid"),
        ),
        (
            "three-level".to_string(),
            crate::model::validate_model(
                3,
                vec![rat(3, 5), rat(3, 10), rat(1, 10)],
                vec![rat(1, 10), rat(3, 10), rat(3, 5)],
            )
            .expect("valid"),
        ),
    ];
    for i in 0..random_models as u64 {
        let levels = 2 + (i as usize % 2);
        let model_seed = seed.wrapping_add(i);
        suite.push((
            format!("random-{model_seed}-M{levels}"),
            random_model(model_seed, levels),
        ));
    }
    suite
}

/// Runs the exact oracle suite for horizons up to `max_n`.
pub fn verify_suite(
    max_n: usize,
    random_models: usize,
    seed: u64,
    budget: &EnumerationBudget,
) -> Result<Vec<CheckEntry>, CliError> {
    budget.check_horizon("oracle suite", max_n)?;
    let suite = model_suite(random_models, seed);
    let mut entries = Vec::new();

    for n in 1..=max_n {
        entries.extend(lemma_entries(
            "rank_identities",
            &format!("n={n}"),
            &verify_lemma1(n, budget)?,
        ));
    }

    let jobs: Vec<(usize, usize, usize)> = (0..suite.len())
        .flat_map(|i| (1..=max_n).flat_map(move |n| (0..=n.min(3)).map(move |k| (i, n, k))))
        .collect();
    let per_instance = jobs
        .par_iter()
        .map(|&(i, n, k)| -> Result<Vec<CheckEntry>, CliError> {
            let (name, model) = &suite[i];
            let spec = ProblemSpec::new(n, k, model.clone())?;
            let instance = format!("{name}, n={n}, K={k}");
            let (tables, thresholds) = solve(&spec);
            let optimum = tables.success_probability();
            let mut out = vec![value_check(
                "strategy_enumeration",
                instance.clone(),
                optimum,
                &exact_success_probability(&spec, &thresholds, budget)?,
            )];
            if n <= 4 && k <= 2 {
                out.push(value_check(
                    "exhaustive_optimum",
                    instance.clone(),
                    optimum,
                    &exhaustive_optimal(&spec, budget)?,
                ));
            }
            if model.is_uninformative() {
                let (_, classical) = classical_threshold::<BigRational>(n)?;
                out.push(value_check(
                    "uninformative_is_classical",
                    instance,
                    &classical,
                    optimum,
                ));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    entries.extend(per_instance.into_iter().flatten());

    for (name, model) in &suite {
        for n in 2..=max_n.min(5) {
            let report = verify_lemma2(n, model, budget)?;
            entries.extend(lemma_entries(
                "response_identities",
                &format!("{name}, n={n}"),
                &report,
            ));
        }
    }
    Ok(entries)
}

pub fn main_exit_code() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("noisy-secretary").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&[]).0, EXIT_INVALID);
        assert_eq!(run_args(&["bogus"]).0, EXIT_INVALID);
        assert_eq!(run_args(&["table2", "--mode", "decimal"]).0, EXIT_INVALID);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn sweep_includes_baseline() {
        let rows = sweep(10, 2, 3, &["0.9".into(), "0.6".into()], NumericMode::Float).unwrap();
        let keys: Vec<(String, usize)> = rows.iter().map(|r| (r.p.clone(), r.budget)).collect();
        assert_eq!(
            keys,
            vec![
                ("0.6".into(), 0),
                ("0.6".into(), 2),
                ("0.6".into(), 3),
                ("0.9".into(), 0),
                ("0.9".into(), 2),
                ("0.9".into(), 3),
            ]
        );
    }

    #[test]
    fn sweep_validation() {
        assert!(sweep(10, 3, 2, &["0.5".into()], NumericMode::Float).is_err());
        assert!(sweep(10, 0, 11, &["0.5".into()], NumericMode::Float).is_err());
        assert!(sweep(10, 0, 2, &["1.5".into()], NumericMode::Float).is_err());
        assert!(sweep(10, 0, 2, &["x".into()], NumericMode::Float).is_err());
    }

    #[test]
    fn verify_budget_exit_code() {
        let (code, _, err) = run_args(&["verify", "--max-n", "12"]);
        assert_eq!(code, EXIT_BUDGET, "{err}");
    }

    #[test]
    fn small_verify_passes() {
        let entries = verify_suite(3, 1, 7, &EnumerationBudget::default()).unwrap();
        assert!(!entries.is_empty());
        assert!(entries.iter().all(|e| e.pass), "{entries:?}");
        assert!(entries
            .iter()
            .any(|e| e.check == "uninformative_is_classical"));
    }
}
