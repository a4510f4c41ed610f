//! Experiment configuration and the commands behind the CLI.
//!
//! Every command renders its full output to a `String` before anything is
//! written, so identical configurations give byte-identical output whatever
//! the worker count.

pub mod identities;

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::format::{g17, to_json};
use crate::graphgen::{run_trials_with, ModelParams, TrialSummary};
use crate::moments::MomentReport;
use crate::oracle;
use crate::scaling::{
    build_schedule, AlphaSchedule, DeviationSpec, DimensionRule, ScalingSchedule,
};

use identities::{run_identity_suite, IdentityConfig, Kernel};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "KEYGRAPH_LAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Eval,
    Simulate,
    Sweep,
    Oracle,
    Identities,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum GammaKind {
    Constant,
    CLog,
    LogLogPlus,
    LogLogMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "kebab-case")]
pub enum Fault {
    QOffByOne,
}

/// One experiment. Loaded from a JSON file and/or built from CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Node counts: exactly one for `eval`, `simulate` and `oracle`, the
    /// ascending list of rows for `sweep`.
    pub n: Vec<u64>,
    #[serde(rename = "K")]
    pub k: Option<u64>,
    #[serde(rename = "P")]
    pub p: Option<u64>,
    pub alpha: Option<f64>,
    /// `α_n` for sweeps; overrides `alpha`.
    pub alpha_schedule: Option<AlphaSchedule>,
    pub c: Option<f64>,
    pub gamma_kind: Option<GammaKind>,
    pub gamma: Option<f64>,
    /// Full deviation function for sweeps; overrides `c`/`gamma_kind`/`gamma`.
    pub deviation: Option<DeviationSpec>,
    pub trials: Option<u64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    /// Optional per-trial dump for `simulate`.
    pub trials_csv: Option<PathBuf>,
    /// Randomized grid size for `identities`; `0` runs no checks.
    pub grid_size: Option<usize>,
    #[serde(skip)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Infeasible(Error),
    #[error("{0}")]
    InvariantFailure(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 0 success, 1 invariant failure, 2 invalid config, 3 infeasible schedule.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::InvariantFailure(_) => 1,
            HarnessError::InvalidConfig(_) | HarnessError::Io { .. } => 2,
            HarnessError::Infeasible(_) => 3,
        }
    }
}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible { .. } => HarnessError::Infeasible(e),
            Error::Mismatch { .. } => HarnessError::InvariantFailure(e.to_string()),
            other => HarnessError::InvalidConfig(other.to_string()),
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommandOutput {
    /// Main output, newline-terminated.
    pub text: String,
    /// Secondary files to write, e.g. the per-trial dump.
    pub files: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
}

/// Worker count from [`THREADS_ENV`]; `0` means rayon's default.
pub fn workers_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

impl ExperimentConfig {
    fn single_n(&self) -> Result<u64, HarnessError> {
        match self.n.as_slice() {
            [n] => Ok(*n),
            [] => Err(HarnessError::InvalidConfig("n is required".into())),
            _ => Err(HarnessError::InvalidConfig(format!(
                "mode {:?} takes a single n, got {}",
                self.mode,
                self.n.len()
            ))),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams, HarnessError> {
        let n = self.single_n()?;
        let k = self
            .k
            .ok_or_else(|| HarnessError::InvalidConfig("K is required".into()))?;
        let p = self
            .p
            .ok_or_else(|| HarnessError::InvalidConfig("P is required".into()))?;
        let alpha = self
            .alpha
            .ok_or_else(|| HarnessError::InvalidConfig("alpha is required".into()))?;
        Ok(ModelParams::from_raw(n, k, p, alpha)?)
    }

    pub fn deviation_spec(&self) -> Result<DeviationSpec, HarnessError> {
        if let Some(d) = &self.deviation {
            return Ok(d.clone());
        }
        let kind = match (self.gamma_kind, self.c) {
            (Some(kind), _) => kind,
            (None, Some(_)) => GammaKind::CLog,
            (None, None) => GammaKind::Constant,
        };
        Ok(match kind {
            GammaKind::Constant => DeviationSpec::Constant {
                gamma: self.gamma.unwrap_or(0.0),
            },
            GammaKind::CLog => {
                let c = self
                    .c
                    .ok_or_else(|| HarnessError::InvalidConfig("c_log deviation needs c".into()))?;
                if c.is_nan() || c <= 0.0 {
                    return Err(HarnessError::InvalidConfig(format!(
                        "c = {c} must be positive"
                    )));
                }
                DeviationSpec::CLog { c }
            }
            GammaKind::LogLogPlus => DeviationSpec::LogLog { sign: 1.0 },
            GammaKind::LogLogMinus => DeviationSpec::LogLog { sign: -1.0 },
        })
    }

    pub fn schedule(&self) -> Result<ScalingSchedule, HarnessError> {
        if self.n.is_empty() {
            return Err(HarnessError::InvalidConfig(
                "sweep needs at least one n".into(),
            ));
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::InvalidConfig(
                "sweep n values must be strictly ascending".into(),
            ));
        }
        let rule = match (self.k, self.p) {
            (Some(k), None) => DimensionRule::FixK(k),
            (None, Some(p)) => DimensionRule::FixP(p),
            _ => {
                return Err(HarnessError::InvalidConfig(
                    "sweep needs exactly one of K (fixed ring size) or P (fixed pool)".into(),
                ))
            }
        };
        let alpha = match (&self.alpha_schedule, self.alpha) {
            (Some(s), _) => s.clone(),
            (None, Some(a)) => AlphaSchedule::Constant { alpha: a },
            (None, None) => return Err(HarnessError::InvalidConfig("sweep needs alpha".into())),
        };
        let deviation = self.deviation_spec()?;
        Ok(build_schedule(
            &self.n,
            |n| alpha.alpha(n),
            &deviation,
            rule,
        )?)
    }
}

/// Runs the configured command on `workers` threads (`0` = default).
pub fn execute(config: &ExperimentConfig, workers: usize) -> Result<CommandOutput, HarnessError> {
    match config.mode {
        Mode::Eval => cmd_eval(config),
        Mode::Simulate => cmd_simulate(config, workers),
        Mode::Sweep => cmd_sweep(config, workers),
        Mode::Oracle => cmd_oracle(config),
        Mode::Identities => cmd_identities(config),
    }
}

fn ok(text: String) -> CommandOutput {
    CommandOutput {
        text,
        ..CommandOutput::default()
    }
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn csv_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => u.to_string(),
            (_, Some(i), _) => i.to_string(),
            (_, _, Some(f)) => g17(f),
            _ => n.to_string(),
        },
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Renders flat serializable records as CSV with a header row; `None`
/// fields become empty cells.
pub fn records_to_csv<T: Serialize>(records: &[T]) -> String {
    let values: Vec<serde_json::Value> = records
        .iter()
        .map(|r| serde_json::from_str(&to_json(r)).expect("own JSON parses"))
        .collect();
    let mut out = String::new();
    let header: Vec<String> = match values.first() {
        Some(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    };
    out.push_str(&header.join(","));
    out.push('\n');
    for v in &values {
        let cells: Vec<String> = header.iter().map(|h| csv_cell(&v[h])).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn cmd_eval(config: &ExperimentConfig) -> Result<CommandOutput, HarnessError> {
    let report = MomentReport::new(&config.model_params()?);
    Ok(ok(match config.format {
        OutputFormat::Json => with_newline(to_json(&report)),
        OutputFormat::Csv => records_to_csv(&[report]),
    }))
}

/// Simulation summary with the analytic report alongside.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(flatten)]
    pub summary: TrialSummary,
    pub analytic: MomentReport,
}

pub const TRIAL_CSV_HEADER: &str = "trial,isolated_count";

pub fn trials_to_csv(counts: &[u64]) -> String {
    let mut out = String::with_capacity(16 * counts.len() + 32);
    out.push_str(TRIAL_CSV_HEADER);
    out.push('\n');
    for (t, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{t},{c}");
    }
    out
}

pub fn cmd_simulate(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<CommandOutput, HarnessError> {
    let params = config.model_params()?;
    let trials = config.trials.unwrap_or(1);
    if trials == 0 {
        return Err(HarnessError::InvalidConfig(
            "simulate needs trials >= 1".into(),
        ));
    }
    let summary = run_trials_with(&params, trials, config.seed, workers);
    let mut files = Vec::new();
    if let Some(path) = &config.trials_csv {
        files.push((path.clone(), trials_to_csv(&summary.counts)));
    }
    let text = match config.format {
        OutputFormat::Json => with_newline(to_json(&SimulationReport {
            params,
            analytic: MomentReport::new(&params),
            summary,
        })),
        OutputFormat::Csv => trials_to_csv(&summary.counts),
    };
    Ok(CommandOutput {
        text,
        files,
        ..CommandOutput::default()
    })
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "P")]
    pub p: u64,
    pub alpha: f64,
    pub gamma_achieved: f64,
    pub c_equiv: f64,
    pub e_I_analytic: f64,
    pub e_I2_analytic: f64,
    pub lower_bound_P0: f64,
    pub upper_bound_P0: f64,
    pub mc_freq_I0: Option<f64>,
    pub mc_mean_I: Option<f64>,
    pub mc_stderr_I0: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

pub const SWEEP_CSV_HEADER: &str = "n,K,P,alpha,gamma_achieved,c_equiv,e_I_analytic,e_I2_analytic,\
lower_bound_P0,upper_bound_P0,mc_freq_I0,mc_mean_I,mc_stderr_I0,trials,seed";

/// Analytic and (when `trials > 0`) Monte Carlo rows for every schedule entry.
pub fn sweep_rows(
    schedule: &ScalingSchedule,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Vec<SweepRow> {
    schedule
        .entries
        .iter()
        .map(|e| {
            let params = e.params();
            let report = MomentReport::new(&params);
            let mc = (trials > 0).then(|| run_trials_with(&params, trials, seed, workers));
            SweepRow {
                n: e.n,
                k: e.theta.k(),
                p: e.theta.p(),
                alpha: e.alpha.value(),
                gamma_achieved: e.gamma_achieved,
                c_equiv: e.c_equiv,
                e_I_analytic: report.first_moment,
                e_I2_analytic: report.second_moment,
                lower_bound_P0: report.lower_bound_P0,
                upper_bound_P0: report.upper_bound_P0,
                mc_freq_I0: mc.as_ref().map(|s| s.mc_freq_I0),
                mc_mean_I: mc.as_ref().map(|s| s.mc_mean_I),
                mc_stderr_I0: mc.as_ref().map(|s| s.mc_stderr_I0),
                trials,
                seed,
            }
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let opt = |x: Option<f64>| x.map(g17).unwrap_or_default();
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.k,
            r.p,
            g17(r.alpha),
            g17(r.gamma_achieved),
            g17(r.c_equiv),
            g17(r.e_I_analytic),
            g17(r.e_I2_analytic),
            g17(r.lower_bound_P0),
            g17(r.upper_bound_P0),
            opt(r.mc_freq_I0),
            opt(r.mc_mean_I),
            opt(r.mc_stderr_I0),
            r.trials,
            r.seed
        );
    }
    out
}

pub fn cmd_sweep(config: &ExperimentConfig, workers: usize) -> Result<CommandOutput, HarnessError> {
    let schedule = config.schedule()?;
    let rows = sweep_rows(&schedule, config.trials.unwrap_or(0), config.seed, workers);
    Ok(ok(match config.format {
        OutputFormat::Csv => sweep_to_csv(&rows),
        OutputFormat::Json => with_newline(to_json(&rows)),
    }))
}

#[derive(Debug, Clone, Serialize)]
struct OracleOutput {
    exact: oracle::ExactResult,
    comparison: oracle::Comparison,
}

pub fn cmd_oracle(config: &ExperimentConfig) -> Result<CommandOutput, HarnessError> {
    let params = config.model_params()?;
    let exact = oracle::enumerate_exact(&params)?;
    let comparison = oracle::exact_vs_formula(&params)?;
    Ok(ok(with_newline(to_json(&OracleOutput {
        exact,
        comparison,
    }))))
}

pub fn cmd_identities(config: &ExperimentConfig) -> Result<CommandOutput, HarnessError> {
    let suite = IdentityConfig {
        random_tuples: config
            .grid_size
            .unwrap_or(IdentityConfig::default().random_tuples),
        seed: config.seed,
    };
    let kernel = match config.inject_fault {
        None => Kernel::default(),
        Some(Fault::QOffByOne) => Kernel::q_off_by_one(),
    };
    let report = run_identity_suite(&suite, &kernel);
    let mut warnings = Vec::new();
    if report.total_checks() == 0 {
        warnings.push("warning: 0 checks were run (empty grid)".to_string());
    }
    Ok(CommandOutput {
        text: report.render(),
        files: Vec::new(),
        warnings,
        exit_code: if report.passed() { 0 } else { 1 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_config(n: u64, k: u64, p: u64, alpha: f64) -> ExperimentConfig {
        ExperimentConfig {
            mode: Mode::Eval,
            n: vec![n],
            k: Some(k),
            p: Some(p),
            alpha: Some(alpha),
            ..Default::default()
        }
    }

    #[test]
    fn eval_closed_forms() {
        let out = execute(&eval_config(2, 1, 2, 1.0), 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(v["q"], 0.5);
        assert_eq!(v["p"], 0.5);
        assert_eq!(v["first_moment"], 1.0);
    }

    #[test]
    fn eval_no_channels() {
        let out = execute(&eval_config(6, 2, 9, 0.0), 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(v["lower_bound_P0"], 0.0);
        assert_eq!(v["upper_bound_P0"], 0.0);
    }

    #[test]
    fn eval_rejects_k_ge_p() {
        let err = execute(&eval_config(3, 4, 4, 0.5), 1).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn eval_csv_has_header() {
        let mut cfg = eval_config(5, 2, 20, 0.5);
        cfg.format = OutputFormat::Csv;
        let out = execute(&cfg, 1).unwrap();
        let mut lines = out.text.lines();
        assert!(lines
            .next()
            .unwrap()
            .starts_with("n,K,P,alpha,q,p,first_moment"));
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn sweep_header_and_trials_zero() {
        let cfg = ExperimentConfig {
            mode: Mode::Sweep,
            n: vec![100, 400],
            k: Some(4),
            alpha: Some(1.0),
            c: Some(2.0),
            trials: Some(0),
            format: OutputFormat::Csv,
            ..Default::default()
        };
        let out = execute(&cfg, 1).unwrap();
        let lines: Vec<&str> = out.text.lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",,,,0,0"));
        assert!(out.text.ends_with('\n'));
    }

    #[test]
    fn sweep_header_matches_row_fields() {
        let row = SweepRow {
            n: 1,
            k: 1,
            p: 2,
            alpha: 0.0,
            gamma_achieved: 0.0,
            c_equiv: 0.0,
            e_I_analytic: 0.0,
            e_I2_analytic: 0.0,
            lower_bound_P0: 0.0,
            upper_bound_P0: 0.0,
            mc_freq_I0: None,
            mc_mean_I: None,
            mc_stderr_I0: None,
            trials: 0,
            seed: 0,
        };
        assert_eq!(
            records_to_csv(&[row]).lines().next().unwrap(),
            SWEEP_CSV_HEADER
        );
    }

    #[test]
    fn sweep_infeasible_exit_3() {
        let cfg = ExperimentConfig {
            mode: Mode::Sweep,
            n: vec![100, 200],
            k: Some(2),
            alpha: Some(0.001),
            c: Some(2.0),
            ..Default::default()
        };
        let err = execute(&cfg, 1).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("n = 100"));
    }

    #[test]
    fn sweep_requires_one_rule() {
        let cfg = ExperimentConfig {
            mode: Mode::Sweep,
            n: vec![100],
            k: Some(2),
            p: Some(100),
            alpha: Some(1.0),
            ..Default::default()
        };
        assert_eq!(execute(&cfg, 1).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn simulate_per_trial_dump() {
        let mut cfg = eval_config(10, 2, 15, 0.5);
        cfg.mode = Mode::Simulate;
        cfg.trials = Some(25);
        cfg.seed = 7;
        cfg.trials_csv = Some(PathBuf::from("trials.csv"));
        let out = execute(&cfg, 2).unwrap();
        let (path, csv) = &out.files[0];
        assert_eq!(path, &PathBuf::from("trials.csv"));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRIAL_CSV_HEADER);
        assert_eq!(lines.len(), 26);
        assert!(lines[1].starts_with("0,"));
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(v["trials"], 25);
        assert!(v["analytic"]["first_moment"].is_number());
        assert!(v["wilson95_low_I0"].is_number());
    }

    #[test]
    fn simulate_rejects_zero_trials() {
        let mut cfg = eval_config(10, 2, 15, 0.5);
        cfg.mode = Mode::Simulate;
        cfg.trials = Some(0);
        assert_eq!(execute(&cfg, 1).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn oracle_mode() {
        let mut cfg = eval_config(3, 1, 2, 1.0);
        cfg.mode = Mode::Oracle;
        let out = execute(&cfg, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(v["exact"]["p_no_isolated"], 0.25);
        let mut cfg = eval_config(9, 2, 6, 0.5);
        cfg.mode = Mode::Oracle;
        assert_eq!(execute(&cfg, 1).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn identities_fault_and_empty() {
        let cfg = ExperimentConfig {
            mode: Mode::Identities,
            grid_size: Some(50),
            inject_fault: Some(Fault::QOffByOne),
            ..Default::default()
        };
        let out = execute(&cfg, 1).unwrap();
        assert_eq!(out.exit_code, 1);
        assert!(out.text.contains("FAIL q=v(θ,K)"));

        let cfg = ExperimentConfig {
            mode: Mode::Identities,
            grid_size: Some(0),
            ..Default::default()
        };
        let out = execute(&cfg, 1).unwrap();
        assert_eq!(out.exit_code, 0);
        assert!(out.warnings[0].contains("0 checks"));
    }

    #[test]
    fn config_from_json() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"mode":"sweep","n":[200,800],"K":4,"alpha":1.0,"c":0.5,"trials":10,"seed":3,"format":"csv"}"#,
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Sweep);
        assert_eq!(cfg.k, Some(4));
        assert_eq!(
            cfg.deviation_spec().unwrap(),
            DeviationSpec::CLog { c: 0.5 }
        );
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus":1}"#).is_err());
    }
}
