//! The `fixpoint-race` command-line interface.
//!
//! Five subcommands wrap the library: `race` (run schemes side by side and
//! compare decay rates), `verify` (sample an operator's contraction
//! certificate on a grid), `bounds` (track the fastest scheme against its
//! a-priori error bound), `depend` (perturb an operator and measure the
//! fixed-point drift), and `audit` (check a schedule against the iteration
//! hypotheses).
//!
//! Exit codes: `0` success, `1` a check failed (verification, bound, or
//! drift), `2` configuration or usage error, `3` a point left the operator
//! domain, `4` an iteration failed to converge where convergence was
//! demanded. Outputs are byte-identical across runs: floats render with 17
//! significant digits, JSON keys are sorted, line endings are LF. Stdout
//! carries a one-line summary; diagnostics go to stderr, filtered by the
//! `FIXPOINT_LOG` environment variable (`quiet`, `info`, `debug`).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    data_dependence_experiment, error_bound_prefix, error_sequence, rate_compare, AnalysisError,
};
use crate::norm::NormKind;
use crate::operators::{
    builtin_catalog, operator_from_json, operator_from_value, Operator, OperatorError,
};
use crate::schedules::{audit_schedule, schedule_from_value, Schedule, ScheduleError};
use crate::schemes::{iterate, SchemeError, SchemeKind, StopCriteria, StopReason};

/// Tail window used by the pairwise rate comparison in `race`.
const RATE_WINDOW: usize = 32;

/// Errors that terminate a command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, arguments, or unreadable/invalid input files.
    #[error("{0}")]
    Config(String),
    /// A start point or iterate fell outside the operator's domain.
    #[error("{0}")]
    Domain(String),
    /// Convergence was demanded but the iteration cap was reached.
    #[error("{0}")]
    NotConverged(String),
    /// Writing an output file failed.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Domain(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }
}

fn operator_error(e: OperatorError) -> CliError {
    match e {
        OperatorError::Domain { .. } | OperatorError::DimensionMismatch { .. } => {
            CliError::Domain(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

fn schedule_error(e: ScheduleError) -> CliError {
    CliError::Config(e.to_string())
}

fn scheme_error(e: SchemeError) -> CliError {
    match e {
        SchemeError::Operator(op) => operator_error(op),
        SchemeError::Schedule(s) => schedule_error(s),
        other => CliError::Config(other.to_string()),
    }
}

fn analysis_error(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::NotConverged { max_iters } => CliError::NotConverged(format!(
            "perturbed run failed to converge within {max_iters} iterations"
        )),
        AnalysisError::Scheme(s) => scheme_error(s),
        AnalysisError::Operator(o) => operator_error(o),
        AnalysisError::Schedule(s) => schedule_error(s),
        other => CliError::Config(other.to_string()),
    }
}

fn io_error(e: io::Error) -> CliError {
    CliError::Io(e.to_string())
}

// ---------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------

#[derive(PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
enum LogLevel {
    Quiet,
    Info,
    Debug,
}

fn log_level() -> LogLevel {
    match std::env::var("FIXPOINT_LOG").ok().as_deref() {
        Some("quiet") => LogLevel::Quiet,
        Some("debug") => LogLevel::Debug,
        _ => LogLevel::Info,
    }
}

/// Prints a warning to stderr unless `FIXPOINT_LOG=quiet`.
pub fn warn(msg: &str) {
    if log_level() >= LogLevel::Info {
        eprintln!("warning: {msg}");
    }
}

/// Prints a diagnostic to stderr only under `FIXPOINT_LOG=debug`.
pub fn debug(msg: &str) {
    if log_level() >= LogLevel::Debug {
        eprintln!("debug: {msg}");
    }
}

// ---------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------

/// Stop rules as they appear in a configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    #[serde(default = "default_max_iters")]
    pub max_iters: u64,
    #[serde(default)]
    pub step_tol: f64,
    #[serde(default)]
    pub error_tol: Option<f64>,
}

fn default_max_iters() -> u64 {
    100_000
}

impl Default for StopSpec {
    fn default() -> Self {
        StopSpec {
            max_iters: default_max_iters(),
            step_tol: 0.0,
            error_tol: None,
        }
    }
}

impl StopSpec {
    fn to_criteria(&self) -> StopCriteria {
        StopCriteria {
            max_iters: self.max_iters,
            step_tol: self.step_tol,
            error_tol: self.error_tol,
        }
    }
}

/// Output destinations. `race` treats `csv_path` as a directory and drops
/// one `<scheme>.csv` per scheme into it; `bounds` treats it as a single
/// file. `json_path` receives the verdicts (`race`) or the report
/// (`depend`).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    #[serde(default)]
    pub json_path: Option<PathBuf>,
}

/// A complete experiment description, usually loaded from `--config`.
///
/// `operator` is either an inline operator object or `{"file": "op.json"}`
/// with a path resolved relative to the configuration file. `schedule` is
/// always inline. `schemes` defaults to all nine.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operator: serde_json::Value,
    pub schedule: serde_json::Value,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SchemeKind>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(default)]
    pub norm: NormKind,
    /// Reserved for seeded sampling extensions; accepted and recorded.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Perturbation size for `depend`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_schemes() -> Vec<SchemeKind> {
    SchemeKind::all().to_vec()
}

struct LoadedConfig {
    config: ExperimentConfig,
    /// Directory of the configuration file, for relative `file` references.
    dir: PathBuf,
}

impl LoadedConfig {
    fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, dir })
    }

    fn operator(&self) -> Result<Operator, CliError> {
        if let Some(obj) = self.config.operator.as_object() {
            if obj.len() == 1 && obj.contains_key("file") {
                let rel = obj["file"].as_str().ok_or_else(|| {
                    CliError::Config("operator.file must be a string".into())
                })?;
                let path = self.dir.join(rel);
                let text = fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                return operator_from_json(&text).map_err(operator_error);
            }
        }
        operator_from_value(&self.config.operator).map_err(operator_error)
    }

    fn schedule(&self) -> Result<Schedule, CliError> {
        schedule_from_value(&self.config.schedule).map_err(schedule_error)
    }

    fn x0(&self, flag: &Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
        flag.clone().or_else(|| self.config.x0.clone()).ok_or_else(|| {
            CliError::Config("a start point is required (config `x0` or --x0)".into())
        })
    }
}

// ---------------------------------------------------------------------
// Deterministic serialization
// ---------------------------------------------------------------------

/// JSON formatter that renders every float with 17 significant digits so
/// values round-trip exactly and files are byte-identical across runs.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

fn json_to_bytes(value: &serde_json::Value) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Io(e.to_string()))?;
    buf.push(b'\n');
    Ok(buf)
}

fn write_json_file(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    fs::write(path, json_to_bytes(value)?).map_err(io_error)
}

fn parse_norm(s: &str) -> Result<NormKind, CliError> {
    match s {
        "euclidean" => Ok(NormKind::Euclidean),
        "max" => Ok(NormKind::Max),
        other => Err(CliError::Config(format!(
            "unknown norm {other:?}; expected euclidean or max"
        ))),
    }
}

// ---------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------

/// Iteration-scheme racing and verification toolkit.
#[derive(Debug, Parser)]
#[command(name = "fixpoint-race", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run schemes side by side and compare their error decay rates.
    Race(RaceArgs),
    /// Sample an operator's contraction certificate on a grid.
    Verify(VerifyArgs),
    /// Track the fastest scheme against its a-priori error bound.
    Bounds(BoundsArgs),
    /// Perturb an operator and measure the fixed-point drift.
    Depend(DependArgs),
    /// Check a schedule against the iteration hypotheses.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct RaceArgs {
    /// Experiment configuration file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Restrict the race to a single scheme.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Start point, comma-separated components.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    /// Override the iteration cap.
    #[arg(long)]
    pub max_iters: Option<u64>,
    /// Override the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for per-scheme CSV files (overrides output.csv_path).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Operator description file (JSON).
    #[arg(long)]
    pub operator: Option<PathBuf>,
    /// Catalog operator: halving, affine1d, or affine2d.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Grid resolution per dimension.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    /// Norm: euclidean or max.
    #[arg(long, default_value = "euclidean")]
    pub norm: String,
    /// Write the full report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Experiment configuration file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Start point, comma-separated components.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    /// Number of steps to track (defaults to the configured cap).
    #[arg(long)]
    pub n: Option<u64>,
    /// CSV output file (overrides output.csv_path).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DependArgs {
    /// Experiment configuration file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Perturbation size (overrides the configured epsilon).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Start point, comma-separated components.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    /// Override the iteration cap for the perturbed run.
    #[arg(long)]
    pub max_iters: Option<u64>,
    /// JSON report file (overrides output.json_path).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Experiment configuration file whose schedule is audited.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in schedule kind: example1, constant, harmonic, or zero.
    #[arg(long)]
    pub kind: Option<String>,
    /// Constant weight, for --kind constant.
    #[arg(long)]
    pub c: Option<f64>,
    /// Identifier recorded in the report (defaults to the kind).
    #[arg(long)]
    pub id: Option<String>,
    /// Horizon: indices 0..=n are audited.
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    /// Contraction factor the pointwise cap is computed from.
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Divergence threshold the partial sum must reach.
    #[arg(long, default_value_t = 50.0)]
    pub threshold: f64,
    /// Write the full audit as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a finished command hands back to `main`.
#[derive(Debug)]
pub struct CmdOutcome {
    /// One line for stdout.
    pub summary: String,
    /// Process exit code (`0` or `1`; hard errors use [`CliError`]).
    pub code: i32,
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<CmdOutcome, CliError> {
    match cli.command {
        Command::Race(args) => cmd_race(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Depend(args) => cmd_depend(args),
        Command::Audit(args) => cmd_audit(args),
    }
}

// ---------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------

fn cmd_race(args: RaceArgs) -> Result<CmdOutcome, CliError> {
    let loaded = LoadedConfig::from_path(&args.config)?;
    let op = loaded.operator()?;
    let schedule = loaded.schedule()?;
    let x0 = loaded.x0(&args.x0)?;
    let norm = loaded.config.norm;

    let schemes: Vec<SchemeKind> = match &args.scheme {
        Some(name) => vec![SchemeKind::from_str(name).map_err(|e| CliError::Config(e.to_string()))?],
        None => loaded.config.schemes.clone(),
    };
    if schemes.is_empty() {
        return Err(CliError::Config("schemes must not be empty".into()));
    }
    let mut stop = loaded.config.stop.to_criteria();
    if let Some(m) = args.max_iters {
        stop.max_iters = m;
    }

    let mut trajectories = Vec::with_capacity(schemes.len());
    for kind in &schemes {
        let traj = iterate(*kind, &op, &schedule, &x0, &stop).map_err(scheme_error)?;
        debug(&format!(
            "{kind}: {} steps, stopped by {}",
            traj.steps(),
            traj.stop_reason.label()
        ));
        if stop.error_tol.is_some() && traj.stop_reason != StopReason::ErrorTol {
            return Err(CliError::NotConverged(format!(
                "{kind} did not reach the error tolerance within {} iterations",
                stop.max_iters
            )));
        }
        trajectories.push(traj);
    }

    let csv_dir = args.out.clone().or_else(|| loaded.config.output.csv_path.clone());
    if let Some(dir) = &csv_dir {
        fs::create_dir_all(dir).map_err(io_error)?;
        for traj in &trajectories {
            let mut buf = Vec::new();
            traj.write_csv(&mut buf, op.fixed_point(), norm)
                .map_err(io_error)?;
            fs::write(dir.join(format!("{}.csv", traj.scheme.id())), buf).map_err(io_error)?;
        }
    }

    // Pairwise verdicts only make sense for a real race with a reference
    // point to measure errors against.
    let json_path = loaded.config.output.json_path.clone().or_else(|| {
        (schemes.len() > 1)
            .then(|| csv_dir.as_ref().map(|d| d.join("verdicts.json")))
            .flatten()
    });
    let mut verdicts_written = String::from("-");
    if schemes.len() > 1 {
        match (op.fixed_point(), &json_path) {
            (None, _) => warn("rate comparison requires a known fixed point; skipping verdicts"),
            (Some(_), None) => {}
            (Some(u), Some(path)) => {
                let errors: Vec<Vec<f64>> = trajectories
                    .iter()
                    .map(|t| error_sequence(t, u, norm).values)
                    .collect();
                let mut verdicts = serde_json::Map::new();
                for i in 0..schemes.len() {
                    for j in i + 1..schemes.len() {
                        let key = format!("{}_vs_{}", schemes[i].id(), schemes[j].id());
                        let len = errors[i].len().min(errors[j].len());
                        match rate_compare(&errors[i][..len], &errors[j][..len], RATE_WINDOW) {
                            Ok(verdict) => {
                                verdicts.insert(key, verdict.to_json());
                            }
                            Err(e) => {
                                warn(&format!("rate comparison {key}: {e}"));
                                verdicts
                                    .insert(key, serde_json::json!({ "error": e.to_string() }));
                            }
                        }
                    }
                }
                write_json_file(path, &serde_json::Value::Object(verdicts))?;
                verdicts_written = path.display().to_string();
            }
        }
    }

    Ok(CmdOutcome {
        summary: format!(
            "race: {} scheme(s) on {} | csv={} verdicts={}",
            schemes.len(),
            op.id(),
            csv_dir
                .as_ref()
                .map(|d| d.display().to_string())
                .unwrap_or_else(|| "-".into()),
            verdicts_written
        ),
        code: 0,
    })
}

fn cmd_verify(args: VerifyArgs) -> Result<CmdOutcome, CliError> {
    let op = match (&args.operator, &args.builtin) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            operator_from_json(&text).map_err(operator_error)?
        }
        (None, Some(name)) => builtin_catalog()
            .into_iter()
            .find(|o| o.id() == name.as_str())
            .ok_or_else(|| {
                CliError::Config(format!(
                    "unknown builtin {name:?}; available: halving, affine1d, affine2d"
                ))
            })?,
        _ => {
            return Err(CliError::Config(
                "provide exactly one of --operator or --builtin".into(),
            ))
        }
    };
    let norm = parse_norm(&args.norm)?;
    let report = op
        .verify_weak_contraction(args.grid, norm)
        .map_err(operator_error)?;
    if let Some(path) = &args.out {
        write_json_file(path, &report.to_json())?;
    }
    Ok(CmdOutcome {
        summary: format!(
            "verify: {} grid={} max_violation={:.3e} -> {}",
            op.id(),
            args.grid,
            report.max_violation,
            if report.pass { "PASS" } else { "FAIL" }
        ),
        code: if report.pass { 0 } else { 1 },
    })
}

fn cmd_bounds(args: BoundsArgs) -> Result<CmdOutcome, CliError> {
    let loaded = LoadedConfig::from_path(&args.config)?;
    let op = loaded.operator()?;
    let schedule = loaded.schedule()?;
    let x0 = loaded.x0(&args.x0)?;
    let norm = loaded.config.norm;
    let u_star = op
        .fixed_point()
        .ok_or_else(|| {
            CliError::Config("bound tracking requires an operator with a known fixed point".into())
        })?
        .to_vec();

    let mut stop = loaded.config.stop.to_criteria();
    if let Some(n) = args.n {
        stop.max_iters = n;
    }
    let traj = iterate(SchemeKind::PicardS, &op, &schedule, &x0, &stop).map_err(scheme_error)?;
    let errs = error_sequence(&traj, &u_star, norm).values;
    let steps = errs.len() - 1;

    // Row n = 0 is the start point, bounded trivially by itself; the bound
    // for iterate n ≥ 1 is the prefix entry that absorbed factors 0..n−1.
    let bounds = if steps >= 1 {
        error_bound_prefix(op.delta(), &schedule, errs[0], steps as u64 - 1)
            .map_err(analysis_error)?
    } else {
        Vec::new()
    };
    let mut all_ok = true;
    let mut csv: Vec<u8> = Vec::new();
    use io::Write;
    write!(csv, "n,err,bound,ok\n").map_err(io_error)?;
    for (n, err) in errs.iter().enumerate() {
        let bound = if n == 0 { errs[0] } else { bounds[n - 1].value };
        let ok = *err <= bound + 1e-12;
        all_ok &= ok;
        write!(csv, "{n},{err:.16e},{bound:.16e},{ok}\n").map_err(io_error)?;
    }

    let csv_path = args.out.clone().or_else(|| loaded.config.output.csv_path.clone());
    if let Some(path) = &csv_path {
        fs::write(path, &csv).map_err(io_error)?;
    }
    Ok(CmdOutcome {
        summary: format!(
            "bounds: {} scheme=picard_s steps={} all_ok={} csv={}",
            op.id(),
            steps,
            all_ok,
            csv_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into())
        ),
        code: if all_ok { 0 } else { 1 },
    })
}

fn cmd_depend(args: DependArgs) -> Result<CmdOutcome, CliError> {
    let loaded = LoadedConfig::from_path(&args.config)?;
    let op = loaded.operator()?;
    let schedule = loaded.schedule()?;
    let x0 = loaded.x0(&args.x0)?;
    let norm = loaded.config.norm;
    let epsilon = args.eps.or(loaded.config.epsilon).ok_or_else(|| {
        CliError::Config("a perturbation size is required (config `epsilon` or --eps)".into())
    })?;
    let mut stop = loaded.config.stop.to_criteria();
    if let Some(m) = args.max_iters {
        stop.max_iters = m;
    }

    let report = data_dependence_experiment(&op, epsilon, &schedule, &x0, &stop, norm)
        .map_err(analysis_error)?;
    if !report.hypothesis_ok {
        warn("schedule violates the product floor a1*a2 >= 1/2; the drift bound is not guaranteed");
    }
    debug(&format!(
        "depend: settled at {:?} against u* {:?}",
        report.u_tilde, report.u_star
    ));

    let json_path = args.out.clone().or_else(|| loaded.config.output.json_path.clone());
    if let Some(path) = &json_path {
        write_json_file(path, &report.to_json())?;
    }
    Ok(CmdOutcome {
        summary: format!(
            "depend: eps={:e} distance={:.6e} bound={:.6e} pass={} hypothesis_ok={}",
            report.epsilon, report.distance, report.bound, report.pass, report.hypothesis_ok
        ),
        code: if report.pass { 0 } else { 1 },
    })
}

fn cmd_audit(args: AuditArgs) -> Result<CmdOutcome, CliError> {
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(CliError::Config(format!(
            "delta must lie in (0,1), got {}",
            args.delta
        )));
    }
    let schedule = match (&args.config, &args.kind) {
        (Some(path), None) => LoadedConfig::from_path(path)?.schedule()?,
        (None, Some(kind)) => {
            let mut params = serde_json::Map::new();
            if let Some(c) = args.c {
                params.insert("c".into(), serde_json::json!(c));
            }
            let id = args.id.clone().unwrap_or_else(|| kind.clone());
            schedule_from_value(&serde_json::json!({
                "id": id,
                "kind": kind,
                "params": params,
            }))
            .map_err(schedule_error)?
        }
        _ => {
            return Err(CliError::Config(
                "provide exactly one of --config or --kind".into(),
            ))
        }
    };

    let audit =
        audit_schedule(&schedule, args.delta, args.n, args.threshold).map_err(schedule_error)?;
    if let Some(path) = &args.out {
        write_json_file(path, &audit.to_json())?;
    }
    Ok(CmdOutcome {
        summary: format!(
            "audit: {} n={} partial_sum={:.6e} divergence={} cap_decay={} floor={} first_violation={}",
            audit.schedule_id,
            audit.n_max,
            audit.partial_sum,
            audit.divergence_evidence,
            audit.cap_and_decay_pass,
            audit.product_floor_pass,
            audit
                .first_violation_index
                .map(|i| i.to_string())
                .unwrap_or_else(|| "-".into())
        ),
        code: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_are_filled_in() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{
                "operator": {"id": "h", "kind": "halving", "params": {}, "delta": 0.5, "L": 0.0},
                "schedule": {"id": "z", "kind": "zero"}
            }"#,
        )
        .unwrap();
        assert_eq!(config.schemes.len(), 9);
        assert_eq!(config.stop.max_iters, 100_000);
        assert_eq!(config.stop.step_tol, 0.0);
        assert_eq!(config.stop.error_tol, None);
        assert_eq!(config.norm, NormKind::Euclidean);
        assert!(config.x0.is_none());
        assert!(config.epsilon.is_none());
        assert!(config.output.csv_path.is_none());
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let result: Result<ExperimentConfig, _> = serde_json::from_str(
            r#"{
                "operator": {"id": "h", "kind": "halving", "params": {}, "delta": 0.5, "L": 0.0},
                "schedule": {"id": "z", "kind": "zero"},
                "shcemes": ["picard"]
            }"#,
        );
        assert!(result.is_err());
    }

    #[test]
    fn config_parses_scheme_names_and_norm() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{
                "operator": {"id": "h", "kind": "halving", "params": {}, "delta": 0.5, "L": 0.0},
                "schedule": {"id": "z", "kind": "zero"},
                "schemes": ["picard_s", "cr"],
                "norm": "max",
                "stop": {"max_iters": 500, "error_tol": 1e-9}
            }"#,
        )
        .unwrap();
        assert_eq!(config.schemes, vec![SchemeKind::PicardS, SchemeKind::Cr]);
        assert_eq!(config.norm, NormKind::Max);
        let stop = config.stop.to_criteria();
        assert_eq!(stop.max_iters, 500);
        assert_eq!(stop.error_tol, Some(1e-9));
    }

    #[test]
    fn json_floats_render_in_scientific_notation() {
        let value = serde_json::json!({"b": 0.5, "a": 1.0, "n": 42});
        let bytes = json_to_bytes(&value).unwrap();
        // Keys sorted, floats at 17 significant digits, integers plain,
        // trailing newline.
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "{\"a\":1.0000000000000000e0,\"b\":5.0000000000000000e-1,\"n\":42}\n"
        );
    }

    #[test]
    fn exit_codes_match_the_contract() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Io("x".into()).exit_code(), 2);
        assert_eq!(CliError::Domain("x".into()).exit_code(), 3);
        assert_eq!(CliError::NotConverged("x".into()).exit_code(), 4);
    }

    #[test]
    fn error_mapping_sorts_failures_into_exit_classes() {
        let domain = OperatorError::Domain {
            component: 0,
            value: 2.0,
            lower: 0.0,
            upper: 1.0,
        };
        assert_eq!(operator_error(domain).exit_code(), 3);
        assert_eq!(
            operator_error(OperatorError::Invalid("bad".into())).exit_code(),
            2
        );
        assert_eq!(
            analysis_error(AnalysisError::NotConverged { max_iters: 7 }).exit_code(),
            4
        );
        assert_eq!(
            analysis_error(AnalysisError::InvalidEpsilon { epsilon: 0.0 }).exit_code(),
            2
        );
        assert_eq!(
            scheme_error(SchemeError::MissingFixedPoint).exit_code(),
            2
        );
    }

    #[test]
    fn norm_names_parse() {
        assert_eq!(parse_norm("euclidean").unwrap(), NormKind::Euclidean);
        assert_eq!(parse_norm("max").unwrap(), NormKind::Max);
        assert!(parse_norm("manhattan").is_err());
    }

    #[test]
    fn operator_file_reference_resolves_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("op.json"),
            r#"{"id": "h", "kind": "halving", "params": {}, "delta": 0.5, "L": 0.0}"#,
        )
        .unwrap();
        let config_path = dir.path().join("config.json");
        fs::write(
            &config_path,
            r#"{"operator": {"file": "op.json"}, "schedule": {"id": "z", "kind": "zero"}}"#,
        )
        .unwrap();
        let loaded = LoadedConfig::from_path(&config_path).unwrap();
        assert_eq!(loaded.operator().unwrap().id(), "h");
        assert_eq!(loaded.schedule().unwrap().id(), "z");
        // Missing referenced file is a configuration error.
        fs::remove_file(dir.path().join("op.json")).unwrap();
        assert!(matches!(
            loaded.operator(),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn audit_command_runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("audit.json");
        let outcome = cmd_audit(AuditArgs {
            config: None,
            kind: Some("example1".into()),
            c: None,
            id: None,
            n: 10_000,
            delta: 0.5,
            threshold: 50.0,
            out: Some(out.clone()),
        })
        .unwrap();
        assert_eq!(outcome.code, 0);
        assert!(outcome.summary.contains("divergence=true"));
        assert!(outcome.summary.contains("floor=false"));
        assert!(outcome.summary.contains("first_violation=0"));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(json["divergence_evidence"], true);
        assert_eq!(json["product_floor_pass"], false);
        assert_eq!(json["first_violation_index"], 0);
        assert_eq!(
            json["partial_sum"].as_f64().unwrap(),
            96.18636573265394
        );
    }

    #[test]
    fn audit_command_validates_its_arguments() {
        let bare = AuditArgs {
            config: None,
            kind: None,
            c: None,
            id: None,
            n: 100,
            delta: 0.5,
            threshold: 50.0,
            out: None,
        };
        assert!(matches!(cmd_audit(bare), Err(CliError::Config(_))));
        let bad_delta = AuditArgs {
            config: None,
            kind: Some("zero".into()),
            c: None,
            id: None,
            n: 100,
            delta: 1.0,
            threshold: 50.0,
            out: None,
        };
        assert!(matches!(cmd_audit(bad_delta), Err(CliError::Config(_))));
    }

    #[test]
    fn command_line_shape_parses() {
        let cli = Cli::try_parse_from([
            "fixpoint-race",
            "race",
            "--config",
            "experiment.json",
            "--scheme",
            "picard_s",
            "--x0",
            "0.5,0.25",
            "--max-iters",
            "500",
        ])
        .unwrap();
        match cli.command {
            Command::Race(args) => {
                assert_eq!(args.scheme.as_deref(), Some("picard_s"));
                assert_eq!(args.x0, Some(vec![0.5, 0.25]));
                assert_eq!(args.max_iters, Some(500));
            }
            _ => panic!("expected race"),
        }
        assert!(Cli::try_parse_from(["fixpoint-race", "unknown"]).is_err());
    }
}
