use std::fmt;
use std::fs;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::time::Duration;

use bellbet::bounds::{design_protocol, BoundsError, ProtocolDesign};
use bellbet::chsh::{AngleConfig, Side};
use bellbet::net::{referee_serve, station_client, ServeError, ServeOptions, StationError, StationReport};
use bellbet::quantum::{CorrelationSense, QuantumModel};
use bellbet::referee::{simulate, LogError, RefereeError, RefereeOptions, RunOutcome, RunPlan, TrialLog};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{Bound, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Refused(String),
    #[error("cannot read log {path}: {reason}")]
    CorruptLog { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Serve(ServeError),
    #[error(transparent)]
    Station(#[from] StationError),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Refused(_) => EXIT_CONFIG,
            CommandError::CorruptLog { .. } => EXIT_VALIDATION,
            CommandError::Serve(ServeError::Unsupported(_) | ServeError::Referee(_)) => EXIT_CONFIG,
            CommandError::Serve(ServeError::Handshake(_)) => EXIT_ABORT,
            CommandError::Station(StationError::Aborted(_)) => EXIT_ABORT,
            CommandError::Station(
                StationError::Rejected(_) | StationError::Version { .. } | StationError::ConfigMismatch { .. },
            ) => EXIT_CONFIG,
            CommandError::Io { .. } | CommandError::Serve(_) | CommandError::Station(_) => EXIT_OTHER,
        }
    }
}

impl From<RefereeError> for CommandError {
    fn from(e: RefereeError) -> Self {
        CommandError::Refused(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where the JSON report of a log is written.
pub fn report_path(log: &Path) -> PathBuf {
    let mut name = log.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".report.json");
    log.with_file_name(name)
}

pub struct RunArtifacts {
    pub plan: RunPlan,
    pub outcome: RunOutcome,
    pub report: Report,
    pub log_path: PathBuf,
}

impl RunArtifacts {
    pub fn exit_code(&self) -> i32 {
        if self.outcome.abort.is_some() {
            EXIT_ABORT
        } else {
            EXIT_OK
        }
    }
}

fn persist(log: &TrialLog, path: &Path) -> Result<Report, CommandError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, log.to_ndjson()).map_err(io_err(path))?;
    let report = Report::from_log(log);
    let rp = report_path(path);
    fs::write(&rp, report.to_json()).map_err(io_err(&rp))?;
    Ok(report)
}

/// Runs the configured experiment in this process and writes log and report.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunArtifacts, CommandError> {
    let plan = cfg.plan()?;
    let outcome = simulate(&plan, RefereeOptions { journal: false })?;
    let report = persist(&outcome.log, &cfg.output)?;
    Ok(RunArtifacts {
        plan,
        outcome,
        report,
        log_path: cfg.output.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignInput {
    Mean(f64),
    Angles(AngleConfig<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub qm_mean_per_trial: f64,
    pub target_error: f64,
    pub n: u64,
    pub critical_value: i64,
    pub local_error_bound: Bound,
    pub quantum_error_bound: Bound,
}

impl DesignReport {
    pub fn design(&self) -> Result<ProtocolDesign<f64>, BoundsError> {
        ProtocolDesign::evaluate(self.n, self.critical_value, self.qm_mean_per_trial)
    }
}

impl fmt::Display for DesignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "quantum mean/trial    {}", self.qm_mean_per_trial)?;
        writeln!(f, "target error          {:e}", self.target_error)?;
        writeln!(f, "trials n              {}", self.n)?;
        writeln!(f, "critical value C      {}", self.critical_value)?;
        for (name, b) in [("local-side bound", &self.local_error_bound), ("quantum-side bound", &self.quantum_error_bound)] {
            writeln!(f, "{name:<22}{:.6e}  (ln {:.6}, log10 {:.6})", b.value, b.ln, b.log10)?;
        }
        Ok(())
    }
}

/// Smallest n, with the midpoint critical value, meeting `target_error` on
/// both sides.
pub fn cmd_design(input: DesignInput, target_error: f64) -> Result<DesignReport, CommandError> {
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(ConfigError::Invalid(format!("target error must lie strictly between 0 and 1, got {target_error}")).into());
    }
    let mu = match input {
        DesignInput::Mean(mu) => mu,
        DesignInput::Angles(a) => QuantumModel::new(a, CorrelationSense::EqualPolarization).mean_per_trial(),
    };
    let d = design_protocol(mu, target_error).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(DesignReport {
        qm_mean_per_trial: mu,
        target_error,
        n: d.n,
        critical_value: d.critical_value,
        local_error_bound: d.local_error_bound.into(),
        quantum_error_bound: d.quantum_error_bound.into(),
    })
}

fn read_log(path: &Path) -> Result<TrialLog, CommandError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    TrialLog::parse(&text).map_err(|e| CommandError::CorruptLog {
        path: path.to_path_buf(),
        reason: match e {
            LogError::Truncated { last_valid_trial } => {
                format!("log is truncated; last valid trial is {last_valid_trial}")
            }
            other => other.to_string(),
        },
    })
}

/// Recomputes everything from the log and replays it.
pub fn cmd_analyze(path: &Path) -> Result<Report, CommandError> {
    Ok(Report::from_log(&read_log(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub line: usize,
    pub trial: Option<u64>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.trial {
            Some(m) => write!(f, "line {} (trial {m}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub trials: u64,
    pub expected_trials: Option<u64>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_VALIDATION
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return writeln!(f, "PASS: {} trials, every outcome a bit, numbering contiguous", self.trials);
        }
        writeln!(f, "FAIL: {} violation(s)", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

fn bit_of(v: Option<&Value>) -> Result<(), String> {
    match v {
        None | Some(Value::Null) => Err("missing".into()),
        Some(Value::Number(x)) if x.as_f64() == Some(0.0) || x.as_f64() == Some(1.0) => Ok(()),
        Some(other) => Err(format!("{other} is not a bit")),
    }
}

/// Checks every line independently and reports every violation found: each
/// outcome is exactly 0 or 1, no outcome is missing, trials run 1, 2, 3, …
/// and the log holds all of them.
pub fn cmd_validate(path: &Path) -> Result<ValidationReport, CommandError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut violations = Vec::new();
    let mut flag = |line: usize, trial: Option<u64>, message: String| violations.push(Violation { line, trial, message });
    let mut expected_trials = None;
    let mut next = 1u64;
    let mut trials = 0;
    let mut footer: Option<Value> = None;
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() {
        flag(0, None, "empty log".into());
    }
    for (k, raw) in lines.iter().enumerate() {
        let line = k + 1;
        let v: Value = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(e) => {
                flag(line, None, format!("not a JSON document: {e}"));
                continue;
            }
        };
        if line == 1 {
            if v.get("type").and_then(Value::as_str) != Some("header") {
                flag(line, None, "first line is not a header".into());
            }
            expected_trials = v.get("n").and_then(Value::as_u64);
            continue;
        }
        if footer.is_some() {
            flag(line, None, "content after the footer".into());
        }
        if v.get("type").is_some() {
            footer = Some(v);
            continue;
        }
        let m = v.get("m").and_then(Value::as_u64);
        match m {
            Some(m) if m == next => {}
            Some(m) => flag(line, Some(m), format!("expected trial {next}, found trial {m}")),
            None => flag(line, None, format!("record has no trial number (expected {next})")),
        }
        let m = m.unwrap_or(next);
        next = m + 1;
        trials += 1;
        for (key, what) in [("i", "left setting"), ("j", "right setting")] {
            let ok = v.get(key).and_then(Value::as_u64).is_some_and(|s| s == 1 || s == 2);
            if !ok {
                flag(line, Some(m), format!("{what} is missing or not 1/2"));
            }
        }
        for (key, side) in [("x", Side::Left), ("y", Side::Right)] {
            if let Err(why) = bit_of(v.get(key)) {
                let side = if side == Side::Left { "left" } else { "right" };
                flag(line, Some(m), format!("{side} outcome {why}"));
            }
        }
    }
    match footer.as_ref().and_then(|f| f.get("type")).and_then(Value::as_str) {
        None if !lines.is_empty() => flag(lines.len(), None, format!("no footer; log stops after trial {}", next - 1)),
        Some("abort") => {
            let at = footer.as_ref().and_then(|f| f.get("trial")).and_then(Value::as_u64);
            flag(lines.len(), at, "run was aborted".into());
        }
        _ => {}
    }
    if let Some(n) = expected_trials {
        if trials != n {
            flag(lines.len(), None, format!("log holds {trials} trials, the design calls for {n}"));
        }
    }
    Ok(ValidationReport {
        trials,
        expected_trials,
        violations,
    })
}

pub struct ServeArtifacts {
    pub run: RunArtifacts,
    pub transcript: Option<PathBuf>,
    pub peers: [SocketAddr; 2],
}

/// Referee side of a networked run. `on_bound` sees the listening address
/// before any station is accepted.
pub fn cmd_serve(
    cfg: &ExperimentConfig,
    endpoint: &str,
    timeout: Duration,
    transcript: Option<&Path>,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<ServeArtifacts, CommandError> {
    let plan = cfg.plan()?;
    let listener = TcpListener::bind(endpoint).map_err(io_err(Path::new(endpoint)))?;
    on_bound(listener.local_addr().map_err(io_err(Path::new(endpoint)))?);
    let served = referee_serve(&plan, &listener, ServeOptions { timeout }).map_err(CommandError::Serve)?;
    let report = persist(&served.run.log, &cfg.output)?;
    if let Some(p) = transcript {
        fs::write(p, served.transcript.to_ndjson()).map_err(io_err(p))?;
    }
    Ok(ServeArtifacts {
        run: RunArtifacts {
            plan,
            outcome: served.run,
            report,
            log_path: cfg.output.clone(),
        },
        transcript: transcript.map(Path::to_path_buf),
        peers: served.peers,
    })
}

pub fn cmd_station(role: Side, strategy: Option<&str>, endpoint: &str) -> Result<StationReport, CommandError> {
    Ok(station_client(role, strategy, endpoint)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_sits_next_to_log() {
        assert_eq!(report_path(Path::new("out/run.ndjson")), PathBuf::from("out/run.ndjson.report.json"));
        assert_eq!(report_path(Path::new("run")), PathBuf::from("run.report.json"));
    }

    #[test]
    fn design_rejects_degenerate_targets() {
        let a = DesignInput::Angles(AngleConfig::optimal());
        for t in [0.0, 1.0, 1.5, -1e-3, f64::NAN] {
            assert_eq!(cmd_design(a, t).unwrap_err().exit_code(), EXIT_CONFIG);
        }
        assert_eq!(cmd_design(DesignInput::Mean(-0.1), 1e-6).unwrap_err().exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn bit_checks() {
        assert!(bit_of(Some(&Value::from(0))).is_ok());
        assert!(bit_of(Some(&Value::from(1.0))).is_ok());
        assert!(bit_of(Some(&Value::from(2.3))).is_err());
        assert!(bit_of(Some(&Value::from("1"))).is_err());
        assert!(bit_of(None).is_err());
    }
}
