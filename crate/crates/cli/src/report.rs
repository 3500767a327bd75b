use std::fmt;

use bellbet::bounds::LogProbability;
use bellbet::chsh::{symmetric_count_statistics, CountMatrix, Setting};
use bellbet::referee::{
    adjudicate, replay_verify, AbortReport, Footer, ProtocolMode, RunPlan, StatisticTrace, TrialLog, Verdict, Winner,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub ln: f64,
    pub log10: f64,
}

impl From<LogProbability<f64>> for Bound {
    fn from(p: LogProbability<f64>) -> Self {
        Bound {
            value: p.value(),
            ln: p.ln(),
            log10: p.log10(),
        }
    }
}

/// Everything a jury needs to recheck a run, derived from its log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub claimant: String,
    pub mode: ProtocolMode,
    pub seed: u64,
    pub n: u64,
    pub critical_value: i64,
    pub qm_mean_per_trial: f64,
    pub trials_logged: u64,
    /// Trials and coincidences per cell, in the order 11, 12, 21, 22.
    pub trials: [u64; 4],
    pub coincidences: [u64; 4],
    pub statistic: i64,
    pub sup: i64,
    /// Each cell's coincidences minus those of the other three.
    pub symmetric_statistics: [i64; 4],
    pub verdict: Option<Winner>,
    pub local_error_bound: Option<Bound>,
    pub quantum_error_bound: Option<Bound>,
    pub error_bound_used: Option<Bound>,
    pub abort: Option<AbortReport>,
    /// `Ok` when an independent replay reproduces the log exactly.
    pub replay: Result<(), String>,
}

impl Report {
    pub fn from_log(log: &TrialLog) -> Report {
        let counts = CountMatrix::from_records(&log.records);
        let trace = StatisticTrace::from_records(&log.records);
        let h = &log.header;
        let verdict: Option<Verdict> = match &log.footer {
            Some(Footer::Summary(_)) => RunPlan::from_header(h)
                .ok()
                .and_then(|plan| adjudicate(&trace, &plan.design, plan.mode).ok()),
            _ => None,
        };
        let abort = match &log.footer {
            Some(Footer::Abort(a)) => Some(a.clone()),
            _ => None,
        };
        Report {
            config_hash: h.config_hash.clone(),
            claimant: h.claimant.label(),
            mode: h.mode,
            seed: h.seed,
            n: h.n,
            critical_value: h.critical_value,
            qm_mean_per_trial: h.qm_mean_per_trial,
            trials_logged: log.records.len() as u64,
            trials: Setting::CELLS.map(|s| counts.n(s.i(), s.j())),
            coincidences: Setting::CELLS.map(|s| counts.coincidences(s.i(), s.j())),
            statistic: trace.statistic(),
            sup: trace.sup(),
            symmetric_statistics: symmetric_count_statistics(&counts),
            verdict: verdict.as_ref().map(|v| v.winner),
            local_error_bound: verdict.as_ref().and_then(|v| v.local_error_bound).map(Bound::from),
            quantum_error_bound: verdict.as_ref().and_then(|v| v.quantum_error_bound).map(Bound::from),
            error_bound_used: verdict.as_ref().and_then(|v| v.error_bound_used).map(Bound::from),
            abort,
            replay: replay_verify(log).map_err(|e| e.to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn bound_line(f: &mut fmt::Formatter<'_>, name: &str, b: &Option<Bound>, missing: &str) -> fmt::Result {
    match b {
        Some(b) => writeln!(f, "{name:<22}{:.6e}  (ln {:.6}, log10 {:.6})", b.value, b.ln, b.log10),
        None => writeln!(f, "{name:<22}{missing}"),
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "config hash           {}", self.config_hash)?;
        writeln!(f, "claimant              {}", self.claimant)?;
        writeln!(f, "mode                  {}", serde_json::to_string(&self.mode).unwrap().trim_matches('"'))?;
        writeln!(f, "seed                  {}", self.seed)?;
        writeln!(f, "trials                {} of {}", self.trials_logged, self.n)?;
        writeln!(f, "cell   trials   coincidences   symmetric")?;
        for (k, s) in Setting::CELLS.iter().enumerate() {
            writeln!(
                f,
                "({},{})  {:>7}  {:>13}  {:>10}",
                s.i(),
                s.j(),
                self.trials[k],
                self.coincidences[k],
                self.symmetric_statistics[k]
            )?;
        }
        writeln!(f, "statistic S_n         {}", self.statistic)?;
        writeln!(f, "sup S_m               {}", self.sup)?;
        writeln!(f, "critical value        {}", self.critical_value)?;
        writeln!(f, "quantum mean/trial    {}", self.qm_mean_per_trial)?;
        let missing = match (&self.abort, self.mode) {
            (Some(_), _) => "none (run aborted)",
            (None, ProtocolMode::Batch) => "none (no tail guarantee in batch mode)",
            (None, _) => "none",
        };
        bound_line(f, "local-side bound", &self.local_error_bound, missing)?;
        bound_line(f, "quantum-side bound", &self.quantum_error_bound, missing)?;
        match (&self.verdict, &self.abort) {
            (Some(w), _) => {
                let who = match w {
                    Winner::QuantumClaimant => "quantum-claimant",
                    Winner::LocalRealist => "local-realist",
                };
                writeln!(f, "verdict               {who}")?;
                bound_line(f, "error bound used", &self.error_bound_used, missing)?;
            }
            (None, Some(a)) => writeln!(
                f,
                "verdict               void: aborted at trial {} ({:?}): {}",
                a.trial, a.reason, a.detail
            )?,
            (None, None) => writeln!(f, "verdict               none")?,
        }
        match &self.replay {
            Ok(()) => writeln!(f, "replay                verified"),
            Err(e) => writeln!(f, "replay                FAILED: {e}"),
        }
    }
}
