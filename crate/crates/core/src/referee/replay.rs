use thiserror::Error;

use super::{adjudicate, draw_settings, simulate, Footer, RefereeOptions, RunPlan, SettingsStream, StatisticTrace, TrialLog};
use crate::chsh::{CountMatrix, Setting, TrialRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayDivergence {
    #[error("header does not describe a runnable experiment: {0}")]
    Header(String),
    #[error("record {index} has trial number {found}, expected {expected}")]
    Sequence { index: usize, expected: u64, found: u64 },
    #[error("trial {m}: logged setting {logged}, seed gives {expected}")]
    Setting { m: u64, logged: Setting, expected: Setting },
    #[error("trial {m}: logged {logged:?}, replay gives {expected:?}")]
    Record {
        m: u64,
        logged: Option<TrialRecord>,
        expected: Option<TrialRecord>,
    },
    #[error("summary does not match the records: {0}")]
    Summary(String),
    #[error("footer differs from replay")]
    Footer { logged: String, expected: String },
    #[error("log has no footer")]
    MissingFooter,
}

impl ReplayDivergence {
    /// The first trial at which the log and the replay disagree, if the
    /// divergence is tied to one.
    pub fn trial(&self) -> Option<u64> {
        match self {
            ReplayDivergence::Sequence { index, .. } => Some(*index as u64 + 1),
            ReplayDivergence::Setting { m, .. } | ReplayDivergence::Record { m, .. } => Some(*m),
            _ => None,
        }
    }
}

/// Re-derive everything a log claims and compare bit-exactly.
///
/// Checks, in order: trial numbering, settings against the seed, each record
/// against a fresh in-process run of the header's plan, the summary against
/// counts recomputed from the records and the header digest, and finally the
/// footer line itself.
pub fn replay_verify(log: &TrialLog) -> Result<(), ReplayDivergence> {
    let plan = RunPlan::from_header(&log.header).map_err(|e| ReplayDivergence::Header(e.to_string()))?;
    let footer = log.footer.as_ref().ok_or(ReplayDivergence::MissingFooter)?;

    for (index, r) in log.records.iter().enumerate() {
        let expected = index as u64 + 1;
        if r.m != expected {
            return Err(ReplayDivergence::Sequence {
                index,
                expected,
                found: r.m,
            });
        }
    }

    let mut stream = SettingsStream::new(plan.seed);
    for r in &log.records {
        let expected = draw_settings(&mut stream);
        if r.setting != expected {
            return Err(ReplayDivergence::Setting {
                m: r.m,
                logged: r.setting,
                expected,
            });
        }
    }

    let fresh = simulate(&plan, RefereeOptions { journal: false }).map_err(|e| ReplayDivergence::Header(e.to_string()))?;
    let longest = log.records.len().max(fresh.log.records.len());
    for k in 0..longest {
        let (logged, expected) = (log.records.get(k).copied(), fresh.log.records.get(k).copied());
        if logged != expected {
            return Err(ReplayDivergence::Record {
                m: k as u64 + 1,
                logged,
                expected,
            });
        }
    }

    if let Footer::Summary(s) = footer {
        if s.header_sha256 != TrialLog::header_digest(&log.header) {
            return Err(ReplayDivergence::Summary("header digest".into()));
        }
        let counts = CountMatrix::from_records(&log.records);
        let trace = StatisticTrace::from_records(&log.records);
        if counts != s.counts {
            return Err(ReplayDivergence::Summary("counts".into()));
        }
        if trace.statistic() != s.statistic || trace.sup() != s.sup {
            return Err(ReplayDivergence::Summary("statistic".into()));
        }
        let verdict =
            adjudicate(&trace, &plan.design, plan.mode).map_err(|e| ReplayDivergence::Summary(e.to_string()))?;
        if verdict != s.verdict {
            return Err(ReplayDivergence::Summary("verdict".into()));
        }
    }

    let logged = TrialLog::footer_line(footer);
    let expected = fresh.log.footer.as_ref().map(TrialLog::footer_line).unwrap_or_default();
    if logged != expected {
        return Err(ReplayDivergence::Footer { logged, expected });
    }
    Ok(())
}
