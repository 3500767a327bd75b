//! Message journal and the post-hoc ordering auditor.
//!
//! The in-process engine journals each step it takes; the network referee
//! journals each frame it actually sends or receives. The same auditor checks
//! both.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ProtocolMode;
use crate::chsh::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SettingDrawn,
    Batch,
    Lambda,
    Setting,
    Outcome,
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEvent {
    pub seq: u64,
    pub m: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    pub event: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Journal {
    events: Vec<JournalEvent>,
    enabled: bool,
}

impl Journal {
    pub fn new(enabled: bool) -> Self {
        Journal {
            events: Vec::new(),
            enabled,
        }
    }

    pub fn push(&mut self, m: u64, side: Option<Side>, event: EventKind) {
        if self.enabled {
            let seq = self.events.len() as u64;
            self.events.push(JournalEvent { seq, m, side, event });
        }
    }

    pub fn events(&self) -> &[JournalEvent] {
        &self.events
    }

    pub fn to_ndjson(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }

    pub fn parse(text: &str) -> Result<Vec<JournalEvent>, serde_json::Error> {
        text.lines().filter(|l| !l.is_empty()).map(serde_json::from_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("trial {m}: {event:?} for {side:?} appears twice")]
    Duplicate {
        m: u64,
        side: Option<Side>,
        event: EventKind,
    },
    #[error("trial {m}: {event:?} for {side:?} is missing")]
    Missing {
        m: u64,
        side: Option<Side>,
        event: EventKind,
    },
    #[error("trial {m}: {first:?} must precede {then:?} ({side:?})")]
    OutOfOrder {
        m: u64,
        side: Option<Side>,
        first: EventKind,
        then: EventKind,
    },
    #[error("trial {m}: settings revealed before trial {prev} was committed")]
    EarlyReveal { m: u64, prev: u64 },
    #[error("journal covers {found} trials, expected {expected}")]
    TrialCount { found: u64, expected: u64 },
}

type Key = (u64, Option<Side>, EventKind);

/// Checks, per trial and wing, `Lambda → Setting → Outcome`, and outside
/// batch mode that nothing of trial `m+1` is revealed before both outcomes of
/// trial `m` are in. `with_lambda` is false for claimants without a source
/// (quantum oracle, nonlocal cheater), which journal wing-less events.
pub fn audit(events: &[JournalEvent], mode: ProtocolMode, trials: u64, with_lambda: bool) -> Result<(), AuditError> {
    let mut pos: BTreeMap<Key, u64> = BTreeMap::new();
    let mut batch_pos = Vec::new();
    for (idx, e) in events.iter().enumerate() {
        let idx = idx as u64;
        if e.event == EventKind::Batch {
            batch_pos.push(idx);
            continue;
        }
        if pos.insert((e.m, e.side, e.event), idx).is_some() {
            return Err(AuditError::Duplicate {
                m: e.m,
                side: e.side,
                event: e.event,
            });
        }
    }
    let found = pos.keys().map(|k| k.0).max().unwrap_or(0);
    if found != trials {
        return Err(AuditError::TrialCount { found, expected: trials });
    }
    let sides: Vec<Option<Side>> = if with_lambda {
        Side::BOTH.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let get = |m: u64, side: Option<Side>, event: EventKind| -> Result<u64, AuditError> {
        pos.get(&(m, side, event)).copied().ok_or(AuditError::Missing { m, side, event })
    };
    let mut prev_committed: Option<u64> = None;
    for m in 1..=trials {
        let mut earliest_reveal = u64::MAX;
        let mut latest_outcome = 0;
        for &side in &sides {
            let setting = get(m, side, EventKind::Setting)?;
            let outcome = get(m, side, EventKind::Outcome)?;
            if with_lambda {
                let lambda = get(m, side, EventKind::Lambda)?;
                if lambda > setting {
                    return Err(AuditError::OutOfOrder {
                        m,
                        side,
                        first: EventKind::Lambda,
                        then: EventKind::Setting,
                    });
                }
            }
            if setting > outcome {
                return Err(AuditError::OutOfOrder {
                    m,
                    side,
                    first: EventKind::Setting,
                    then: EventKind::Outcome,
                });
            }
            earliest_reveal = earliest_reveal.min(setting);
            latest_outcome = latest_outcome.max(outcome);
        }
        if let Some(&drawn) = pos.get(&(m, None, EventKind::SettingDrawn)) {
            earliest_reveal = earliest_reveal.min(drawn);
        }
        match mode {
            ProtocolMode::Batch => {
                if let Some(&b) = batch_pos.iter().max() {
                    if b > latest_outcome {
                        return Err(AuditError::OutOfOrder {
                            m,
                            side: None,
                            first: EventKind::Batch,
                            then: EventKind::Outcome,
                        });
                    }
                }
            }
            _ => {
                if let Some(prev) = prev_committed {
                    if earliest_reveal < prev {
                        return Err(AuditError::EarlyReveal { m, prev: m - 1 });
                    }
                }
            }
        }
        prev_committed = Some(latest_outcome);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sequential_journal(trials: u64) -> Journal {
        let mut j = Journal::new(true);
        for m in 1..=trials {
            for s in Side::BOTH {
                j.push(m, Some(s), EventKind::Lambda);
            }
            j.push(m, None, EventKind::SettingDrawn);
            for s in Side::BOTH {
                j.push(m, Some(s), EventKind::Setting);
            }
            for s in Side::BOTH {
                j.push(m, Some(s), EventKind::Outcome);
            }
        }
        j
    }

    #[test]
    fn accepts_well_ordered_journal() {
        let j = sequential_journal(5);
        audit(j.events(), ProtocolMode::Sequential, 5, true).unwrap();
        let parsed = Journal::parse(&j.to_ndjson()).unwrap();
        assert_eq!(parsed, j.events());
    }

    #[test]
    fn rejects_outcome_before_setting() {
        let mut ev = sequential_journal(3).events().to_vec();
        // swap Setting(left) and Outcome(left) of trial 2
        let s = ev.iter().position(|e| e.m == 2 && e.side == Some(Side::Left) && e.event == EventKind::Setting).unwrap();
        let o = ev.iter().position(|e| e.m == 2 && e.side == Some(Side::Left) && e.event == EventKind::Outcome).unwrap();
        ev.swap(s, o);
        assert!(matches!(audit(&ev, ProtocolMode::Sequential, 3, true), Err(AuditError::OutOfOrder { m: 2, .. })));
    }

    #[test]
    fn rejects_early_reveal_and_duplicates() {
        let mut ev = sequential_journal(2).events().to_vec();
        let s = ev.iter().position(|e| e.m == 2 && e.event == EventKind::SettingDrawn).unwrap();
        let o = ev.iter().position(|e| e.m == 1 && e.side == Some(Side::Right) && e.event == EventKind::Outcome).unwrap();
        ev.swap(s, o);
        assert!(audit(&ev, ProtocolMode::Sequential, 2, true).is_err());

        let mut ev = sequential_journal(2).events().to_vec();
        ev.push(JournalEvent { seq: 99, m: 2, side: Some(Side::Left), event: EventKind::Outcome });
        assert!(matches!(audit(&ev, ProtocolMode::Sequential, 2, true), Err(AuditError::Duplicate { .. })));
    }

    #[test]
    fn rejects_missing_trials() {
        let j = sequential_journal(2);
        assert!(matches!(audit(j.events(), ProtocolMode::Sequential, 3, true), Err(AuditError::TrialCount { .. })));
    }
}
