//! Newline-delimited trial log.
//!
//! ```text
//! {"type":"header","version":1,"config_hash":"…","seed":7,"mode":"sequential",…}
//! {"m":1,"i":2,"j":1,"x":0,"y":0}
//! …
//! {"type":"summary","counts":{…},"statistic":…,"sup":…,"verdict":{…}}
//! ```
//!
//! The last line is either a `summary` or an `abort`. Every line, including
//! the last, ends with `\n`. Serialization is deterministic, so two runs of
//! the same plan produce byte-identical logs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AbortReport, ClaimantSpec, ProtocolMode, Verdict};
use crate::chsh::{AngleConfig, CountMatrix, TrialRecord};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub mode: ProtocolMode,
    pub angles: AngleConfig<f64>,
    pub n: u64,
    pub critical_value: i64,
    pub qm_mean_per_trial: f64,
    pub claimant: ClaimantSpec,
    pub locality_enforced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub counts: CountMatrix,
    pub statistic: i64,
    pub sup: i64,
    pub verdict: Verdict,
    /// SHA-256 of the header line, binding the outcome to the exact header.
    pub header_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Footer {
    Summary(Summary),
    Abort(AbortReport),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum HeaderLine {
    Header(LogHeader),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub header: LogHeader,
    pub records: Vec<TrialRecord>,
    /// `None` only for a log cut short, e.g. by a crashed referee.
    pub footer: Option<Footer>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("log truncated after trial {last_valid_trial}")]
    Truncated { last_valid_trial: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrialLog {
    pub fn header_line(header: &LogHeader) -> String {
        serde_json::to_string(&HeaderLine::Header(header.clone())).expect("header serializes")
    }

    pub fn header_digest(header: &LogHeader) -> String {
        hex::encode(Sha256::digest(Self::header_line(header).as_bytes()))
    }

    pub fn record_line(record: &TrialRecord) -> String {
        serde_json::to_string(record).expect("record serializes")
    }

    pub fn footer_line(footer: &Footer) -> String {
        serde_json::to_string(footer).expect("footer serializes")
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::with_capacity(64 + 40 * self.records.len());
        out.push_str(&Self::header_line(&self.header));
        out.push('\n');
        for r in &self.records {
            out.push_str(&Self::record_line(r));
            out.push('\n');
        }
        if let Some(f) = &self.footer {
            out.push_str(&Self::footer_line(f));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_ndjson())
    }

    /// Strict parse. A missing footer or an unparseable tail line is
    /// reported as truncation naming the last good trial. Every line must be
    /// exactly what `to_ndjson` would write for it.
    pub fn parse(text: &str) -> Result<TrialLog, LogError> {
        let mut lines = text.split_inclusive('\n').enumerate();
        let (_, first) = lines.next().ok_or(LogError::Empty)?;
        let first = first.strip_suffix('\n').unwrap_or(first);
        let HeaderLine::Header(header) = serde_json::from_str(first).map_err(|e| LogError::Malformed {
            line: 1,
            reason: format!("bad header: {e}"),
        })?;
        canonical(1, first, Self::header_line(&header))?;
        let mut records = Vec::new();
        let mut footer = None;
        let last_valid = |records: &Vec<TrialRecord>| records.last().map_or(0, |r| r.m);
        for (idx, raw) in lines {
            let lineno = idx + 1;
            if footer.is_some() {
                return Err(LogError::Malformed {
                    line: lineno,
                    reason: "content after footer".into(),
                });
            }
            let complete = raw.ends_with('\n');
            let line = raw.strip_suffix('\n').unwrap_or(raw);
            if line.is_empty() && complete {
                return Err(LogError::Malformed {
                    line: lineno,
                    reason: "blank line".into(),
                });
            }
            let value: serde_json::Value = match serde_json::from_str(line) {
                Ok(v) if complete => v,
                _ if !complete => {
                    return Err(LogError::Truncated {
                        last_valid_trial: last_valid(&records),
                    })
                }
                Err(e) => {
                    return Err(LogError::Malformed {
                        line: lineno,
                        reason: e.to_string(),
                    })
                }
                Ok(_) => unreachable!(),
            };
            if value.get("type").is_some() {
                let f: Footer = serde_json::from_value(value).map_err(|e| LogError::Malformed {
                    line: lineno,
                    reason: format!("bad footer: {e}"),
                })?;
                canonical(lineno, line, Self::footer_line(&f))?;
                footer = Some(f);
            } else {
                let r: TrialRecord = serde_json::from_value(value).map_err(|e| LogError::Malformed {
                    line: lineno,
                    reason: format!("bad record: {e}"),
                })?;
                canonical(lineno, line, Self::record_line(&r))?;
                records.push(r);
            }
        }
        if footer.is_none() {
            return Err(LogError::Truncated {
                last_valid_trial: last_valid(&records),
            });
        }
        Ok(TrialLog {
            header,
            records,
            footer,
        })
    }

    pub fn read(path: &std::path::Path) -> Result<TrialLog, LogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn canonical(line: usize, found: &str, expected: String) -> Result<(), LogError> {
    if found == expected {
        Ok(())
    } else {
        Err(LogError::Malformed {
            line,
            reason: "not in canonical form".into(),
        })
    }
}
