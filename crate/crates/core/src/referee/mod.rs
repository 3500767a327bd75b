//! The sequential referee.
//!
//! Per trial the referee (1) obtains λ from the source and hands it to both
//! wings, (2) draws the settings, (3) reveals to each wing only its own
//! setting, (4) collects and validates both outcomes, (5) logs the record and
//! updates the counts and the statistic, and (6) runs the between-trial
//! exchange allowed by the mode. Trial `m+1` starts only after all of this.

pub mod audit;
pub mod log;
mod replay;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundsError, LogProbability, ProtocolDesign};
use crate::chsh::{AngleConfig, Bit, CountMatrix, Setting, Side, TrialRecord};
use crate::quantum::{CorrelationSense, QuantumModel};
use crate::rng::{role_rng, Role, RoleRng};
use crate::strategies::{
    build_nonlocal, build_source, build_station, locality_class, Broadcast, LocalityClass, NonlocalResponder,
    RawOutcome, Source, SourceMessage, Station, StrategyContext, StrategyError, StrategySpec, WingRecord,
};

pub use audit::{audit, AuditError, EventKind, Journal, JournalEvent};
pub use log::{Footer, LogError, LogHeader, Summary, TrialLog, LOG_VERSION};
pub use replay::{replay_verify, ReplayDivergence};

#[derive(Debug, Error)]
pub enum RefereeError {
    #[error("strategy {0} is nonlocal; it only runs with locality enforcement disabled")]
    EnforcementRequired(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("trace has {actual} trials but the design calls for {expected}")]
    TrialCountMismatch { expected: u64, actual: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolMode {
    /// Settings and outcomes alternate trial by trial; free communication
    /// between trials.
    #[default]
    Sequential,
    /// Each wing runs its own copy of the source; no communication at all.
    ClonedSource,
    /// All settings handed over up front. No tail guarantee.
    Batch,
}

impl ProtocolMode {
    pub fn carries_guarantee(self) -> bool {
        !matches!(self, ProtocolMode::Batch)
    }
}

/// Who produces the outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClaimantSpec {
    Quantum {
        #[serde(default)]
        correlation_sense: CorrelationSense,
    },
    Strategy(StrategySpec),
}

impl ClaimantSpec {
    pub fn label(&self) -> String {
        match self {
            ClaimantSpec::Quantum { .. } => "quantum".to_string(),
            ClaimantSpec::Strategy(s) => s.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Winner {
    LocalRealist,
    QuantumClaimant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub statistic: i64,
    pub critical_value: i64,
    pub winner: Winner,
    /// Bound on this verdict being wrong; `None` in batch mode.
    pub error_bound_used: Option<LogProbability<f64>>,
    pub local_error_bound: Option<LogProbability<f64>>,
    pub quantum_error_bound: Option<LogProbability<f64>>,
    pub n: u64,
}

/// Running `S_m` and `sup_{r≤m} S_r`, with `S_0 = 0` included in the sup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatisticTrace {
    deltas: Vec<i8>,
    s: i64,
    sup: i64,
}

impl StatisticTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// `+1` for a coincidence in cell (1,2), `−1` for one elsewhere, else 0.
    pub fn delta(record: &TrialRecord) -> i8 {
        match (record.coincides(), record.setting == Setting::CELLS[1]) {
            (false, _) => 0,
            (true, true) => 1,
            (true, false) => -1,
        }
    }

    pub fn push(&mut self, record: &TrialRecord) {
        let d = Self::delta(record);
        self.deltas.push(d);
        self.s += i64::from(d);
        self.sup = self.sup.max(self.s);
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        let mut t = StatisticTrace::new();
        for r in records {
            t.push(r);
        }
        t
    }

    pub fn deltas(&self) -> &[i8] {
        &self.deltas
    }

    pub fn len(&self) -> u64 {
        self.deltas.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn statistic(&self) -> i64 {
        self.s
    }

    pub fn sup(&self) -> i64 {
        self.sup
    }

    /// Upper bound on the accumulated conditional variance, `(3/4)·m`.
    pub fn variance_budget(&self) -> f64 {
        0.75 * self.len() as f64
    }
}

/// The referee's two independent setting streams, one per operator.
pub struct SettingsStream {
    left: RoleRng,
    right: RoleRng,
}

impl SettingsStream {
    pub fn new(seed: u64) -> Self {
        SettingsStream {
            left: role_rng(seed, Role::LeftSettings),
            right: role_rng(seed, Role::RightSettings),
        }
    }
}

/// Uniform over the four cells: independent fair choices on each wing.
pub fn draw_settings(stream: &mut SettingsStream) -> Setting {
    let i = 1 + u8::from(stream.left.random_bool(0.5));
    let j = 1 + u8::from(stream.right.random_bool(0.5));
    Setting::new(i, j).expect("indices in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    OutOfRange,
    MissingOutcome,
    Timeout,
    Disconnected,
    ProtocolViolation,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbortReport {
    pub trial: u64,
    pub side: Option<Side>,
    pub reason: AbortReason,
    pub value: Option<f64>,
    pub detail: String,
}

/// Passes only the exact values 0 and 1.
pub fn validate_outcome(m: u64, side: Side, raw: RawOutcome) -> Result<Bit, AbortReport> {
    if raw.0 == 0.0 {
        Ok(Bit::ZERO)
    } else if raw.0 == 1.0 {
        Ok(Bit::ONE)
    } else {
        Err(AbortReport {
            trial: m,
            side: Some(side),
            reason: AbortReason::OutOfRange,
            value: raw.0.is_finite().then_some(raw.0),
            detail: format!("outcome {} is not in {{0, 1}}", raw.0),
        })
    }
}

/// Compare the final statistic with the critical value. The quantum side
/// must strictly exceed it.
pub fn adjudicate(trace: &StatisticTrace, design: &ProtocolDesign<f64>, mode: ProtocolMode) -> Result<Verdict, RefereeError> {
    if trace.len() != design.n {
        return Err(RefereeError::TrialCountMismatch {
            expected: design.n,
            actual: trace.len(),
        });
    }
    let statistic = trace.statistic();
    let winner = if statistic > design.critical_value {
        Winner::QuantumClaimant
    } else {
        Winner::LocalRealist
    };
    let guaranteed = mode.carries_guarantee();
    let local = guaranteed.then_some(design.local_error_bound);
    let quantum = guaranteed.then_some(design.quantum_error_bound);
    Ok(Verdict {
        statistic,
        critical_value: design.critical_value,
        winner,
        error_bound_used: match winner {
            Winner::QuantumClaimant => local,
            Winner::LocalRealist => quantum,
        },
        local_error_bound: local,
        quantum_error_bound: quantum,
        n: design.n,
    })
}

/// A wing's answer for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Commit {
    pub raw: RawOutcome,
    pub side_channel: Vec<u8>,
}

/// Channel failures that end the experiment.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{side:?}: {detail}")]
pub struct WingFailure {
    pub side: Option<Side>,
    pub reason: AbortReason,
    pub detail: String,
}

/// The two stations as seen from the referee, in-process or remote.
pub trait Wings {
    fn deliver_batch(&mut self, settings: &[Setting]) -> Result<(), WingFailure>;
    fn deliver_lambda(&mut self, m: u64, side: Side, lambda: &SourceMessage) -> Result<(), WingFailure>;
    fn reveal_setting(&mut self, m: u64, side: Side, index: u8) -> Result<(), WingFailure>;
    /// Blocks until both wings have committed trial `m`.
    fn collect(&mut self, m: u64) -> Result<[Commit; 2], WingFailure>;
    fn debrief(&mut self, m: u64, own: [WingRecord; 2], broadcast: Option<&Broadcast>) -> Result<(), WingFailure>;
}

/// Stations living in this process.
pub struct LocalWings {
    stations: [Box<dyn Station>; 2],
    lambda: [SourceMessage; 2],
    settings: [u8; 2],
}

impl LocalWings {
    pub fn new(left: Box<dyn Station>, right: Box<dyn Station>) -> Self {
        LocalWings {
            stations: [left, right],
            lambda: Default::default(),
            settings: [0; 2],
        }
    }

    pub fn station(&self, side: Side) -> &dyn Station {
        self.stations[side_index(side)].as_ref()
    }
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

impl Wings for LocalWings {
    fn deliver_batch(&mut self, settings: &[Setting]) -> Result<(), WingFailure> {
        for side in Side::BOTH {
            let own: Vec<u8> = settings.iter().map(|s| s.for_side(side)).collect();
            self.stations[side_index(side)].receive_batch(&own);
        }
        Ok(())
    }

    fn deliver_lambda(&mut self, _m: u64, side: Side, lambda: &SourceMessage) -> Result<(), WingFailure> {
        self.lambda[side_index(side)].clone_from(lambda);
        Ok(())
    }

    fn reveal_setting(&mut self, _m: u64, side: Side, index: u8) -> Result<(), WingFailure> {
        self.settings[side_index(side)] = index;
        Ok(())
    }

    fn collect(&mut self, _m: u64) -> Result<[Commit; 2], WingFailure> {
        Ok([0, 1].map(|k| {
            let st = &self.stations[k];
            Commit {
                raw: st.respond(self.settings[k], &self.lambda[k]),
                side_channel: st.side_channel(),
            }
        }))
    }

    fn debrief(&mut self, _m: u64, own: [WingRecord; 2], broadcast: Option<&Broadcast>) -> Result<(), WingFailure> {
        for (st, rec) in self.stations.iter_mut().zip(own.iter()) {
            st.update_memory(rec, broadcast);
        }
        Ok(())
    }
}

/// Where λ comes from.
pub enum SourceRig {
    Shared(Box<dyn Source>),
    /// One copy per wing, never told anything after start-up.
    Cloned([Box<dyn Source>; 2]),
}

/// Fully resolved experiment: everything the log header records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub config_hash: String,
    pub seed: u64,
    pub mode: ProtocolMode,
    pub angles: AngleConfig<f64>,
    pub design: ProtocolDesign<f64>,
    pub claimant: ClaimantSpec,
    pub locality_enforced: bool,
}

impl RunPlan {
    pub fn header(&self) -> LogHeader {
        LogHeader {
            version: LOG_VERSION,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            mode: self.mode,
            angles: self.angles,
            n: self.design.n,
            critical_value: self.design.critical_value,
            qm_mean_per_trial: self.design.qm_mean_per_trial,
            claimant: self.claimant.clone(),
            locality_enforced: self.locality_enforced,
        }
    }

    pub fn from_header(h: &LogHeader) -> Result<Self, RefereeError> {
        Ok(RunPlan {
            config_hash: h.config_hash.clone(),
            seed: h.seed,
            mode: h.mode,
            angles: h.angles,
            design: ProtocolDesign::evaluate(h.n, h.critical_value, h.qm_mean_per_trial)?,
            claimant: h.claimant.clone(),
            locality_enforced: h.locality_enforced,
        })
    }

    pub fn strategy_context(&self) -> StrategyContext {
        StrategyContext {
            angles: self.angles,
            seed: self.seed,
        }
    }

    /// Fails for a nonlocal strategy while enforcement is on.
    pub fn check_locality(&self) -> Result<(), RefereeError> {
        if let ClaimantSpec::Strategy(spec) = &self.claimant {
            if locality_class(spec)? == LocalityClass::NonlocalCheater && self.locality_enforced {
                return Err(RefereeError::EnforcementRequired(spec.name.clone()));
            }
        }
        Ok(())
    }

    pub fn source_rig(&self, spec: &StrategySpec) -> Result<SourceRig, RefereeError> {
        let ctx = self.strategy_context();
        Ok(match self.mode {
            ProtocolMode::Sequential => SourceRig::Shared(build_source(spec, &ctx)?),
            ProtocolMode::ClonedSource | ProtocolMode::Batch => {
                SourceRig::Cloned([build_source(spec, &ctx)?, build_source(spec, &ctx)?])
            }
        })
    }
}

/// Result of one experiment, complete or aborted.
pub struct RunOutcome {
    pub log: TrialLog,
    pub counts: CountMatrix,
    pub trace: StatisticTrace,
    pub verdict: Option<Verdict>,
    pub abort: Option<AbortReport>,
    pub journal: Journal,
}

pub enum Claimant<'w> {
    Quantum(QuantumModel),
    Local { source: SourceRig, wings: &'w mut dyn Wings },
    Nonlocal(Box<dyn NonlocalResponder>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefereeOptions {
    pub journal: bool,
}

impl Default for RefereeOptions {
    fn default() -> Self {
        RefereeOptions { journal: true }
    }
}

pub struct Referee {
    plan: RunPlan,
    settings: SettingsStream,
    records: Vec<TrialRecord>,
    counts: CountMatrix,
    trace: StatisticTrace,
    journal: Journal,
}

impl Referee {
    pub fn new(plan: RunPlan, options: RefereeOptions) -> Result<Self, RefereeError> {
        plan.check_locality()?;
        let n = plan.design.n as usize;
        Ok(Referee {
            settings: SettingsStream::new(plan.seed),
            records: Vec::with_capacity(n),
            counts: CountMatrix::new(),
            trace: StatisticTrace::new(),
            journal: Journal::new(options.journal),
            plan,
        })
    }

    pub fn plan(&self) -> &RunPlan {
        &self.plan
    }

    fn commit(&mut self, record: TrialRecord) {
        self.counts.record(&record);
        self.trace.push(&record);
        self.records.push(record);
    }

    fn next_setting(&mut self, m: u64, batch: Option<&[Setting]>) -> Setting {
        match batch {
            Some(all) => all[(m - 1) as usize],
            None => {
                let s = draw_settings(&mut self.settings);
                self.journal.push(m, None, EventKind::SettingDrawn);
                s
            }
        }
    }

    fn draw_batch(&mut self) -> Option<Vec<Setting>> {
        (self.plan.mode == ProtocolMode::Batch).then(|| {
            (1..=self.plan.design.n)
                .map(|m| {
                    let s = draw_settings(&mut self.settings);
                    self.journal.push(m, None, EventKind::SettingDrawn);
                    s
                })
                .collect()
        })
    }

    pub fn run(mut self, claimant: Claimant<'_>) -> RunOutcome {
        let result = match claimant {
            Claimant::Quantum(model) => self.run_quantum(model),
            Claimant::Local { source, wings } => self.run_local(source, wings),
            Claimant::Nonlocal(responder) => self.run_nonlocal(responder),
        };
        self.finish(result.err())
    }

    fn run_quantum(&mut self, model: QuantumModel) -> Result<(), AbortReport> {
        let mut rng = role_rng(self.plan.seed, Role::Oracle);
        let batch = self.draw_batch();
        for m in 1..=self.plan.design.n {
            let setting = self.next_setting(m, batch.as_deref());
            self.journal.push(m, None, EventKind::Setting);
            let (x, y) = model.sample_trial(setting, &mut rng);
            self.journal.push(m, None, EventKind::Outcome);
            self.commit(TrialRecord { m, setting, x, y });
        }
        Ok(())
    }

    fn run_nonlocal(&mut self, mut responder: Box<dyn NonlocalResponder>) -> Result<(), AbortReport> {
        let batch = self.draw_batch();
        for m in 1..=self.plan.design.n {
            let setting = self.next_setting(m, batch.as_deref());
            self.journal.push(m, None, EventKind::Setting);
            let (rx, ry) = responder.respond_joint(setting);
            self.journal.push(m, None, EventKind::Outcome);
            let x = validate_outcome(m, Side::Left, rx)?;
            let y = validate_outcome(m, Side::Right, ry)?;
            self.commit(TrialRecord { m, setting, x, y });
        }
        Ok(())
    }

    fn run_local(&mut self, mut source: SourceRig, wings: &mut dyn Wings) -> Result<(), AbortReport> {
        let fail = |m: u64, f: WingFailure| AbortReport {
            trial: m,
            side: f.side,
            reason: f.reason,
            value: None,
            detail: f.detail,
        };
        let batch = self.draw_batch();
        if let Some(all) = &batch {
            wings.deliver_batch(all).map_err(|f| fail(1, f))?;
            self.journal.push(0, None, EventKind::Batch);
        }
        for m in 1..=self.plan.design.n {
            match &mut source {
                SourceRig::Shared(src) => {
                    let lambda = src.emit(&self.records);
                    for side in Side::BOTH {
                        wings.deliver_lambda(m, side, &lambda).map_err(|f| fail(m, f))?;
                        self.journal.push(m, Some(side), EventKind::Lambda);
                    }
                }
                SourceRig::Cloned(copies) => {
                    for (side, src) in Side::BOTH.into_iter().zip(copies.iter_mut()) {
                        let lambda = src.emit(&[]);
                        wings.deliver_lambda(m, side, &lambda).map_err(|f| fail(m, f))?;
                        self.journal.push(m, Some(side), EventKind::Lambda);
                    }
                }
            }
            let setting = self.next_setting(m, batch.as_deref());
            for side in Side::BOTH {
                wings.reveal_setting(m, side, setting.for_side(side)).map_err(|f| fail(m, f))?;
                self.journal.push(m, Some(side), EventKind::Setting);
            }
            let [left, right] = wings.collect(m).map_err(|f| fail(m, f))?;
            for side in Side::BOTH {
                self.journal.push(m, Some(side), EventKind::Outcome);
            }
            let x = validate_outcome(m, Side::Left, left.raw)?;
            let y = validate_outcome(m, Side::Right, right.raw)?;
            let record = TrialRecord { m, setting, x, y };
            self.commit(record);
            let own = Side::BOTH.map(|s| WingRecord::of(&record, s));
            match &mut source {
                SourceRig::Shared(src) => {
                    let broadcast = Broadcast {
                        record,
                        source_blob: src.side_channel(),
                        left_blob: left.side_channel,
                        right_blob: right.side_channel,
                    };
                    src.receive_broadcast(&broadcast);
                    wings.debrief(m, own, Some(&broadcast)).map_err(|f| fail(m, f))?;
                }
                SourceRig::Cloned(_) => {
                    wings.debrief(m, own, None).map_err(|f| fail(m, f))?;
                }
            }
            self.journal.push(m, None, EventKind::Broadcast);
        }
        Ok(())
    }

    fn finish(self, abort: Option<AbortReport>) -> RunOutcome {
        let header = self.plan.header();
        let (footer, verdict) = match &abort {
            Some(a) => (Footer::Abort(a.clone()), None),
            None => {
                let verdict = adjudicate(&self.trace, &self.plan.design, self.plan.mode)
                    .expect("loop ran exactly n trials");
                let summary = Summary {
                    counts: self.counts,
                    statistic: self.trace.statistic(),
                    sup: self.trace.sup(),
                    verdict: verdict.clone(),
                    header_sha256: TrialLog::header_digest(&header),
                };
                (Footer::Summary(summary), Some(verdict))
            }
        };
        RunOutcome {
            log: TrialLog {
                header,
                records: self.records,
                footer: Some(footer),
            },
            counts: self.counts,
            trace: self.trace,
            verdict,
            abort,
            journal: self.journal,
        }
    }
}

/// Run a plan entirely in this process.
pub fn simulate(plan: &RunPlan, options: RefereeOptions) -> Result<RunOutcome, RefereeError> {
    let referee = Referee::new(plan.clone(), options)?;
    let ctx = plan.strategy_context();
    Ok(match &plan.claimant {
        ClaimantSpec::Quantum { correlation_sense } => {
            referee.run(Claimant::Quantum(QuantumModel::new(plan.angles, *correlation_sense)))
        }
        ClaimantSpec::Strategy(spec) => match locality_class(spec)? {
            LocalityClass::NonlocalCheater => referee.run(Claimant::Nonlocal(build_nonlocal(spec, &ctx)?)),
            _ => {
                let source = plan.source_rig(spec)?;
                let mut wings = LocalWings::new(
                    build_station(spec, Side::Left, &ctx)?,
                    build_station(spec, Side::Right, &ctx)?,
                );
                referee.run(Claimant::Local {
                    source,
                    wings: &mut wings,
                })
            }
        },
    })
}
