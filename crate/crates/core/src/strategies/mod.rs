//! Local-hidden-variable strategies.
//!
//! A strategy is three roles: a [`Source`] that emits the hidden variable λ
//! at the start of each trial, and one [`Station`] per wing that turns
//! `(own setting, λ, own memory)` into an outcome. A station's `respond`
//! takes `&self` and sees neither the other wing's setting nor its outcome,
//! so locality holds by construction. State may change only in
//! [`Station::update_memory`], which the referee calls between trials.
//!
//! A nonlocal cheater is not a [`Station`] at all: it implements
//! [`NonlocalResponder`] and can only be run with enforcement switched off.

mod builtin;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::chsh::{AngleConfig, Bit, Setting, Side, TrialRecord};

pub use builtin::{
    AdaptiveFrequencyTracker, ClassicalPolarizer, Constant, DeterministicOptimal, IndependentCoin,
    NonlocalCheater, RangeViolator, BUILTIN_NAMES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("unknown strategy {0:?}")]
    Unknown(String),
    #[error("strategy {strategy}: unknown parameter {key:?}")]
    UnknownParam { strategy: String, key: String },
    #[error("strategy {strategy}: parameter {key:?} {reason}")]
    BadParam {
        strategy: String,
        key: String,
        reason: String,
    },
    #[error("strategy {0} is not local and has no station implementation")]
    NotLocal(String),
    #[error("strategy {0} is local and has no joint responder")]
    NotNonlocal(String),
}

/// The hidden variable λ, identical for both wings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SourceMessage {
    pub payload: SmallVec<[u8; 24]>,
}

impl SourceMessage {
    pub fn new(bytes: &[u8]) -> Self {
        SourceMessage {
            payload: SmallVec::from_slice(bytes),
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.payload
    }
}

/// What a station hands back before the referee validates it. Honest
/// stations only ever produce 0.0 or 1.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawOutcome(pub f64);

impl From<Bit> for RawOutcome {
    fn from(b: Bit) -> Self {
        RawOutcome(f64::from(b.as_u8()))
    }
}

/// Opaque snapshot of a station's state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StationMemory(pub Vec<u8>);

impl StationMemory {
    pub fn of<T: Serialize>(state: &T) -> Self {
        StationMemory(serde_json::to_vec(state).expect("station state serializes"))
    }
}

/// A wing's own view of a finished trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WingRecord {
    pub m: u64,
    pub side: Side,
    pub setting: u8,
    pub outcome: Bit,
}

impl WingRecord {
    pub fn of(record: &TrialRecord, side: Side) -> Self {
        WingRecord {
            m: record.m,
            side,
            setting: record.setting.for_side(side),
            outcome: record.outcome(side),
        }
    }
}

/// Between-trial exchange in sequential mode: the full record plus whatever
/// each role chose to share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Broadcast {
    pub record: TrialRecord,
    pub source_blob: Vec<u8>,
    pub left_blob: Vec<u8>,
    pub right_blob: Vec<u8>,
}

pub trait Source: Send {
    /// λ for the next trial. `history` is empty when the source runs as a
    /// per-wing clone.
    fn emit(&mut self, history: &[TrialRecord]) -> SourceMessage;

    fn side_channel(&mut self) -> Vec<u8> {
        Vec::new()
    }

    fn receive_broadcast(&mut self, _broadcast: &Broadcast) {}
}

pub trait Station: Send {
    fn respond(&self, setting: u8, lambda: &SourceMessage) -> RawOutcome;

    /// Trial boundary. `broadcast` is `None` unless the mode allows
    /// between-trial communication.
    fn update_memory(&mut self, own: &WingRecord, broadcast: Option<&Broadcast>);

    /// Shared with everyone at the next trial boundary.
    fn side_channel(&self) -> Vec<u8> {
        Vec::new()
    }

    /// Batch mode hands every setting over up front.
    fn receive_batch(&mut self, _settings: &[u8]) {}

    fn memory(&self) -> StationMemory;
}

/// Outcome generator that sees both settings. Only runnable with locality
/// enforcement disabled.
pub trait NonlocalResponder: Send {
    fn respond_joint(&mut self, setting: Setting) -> (RawOutcome, RawOutcome);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalityClass {
    Local,
    NonlocalCheater,
    RangeViolating,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyDescriptor {
    pub name: String,
    pub locality_class: LocalityClass,
    pub seed: u64,
}

pub type Params = BTreeMap<String, serde_json::Value>;

/// Strategy name plus parameters, as written in a config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

impl StrategySpec {
    pub fn named(name: &str) -> Self {
        StrategySpec {
            name: name.to_string(),
            params: Params::new(),
        }
    }
}

/// What every role needs besides its spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyContext {
    pub angles: AngleConfig<f64>,
    pub seed: u64,
}

pub fn locality_class(spec: &StrategySpec) -> Result<LocalityClass, StrategyError> {
    builtin::check_params(spec)?;
    Ok(match spec.name.as_str() {
        "nonlocal-cheater" => LocalityClass::NonlocalCheater,
        "range-violator" => LocalityClass::RangeViolating,
        _ => LocalityClass::Local,
    })
}

pub fn descriptor(spec: &StrategySpec, seed: u64) -> Result<StrategyDescriptor, StrategyError> {
    Ok(StrategyDescriptor {
        name: spec.name.clone(),
        locality_class: locality_class(spec)?,
        seed,
    })
}

pub fn build_source(spec: &StrategySpec, ctx: &StrategyContext) -> Result<Box<dyn Source>, StrategyError> {
    builtin::source(spec, ctx)
}

pub fn build_station(
    spec: &StrategySpec,
    side: Side,
    ctx: &StrategyContext,
) -> Result<Box<dyn Station>, StrategyError> {
    builtin::station(spec, side, ctx)
}

pub fn build_nonlocal(
    spec: &StrategySpec,
    ctx: &StrategyContext,
) -> Result<Box<dyn NonlocalResponder>, StrategyError> {
    builtin::nonlocal(spec, ctx)
}
