use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};

use thiserror::Error;

use super::wire::{
    read_frame, write_frame, AbortBody, BatchBody, BroadcastBody, Hello, Kind, OutcomeBody, SettingBody, StationConfig,
    VerdictBody, WireError, WireMessage, PROTOCOL_VERSION,
};
use crate::chsh::Side;
use crate::referee::Verdict;
use crate::strategies::{build_station, SourceMessage, StrategyContext, StrategyError};

#[derive(Debug, Error)]
pub enum StationError {
    #[error("cannot reach referee: {0}")]
    Connect(std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("referee rejected this station: {0}")]
    Rejected(String),
    #[error("referee aborted the run: {}", .0.detail)]
    Aborted(AbortBody),
    #[error("referee speaks protocol version {theirs}, this station {ours}")]
    Version { ours: u32, theirs: u32 },
    #[error("referee configured strategy {got}, this station runs {expected}")]
    ConfigMismatch { expected: String, got: String },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("unexpected {kind:?} frame for trial {trial}")]
    Unexpected { kind: Kind, trial: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationReport {
    pub role: Side,
    pub trials: u64,
    pub verdict: Option<Verdict>,
}

/// Connects to the referee and answers settings until the verdict arrives.
/// The referee is the only peer this station ever talks to.
pub fn station_client(
    role: Side,
    strategy: Option<&str>,
    endpoint: impl ToSocketAddrs,
) -> Result<StationReport, StationError> {
    let stream = TcpStream::connect(endpoint).map_err(StationError::Connect)?;
    stream.set_nodelay(true).map_err(StationError::Connect)?;
    let mut reader = BufReader::new(stream.try_clone().map_err(StationError::Connect)?);
    let mut writer = BufWriter::new(stream);

    let hello = Hello {
        version: PROTOCOL_VERSION,
        role,
        strategy: strategy.map(str::to_string),
    };
    write_frame(&mut writer, &WireMessage::with(Kind::Hello, 0, Some(role), &hello))?;

    let first = read_frame(&mut reader)?;
    let config: StationConfig = match first.kind {
        Kind::Config => first.body_as()?,
        Kind::Abort => return Err(StationError::Rejected(first.body_as::<AbortBody>()?.detail)),
        kind => return Err(StationError::Unexpected { kind, trial: first.trial }),
    };
    if config.version != PROTOCOL_VERSION {
        return Err(StationError::Version {
            ours: PROTOCOL_VERSION,
            theirs: config.version,
        });
    }
    if let Some(expected) = strategy {
        if expected != config.strategy.name {
            return Err(StationError::ConfigMismatch {
                expected: expected.to_string(),
                got: config.strategy.name,
            });
        }
    }
    let ctx = StrategyContext {
        angles: config.angles,
        seed: config.seed,
    };
    let mut station = build_station(&config.strategy, role, &ctx)?;
    let mut lambda = SourceMessage::default();
    let mut trials = 0;

    loop {
        let msg = read_frame(&mut reader)?;
        match msg.kind {
            Kind::Lambda => lambda = SourceMessage::new(&msg.body),
            Kind::Setting if msg.trial == 0 => {
                let batch: BatchBody = msg.body_as()?;
                station.receive_batch(&batch.indices);
            }
            Kind::Setting => {
                let setting: SettingBody = msg.body_as()?;
                let raw = station.respond(setting.index, &lambda);
                let body = OutcomeBody {
                    nonce: setting.nonce,
                    value: raw.0,
                    side_channel: station.side_channel(),
                };
                write_frame(&mut writer, &WireMessage::with(Kind::Outcome, msg.trial, Some(role), &body))?;
                trials = msg.trial;
            }
            Kind::Broadcast => {
                let b: BroadcastBody = msg.body_as()?;
                station.update_memory(&b.own, b.broadcast.as_ref());
            }
            Kind::Verdict => {
                let v: VerdictBody = msg.body_as()?;
                return Ok(StationReport {
                    role,
                    trials,
                    verdict: v.verdict,
                });
            }
            Kind::Abort => return Err(StationError::Aborted(msg.body_as()?)),
            kind => return Err(StationError::Unexpected { kind, trial: msg.trial }),
        }
    }
}
