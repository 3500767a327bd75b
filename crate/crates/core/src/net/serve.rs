use std::io::{self, BufReader};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::Rng;
use thiserror::Error;

use super::wire::{
    read_frame, write_frame, AbortBody, BatchBody, BroadcastBody, Hello, Kind, OutcomeBody, SettingBody, StationConfig,
    VerdictBody, WireError, WireMessage, PROTOCOL_VERSION,
};
use crate::chsh::{Setting, Side};
use crate::referee::{
    AbortReason, Claimant, ClaimantSpec, Commit, EventKind, Journal, Referee, RefereeError, RefereeOptions, RunOutcome,
    RunPlan, WingFailure, Wings,
};
use crate::strategies::{locality_class, Broadcast, LocalityClass, RawOutcome, SourceMessage, WingRecord};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeOptions {
    /// Longest wait for a station, per trial and during start-up.
    pub timeout: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot serve this claimant over the network: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Referee(#[from] RefereeError),
    #[error("stations did not complete the handshake: {0}")]
    Handshake(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub struct ServeOutcome {
    pub run: RunOutcome,
    /// Frames as actually sent and received, in order.
    pub transcript: Journal,
    pub peers: [SocketAddr; 2],
}

fn idx(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

type Inbound = (Side, Result<WireMessage, WireError>);

/// Remote stations behind two TCP connections.
pub struct NetWings {
    streams: [TcpStream; 2],
    rx: Receiver<Inbound>,
    nonces: [u64; 2],
    revealed: [bool; 2],
    early: Vec<Inbound>,
    timeout: Duration,
    journal: Journal,
}

impl NetWings {
    fn send(&mut self, side: Side, msg: &WireMessage) -> Result<(), WingFailure> {
        write_frame(&mut self.streams[idx(side)], msg).map_err(|e| WingFailure {
            side: Some(side),
            reason: AbortReason::Disconnected,
            detail: format!("sending {:?}: {e}", msg.kind),
        })
    }

    fn inbound_failure(side: Side, err: WireError) -> WingFailure {
        let reason = match err {
            WireError::Malformed(_) | WireError::TooLarge(_) => AbortReason::Malformed,
            WireError::Closed | WireError::Io(_) => AbortReason::Disconnected,
        };
        WingFailure {
            side: Some(side),
            reason,
            detail: err.to_string(),
        }
    }

    fn violation(side: Side, detail: String) -> WingFailure {
        WingFailure {
            side: Some(side),
            reason: AbortReason::ProtocolViolation,
            detail,
        }
    }

    /// Only a wing that already holds its setting may have spoken.
    fn ensure_quiet(&mut self) -> Result<(), WingFailure> {
        loop {
            match self.rx.try_recv() {
                Err(TryRecvError::Empty) => return Ok(()),
                Err(TryRecvError::Disconnected) => {
                    return Err(WingFailure {
                        side: None,
                        reason: AbortReason::Disconnected,
                        detail: "both stations gone".into(),
                    })
                }
                Ok((side, Err(e))) => return Err(Self::inbound_failure(side, e)),
                Ok((side, Ok(msg))) if self.revealed[idx(side)] => self.early.push((side, Ok(msg))),
                Ok((side, Ok(msg))) => {
                    return Err(Self::violation(
                        side,
                        format!("unsolicited {:?} for trial {}", msg.kind, msg.trial),
                    ))
                }
            }
        }
    }

    fn next_inbound(&mut self, deadline: Instant) -> Result<Inbound, RecvTimeoutError> {
        if !self.early.is_empty() {
            return Ok(self.early.remove(0));
        }
        self.rx.recv_timeout(deadline.saturating_duration_since(Instant::now()))
    }
}

impl Wings for NetWings {
    fn deliver_batch(&mut self, settings: &[Setting]) -> Result<(), WingFailure> {
        for side in Side::BOTH {
            let body = BatchBody {
                indices: settings.iter().map(|s| s.for_side(side)).collect(),
            };
            self.send(side, &WireMessage::with(Kind::Setting, 0, Some(side), &body))?;
        }
        self.journal.push(0, None, EventKind::Batch);
        Ok(())
    }

    fn deliver_lambda(&mut self, m: u64, side: Side, lambda: &SourceMessage) -> Result<(), WingFailure> {
        self.ensure_quiet()?;
        self.send(side, &WireMessage::raw(Kind::Lambda, m, Some(side), lambda.payload.to_vec()))?;
        self.journal.push(m, Some(side), EventKind::Lambda);
        Ok(())
    }

    fn reveal_setting(&mut self, m: u64, side: Side, index: u8) -> Result<(), WingFailure> {
        self.ensure_quiet()?;
        let nonce = rand::rng().random();
        self.nonces[idx(side)] = nonce;
        self.revealed[idx(side)] = true;
        self.send(side, &WireMessage::with(Kind::Setting, m, Some(side), &SettingBody { index, nonce }))?;
        self.journal.push(m, Some(side), EventKind::Setting);
        Ok(())
    }

    fn collect(&mut self, m: u64) -> Result<[Commit; 2], WingFailure> {
        let deadline = Instant::now() + self.timeout;
        let mut got: [Option<Commit>; 2] = [None, None];
        while got.iter().any(Option::is_none) {
            let (side, msg) = match self.next_inbound(deadline) {
                Ok(inbound) => inbound,
                Err(RecvTimeoutError::Timeout) => {
                    let missing = Side::BOTH.into_iter().filter(|&s| got[idx(s)].is_none()).collect::<Vec<_>>();
                    return Err(WingFailure {
                        side: (missing.len() == 1).then(|| missing[0]),
                        reason: AbortReason::Timeout,
                        detail: format!("no outcome for trial {m} within {:?}", self.timeout),
                    });
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(WingFailure {
                        side: None,
                        reason: AbortReason::Disconnected,
                        detail: "both stations gone".into(),
                    })
                }
            };
            let msg = msg.map_err(|e| Self::inbound_failure(side, e))?;
            if msg.kind != Kind::Outcome || msg.trial != m || msg.side != Some(side) || got[idx(side)].is_some() {
                return Err(Self::violation(
                    side,
                    format!("unexpected {:?} for trial {} while collecting trial {m}", msg.kind, msg.trial),
                ));
            }
            let body: OutcomeBody = msg.body_as().map_err(|e| Self::inbound_failure(side, e))?;
            if body.nonce != self.nonces[idx(side)] {
                return Err(Self::violation(side, format!("trial {m}: outcome does not answer the setting sent")));
            }
            self.journal.push(m, Some(side), EventKind::Outcome);
            got[idx(side)] = Some(Commit {
                raw: RawOutcome(body.value),
                side_channel: body.side_channel,
            });
        }
        self.revealed = [false; 2];
        Ok(got.map(|c| c.expect("both collected")))
    }

    fn debrief(&mut self, m: u64, own: [WingRecord; 2], broadcast: Option<&Broadcast>) -> Result<(), WingFailure> {
        for side in Side::BOTH {
            let body = BroadcastBody {
                own: own[idx(side)],
                broadcast: broadcast.cloned(),
            };
            self.send(side, &WireMessage::with(Kind::Broadcast, m, Some(side), &body))?;
        }
        self.journal.push(m, None, EventKind::Broadcast);
        Ok(())
    }
}

fn reject(stream: &mut TcpStream, detail: String) {
    let body = AbortBody { detail, report: None };
    let _ = write_frame(stream, &WireMessage::with(Kind::Abort, 0, None, &body));
    let _ = stream.shutdown(Shutdown::Both);
}

/// Accepts connections until one station per role has said a valid HELLO.
fn handshake(listener: &TcpListener, strategy: &str, timeout: Duration) -> Result<[TcpStream; 2], ServeError> {
    let deadline = Instant::now() + timeout;
    listener.set_nonblocking(true)?;
    let mut slots: [Option<TcpStream>; 2] = [None, None];
    while slots.iter().any(Option::is_none) {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Err(ServeError::Handshake(format!("timed out after {timeout:?}")));
        }
        let mut stream = match listener.accept() {
            Ok((s, _)) => s,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(remaining))?;
        let hello = match read_frame(&mut stream) {
            Ok(msg) if msg.kind == Kind::Hello => msg.body_as::<Hello>(),
            Ok(msg) => Err(WireError::Malformed(format!("expected HELLO, got {:?}", msg.kind))),
            Err(e) => Err(e),
        };
        let hello = match hello {
            Ok(h) => h,
            Err(e) => {
                reject(&mut stream, e.to_string());
                continue;
            }
        };
        if hello.version != PROTOCOL_VERSION {
            reject(
                &mut stream,
                format!("protocol version {} not supported, expected {PROTOCOL_VERSION}", hello.version),
            );
            continue;
        }
        if hello.strategy.as_deref().is_some_and(|s| s != strategy) {
            reject(&mut stream, format!("referee runs strategy {strategy}"));
            continue;
        }
        let slot = &mut slots[idx(hello.role)];
        if slot.is_some() {
            reject(&mut stream, format!("{:?} station already connected", hello.role));
            continue;
        }
        stream.set_read_timeout(None)?;
        *slot = Some(stream);
    }
    listener.set_nonblocking(false)?;
    Ok(slots.map(|s| s.expect("both connected")))
}

fn spawn_reader(side: Side, stream: TcpStream, tx: mpsc::Sender<Inbound>) -> JoinHandle<()> {
    thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        loop {
            let frame = read_frame(&mut reader);
            let stop = frame.is_err();
            if tx.send((side, frame)).is_err() || stop {
                break;
            }
        }
    })
}

/// Runs the plan against two remote stations. The source stays in this
/// process; stations see λ only through LAMBDA frames.
pub fn referee_serve(plan: &RunPlan, listener: &TcpListener, options: ServeOptions) -> Result<ServeOutcome, ServeError> {
    let spec = match &plan.claimant {
        ClaimantSpec::Quantum { .. } => {
            return Err(ServeError::Unsupported("the quantum oracle has no station halves".into()))
        }
        ClaimantSpec::Strategy(spec) => spec,
    };
    let referee = Referee::new(plan.clone(), RefereeOptions::default())?;
    if locality_class(spec).map_err(RefereeError::from)? == LocalityClass::NonlocalCheater {
        return Err(ServeError::Unsupported(format!("{} needs both settings at once", spec.name)));
    }
    let source = plan.source_rig(spec)?;

    let streams = handshake(listener, &spec.name, options.timeout)?;
    let peers = [streams[0].peer_addr()?, streams[1].peer_addr()?];
    let config = StationConfig {
        version: PROTOCOL_VERSION,
        seed: plan.seed,
        mode: plan.mode,
        angles: plan.angles,
        strategy: spec.clone(),
        n: plan.design.n,
    };
    let (tx, rx) = mpsc::channel();
    let mut readers = Vec::with_capacity(2);
    for side in Side::BOTH {
        let mut s = &streams[idx(side)];
        write_frame(&mut s, &WireMessage::with(Kind::Config, 0, Some(side), &config))
            .map_err(|e| ServeError::Handshake(e.to_string()))?;
        s.set_write_timeout(Some(options.timeout))?;
        readers.push(spawn_reader(side, s.try_clone()?, tx.clone()));
    }
    drop(tx);

    let mut wings = NetWings {
        streams,
        rx,
        nonces: [0; 2],
        revealed: [false; 2],
        early: Vec::new(),
        timeout: options.timeout,
        journal: Journal::new(true),
    };
    let run = referee.run(Claimant::Local {
        source,
        wings: &mut wings,
    });

    for side in Side::BOTH {
        let msg = match &run.abort {
            Some(report) => {
                let body = AbortBody {
                    detail: format!("run aborted at trial {}: {}", report.trial, report.detail),
                    report: Some(report.clone()),
                };
                WireMessage::with(Kind::Abort, report.trial, Some(side), &body)
            }
            None => {
                let body = VerdictBody {
                    trials: plan.design.n,
                    verdict: run.verdict.clone(),
                };
                WireMessage::with(Kind::Verdict, plan.design.n, Some(side), &body)
            }
        };
        let _ = wings.send(side, &msg);
    }
    for s in &wings.streams {
        let _ = s.shutdown(Shutdown::Both);
    }
    for r in readers {
        let _ = r.join();
    }
    Ok(ServeOutcome {
        run,
        transcript: wings.journal,
        peers,
    })
}
