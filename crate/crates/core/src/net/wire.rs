//! Frames: a 4-byte big-endian length, then a JSON document
//! `{"kind", "trial", "side"?, "body"}` with the body base64-encoded.

use std::io::{self, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chsh::{AngleConfig, Side};
use crate::referee::{AbortReport, ProtocolMode, Verdict};
use crate::strategies::{Broadcast, StrategySpec, WingRecord};

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest payload accepted from a peer.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Kind {
    Hello,
    Config,
    Lambda,
    Setting,
    Outcome,
    Broadcast,
    Verdict,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMessage {
    pub kind: Kind,
    pub trial: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(with = "b64")]
    pub body: Vec<u8>,
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = <&str>::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("peer closed the connection")]
    Closed,
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl WireMessage {
    pub fn raw(kind: Kind, trial: u64, side: Option<Side>, body: Vec<u8>) -> Self {
        WireMessage { kind, trial, side, body }
    }

    pub fn with<T: Serialize>(kind: Kind, trial: u64, side: Option<Side>, body: &T) -> Self {
        let body = serde_json::to_vec(body).expect("wire bodies serialize");
        WireMessage { kind, trial, side, body }
    }

    pub fn body_as<T: DeserializeOwned>(&self) -> Result<T, WireError> {
        serde_json::from_slice(&self.body).map_err(|e| WireError::Malformed(format!("{:?} body: {e}", self.kind)))
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = serde_json::to_vec(self).expect("frame serializes");
        let mut out = Vec::with_capacity(4 + payload.len());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, WireError> {
        serde_json::from_slice(payload).map_err(|e| WireError::Malformed(e.to_string()))
    }
}

pub fn write_frame(w: &mut impl Write, msg: &WireMessage) -> Result<(), WireError> {
    w.write_all(&msg.encode())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. A clean end of stream before the length prefix is
/// [`WireError::Closed`]; anywhere else it is an I/O error.
pub fn read_frame(r: &mut impl Read) -> Result<WireMessage, WireError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(WireError::Closed),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(WireError::TooLarge(len));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    WireMessage::decode(&payload)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub version: u32,
    pub role: Side,
    pub strategy: Option<String>,
}

/// What a station needs to build its half of the strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub version: u32,
    pub seed: u64,
    pub mode: ProtocolMode,
    pub angles: AngleConfig<f64>,
    pub strategy: StrategySpec,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingBody {
    pub index: u8,
    pub nonce: u64,
}

/// Batch mode: every setting for this wing, sent once as trial 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchBody {
    pub indices: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeBody {
    pub nonce: u64,
    pub value: f64,
    #[serde(default)]
    pub side_channel: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadcastBody {
    pub own: WingRecord,
    pub broadcast: Option<Broadcast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictBody {
    pub trials: u64,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbortBody {
    pub detail: String,
    pub report: Option<AbortReport>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout_is_length_then_json() {
        let msg = WireMessage::raw(Kind::Lambda, 7, Some(Side::Right), vec![1, 2, 3]);
        let bytes = msg.encode();
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert_eq!(len, bytes.len() - 4);
        assert_eq!(
            std::str::from_utf8(&bytes[4..]).unwrap(),
            r#"{"kind":"LAMBDA","trial":7,"side":"right","body":"AQID"}"#
        );
        assert_eq!(read_frame(&mut &bytes[..]).unwrap(), msg);
    }

    #[test]
    fn back_to_back_frames() {
        let a = WireMessage::with(Kind::Setting, 1, Some(Side::Left), &SettingBody { index: 2, nonce: 9 });
        let b = WireMessage::with(
            Kind::Outcome,
            1,
            Some(Side::Left),
            &OutcomeBody { nonce: 9, value: 0.1 + 0.2, side_channel: vec![] },
        );
        let mut buf = a.encode();
        buf.extend(b.encode());
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap(), a);
        let got = read_frame(&mut r).unwrap();
        assert_eq!(got.body_as::<OutcomeBody>().unwrap().value, 0.1 + 0.2);
        assert!(matches!(read_frame(&mut r), Err(WireError::Closed)));
    }

    #[test]
    fn rejects_bad_frames() {
        let mut big = (MAX_FRAME as u32 + 1).to_be_bytes().to_vec();
        big.extend([0; 8]);
        assert!(matches!(read_frame(&mut &big[..]), Err(WireError::TooLarge(_))));

        let junk = b"{\"kind\":\"NOPE\",\"trial\":1,\"body\":\"\"}";
        let mut buf = (junk.len() as u32).to_be_bytes().to_vec();
        buf.extend_from_slice(junk);
        assert!(matches!(read_frame(&mut &buf[..]), Err(WireError::Malformed(_))));

        let short = [0u8, 0, 0, 10, b'{'];
        assert!(matches!(read_frame(&mut &short[..]), Err(WireError::Io(_))));
        assert!(matches!(read_frame(&mut &[0u8, 0][..]), Err(WireError::Io(_))));
    }
}
