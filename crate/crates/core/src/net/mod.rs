//! The same protocol across processes: a referee that owns the source and the
//! settings, and two stations that only ever talk to the referee.

mod serve;
mod station;
pub mod wire;

pub use serve::{referee_serve, NetWings, ServeError, ServeOptions, ServeOutcome, DEFAULT_TIMEOUT};
pub use station::{station_client, StationError, StationReport};
