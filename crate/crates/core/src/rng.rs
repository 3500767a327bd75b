//! Per-role random streams derived from one experiment seed.
//!
//! Every role gets a ChaCha20 generator keyed by `seed` (expanded with
//! `seed_from_u64`) and positioned on its own stream number, so the roles
//! read disjoint keystreams. ChaCha20 is counter based: a stream is a pure
//! function of `(seed, role)`, which is what makes logs replayable from the
//! header alone.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::chsh::Side;

pub type RoleRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    LeftSettings = 1,
    RightSettings = 2,
    Source = 3,
    LeftStation = 4,
    RightStation = 5,
    Oracle = 6,
}

impl Role {
    pub fn station(side: Side) -> Role {
        match side {
            Side::Left => Role::LeftStation,
            Side::Right => Role::RightStation,
        }
    }
}

pub fn role_rng(seed: u64, role: Role) -> RoleRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}
