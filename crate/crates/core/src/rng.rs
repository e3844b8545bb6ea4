//! Deterministic random streams.
//!
//! Every (frame, role) pair gets its own ChaCha stream derived from the
//! master seed, so frames can be generated in any order or in parallel and
//! still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The consumer of a random stream within one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    AliceSymbols = 1,
    BobSymbols = 2,
    AliceChannel = 3,
    BobChannel = 4,
    AlicePhase = 5,
    BobPhase = 6,
    Relay = 7,
    Calibration = 8,
    PrivacySeed = 9,
    Test = 15,
}

/// Independent stream for `(frame, role)` under `master` seed.
pub fn stream(master: u64, frame: u64, role: Role) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream((frame << 8) | role as u64);
    rng
}
