//! Seeded random streams.
//!
//! Every run draws from independent ChaCha8 streams keyed by the run seed and
//! a fixed stream id, so channel, arrival, packet-size and policy randomness
//! never interfere with each other. Sweeps derive per-run seeds with
//! [`derive_seed`]: SplitMix64 over `master ^ point·φ ^ replicate·ψ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    Arrivals = 2,
    PacketSizes = 3,
    Policy = 4,
    Placement = 5,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for replicate `replicate` of grid point `point` under `master`.
pub fn derive_seed(master: u64, point: u64, replicate: u64) -> u64 {
    splitmix64(
        master
            ^ point.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ replicate.wrapping_mul(0xD1B5_4A32_D192_ED03),
    )
}
