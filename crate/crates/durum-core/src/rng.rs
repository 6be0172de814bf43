//! Deterministic stream derivation for reproducible simulation.
//!
//! Every random draw in the simulator comes from a ChaCha8 stream keyed by
//! the global seed plus a stream tag and caller-chosen indices (farm id,
//! season, ...). Results therefore never depend on processing order or
//! worker count: the same (seed, tag, indices) always yields the same
//! stream, on every platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each independent consumer of randomness gets its own tag
/// so streams never collide across subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ClusterInit = 1,
    Synthesis = 2,
    PotentialYield = 3,
    SeasonShock = 4,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha8 stream from the global seed, a stream tag
/// and up to two indices (use 0 where an index does not apply).
pub fn stream_rng(seed: u64, stream: Stream, a: u64, b: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut mix = splitmix64(&mut state);
    state ^= (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407);
    mix ^= splitmix64(&mut state);
    state ^= a.wrapping_mul(0x9FB2_1C65_1E98_DF25);
    mix = mix.wrapping_add(splitmix64(&mut state));
    state ^= b.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    mix ^= splitmix64(&mut state);

    let mut key = [0u8; 32];
    let mut s = mix;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
