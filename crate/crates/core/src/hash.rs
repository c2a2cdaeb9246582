//! Deterministic keyed hashing for per-utterance randomness.
//!
//! Noise offsets and subset shuffles derive all randomness from
//! [`keyed_hash`] rather than from a sequential RNG stream, so per-utterance
//! work can run in any order and on any number of threads without changing
//! the result.

/// 64-bit keyed hash: FNV-1a over the seed's little-endian bytes followed by
/// the key's UTF-8 bytes, finished with a splitmix64 avalanche step.
///
/// The construction is fixed. Changing it changes every noise offset and
/// subset selection derived from a given seed, so treat it as part of the
/// on-disk format.
///
/// ```
/// use noisebench::hash::keyed_hash;
///
/// assert_eq!(keyed_hash(7, "BAC009S0002W0122"), keyed_hash(7, "BAC009S0002W0122"));
/// assert_ne!(keyed_hash(7, "BAC009S0002W0122"), keyed_hash(8, "BAC009S0002W0122"));
/// ```
pub fn keyed_hash(seed: u64, key: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    for &b in key.as_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }

    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}
