//! Seed derivation for the per-ray, per-point and per-step random streams.
//!
//! Every stochastic decision in the pipeline draws from a xoshiro256++ stream whose
//! seed is a hash of (global seed, stream tag, indices...). Streams are never
//! shared between threads, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator behind every derived stream.
pub type StreamRng = Xoshiro256PlusPlus;

/// Tags separating independent random streams derived from one global seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Jitter = 2,
    Dropout = 3,
    LayerNoise = 4,
    WeightNoise = 5,
    DensityNoise = 6,
    RayBatch = 7,
    NovelPose = 8,
    Patch = 9,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an ordered list of words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5EED_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream_seed(seed: u64, stream: Stream, parts: &[u64]) -> u64 {
    let mut all = Vec::with_capacity(parts.len() + 2);
    all.push(seed);
    all.push(stream as u64);
    all.extend_from_slice(parts);
    derive_seed(&all)
}

pub fn stream_rng(seed: u64, stream: Stream, parts: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(seed, stream, parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_separated() {
        let a = stream_seed(7, Stream::Dropout, &[1, 2]);
        let b = stream_seed(7, Stream::LayerNoise, &[1, 2]);
        let c = stream_seed(7, Stream::Dropout, &[2, 1]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, stream_seed(7, Stream::Dropout, &[1, 2]));
    }
}
