//! Seeded random streams. One 64-bit seed drives every stage; each stage
//! draws from its own ChaCha stream so adding draws in one stage never
//! shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage identifiers used as stream numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    SampleVideos = 1,
    LoadPool = 2,
    FinalSubsample = 3,
    KMeans = 4,
    Pca = 5,
    Gmm = 6,
    Synth = 7,
    LinearSvm = 8,
}

/// Generator for `stage`, further split by `sub` (e.g. a video index,
/// restart number or split index).
pub fn stream(seed: u64, stage: Stage, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ sub.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream((stage as u64) << 32 | (sub & 0xFFFF_FFFF));
    rng
}

/// Derives a child seed from a parent seed and a tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
