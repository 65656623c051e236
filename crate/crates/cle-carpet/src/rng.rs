//! Seed derivation for order-independent parallel sampling.
//!
//! Every random quantity in the crate draws from its own `ChaCha8Rng`
//! substream whose seed is derived by hashing the master seed with a tag
//! path. Substreams are therefore independent of scheduling and worker
//! count, which is what makes whole runs reproducible bit-exactly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator used throughout the crate.
pub type SoupRng = ChaCha8Rng;

/// SplitMix64 finalizer; the standard 64-bit mixing function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a tag path.
///
/// The chain is order-sensitive: `derive_seed(s, &[a, b])` differs from
/// `derive_seed(s, &[b, a])`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x5bf0_3635_dee8_91a1);
    for &tag in path {
        state = splitmix64(state ^ splitmix64(tag));
    }
    state
}

/// A fresh substream for the given tag path.
pub fn substream(master: u64, path: &[u64]) -> SoupRng {
    SoupRng::seed_from_u64(derive_seed(master, path))
}

/// Stream tags; fixed constants so seed maps never collide across stages.
pub mod tag {
    pub const SOUP_SITE: u64 = 0x01;
    pub const SOUP_LOOP: u64 = 0x02;
    pub const NEST_CHILD: u64 = 0x03;
    pub const PARITY_COIN: u64 = 0x04;
    pub const REPLICA: u64 = 0x05;
    pub const BOOTSTRAP: u64 = 0x06;
    pub const CORPUS: u64 = 0x07;
}
