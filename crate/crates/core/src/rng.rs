//! Seed derivation.
//!
//! Every random stream in the crate comes from one flat run seed. A stream is
//! identified by `(seed, component, index)`; the triple is hashed with FNV-1a
//! and finished with the splitmix64 mixer, then used to key a ChaCha8
//! generator. Streams therefore do not depend on thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the 64-bit seed of stream `index` of `component`.
pub fn derive_seed(seed: u64, component: &str, index: u64) -> u64 {
    let mut hash = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    hash = fnv1a(hash, component.as_bytes());
    // separator so that ("ab", 1) and ("a", ...) never collide on a prefix
    hash = fnv1a(hash, &[0xff]);
    hash = fnv1a(hash, &index.to_le_bytes());
    splitmix64(hash)
}

pub fn stream(seed: u64, component: &str, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, component, index))
}
