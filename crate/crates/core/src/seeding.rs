//! Seed derivation and stable digests.
//!
//! Every random stream in the harness is derived from an experiment seed plus
//! a tuple of integer tags (repetition, round, tree index, ...), so results do
//! not depend on which worker ran what, or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each tag in turn. Different tag tuples give unrelated seeds.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// FNV-1a (64-bit) over the little-endian bytes of the ascending id list.
///
/// The input is sorted before hashing, so any permutation of the same id set
/// yields the same digest.
pub fn id_set_digest(ids: &[u64]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut h = OFFSET;
    for id in sorted {
        for b in id.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}
