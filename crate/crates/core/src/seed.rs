//! Seed derivation.
//!
//! Every randomized step takes its own 64-bit seed derived from a master seed
//! by `derive_seed(master, stream, index)`. `stream` names the consumer (see the
//! constants below) and `index` is a counter such as the fold or tree number.
//! The mix is SplitMix64 applied to the three words in sequence, so equal
//! inputs give equal seeds on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_OUTER_FOLDS: u64 = 1;
pub const STREAM_COBRA_SPLIT: u64 = 2;
pub const STREAM_INNER_FOLDS: u64 = 3;
pub const STREAM_SEARCH: u64 = 4;
pub const STREAM_FOREST: u64 = 5;
pub const STREAM_SYNTHETIC: u64 = 6;
pub const STREAM_QUERIES: u64 = 7;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
