//! Counter-based random streams.
//!
//! Every random quantity is addressed by `(seed, purpose, name, path)`. The
//! first three select a ChaCha key, the path index selects the ChaCha stream,
//! so any path can be regenerated in isolation and the draws never depend on
//! how paths are distributed over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Distinct purposes never share keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    CommonFactor = 1,
    Idiosyncratic = 2,
    CommonFactorIntegral = 3,
    DatasetSamples = 4,
    DatasetCommon = 5,
    DatasetIdiosyncratic = 6,
    Synthetic = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for one `(purpose, name, path)` cell under `seed`.
pub fn stream(seed: u64, purpose: Purpose, name: u64, path: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed ^ splitmix64(purpose as u64));
    state = splitmix64(state ^ splitmix64(name.wrapping_add(0x5851_f42d_4c95_7f2d)));
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path);
    rng
}

/// Fills `out` with independent standard normal draws.
pub fn fill_normal<R: rand::Rng>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}
