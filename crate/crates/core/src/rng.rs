//! Named, order-independent random streams.
//!
//! Every consumer derives its generator from the master seed plus a label
//! path, e.g. `(FILTER, trajectory, step)`, so results do not depend on the
//! order in which streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

pub const DATA: u64 = 0x6461_7461;
pub const INIT: u64 = 0x696e_6974;
pub const FILTER: u64 = 0x6669_6c74;
pub const RESAMPLE: u64 = 0x7265_736d;
pub const PARAMS: u64 = 0x7061_7261;
pub const SHUFFLE: u64 = 0x7368_7566;
pub const TRAIN: u64 = 0x7472_6169;
pub const EVAL: u64 = 0x6576_616c;
pub const TEST: u64 = 0x7465_7374;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for a label path; `stream(derive(s, a), b) != stream(s, a ++ b)`
/// in general, but both are deterministic.
pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for &l in labels {
        h = splitmix(h ^ splitmix(l));
    }
    h
}

pub fn stream(seed: u64, labels: &[u64]) -> Rng {
    let h = derive(seed, labels);
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    Rng::from_seed(key)
}
