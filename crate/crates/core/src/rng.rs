//! Per-sequence random streams.
//!
//! Every random decision is drawn from a ChaCha stream keyed by the master
//! seed and a purpose tag, with the sequence ordinal selecting the stream.
//! Results therefore depend only on `(master_seed, ordinal)`, never on
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; keeps masking and SOP draws independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Masking = 1,
    SentenceOrder = 2,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sequence_rng(master_seed: u64, purpose: Purpose, ordinal: u64) -> ChaCha8Rng {
    let key = splitmix64(master_seed ^ splitmix64(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(ordinal);
    rng
}
