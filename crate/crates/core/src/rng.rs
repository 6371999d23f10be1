//! Named random substreams.
//!
//! Every stochastic stage draws from a ChaCha stream selected by the pair
//! (run seed, stage name), so the output of one stage never depends on how
//! many numbers another stage consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to map stage names onto stream ids.
fn stage_id(stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Random stream for `stage` under run seed `seed`.
pub fn substream(seed: u64, stage: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage_id(stage));
    rng
}
