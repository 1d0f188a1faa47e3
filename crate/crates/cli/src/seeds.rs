//! Independent random streams derived from the run seed.
//!
//! Every consumer gets its own ChaCha8 stream keyed by purpose and index
//! (training step, window number), so results do not depend on thread
//! scheduling or on which other commands ran before.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Train = 0,
    Predict = 1,
    Density = 2,
    Heatmap = 3,
    Latent = 4,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = seed ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
