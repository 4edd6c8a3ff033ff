//! Counter-style random streams: the master seed keys a ChaCha8 generator and
//! every (episode, frog, purpose) triple selects its own stream, so results do
//! not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::NodeAddress;

/// What a stream is used for; distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Walk = 1,
    Coin = 2,
    Level = 3,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_id(episode: u64, frog: NodeAddress, purpose: Purpose) -> u64 {
    let idx = frog.index();
    let mut h = mix(episode ^ 0x9e37_79b9_7f4a_7c15);
    h = mix(h ^ frog.depth() as u64);
    h = mix(h ^ idx as u64);
    h = mix(h ^ (idx >> 64) as u64);
    mix(h ^ purpose as u64)
}

pub fn stream(master_seed: u64, episode: u64, frog: NodeAddress, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(episode, frog, purpose));
    rng
}
