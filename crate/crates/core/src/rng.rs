//! Seeded random streams.
//!
//! Every consumer draws from a ChaCha8 generator keyed by the run seed and a
//! fixed stream id, so adding draws to one stream never perturbs another and
//! layer-parallel execution sees the same numbers as serial execution.
//!
//! | stream            | id                     |
//! |-------------------|------------------------|
//! | model data        | `0x0001`               |
//! | initial weights   | `0x0002`               |
//! | gradient noise    | `0x0100 + layer`       |
//! | Monte-Carlo trial | `0x1_0000_0000 + trial`|
//! | tests             | `0xF000 + n`           |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Init,
    Noise { layer: usize },
    Trial { index: u64 },
    Test(u64),
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Data => 0x0001,
            Stream::Init => 0x0002,
            Stream::Noise { layer } => 0x0100 + layer as u64,
            Stream::Trial { index } => 0x1_0000_0000 + index,
            Stream::Test(n) => 0xF000 + n,
        }
    }
}

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
