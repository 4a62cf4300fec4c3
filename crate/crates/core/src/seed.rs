use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Search,
    Gumbel,
    Training,
    Mock,
    Data,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Search => 1,
            Stream::Gumbel => 2,
            Stream::Training => 3,
            Stream::Mock => 4,
            Stream::Data => 5,
        }
    }
}

/// Generator for `stream` under run seed `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// A 64-bit seed for `stream`, for APIs that take a plain seed.
pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    stream_rng(seed, stream).next_u64()
}
