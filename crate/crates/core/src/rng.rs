//! Deterministic random-number streams.
//!
//! Every Monte Carlo task is keyed by a `(seed, stream_id)` pair. The pair maps
//! onto a ChaCha8 key and stream number, so task `i` of a parallel loop always
//! sees the same draws no matter which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Sibling stream with the same seed.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id,
        }
    }

    /// Derived stream family rooted at this stream. `child(k)` for distinct `k`
    /// (or distinct parents) never collide with each other or with the parent.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x6a09_e667_f3bc_c909))),
            stream_id: tag,
        }
    }
}

/// SplitMix64 finalizer; used only to derive child seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
