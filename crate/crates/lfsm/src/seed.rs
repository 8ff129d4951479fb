use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Deterministic RNG address: a master seed plus a stream index.
///
/// Streams with the same master seed are statistically independent, and a
/// given (master, stream) pair always yields the same draws no matter how
/// many worker threads are running or in which order streams are consumed.
/// Monte Carlo replication `i` uses stream `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    /// Instantiate the RNG for this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}
