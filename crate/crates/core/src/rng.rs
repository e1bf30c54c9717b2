//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose key is the
//! tuple `(seed, domain, a, b)`. A stream depends only on its key, never on
//! how many draws other streams made before it, so attempts can be evaluated
//! by any number of workers in any order and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator handed to simulators, kernels and samplers.
pub type StreamRng = ChaCha8Rng;

/// Domain tags separating the purposes a stream can serve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Prior draws during initialization; `a` = draw index, `b` = retry.
    Init = 1,
    /// Proposals at iteration `t >= 2`; `a` = iteration, `b` = attempt index.
    Attempt = 2,
    /// Simulator retries for a proposal; `a` = iteration, `b` = attempt index.
    Retry = 3,
    /// Center subsampling and fold shuffling for the ratio fit; `a` = iteration.
    RatioFit = 4,
    /// TAR-curve replicates; `a` = iteration, `b` = replicate.
    Tar = 5,
    /// Fixed observed datasets generated by a model; `a` = model tag.
    Observed = 6,
    /// Anything else callers want keyed off the run seed.
    Aux = 7,
}

/// Factory of independent streams for one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, domain: Domain, a: u64, b: u64) -> StreamRng {
        stream_for(self.seed, domain, a, b)
    }

    /// Stream for retry number `retry` of a given attempt. Retry 0 is the
    /// attempt's own stream.
    pub fn retry(&self, iteration: u64, attempt: u64, retry: u32) -> StreamRng {
        if retry == 0 {
            return self.stream(Domain::Attempt, iteration, attempt);
        }
        let mut rng = self.stream(Domain::Retry, iteration, attempt);
        rng.set_stream(u64::from(retry));
        rng
    }
}

/// Builds the stream for an explicit key.
pub fn stream_for(seed: u64, domain: Domain, a: u64, b: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
