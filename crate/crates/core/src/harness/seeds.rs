//! Per-replication seed derivation from one master seed.

/// Independent stream roles drawn from the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Contexts, competing bids and potential outcomes.
    Environment,
    /// Agent-internal randomness (splits, mixing, burn-in bids).
    Agent,
    /// Monte Carlo contexts of the comparator fit.
    Benchmark,
    /// Validation-suite draws.
    Validation,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Environment => 0x656e_7669,
            Stream::Agent => 0x6167_656e,
            Stream::Benchmark => 0x6265_6e63,
            Stream::Validation => 0x7661_6c69,
        }
    }
}

/// One step of SplitMix64.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `index` in `stream`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.tag()).wrapping_add(index))
}
