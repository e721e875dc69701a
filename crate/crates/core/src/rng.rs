//! Counter-keyed random number streams.
//!
//! Every random draw in the engine comes from a stream derived purely from
//! `(master seed, replication, unit, purpose)`. Streams never depend on
//! execution order, so simulations are bit-reproducible across any number of
//! worker threads. Keys are mixed through SplitMix64 and expanded into a
//! ChaCha8 seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; separates draw sequences so that swapping one
/// model component (e.g. the activation mechanism) leaves the others' draws
/// untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Activation,
    Payment,
    Severity,
    /// Bootstrap resampling of covariates for synthetic IBNR claims.
    Covariate,
    /// Residual resampling in the chain-ladder bootstrap.
    Residual,
    /// Process-error draws in the chain-ladder bootstrap.
    Process,
    /// Claim generation in the synthetic-portfolio generator.
    Genesis,
    Closure,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Activation => 1,
            Purpose::Payment => 2,
            Purpose::Severity => 3,
            Purpose::Covariate => 4,
            Purpose::Residual => 5,
            Purpose::Process => 6,
            Purpose::Genesis => 7,
            Purpose::Closure => 8,
        }
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn absorb(state: u64, value: u64) -> u64 {
    let mut s = state ^ value.wrapping_mul(GOLDEN).wrapping_add(0x2545_f491_4f6c_dd1d);
    splitmix64(&mut s)
}

/// Derives independent streams from a master seed.
#[derive(Debug, Clone, Copy)]
pub struct StreamFactory {
    master_seed: u64,
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        StreamFactory { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Stream for `(replication, unit, purpose)`. `unit` is a stable ordinal,
    /// e.g. a claim's position in the portfolio.
    pub fn stream(&self, replication: u64, unit: u64, purpose: Purpose) -> ChaCha8Rng {
        let mut key = absorb(self.master_seed, replication);
        key = absorb(key, unit);
        key = absorb(key, purpose.tag());
        let mut seed = [0u8; 32];
        let mut s = key;
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// The per-claim draw streams used by the simulation routines.
pub struct DrawStreams {
    pub activation: ChaCha8Rng,
    pub payment: ChaCha8Rng,
    pub severity: ChaCha8Rng,
}

impl DrawStreams {
    pub fn for_claim(factory: &StreamFactory, replication: u64, claim_ordinal: u64) -> Self {
        DrawStreams {
            activation: factory.stream(replication, claim_ordinal, Purpose::Activation),
            payment: factory.stream(replication, claim_ordinal, Purpose::Payment),
            severity: factory.stream(replication, claim_ordinal, Purpose::Severity),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let f = StreamFactory::new(42);
        let mut a1 = f.stream(3, 7, Purpose::Severity);
        let mut a2 = f.stream(3, 7, Purpose::Severity);
        let seq1: Vec<u64> = (0..8).map(|_| a1.next_u64()).collect();
        let seq2: Vec<u64> = (0..8).map(|_| a2.next_u64()).collect();
        assert_eq!(seq1, seq2);

        let mut b = f.stream(3, 8, Purpose::Severity);
        let seq3: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(seq1, seq3);

        let mut c = f.stream(3, 7, Purpose::Payment);
        let seq4: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_ne!(seq1, seq4);

        let g = StreamFactory::new(43);
        let mut d = g.stream(3, 7, Purpose::Severity);
        let seq5: Vec<u64> = (0..8).map(|_| d.next_u64()).collect();
        assert_ne!(seq1, seq5);
    }
}
