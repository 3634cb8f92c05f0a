//! Deterministic randomness streams.
//!
//! Every run owns a single `u64` seed. All randomness consumed during the run
//! is derived from `(seed, purpose tag, index)` triples, never from draw
//! order, so any topological evaluation order of the graph produces the same
//! stream contents.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping the derived streams disjoint.
#[derive(Debug, Clone, Copy)]
pub enum StreamKind {
    /// Oracle-side draws of z at a node (fully stochastic mode).
    Oracle,
    /// Program-side randomness local to one node's query rule.
    Program,
    /// Randomness shared by every query rule and the output rule.
    Shared,
    /// Output-rule randomness.
    Output,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Oracle => 0x4f52_4143,
            StreamKind::Program => 0x50_52_4f_47,
            StreamKind::Shared => 0x53_48_41_52,
            StreamKind::Output => 0x4f_55_54_50,
        }
    }
}

/// splitmix64 finalizer; used to spread structured (seed, tag, index) inputs
/// over the full 64-bit space before seeding ChaCha.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives the RNG for one (seed, purpose, index) cell.
pub fn derive(seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(
        seed ^ splitmix64(kind.tag()) ^ splitmix64(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
    );
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stream for node-local program randomness.
pub fn program_rng(seed: u64, node: usize) -> ChaCha8Rng {
    derive(seed, StreamKind::Program, node as u64)
}

/// Stream for the oracle's z draw at one node.
pub fn oracle_rng(seed: u64, node: usize) -> ChaCha8Rng {
    derive(seed, StreamKind::Oracle, node as u64)
}

/// The shared randomness; identical at every node of a run.
pub fn shared_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    derive(seed, StreamKind::Shared, slot)
}

/// Stream for the output rule.
pub fn output_rng(seed: u64) -> ChaCha8Rng {
    derive(seed, StreamKind::Output, 0)
}
