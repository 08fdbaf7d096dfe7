//! Learned improvement heuristics for routing problems.
//!
//! A self-attention policy picks position pairs for 2-opt style moves on
//! TSP and CVRP solutions and is trained with n-step actor-critic. The crate
//! also carries the hand-crafted first/best-improvement baselines, a
//! Held-Karp oracle, instance generators and TSPLIB/CVRPLIB parsers.

pub mod error;
pub mod io;
pub mod net;
pub mod par;
pub mod routing;
pub mod search;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
