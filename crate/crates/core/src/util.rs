//! Deterministic random streams and planning deadlines.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one independent stream identified by `tags` under `seed`.
/// Streams do not depend on the order in which they are created, so work
/// spread over threads stays reproducible.
pub fn stream_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Seed of the stream identified by `tags` under `seed`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for t in tags {
        h = splitmix(h ^ splitmix(*t));
    }
    h
}

#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    end: Option<Instant>,
}

impl Deadline {
    pub fn after_secs(secs: f64) -> Deadline {
        Deadline {
            end: Instant::now().checked_add(Duration::from_secs_f64(secs.max(0.0))),
        }
    }

    pub fn never() -> Deadline {
        Deadline { end: None }
    }

    pub fn expired(&self) -> bool {
        self.end.is_some_and(|e| Instant::now() >= e)
    }
}
