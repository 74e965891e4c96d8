//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha` 0.9),
//! seeded with `ChaCha8Rng::seed_from_u64(seed)` and then switched to a fixed
//! stream per purpose, so dictionary draws and signal draws made from the
//! same seed never share keystream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Vector;

pub const RNG_NAME: &str = "chacha8/seed_from_u64/rand_chacha-0.9";

/// Independent keystreams, one per consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Dictionary = 1,
    Instance = 2,
    Subset = 3,
}

pub fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub(crate) fn gaussian_entries<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// A standard Gaussian vector scaled to unit expected norm.
pub fn gaussian_vector<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    let scale = 1.0 / (dim as f64).sqrt();
    Vector::new(gaussian_entries(rng, dim).into_iter().map(|x| x * scale).collect())
        .expect("gaussian draws are finite")
}
