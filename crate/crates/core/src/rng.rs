//! Seed derivation and stream splitting.
//!
//! Every random quantity is drawn from a `ChaCha8Rng`, which is counter based
//! and portable across platforms. A run seed is expanded into sub-seeds with
//! SplitMix64 mixing over a list of tags (replication index, purpose tag, ...),
//! and matrix columns additionally get their own ChaCha stream number. Column
//! `j` of a matrix therefore depends only on `(seed, j)`: growing `p` never
//! perturbs earlier columns, and replications never share draws.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Purpose tags for [`derive_seed`].
pub mod tag {
    pub const FEATURES: u64 = 0x01;
    pub const RESPONSE: u64 = 0x02;
    pub const KNOCKOFF: u64 = 0x03;
    pub const BETA: u64 = 0x04;
    pub const CHI2: u64 = 0x05;
    pub const REPLICATION: u64 = 0x06;
    pub const RESAMPLE: u64 = 0x07;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`. Order matters.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n x p` matrix of i.i.d. N(0, 1) draws, column `j` from stream `j`.
pub fn normal_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut z = Array2::zeros((n, p));
    for j in 0..p {
        let mut rng = stream_rng(seed, j as u64);
        for i in 0..n {
            z[[i, j]] = rng.sample(StandardNormal);
        }
    }
    z
}
