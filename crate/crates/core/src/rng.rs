//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit `u64` seed. Independent
//! sub-streams (one per chain, one per ensemble member) are ChaCha8 streams
//! keyed by the same seed and distinguished by the stream id, so results do
//! not depend on evaluation order.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{lit, Real};

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn std_normal<T: Real>(rng: &mut SimRng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    lit(z)
}

pub fn std_normal_vec<T: Real>(rng: &mut SimRng, n: usize) -> DVector<T> {
    DVector::from_fn(n, |_, _| std_normal(rng))
}

#[inline]
pub fn uniform<T: Real>(rng: &mut SimRng) -> T {
    let u: f64 = rand::Rng::random(rng);
    lit(u)
}
