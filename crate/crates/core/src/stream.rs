//! Per-replication random streams and order-fixed reductions.
//!
//! Replication `r` under master seed `s` always draws from ChaCha8 keyed by
//! `(s, domain)` on stream `r`, so results do not depend on how replications
//! are scheduled across threads. Replications are grouped into fixed-size
//! chunks whose partial results are merged in chunk order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

pub type StreamRng = ChaCha8Rng;

const CHUNK: u64 = 1024;

pub fn substream(seed: u64, domain: u64, replication: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(b"stagewis");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replication);
    rng
}

/// Running mean and second central moment (Welford, with Chan's merge).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// A fixed bank of [`Moments`], one per tracked per-replication scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentBank<const N: usize>(pub [Moments; N]);

impl<const N: usize> Default for MomentBank<N> {
    fn default() -> Self {
        Self([Moments::default(); N])
    }
}

impl<const N: usize> MomentBank<N> {
    pub fn push(&mut self, xs: [f64; N]) {
        for (m, x) in self.0.iter_mut().zip(xs) {
            m.push(x);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (m, o) in self.0.iter_mut().zip(other.0.iter()) {
            m.merge(o);
        }
    }
}

/// Runs `reps` replications of `one` (given its replication index and stream)
/// and merges the per-replication scalars in a fixed order.
pub fn replicate<const N: usize, F>(reps: u64, seed: u64, domain: u64, one: F) -> Result<MomentBank<N>>
where
    F: Fn(u64, &mut StreamRng) -> Result<[f64; N]> + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    let run_chunk = |c: u64| -> Result<MomentBank<N>> {
        let mut bank = MomentBank::default();
        for r in c * CHUNK..((c + 1) * CHUNK).min(reps) {
            let mut rng = substream(seed, domain, r);
            bank.push(one(r, &mut rng)?);
        }
        Ok(bank)
    };

    #[cfg(feature = "parallel")]
    let parts: Vec<Result<MomentBank<N>>> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(run_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<MomentBank<N>>> = (0..chunks).map(run_chunk).collect();

    let mut total = MomentBank::default();
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}
