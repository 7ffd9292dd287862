//! Counter-based normal variates.
//!
//! Every standard normal drawn by the laboratory is addressed by the triple
//! `(master seed, sample index, cell index)`. The master seed keys a ChaCha8
//! block function, the sample index selects the ChaCha stream and the cell
//! index selects the word position inside the stream, so any cell can be
//! generated without generating the ones before it. Results therefore do not
//! depend on how work is split across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Words of keystream consumed by one Box-Muller pair (two `u64`).
const WORDS_PER_PAIR: u128 = 4;

#[derive(Clone, Debug)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(master_seed: u64, sample_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(sample_index);
        Self { rng }
    }

    /// Fills `out` with the normals for cells `start .. start + out.len()`.
    pub fn fill(&mut self, start: u64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let mut cell = start;
        let end = start + out.len() as u64;
        self.rng.set_word_pos(u128::from(cell / 2) * WORDS_PER_PAIR);
        let mut k = 0;
        while cell < end {
            let (z0, z1) = self.next_pair();
            if cell.is_multiple_of(2) {
                out[k] = z0;
                k += 1;
                cell += 1;
                if cell < end {
                    out[k] = z1;
                    k += 1;
                    cell += 1;
                }
            } else {
                out[k] = z1;
                k += 1;
                cell += 1;
            }
        }
    }

    pub fn at(&mut self, cell: u64) -> f64 {
        let mut v = [0.0];
        self.fill(cell, &mut v);
        v[0]
    }

    fn next_pair(&mut self) -> (f64, f64) {
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }
}

/// SplitMix64 finalizer, used to derive child seeds from a master seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Small uniform generator for resampling (bootstrap) and similar bookkeeping.
#[derive(Clone, Debug)]
pub struct Uniform {
    rng: ChaCha8Rng,
}

impl Uniform {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        // Lemire's multiply-shift; bias is negligible for the sizes used here.
        ((u128::from(self.rng.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let mut s = NormalStream::new(42, 3);
        let mut all = vec![0.0; 101];
        s.fill(0, &mut all);
        for start in [0u64, 1, 2, 7, 50, 99] {
            let mut part = vec![0.0; (101 - start as usize).min(13)];
            s.fill(start, &mut part);
            assert_eq!(&part[..], &all[start as usize..start as usize + part.len()]);
        }
        assert_eq!(s.at(77), all[77]);
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = NormalStream::new(1, 0);
        let mut b = NormalStream::new(1, 1);
        let mut c = NormalStream::new(2, 0);
        let (x, y, z) = (a.at(0), b.at(0), c.at(0));
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn moments_are_standard() {
        let mut s = NormalStream::new(9, 0);
        let mut v = vec![0.0; 200_000];
        s.fill(0, &mut v);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}
