//! Two-dimensional complex FFT on a row-major buffer.
//!
//! The forward transform leaves the spectrum transposed (`nx` rows of length
//! `ny`); the inverse expects that layout and restores the original one. Only
//! pointwise products happen in between, so the layout never matters.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::par;

pub(crate) type C64 = Complex<f64>;

pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_x: planner.plan_fft_inverse(nx),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn forward(&self, data: Vec<C64>) -> Vec<C64> {
        let mut data = data;
        rows(&*self.fwd_x, &mut data, self.nx);
        let mut t = transpose(&data, self.nx, self.ny);
        rows(&*self.fwd_y, &mut t, self.ny);
        t
    }

    /// Unnormalized inverse of [`Fft2::forward`].
    pub fn inverse(&self, spectrum: Vec<C64>) -> Vec<C64> {
        let mut t = spectrum;
        rows(&*self.inv_y, &mut t, self.ny);
        let mut data = transpose(&t, self.ny, self.nx);
        rows(&*self.inv_x, &mut data, self.nx);
        data
    }
}

fn rows(fft: &dyn Fft<f64>, data: &mut [C64], len: usize) {
    // a few rows per task keeps scratch allocation cheap
    let rows_per_task = 16;
    par::for_each_chunk(data, len * rows_per_task, |_, chunk| {
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// `data` has `rows` rows of length `cols`; returns `cols` rows of length `rows`.
fn transpose(data: &[C64], cols: usize, rows: usize) -> Vec<C64> {
    let mut out = vec![C64::default(); data.len()];
    const B: usize = 32;
    for jb in (0..rows).step_by(B) {
        for ib in (0..cols).step_by(B) {
            for j in jb..(jb + B).min(rows) {
                for i in ib..(ib + B).min(cols) {
                    out[i * rows + j] = data[j * cols + i];
                }
            }
        }
    }
    out
}

/// Smallest `n' >= n` whose prime factors are all in {2, 3, 5, 7}.
pub(crate) fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
