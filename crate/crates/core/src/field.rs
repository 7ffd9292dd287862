//! Synthesis of `f = q * W` and its first two derivatives on a grid.
//!
//! White noise is sampled cell by cell on a padded grid (variance `h^2` per
//! cell, hence the factor `h`), and each derivative field is the periodic FFT
//! convolution of the same noise with the matching derivative of `q`. The
//! padding exceeds the kernel support on every side, so the retained window
//! never sees wrap-around.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft2::{good_size, Fft2, C64};
use crate::kernel::{Derivs, Kernel, KernelEval, TruncatedKernel};
use crate::par;
use crate::rng::NormalStream;

/// Discretization of a rectangular window of the plane.
///
/// Cell `(i, j)` sits at `origin + (i h, j h)`; `i` runs along `e1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// Padding in cells on each side of the window.
    pub pad: usize,
}

impl GridSpec {
    /// Window with the smallest padding valid for a kernel of the given
    /// support radius.
    pub fn for_support(origin: [f64; 2], h: f64, nx: usize, ny: usize, support: f64) -> Self {
        let pad = (support / h).ceil() as usize;
        Self {
            origin,
            h,
            nx,
            ny,
            pad,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::Config(format!(
                "grid spacing must be positive, got {}",
                self.h
            )));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config(
                "grid must have at least one cell in each direction".into(),
            ));
        }
        Ok(())
    }

    /// Errors when the padding cannot hold a kernel of radius `support`.
    pub fn check_support(&self, support: f64) -> Result<()> {
        self.check()?;
        let need = (support / self.h).ceil() as usize;
        if self.pad < need {
            return Err(Error::Config(format!(
                "padding of {} cells is smaller than the kernel support ({} cells at h = {})",
                self.pad, need, self.h
            )));
        }
        Ok(())
    }

    /// FFT grid dimensions: at least `n + 2 pad`, rounded up to a 7-smooth size.
    pub fn padded_dims(&self) -> (usize, usize) {
        (
            good_size(self.nx + 2 * self.pad),
            good_size(self.ny + 2 * self.pad),
        )
    }

    pub fn position(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same window geometry, ignoring padding.
    pub fn same_window(&self, other: &GridSpec) -> bool {
        self.origin == other.origin
            && self.h == other.h
            && self.nx == other.nx
            && self.ny == other.ny
    }
}

/// Row-major real array; row `j` holds cells `(0..nx, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                data.push(f(i, j));
            }
        }
        Self { nx, ny, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.nx + i] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.nx..(j + 1) * self.nx]
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// White noise on the padded grid, one standard normal per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseGrid {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
    pub seed: u64,
    pub sample: u64,
}

impl NoiseGrid {
    /// Zero noise with a single unit impulse at padded cell `(i, j)`.
    pub fn impulse(spec: &GridSpec, i: usize, j: usize) -> Self {
        let (nx, ny) = spec.padded_dims();
        let mut data = vec![0.0; nx * ny];
        data[(j + spec.pad) * nx + i + spec.pad] = 1.0;
        Self {
            nx,
            ny,
            data,
            seed: 0,
            sample: 0,
        }
    }
}

/// I.i.d. standard normals on the padded grid of `spec`, addressed by
/// `(seed, sample, cell)`.
pub fn sample_white_noise(spec: &GridSpec, seed: u64, sample: u64) -> NoiseGrid {
    let (nx, ny) = spec.padded_dims();
    let mut data = vec![0.0; nx * ny];
    par::for_each_chunk(&mut data, nx, |j, row| {
        let mut s = NormalStream::new(seed, sample);
        s.fill((j * nx) as u64, row);
    });
    NoiseGrid {
        nx,
        ny,
        data,
        seed,
        sample,
    }
}

/// A sampled field with its derivatives on the window of `spec`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub spec: GridSpec,
    pub f: Grid,
    pub df1: Grid,
    pub df2: Grid,
    pub d2f11: Grid,
    pub d2f12: Grid,
    pub d2f22: Grid,
    pub seed: u64,
    pub sample: u64,
    /// Cutoff radius `R` when this is `f_R`.
    pub truncation: Option<f64>,
}

impl FieldSample {
    /// Deterministic field from a closed-form function returning value and
    /// derivatives at a point.
    pub fn from_analytic(spec: &GridSpec, g: impl Fn(f64, f64) -> Derivs) -> Self {
        let vals: Vec<Derivs> = (0..spec.ny)
            .flat_map(|j| (0..spec.nx).map(move |i| (i, j)))
            .map(|(i, j)| {
                let p = spec.position(i, j);
                g(p[0], p[1])
            })
            .collect();
        let pick = |sel: fn(&Derivs) -> f64| Grid {
            nx: spec.nx,
            ny: spec.ny,
            data: vals.iter().map(sel).collect(),
        };
        Self {
            spec: spec.clone(),
            f: pick(|d| d.v),
            df1: pick(|d| d.dx),
            df2: pick(|d| d.dy),
            d2f11: pick(|d| d.dxx),
            d2f12: pick(|d| d.dxy),
            d2f22: pick(|d| d.dyy),
            seed: 0,
            sample: 0,
            truncation: None,
        }
    }

    pub fn grids(&self) -> [(&'static str, &Grid); 6] {
        [
            ("f", &self.f),
            ("df1", &self.df1),
            ("df2", &self.df2),
            ("d2f11", &self.d2f11),
            ("d2f12", &self.d2f12),
            ("d2f22", &self.d2f22),
        ]
    }

    pub fn with_truncation(mut self, r: Option<f64>) -> Self {
        self.truncation = r;
        self
    }
}

/// Precomputed kernel spectra for repeated synthesis on one grid.
///
/// The six derivative kernels are packed pairwise into three complex arrays
/// (`q + i dq/dx`, ...); the noise is real, so one inverse transform yields two
/// real fields.
pub struct FieldSynth {
    spec: GridSpec,
    fft: Fft2,
    spectra: [Vec<C64>; 3],
    truncation: Option<f64>,
}

impl FieldSynth {
    pub fn new(kernel: &Kernel, spec: &GridSpec) -> Result<Self> {
        Self::from_eval(kernel, spec, None)
    }

    /// Synthesizer for `f_R = (q chi_R) * W`.
    pub fn truncated(kernel: &Kernel, radius: f64, spec: &GridSpec) -> Result<Self> {
        if !(radius >= 1.0) {
            return Err(Error::Parameter(format!(
                "truncation radius must be >= 1, got {radius}"
            )));
        }
        Self::from_eval(&TruncatedKernel { kernel, radius }, spec, Some(radius))
    }

    pub fn from_eval(k: &dyn KernelEval, spec: &GridSpec, truncation: Option<f64>) -> Result<Self> {
        spec.check_support(k.support_radius())?;
        let (nx, ny) = spec.padded_dims();
        let fft = Fft2::new(nx, ny);
        let h = spec.h;
        let offset = |i: usize, n: usize| {
            if i <= n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            }
        };
        let samples: Vec<Derivs> = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| k.derivs(offset(i, nx) * h, offset(j, ny) * h))
            .collect();
        let pack = |a: fn(&Derivs) -> f64, b: fn(&Derivs) -> f64| {
            let data: Vec<C64> = samples.iter().map(|d| C64::new(a(d), b(d))).collect();
            fft.forward(data)
        };
        let spectra = [
            pack(|d| d.v, |d| d.dx),
            pack(|d| d.dy, |d| d.dxx),
            pack(|d| d.dxy, |d| d.dyy),
        ];
        Ok(Self {
            spec: spec.clone(),
            fft,
            spectra,
            truncation,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    fn check_noise(&self, noise: &NoiseGrid) -> Result<()> {
        let (nx, ny) = self.spec.padded_dims();
        if noise.nx != nx || noise.ny != ny {
            return Err(Error::Shape(format!(
                "noise is {}x{}, grid needs {}x{}",
                noise.nx, noise.ny, nx, ny
            )));
        }
        Ok(())
    }

    fn noise_spectrum(&self, noise: &NoiseGrid) -> Vec<C64> {
        self.fft
            .forward(noise.data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    fn convolve_pair(&self, noise_hat: &[C64], which: usize) -> (Grid, Grid) {
        let prod: Vec<C64> = noise_hat
            .iter()
            .zip(&self.spectra[which])
            .map(|(a, b)| a * b)
            .collect();
        let out = self.fft.inverse(prod);
        let scale = self.spec.h / self.fft.len() as f64;
        let (pnx, _) = self.spec.padded_dims();
        let (nx, ny, pad) = (self.spec.nx, self.spec.ny, self.spec.pad);
        let mut re = Grid::zeros(nx, ny);
        let mut im = Grid::zeros(nx, ny);
        for j in 0..ny {
            let src = &out[(j + pad) * pnx + pad..(j + pad) * pnx + pad + nx];
            for (i, c) in src.iter().enumerate() {
                re.data[j * nx + i] = c.re * scale;
                im.data[j * nx + i] = c.im * scale;
            }
        }
        (re, im)
    }

    pub fn synthesize(&self, noise: &NoiseGrid) -> Result<FieldSample> {
        self.check_noise(noise)?;
        let hat = self.noise_spectrum(noise);
        let (f, df1) = self.convolve_pair(&hat, 0);
        let (df2, d2f11) = self.convolve_pair(&hat, 1);
        let (d2f12, d2f22) = self.convolve_pair(&hat, 2);
        Ok(FieldSample {
            spec: self.spec.clone(),
            f,
            df1,
            df2,
            d2f11,
            d2f12,
            d2f22,
            seed: noise.seed,
            sample: noise.sample,
            truncation: self.truncation,
        })
    }

    /// `f` and `df1` only; one inverse transform.
    pub fn value_and_slope(&self, noise: &NoiseGrid) -> Result<(Grid, Grid)> {
        self.check_noise(noise)?;
        let hat = self.noise_spectrum(noise);
        Ok(self.convolve_pair(&hat, 0))
    }

    /// Draws noise for `(seed, sample)` and synthesizes.
    pub fn sample(&self, seed: u64, sample: u64) -> FieldSample {
        let noise = sample_white_noise(&self.spec, seed, sample);
        self.synthesize(&noise).expect("noise drawn on this grid")
    }
}

/// `f = q * W` and its derivatives for the given noise.
pub fn convolve_field(noise: &NoiseGrid, k: &Kernel, spec: &GridSpec) -> Result<FieldSample> {
    FieldSynth::new(k, spec)?.synthesize(noise)
}

/// `f_R = (q chi_R) * W` on the same noise realization.
pub fn truncated_field(
    noise: &NoiseGrid,
    k: &Kernel,
    radius: f64,
    spec: &GridSpec,
) -> Result<FieldSample> {
    FieldSynth::truncated(k, radius, spec)?.synthesize(noise)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(k: &Kernel) -> GridSpec {
        GridSpec::for_support([0.0, 0.0], 0.25, 40, 32, k.trunc_radius())
    }

    #[test]
    fn too_little_padding_is_a_config_error() {
        let k = Kernel::gaussian(1.0, 1.0).unwrap();
        let mut spec = small_spec(&k);
        spec.pad -= 1;
        let noise = NoiseGrid {
            nx: 1,
            ny: 1,
            data: vec![0.0],
            seed: 0,
            sample: 0,
        };
        assert!(matches!(
            convolve_field(&noise, &k, &spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn noise_is_deterministic() {
        let k = Kernel::gaussian(1.0, 1.0).unwrap();
        let spec = small_spec(&k);
        let a = sample_white_noise(&spec, 7, 0);
        let b = sample_white_noise(&spec, 7, 0);
        let c = sample_white_noise(&spec, 8, 0);
        let d = sample_white_noise(&spec, 7, 1);
        assert_eq!(a, b);
        assert_ne!(a.data, c.data);
        assert_ne!(a.data, d.data);
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let k = Kernel::gaussian(1.0, 1.0).unwrap();
        let spec = small_spec(&k);
        let (ci, cj) = (20, 16);
        let fs = convolve_field(&NoiseGrid::impulse(&spec, ci, cj), &k, &spec).unwrap();
        let c = spec.position(ci, cj);
        let mut worst: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let p = spec.position(i, j);
                let d = k.derivs(p[0] - c[0], p[1] - c[1]);
                let want = [d.v, d.dx, d.dy, d.dxx, d.dxy, d.dyy];
                let got = [
                    fs.f.at(i, j),
                    fs.df1.at(i, j),
                    fs.df2.at(i, j),
                    fs.d2f11.at(i, j),
                    fs.d2f12.at(i, j),
                    fs.d2f22.at(i, j),
                ];
                for (w, g) in want.iter().zip(got) {
                    worst = worst.max((spec.h * w - g).abs());
                    peak = peak.max((spec.h * w).abs());
                }
            }
        }
        assert!(worst <= 1e-10 * peak, "worst {worst}, peak {peak}");
    }

    #[test]
    fn impulse_on_truncated_kernel() {
        let k = Kernel::gaussian(1.0, 1.0).unwrap();
        let spec = small_spec(&k);
        let r = 6.0;
        let fs = truncated_field(&NoiseGrid::impulse(&spec, 20, 16), &k, r, &spec).unwrap();
        let t = TruncatedKernel {
            kernel: &k,
            radius: r,
        };
        let c = spec.position(20, 16);
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let p = spec.position(i, j);
                let want = spec.h * t.derivs(p[0] - c[0], p[1] - c[1]).v;
                assert!((fs.f.at(i, j) - want).abs() < 1e-12);
            }
        }
        assert_eq!(fs.truncation, Some(r));
    }

    #[test]
    fn truncation_radius_below_one_is_rejected() {
        let k = Kernel::gaussian(1.0, 1.0).unwrap();
        let spec = small_spec(&k);
        let noise = sample_white_noise(&spec, 1, 0);
        assert!(matches!(
            truncated_field(&noise, &k, 0.5, &spec),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn large_cutoff_is_bitwise_identity() {
        let k = Kernel::gaussian(1.0, 1.0).unwrap();
        let spec = small_spec(&k);
        let noise = sample_white_noise(&spec, 3, 2);
        let f = convolve_field(&noise, &k, &spec).unwrap();
        let fr = truncated_field(&noise, &k, 4.0 * k.trunc_radius(), &spec).unwrap();
        assert_eq!(
            f.grids().map(|g| g.1.clone()),
            fr.grids().map(|g| g.1.clone())
        );
    }

    #[test]
    fn derivative_fields_match_finite_differences() {
        let k = Kernel::gaussian(1.0, 1.0).unwrap();
        let spec = GridSpec::for_support([0.0, 0.0], 0.05, 120, 60, k.trunc_radius());
        let fs = FieldSynth::new(&k, &spec).unwrap().sample(11, 0);
        let h = spec.h;
        let mut worst: f64 = 0.0;
        for j in 1..spec.ny - 1 {
            for i in 1..spec.nx - 1 {
                let cd1 = (fs.f.at(i + 1, j) - fs.f.at(i - 1, j)) / (2.0 * h);
                let cd2 = (fs.f.at(i, j + 1) - fs.f.at(i, j - 1)) / (2.0 * h);
                let cd11 = (fs.df1.at(i + 1, j) - fs.df1.at(i - 1, j)) / (2.0 * h);
                let cd12 = (fs.df1.at(i, j + 1) - fs.df1.at(i, j - 1)) / (2.0 * h);
                worst = worst
                    .max((cd1 - fs.df1.at(i, j)).abs())
                    .max((cd2 - fs.df2.at(i, j)).abs())
                    .max((cd11 - fs.d2f11.at(i, j)).abs())
                    .max((cd12 - fs.d2f12.at(i, j)).abs());
            }
        }
        // third derivatives of f are O(1) for the unit gaussian kernel
        assert!(worst < 5.0 * h * h, "worst {worst}");
    }
}
