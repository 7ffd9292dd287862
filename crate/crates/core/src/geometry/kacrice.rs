//! Monte Carlo comparison of the mean level-set length with the Kac-Rice
//! expression `Vol(B) E[|∇α(0)| | α(0) = l] φ₀(l)`.
//!
//! Both sides are computed for the slope field with rays shorter than a fixed
//! window. That field is stationary, so the identity applies to it exactly
//! and the comparison does not depend on a boundary-margin heuristic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSynth, GridSpec};
use crate::geometry::levelset::level_set_length;
use crate::kernel::KernelSpec;
use crate::lattice::CellRect;
use crate::par;
use crate::slope::{slope_gradient, window_cells, windowed_slope_field};
use crate::stats::{bootstrap, quantile, variance, Interval, Z95};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KacRiceSetup {
    pub kernel: KernelSpec,
    pub h: f64,
    /// Rays are restricted to lengths below this.
    pub ray_window: f64,
    /// Side of the square box `B` used for level-set lengths.
    pub box_side: f64,
}

impl KacRiceSetup {
    fn window(&self) -> usize {
        window_cells(self.ray_window, self.h)
    }

    fn box_nodes(&self) -> usize {
        ((self.box_side / self.h).round() as usize).max(1) + 1
    }

    /// Area of `B` as realized on the grid.
    pub fn volume(&self) -> f64 {
        let side = (self.box_nodes() - 1) as f64 * self.h;
        side * side
    }

    fn synth(&self, nx: usize, ny: usize) -> Result<FieldSynth> {
        if !(self.h > 0.0 && self.ray_window > self.h) {
            return Err(Error::Config(
                "ray window must exceed the grid spacing".into(),
            ));
        }
        let kernel = self.kernel.build()?;
        let spec = GridSpec::for_support([0.0, 0.0], self.h, nx, ny, kernel.trunc_radius());
        FieldSynth::new(&kernel, &spec)
    }
}

/// Independent draws of `(α(0), ∇α(0), T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginSamples {
    pub alpha: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub t: Vec<f64>,
    pub seed: u64,
}

impl OriginSamples {
    pub fn grad_norms(&self) -> Vec<f64> {
        self.grad
            .iter()
            .map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt())
            .collect()
    }
}

/// One field draw per sample on a single row starting at the origin.
pub fn sample_alpha_at_origin(setup: &KacRiceSetup, n: usize, seed: u64) -> Result<OriginSamples> {
    let m = setup.window();
    let synth = setup.synth(m + 1, 1)?;
    let rows = par::map_range(n, |s| -> Result<(f64, [f64; 2], f64)> {
        let fs = synth.sample(seed, s as u64);
        let sf = windowed_slope_field(&fs, setup.ray_window);
        Ok((
            sf.alpha.at(0, 0),
            slope_gradient(&fs, &sf, (0, 0))?,
            sf.argmax_t.at(0, 0),
        ))
    });
    let mut out = OriginSamples {
        alpha: Vec::with_capacity(n),
        grad: Vec::with_capacity(n),
        t: Vec::new(),
        seed,
    };
    for r in rows {
        let (a, g, t) = r?;
        out.alpha.push(a);
        out.grad.push(g);
        out.t.push(t);
    }
    Ok(out)
}

/// `σ_l(α, B)` for every level on each of `n` independent draws;
/// `result[draw][level]`.
pub fn level_lengths(
    setup: &KacRiceSetup,
    levels: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let nb = setup.box_nodes();
    let synth = setup.synth(nb + setup.window(), nb)?;
    let rect = CellRect::new(0, 0, nb, nb);
    par::map_range(n, |s| {
        let fs = synth.sample(seed, s as u64);
        let sf = windowed_slope_field(&fs, setup.ray_window);
        levels
            .iter()
            .map(|&l| Ok(level_set_length(&sf.alpha, l, &rect, setup.h)?.length))
            .collect()
    })
    .into_iter()
    .collect()
}

fn gauss(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gaussian kernel density estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub samples: Vec<f64>,
    pub bandwidth: f64,
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let sd = variance(xs).sqrt();
    let iqr = quantile(xs, 0.75) - quantile(xs, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (xs.len() as f64).powf(-0.2)
}

impl DensityEstimate {
    pub fn new(samples: Vec<f64>, bandwidth: Option<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Parameter(
                "density estimate needs at least two samples".into(),
            ));
        }
        let bandwidth = bandwidth.unwrap_or_else(|| silverman_bandwidth(&samples));
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Parameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { samples, bandwidth })
    }

    pub fn eval(&self, u: f64) -> f64 {
        let b = self.bandwidth;
        self.samples
            .iter()
            .map(|&x| gauss((u - x) / b))
            .sum::<f64>()
            / (self.samples.len() as f64 * b)
    }

    /// Range outside which the estimate is below `exp(-50)` of its scale.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .samples
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo - 10.0 * self.bandwidth, hi + 10.0 * self.bandwidth)
    }

    /// Trapezoid integral over [`support`](Self::support).
    pub fn integral(&self) -> f64 {
        let (lo, hi) = self.support();
        let n = (((hi - lo) / (self.bandwidth / 20.0)).ceil() as usize).max(2);
        let du = (hi - lo) / n as f64;
        let mut s = 0.5 * (self.eval(lo) + self.eval(hi));
        for k in 1..n {
            s += self.eval(lo + k as f64 * du);
        }
        s * du
    }
}

/// Kernel-regression estimate of `E[y | x = u]` with a gaussian kernel.
pub fn nadaraya_watson(xs: &[f64], ys: &[f64], u: f64, bandwidth: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let w = gauss((u - x) / bandwidth);
        num += w * y;
        den += w;
    }
    num / den
}

/// One probed level of the comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KacRiceRow {
    pub level: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub lhs_ci: Interval,
    pub rhs: f64,
    pub rhs_se: f64,
    pub rhs_ci: Interval,
    pub density: f64,
    pub conditional_grad: f64,
    /// `|lhs - rhs| <= 1.96 sqrt(lhs_se^2 + rhs_se^2)`.
    pub agree: bool,
}

/// Compares `mean σ_l` over field draws (`sigma[draw][level]`) with
/// `vol · NW(l) · KDE(l)` from origin samples at each level, with percentile
/// bootstrap intervals (`replicates` resamples, seeded by `seed`).
pub fn kac_rice_compare(
    samples: &OriginSamples,
    levels: &[f64],
    bandwidth: Option<f64>,
    vol: f64,
    sigma: &[Vec<f64>],
    replicates: usize,
    seed: u64,
) -> Result<Vec<KacRiceRow>> {
    let lo = samples.alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples
        .alpha
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if let Some(&bad) = levels.iter().find(|&&l| !(lo <= l && l <= hi)) {
        return Err(Error::Support { level: bad, lo, hi });
    }
    if sigma.is_empty() || sigma.iter().any(|row| row.len() != levels.len()) {
        return Err(Error::Shape(
            "need one level-length row per draw, one entry per level".into(),
        ));
    }
    let kde = DensityEstimate::new(samples.alpha.clone(), bandwidth)?;
    let bw = kde.bandwidth;
    let norms = samples.grad_norms();
    let rhs_at = |xs: &[f64], ys: &[f64], l: f64| {
        let dens = xs.iter().map(|&x| gauss((l - x) / bw)).sum::<f64>() / (xs.len() as f64 * bw);
        (dens, nadaraya_watson(xs, ys, l, bw))
    };
    let rhs_stat = |idx: &[usize]| -> Vec<f64> {
        let xs: Vec<f64> = idx.iter().map(|&i| samples.alpha[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| norms[i]).collect();
        levels
            .iter()
            .map(|&l| {
                let (d, g) = rhs_at(&xs, &ys, l);
                vol * d * g
            })
            .collect()
    };
    let lhs_stat = |idx: &[usize]| -> Vec<f64> {
        (0..levels.len())
            .map(|k| idx.iter().map(|&d| sigma[d][k]).sum::<f64>() / idx.len() as f64)
            .collect()
    };
    let all_draws: Vec<usize> = (0..sigma.len()).collect();
    let lhs = lhs_stat(&all_draws);
    let rhs_boot = bootstrap(samples.alpha.len(), replicates, seed, rhs_stat);
    let lhs_boot = bootstrap(
        sigma.len(),
        replicates,
        seed ^ 0x9e37_79b9_7f4a_7c15,
        lhs_stat,
    );
    Ok(levels
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let (density, conditional_grad) = rhs_at(&samples.alpha, &norms, l);
            let rhs = vol * density * conditional_grad;
            let (lhs_se, lhs_ci) = lhs_boot[k];
            let (rhs_se, rhs_ci) = rhs_boot[k];
            let agree = (lhs[k] - rhs).abs() <= Z95 * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
            KacRiceRow {
                level: l,
                lhs: lhs[k],
                lhs_se,
                lhs_ci,
                rhs,
                rhs_se,
                rhs_ci,
                density,
                conditional_grad,
                agree,
            }
        })
        .collect())
}
