//! The slope field `alpha(z) = sup_{t>0} (f(z + t e1) - f(z)) / t`.
//!
//! On a grid row the supremum runs over the `t -> 0` candidate (the convolved
//! `df1`) and the chords to every cell further right. The fast path sweeps the
//! row right to left while keeping the upper convex hull of the cells already
//! seen; the best chord from a new cell is the tangent to that hull, which is
//! the hull's first vertex once the cell is pushed. Ties go to the smallest
//! `t`, with the derivative candidate counting as `t = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSample, Grid, GridSpec};
use crate::par;

#[inline]
fn chord(f: &[f64], i: usize, j: usize, h: f64) -> f64 {
    (f[j] - f[i]) / ((j - i) as f64 * h)
}

fn check_row(f: &[f64], df1: &[f64], h: f64) -> Result<()> {
    if f.len() != df1.len() {
        return Err(Error::Shape(format!(
            "f row has {} cells, df1 row has {}",
            f.len(),
            df1.len()
        )));
    }
    if f.len() < 2 {
        return Err(Error::Shape(format!(
            "row needs at least 2 cells, got {}",
            f.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Parameter(format!(
            "spacing must be positive, got {h}"
        )));
    }
    Ok(())
}

/// Row sweep in `O(n)`; returns `(alpha, t)` with `t` in length units.
pub fn slope_row_hull(f: &[f64], df1: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_row(f, df1, h)?;
    let n = f.len();
    let mut alpha = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in (0..n).rev() {
        // Drop vertices strictly below the chord from i to the next vertex;
        // they can never be a tangent point for i or anything left of it.
        while hull.len() >= 2 {
            let a = hull[hull.len() - 1];
            let b = hull[hull.len() - 2];
            if chord(f, i, a, h) < chord(f, i, b, h) {
                hull.pop();
            } else {
                break;
            }
        }
        let (mut best, mut arg) = (df1[i], 0.0);
        if let Some(&top) = hull.last() {
            let s = chord(f, i, top, h);
            if s > best {
                best = s;
                arg = (top - i) as f64 * h;
            }
        }
        alpha[i] = best;
        t[i] = arg;
        hull.push(i);
    }
    Ok((alpha, t))
}

/// Direct `O(n^2)` evaluation of the same supremum; the oracle for
/// [`slope_row_hull`].
pub fn slope_row_bruteforce(f: &[f64], df1: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_row(f, df1, h)?;
    Ok(windowed_row(f, df1, h, f.len()))
}

/// Supremum restricted to chords of at most `max_offset` cells.
fn windowed_row(f: &[f64], df1: &[f64], h: f64, max_offset: usize) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    let mut alpha = vec![0.0; n];
    let mut t = vec![0.0; n];
    for i in 0..n {
        let (mut best, mut arg) = (df1[i], 0.0);
        let end = (i + max_offset).min(n - 1);
        for j in i + 1..=end {
            let s = chord(f, i, j, h);
            if s > best {
                best = s;
                arg = (j - i) as f64 * h;
            }
        }
        alpha[i] = best;
        t[i] = arg;
    }
    (alpha, t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeField {
    pub spec: GridSpec,
    pub alpha: Grid,
    /// Maximizing ray length; 0 when the derivative candidate wins.
    pub argmax_t: Grid,
    /// Number of right-edge columns whose ray is too short to trust.
    pub margin: usize,
    /// Ray radius `R` when the supremum was restricted to `0 < t < R`.
    pub truncation: Option<f64>,
}

impl SlopeField {
    /// Number of leading columns outside the margin.
    pub fn usable_nx(&self) -> usize {
        self.spec.nx.saturating_sub(self.margin)
    }

    pub fn in_margin(&self, i: usize) -> bool {
        i >= self.usable_nx()
    }
}

/// Ray length (in cells) that a cell needs before its windowed supremum can be
/// trusted at levels `>= level_min`.
///
/// The windowed supremum misses the true one only if `f(z + t e1) - f(z)`
/// exceeds `level_min * t` for some `t` beyond the window. The increment is
/// centered Gaussian with variance at most `2 K(0)` when `K >= 0` (at most
/// `4 K(0)` in general, which is used here); a union bound over unit blocks
/// `[L + n, L + n + 1]` gives the tail `sum_n exp(-(level_min (L + n))^2 /
/// (8 K(0)))`, and the margin is the smallest multiple of `h` making it at
/// most `tol`. This is a heuristic bound, not a proof: the supremum inside
/// each block is not accounted for.
pub fn ray_margin(k0: f64, level_min: f64, h: f64, tol: f64) -> usize {
    if k0 <= 0.0 {
        return 0;
    }
    if level_min <= 0.0 {
        return usize::MAX;
    }
    let tail = |len: f64| {
        let mut s = 0.0;
        for n in 0..10_000 {
            let x = level_min * (len + n as f64);
            let term = (-(x * x) / (8.0 * k0)).exp();
            s += term;
            if term < 1e-18 {
                break;
            }
        }
        s
    };
    let mut cells = 0usize;
    while tail(cells as f64 * h) > tol {
        cells += 1;
        if cells > 1 << 24 {
            return usize::MAX;
        }
    }
    cells
}

/// Applies the hull sweep to every row. `margin` is clamped to the width.
pub fn slope_field(fs: &FieldSample, margin: usize) -> SlopeField {
    slope_field_from_rows(&fs.spec, &fs.f, &fs.df1, margin)
}

/// [`slope_field`] from the value and `e1`-derivative grids alone.
pub fn slope_field_from_rows(spec: &GridSpec, f: &Grid, df1: &Grid, margin: usize) -> SlopeField {
    let rows = par::map_range(spec.ny, |j| {
        slope_row_hull(f.row(j), df1.row(j), spec.h).unwrap_or_else(|_| {
            // single-column grids: only the derivative candidate exists
            (df1.row(j).to_vec(), vec![0.0; spec.nx])
        })
    });
    assemble(spec, rows, margin.min(spec.nx), None)
}

fn assemble(
    spec: &GridSpec,
    rows: Vec<(Vec<f64>, Vec<f64>)>,
    margin: usize,
    truncation: Option<f64>,
) -> SlopeField {
    let mut alpha = Grid::zeros(spec.nx, spec.ny);
    let mut argmax_t = Grid::zeros(spec.nx, spec.ny);
    for (j, (a, t)) in rows.into_iter().enumerate() {
        alpha.data[j * spec.nx..(j + 1) * spec.nx].copy_from_slice(&a);
        argmax_t.data[j * spec.nx..(j + 1) * spec.nx].copy_from_slice(&t);
    }
    SlopeField {
        spec: spec.clone(),
        alpha,
        argmax_t,
        margin,
        truncation,
    }
}

/// Largest chord offset (in cells) with length strictly below `radius`.
pub fn window_cells(radius: f64, h: f64) -> usize {
    let k = (radius / h).ceil();
    if k < 1.0 {
        0
    } else {
        k as usize - 1
    }
}

/// Slope field with the supremum restricted to rays shorter than `radius`,
/// computed from whatever field `fs` holds. The margin is the window width.
pub fn windowed_slope_field(fs: &FieldSample, radius: f64) -> SlopeField {
    let spec = &fs.spec;
    let m = window_cells(radius, spec.h);
    let rows = par::map_range(spec.ny, |j| {
        let (f, d) = (fs.f.row(j), fs.df1.row(j));
        if m + 1 >= spec.nx && spec.nx >= 2 {
            slope_row_hull(f, d, spec.h).expect("row checked")
        } else {
            windowed_row(f, d, spec.h, m)
        }
    });
    assemble(spec, rows, m.min(spec.nx), Some(radius))
}

/// `alpha_R` from `f_R`: supremum over `0 < r < R`.
pub fn truncated_slope_field(fs_r: &FieldSample) -> Result<SlopeField> {
    let r = fs_r.truncation.ok_or_else(|| {
        Error::Contract("truncated slope field needs a truncated field sample".into())
    })?;
    Ok(windowed_slope_field(fs_r, r))
}

fn check_cell(sf: &SlopeField, cell: (usize, usize)) -> Result<()> {
    let (i, j) = cell;
    if i >= sf.spec.nx || j >= sf.spec.ny {
        return Err(Error::Bounds(format!(
            "cell ({i}, {j}) outside {}x{} grid",
            sf.spec.nx, sf.spec.ny
        )));
    }
    if sf.in_margin(i) {
        return Err(Error::Bounds(format!(
            "cell ({i}, {j}) lies in the {}-column boundary margin",
            sf.margin
        )));
    }
    Ok(())
}

/// `grad alpha = (grad f(z + T e1) - grad f(z)) / T`, or the first row of
/// the Hessian when `T = 0`.
pub fn slope_gradient(fs: &FieldSample, sf: &SlopeField, cell: (usize, usize)) -> Result<[f64; 2]> {
    check_cell(sf, cell)?;
    let (i, j) = cell;
    let t = sf.argmax_t.at(i, j);
    if t == 0.0 {
        return Ok([fs.d2f11.at(i, j), fs.d2f12.at(i, j)]);
    }
    let k = i + (t / sf.spec.h).round() as usize;
    Ok([
        (fs.df1.at(k, j) - fs.df1.at(i, j)) / t,
        (fs.df2.at(k, j) - fs.df2.at(i, j)) / t,
    ])
}

/// Gap between the best candidate and the best one outside its peak.
///
/// The peak is the run of candidates around the maximizer that decreases
/// monotonically away from it; the gap is `+inf` when every candidate belongs
/// to it. Small gaps flag cells near the set where two separated rays tie and
/// `alpha` is not differentiable.
pub fn maximizer_gap(fs: &FieldSample, sf: &SlopeField, cell: (usize, usize)) -> Result<f64> {
    check_cell(sf, cell)?;
    let (i, j) = cell;
    let h = sf.spec.h;
    let f = fs.f.row(j);
    let limit = sf.truncation.map_or(sf.spec.nx, |r| window_cells(r, h));
    let end = (i + limit).min(sf.spec.nx - 1);
    let cand: Vec<f64> = std::iter::once(fs.df1.at(i, j))
        .chain((i + 1..=end).map(|k| chord(f, i, k, h)))
        .collect();
    let star = (sf.argmax_t.at(i, j) / h).round() as usize;
    let best = cand[star];
    let mut lo = star;
    while lo > 0 && cand[lo - 1] <= cand[lo] {
        lo -= 1;
    }
    let mut hi = star;
    while hi + 1 < cand.len() && cand[hi + 1] <= cand[hi] {
        hi += 1;
    }
    let second = cand[..lo]
        .iter()
        .chain(&cand[hi + 1..])
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best - second)
}

/// Summary of a slope field restricted to its usable columns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub cells: usize,
    pub positive_fraction: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub max_t: f64,
}

pub fn summarize(sf: &SlopeField) -> SlopeSummary {
    let nx = sf.usable_nx();
    let mut cells = 0usize;
    let (mut pos, mut min, mut max, mut sum, mut max_t) =
        (0usize, f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0f64);
    for j in 0..sf.spec.ny {
        for i in 0..nx {
            let a = sf.alpha.at(i, j);
            cells += 1;
            pos += usize::from(a > 0.0);
            min = min.min(a);
            max = max.max(a);
            sum += a;
            max_t = max_t.max(sf.argmax_t.at(i, j));
        }
    }
    SlopeSummary {
        cells,
        positive_fraction: pos as f64 / cells.max(1) as f64,
        min,
        max,
        mean: sum / cells.max(1) as f64,
        max_t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Derivs;

    #[test]
    fn linear_decrease_has_constant_slope() {
        let h = 0.5;
        let f: Vec<f64> = (0..20).map(|i| -(i as f64) * h).collect();
        let d = vec![-1.0; 20];
        let (a, t) = slope_row_hull(&f, &d, h).unwrap();
        assert!(a.iter().all(|&x| x == -1.0));
        assert!(t.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_row_has_zero_slope() {
        let (a, t) = slope_row_hull(&[2.0; 9], &[0.0; 9], 0.1).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));
        assert!(t.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_point_row() {
        let (a, t) = slope_row_bruteforce(&[0.0, 1.0], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!((a[0], t[0]), (1.0, 1.0));
        assert_eq!(
            slope_row_hull(&[0.0, 1.0], &[0.0, 0.0], 1.0).unwrap(),
            (a, t)
        );
    }

    #[test]
    fn sine_derivative_wins_at_origin() {
        let h = 0.01;
        let f: Vec<f64> = (0..600).map(|i| (i as f64 * h).sin()).collect();
        let d: Vec<f64> = (0..600).map(|i| (i as f64 * h).cos()).collect();
        let (a, t) = slope_row_bruteforce(&f, &d, h).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-4);
        assert_eq!(t[0], 0.0);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            slope_row_hull(&[0.0; 3], &[0.0; 2], 1.0),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            slope_row_bruteforce(&[0.0; 3], &[0.0; 4], 1.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn margin_grows_as_level_drops() {
        let k0 = std::f64::consts::PI;
        let a = ray_margin(k0, 2.0, 0.25, 1e-3);
        let b = ray_margin(k0, 1.0, 0.25, 1e-3);
        let c = ray_margin(k0, 0.5, 0.25, 1e-3);
        assert!(a < b && b < c, "{a} {b} {c}");
        assert_eq!(ray_margin(k0, 0.0, 0.25, 1e-3), usize::MAX);
    }

    fn plane_sample(nx: usize, ny: usize, h: f64) -> FieldSample {
        let spec = GridSpec {
            origin: [0.0, 0.0],
            h,
            nx,
            ny,
            pad: 0,
        };
        FieldSample::from_analytic(&spec, |x, _| Derivs {
            v: -x,
            dx: -1.0,
            ..Default::default()
        })
    }

    #[test]
    fn plane_field() {
        let fs = plane_sample(30, 5, 0.1);
        let sf = slope_field(&fs, 4);
        for j in 0..5 {
            for i in 0..sf.usable_nx() {
                assert!((sf.alpha.at(i, j) + 1.0).abs() < 1e-12);
                let g = slope_gradient(&fs, &sf, (i, j)).unwrap();
                assert_eq!(g, [0.0, 0.0]);
            }
        }
        assert!(slope_gradient(&fs, &sf, (29, 0)).is_err());
    }

    #[test]
    fn truncated_requires_radius() {
        let fs = plane_sample(10, 2, 0.1);
        assert!(matches!(
            truncated_slope_field(&fs),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn subcell_radius_leaves_derivative_only() {
        let spec = GridSpec {
            origin: [0.0, 0.0],
            h: 0.2,
            nx: 16,
            ny: 3,
            pad: 0,
        };
        let fs = FieldSample::from_analytic(&spec, |x, y| {
            let v = (1.3 * x).sin() + (0.7 * y).cos();
            Derivs {
                v,
                dx: 1.3 * (1.3 * x).cos(),
                ..Default::default()
            }
        })
        .with_truncation(Some(0.15));
        let sf = truncated_slope_field(&fs).unwrap();
        assert_eq!(sf.alpha, fs.df1);
        assert!(sf.argmax_t.data.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn window_cells_is_strict() {
        assert_eq!(window_cells(1.0, 0.25), 3);
        assert_eq!(window_cells(1.1, 0.25), 4);
        assert_eq!(window_cells(0.1, 0.25), 0);
    }
}
