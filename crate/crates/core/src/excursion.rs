//! Excursion sets `{alpha <= l}`: labelling, crossings, separating loops in
//! annuli, and Monte Carlo estimators of crossing probabilities.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sample_white_noise, FieldSynth, Grid, GridSpec};
use crate::kernel::{Covariance, KernelSpec};
use crate::lattice::{dijkstra_graph, neighbors, CellRect, Connectivity};
use crate::par;
use crate::slope::{ray_margin, slope_field_from_rows, SlopeField};
use crate::stats::{wilson, Interval};
use crate::unionfind::UnionFind;

/// Label of cells outside the open set.
pub const CLOSED: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Left side to right side.
    Horizontal,
    /// Bottom row to top row.
    Vertical,
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" | "h" => Ok(Self::Horizontal),
            "vertical" | "v" => Ok(Self::Vertical),
            _ => Err(Error::Config(format!("unknown direction `{s}`"))),
        }
    }
}

/// Open cells of `{alpha <= level}` with their connected components.
///
/// Cells in the right-hand ray margin are never open.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcursionMask {
    pub spec: GridSpec,
    pub level: f64,
    pub open: Vec<bool>,
    pub connectivity: Connectivity,
    /// Component id per cell, [`CLOSED`] for closed cells. Ids are assigned in
    /// row-major order of each component's first cell.
    pub labels: Vec<u32>,
    pub n_components: u32,
    pub margin: usize,
}

pub fn threshold(sf: &SlopeField, level: f64, connectivity: Connectivity) -> ExcursionMask {
    let usable = sf.usable_nx();
    let nx = sf.spec.nx;
    let open: Vec<bool> = sf
        .alpha
        .data
        .iter()
        .enumerate()
        .map(|(k, &a)| k % nx < usable && a <= level)
        .collect();
    ExcursionMask::from_open(sf.spec.clone(), level, open, connectivity, sf.margin)
}

impl ExcursionMask {
    /// Labels a given open set. Margin cells are forced closed.
    pub fn from_open(
        spec: GridSpec,
        level: f64,
        mut open: Vec<bool>,
        connectivity: Connectivity,
        margin: usize,
    ) -> Self {
        let (nx, ny) = (spec.nx, spec.ny);
        assert_eq!(open.len(), nx * ny, "open set does not match the grid");
        let usable = nx.saturating_sub(margin);
        for (k, o) in open.iter_mut().enumerate() {
            if k % nx >= usable {
                *o = false;
            }
        }
        let mut uf = UnionFind::new(nx * ny);
        // Backward-looking neighbours suffice for a single pass.
        let back: &[(i32, i32)] = match connectivity {
            Connectivity::Four => &[(-1, 0), (0, -1)],
            Connectivity::Eight => &[(-1, 0), (0, -1), (-1, -1), (1, -1)],
        };
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if !open[k] {
                    continue;
                }
                for &(dx, dy) in back {
                    let (x, y) = (i as i64 + dx as i64, j as i64 + dy as i64);
                    if x >= 0 && y >= 0 && (x as usize) < nx && open[y as usize * nx + x as usize] {
                        uf.union(k, y as usize * nx + x as usize);
                    }
                }
            }
        }
        let mut labels = vec![CLOSED; nx * ny];
        let mut root_label = vec![CLOSED; nx * ny];
        let mut n_components = 0u32;
        for k in 0..nx * ny {
            if open[k] {
                let r = uf.find(k);
                if root_label[r] == CLOSED {
                    root_label[r] = n_components;
                    n_components += 1;
                }
                labels[k] = root_label[r];
            }
        }
        Self {
            spec,
            level,
            open,
            connectivity,
            labels,
            n_components,
            margin,
        }
    }

    pub fn usable_nx(&self) -> usize {
        self.spec.nx.saturating_sub(self.margin)
    }

    pub fn is_open(&self, i: usize, j: usize) -> bool {
        self.open[j * self.spec.nx + i]
    }

    pub fn label(&self, i: usize, j: usize) -> Option<u32> {
        let l = self.labels[j * self.spec.nx + i];
        (l != CLOSED).then_some(l)
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    pub fn component_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_components as usize];
        for &l in &self.labels {
            if l != CLOSED {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Row-major cell indices of component `id`.
    pub fn component_cells(&self, id: u32) -> Result<Vec<usize>> {
        if id >= self.n_components {
            return Err(Error::UnknownComponent(id));
        }
        Ok((0..self.labels.len())
            .filter(|&k| self.labels[k] == id)
            .collect())
    }

    /// The open set as bytes (1 open, 0 closed), row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.open.iter().map(|&o| u8::from(o)).collect()
    }

    pub(crate) fn check_rect(&self, rect: &CellRect) -> Result<()> {
        rect.check_within(self.usable_nx(), self.spec.ny)
    }

    /// Errors unless `(i, j)` lies in the usable window.
    pub fn check_cell(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.usable_nx() || j >= self.spec.ny {
            return Err(Error::Bounds(format!(
                "cell ({i}, {j}) outside the {}x{} usable window",
                self.usable_nx(),
                self.spec.ny
            )));
        }
        Ok(())
    }
}

/// Whether cells passing `pass` connect the two sides of `rect` in `dir`.
fn spans(
    rect: &CellRect,
    dir: Direction,
    conn: Connectivity,
    pass: impl Fn(usize, usize) -> bool,
) -> bool {
    let (w, hgt) = (rect.nx, rect.ny);
    let local = |i: usize, j: usize| pass(rect.i + i, rect.j + j);
    let mut seen = vec![false; w * hgt];
    let mut queue = VecDeque::new();
    let starts: Vec<(usize, usize)> = match dir {
        Direction::Horizontal => (0..hgt).map(|j| (0, j)).collect(),
        Direction::Vertical => (0..w).map(|i| (i, 0)).collect(),
    };
    for (i, j) in starts {
        if local(i, j) {
            seen[j * w + i] = true;
            queue.push_back((i, j));
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        let done = match dir {
            Direction::Horizontal => i + 1 == w,
            Direction::Vertical => j + 1 == hgt,
        };
        if done {
            return true;
        }
        for (x, y, _, _) in neighbors(i, j, w, hgt, conn) {
            if !seen[y * w + x] && local(x, y) {
                seen[y * w + x] = true;
                queue.push_back((x, y));
            }
        }
    }
    false
}

/// Whether one component of `mask ∩ rect` touches both sides of `rect`.
pub fn crossing(mask: &ExcursionMask, rect: &CellRect, dir: Direction) -> Result<bool> {
    mask.check_rect(rect)?;
    Ok(spans(rect, dir, mask.connectivity, |i, j| {
        mask.is_open(i, j)
    }))
}

/// Crossing of `rect` by closed cells under the dual connectivity.
pub fn closed_crossing(mask: &ExcursionMask, rect: &CellRect, dir: Direction) -> Result<bool> {
    mask.check_rect(rect)?;
    Ok(spans(rect, dir, mask.connectivity.dual(), |i, j| {
        !mask.is_open(i, j)
    }))
}

/// Smallest level at which `alpha` crosses `rect` in `dir`.
///
/// Cells are switched on in increasing order of `alpha`; the answer is the
/// value that first joins the two sides.
pub fn crossing_threshold(
    alpha: &Grid,
    rect: &CellRect,
    dir: Direction,
    conn: Connectivity,
) -> Result<f64> {
    rect.check_within(alpha.nx, alpha.ny)?;
    let (w, hgt) = (rect.nx, rect.ny);
    let n = w * hgt;
    let (src, dst) = (n, n + 1);
    let mut order: Vec<usize> = (0..n).collect();
    let value = |k: usize| alpha.at(rect.i + k % w, rect.j + k / w);
    order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
    let mut on = vec![false; n];
    let mut uf = UnionFind::new(n + 2);
    for k in order {
        on[k] = true;
        let (i, j) = (k % w, k / w);
        let (first, last) = match dir {
            Direction::Horizontal => (i == 0, i + 1 == w),
            Direction::Vertical => (j == 0, j + 1 == hgt),
        };
        if first {
            uf.union(k, src);
        }
        if last {
            uf.union(k, dst);
        }
        for (x, y, _, _) in neighbors(i, j, w, hgt, conn) {
            if on[y * w + x] {
                uf.union(k, y * w + x);
            }
        }
        if uf.same(src, dst) {
            return Ok(value(k));
        }
    }
    unreachable!("a fully open rectangle always crosses")
}

/// Square annulus `r_in < |z - center|_inf <= r_out`, in cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annulus {
    pub center: (usize, usize),
    pub r_in: usize,
    pub r_out: usize,
}

impl Annulus {
    pub fn new(center: (usize, usize), r_in: usize, r_out: usize) -> Result<Self> {
        if r_in == 0 || r_in >= r_out {
            return Err(Error::Parameter(format!(
                "annulus needs 0 < r_in < r_out, got {r_in}, {r_out}"
            )));
        }
        Ok(Self {
            center,
            r_in,
            r_out,
        })
    }

    /// `[-r, 2r]^2 \ [0, r]^2` around the corner cell `corner`; `r` even.
    pub fn around_square(corner: (usize, usize), r: usize) -> Result<Self> {
        if r < 2 || !r.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "square side must be even and >= 2, got {r}"
            )));
        }
        Self::new((corner.0 + r / 2, corner.1 + r / 2), r / 2, r / 2 + r)
    }

    /// Chebyshev distance of a cell to the center.
    pub fn radius_of(&self, i: usize, j: usize) -> usize {
        i.abs_diff(self.center.0).max(j.abs_diff(self.center.1))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let r = self.radius_of(i, j);
        r > self.r_in && r <= self.r_out
    }

    fn check(&self, mask: &ExcursionMask) -> Result<()> {
        let (ci, cj) = self.center;
        if ci < self.r_out
            || cj < self.r_out
            || ci + self.r_out >= mask.usable_nx()
            || cj + self.r_out >= mask.spec.ny
        {
            return Err(Error::Bounds(format!(
                "annulus of outer radius {} at ({ci}, {cj}) leaves the usable window",
                self.r_out
            )));
        }
        Ok(())
    }
}

/// A circuit in the open set separating the inner square from the outside.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopResult {
    pub length: f64,
    /// Cells of the circuit, starting and ending on the cut.
    pub cells: Vec<usize>,
}

/// Whether the hole reaches the outer rim through closed annulus cells.
fn closed_connects(mask: &ExcursionMask, a: &Annulus) -> bool {
    let (nx, ny) = (mask.spec.nx, mask.spec.ny);
    let conn = mask.connectivity.dual();
    let pass = |i: usize, j: usize| {
        let r = a.radius_of(i, j);
        r <= a.r_in || (r <= a.r_out && !mask.is_open(i, j))
    };
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::new();
    let (ci, cj) = a.center;
    seen[cj * nx + ci] = true;
    queue.push_back((ci, cj));
    while let Some((i, j)) = queue.pop_front() {
        if a.radius_of(i, j) == a.r_out {
            return true;
        }
        for (x, y, _, _) in neighbors(i, j, nx, ny, conn) {
            if !seen[y * nx + x] && pass(x, y) {
                seen[y * nx + x] = true;
                queue.push_back((x, y));
            }
        }
    }
    false
}

/// Shortest open circuit in the annulus around its hole, if any.
///
/// Existence is decided by duality (no closed dual-connected path from the
/// hole to the outer rim). The circuit is found on a two-sheeted cover of the
/// annulus: steps across the ray `y = cj + 1/2, x > ci` switch sheets, so a
/// walk from a cut cell on one sheet to its copy on the other winds around
/// the hole an odd number of times.
pub fn annulus_loop(mask: &ExcursionMask, a: &Annulus) -> Result<Option<LoopResult>> {
    a.check(mask)?;
    if closed_connects(mask, a) {
        return Ok(None);
    }
    let (nx, ny) = (mask.spec.nx, mask.spec.ny);
    let n = nx * ny;
    let (ci, cj) = a.center;
    let conn = mask.connectivity;
    let crosses = |i: usize, j: usize, x: usize, y: usize| {
        let rows = (j == cj && y == cj + 1) || (j == cj + 1 && y == cj);
        rows && i + x > 2 * ci
    };
    let mut best: Option<LoopResult> = None;
    let mut best_steps = None;
    for u in ci + a.r_in + 1..=ci + a.r_out {
        let start = cj * nx + u;
        if !mask.open[start] {
            continue;
        }
        let target = n + start;
        let sp = dijkstra_graph(
            2 * n,
            &[start],
            |node, out| {
                let (sheet, c) = (node / n, node % n);
                let (i, j) = (c % nx, c / nx);
                for (x, y, dx, dy) in neighbors(i, j, nx, ny, conn) {
                    if a.contains(x, y) && mask.is_open(x, y) {
                        let flip = usize::from(crosses(i, j, x, y));
                        out.push(((sheet ^ flip) * n + y * nx + x, dx != 0 && dy != 0));
                    }
                }
            },
            |node| node == target,
        );
        if let Some(d) = sp.dist[target] {
            if best_steps.is_none_or(|b| d < b) {
                best_steps = Some(d);
                let cells = sp.path_to(target).into_iter().map(|k| k % n).collect();
                best = Some(LoopResult {
                    length: d.length(mask.spec.h),
                    cells,
                });
            }
        }
    }
    Ok(best)
}

/// Monte Carlo setting for crossing events of a scaled rectangle.
///
/// The rectangle `[0, width] x [0, height]` (length units) is scaled by
/// `lambda`, rounded to whole cells, and placed at the lower-left of a window
/// with ray margin on its right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingSetup {
    pub kernel: KernelSpec,
    pub h: f64,
    pub rect: [f64; 2],
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default = "default_connectivity")]
    pub connectivity: Connectivity,
    /// Lowest level the slope field must be exact at; sets the ray margin.
    pub margin_level: f64,
    #[serde(default = "default_margin_tol")]
    pub margin_tol: f64,
}

fn default_direction() -> Direction {
    Direction::Horizontal
}

fn default_connectivity() -> Connectivity {
    Connectivity::Eight
}

fn default_margin_tol() -> f64 {
    1e-3
}

impl CrossingSetup {
    pub fn new(kernel: KernelSpec, h: f64, rect: [f64; 2], margin_level: f64) -> Self {
        Self {
            kernel,
            h,
            rect,
            direction: default_direction(),
            connectivity: default_connectivity(),
            margin_level,
            margin_tol: default_margin_tol(),
        }
    }

    /// Ray margin in cells.
    pub fn margin_cells(&self) -> Result<usize> {
        let k0 = Covariance::new(self.kernel.build()?).at([0.0, 0.0]);
        let m = ray_margin(k0, self.margin_level, self.h, self.margin_tol);
        if m == usize::MAX {
            return Err(Error::Config(format!(
                "margin level {} gives an unbounded ray margin; it must be positive",
                self.margin_level
            )));
        }
        Ok(m)
    }

    /// Grid and rectangle for scale `lambda`.
    pub fn layout(&self, lambda: f64) -> Result<(GridSpec, CellRect)> {
        if !(lambda > 0.0 && self.h > 0.0) || self.rect.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config(
                "rectangle, scale and spacing must be positive".into(),
            ));
        }
        let cells = |len: f64| ((lambda * len / self.h).round() as usize).max(1);
        let (w, hgt) = (cells(self.rect[0]), cells(self.rect[1]));
        let kernel = self.kernel.build()?;
        let margin = self.margin_cells()?;
        let spec =
            GridSpec::for_support([0.0, 0.0], self.h, w + margin, hgt, kernel.trunc_radius());
        Ok((spec, CellRect::new(0, 0, w, hgt)))
    }

    /// Per-sample crossing thresholds at scale `lambda` for samples
    /// `0..n` of `seed`.
    pub fn thresholds(&self, lambda: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
        let (spec, rect) = self.layout(lambda)?;
        let kernel = self.kernel.build()?;
        let synth = FieldSynth::new(&kernel, &spec)?;
        let margin = spec.nx - rect.nx;
        let out = par::map_range(n, |s| {
            let noise = sample_white_noise(&spec, seed, s as u64);
            let (f, df1) = synth.value_and_slope(&noise)?;
            let sf = slope_field_from_rows(&spec, &f, &df1, margin);
            crossing_threshold(&sf.alpha, &rect, self.direction, self.connectivity)
        });
        out.into_iter().collect()
    }
}

/// Fraction of samples crossing at one level and scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    pub level: f64,
    pub lambda: f64,
    pub n: usize,
    pub successes: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

impl CrossingEstimate {
    pub fn from_thresholds(thresholds: &[f64], level: f64, lambda: f64, seed: u64) -> Self {
        let n = thresholds.len();
        let successes = thresholds.iter().filter(|&&t| t <= level).count();
        let ci = wilson(successes, n);
        Self {
            level,
            lambda,
            n,
            successes,
            p_hat: successes as f64 / n.max(1) as f64,
            ci_lo: ci.lo,
            ci_hi: ci.hi,
            seed,
        }
    }

    pub fn ci(&self) -> Interval {
        Interval {
            lo: self.ci_lo,
            hi: self.ci_hi,
        }
    }
}

/// Monte Carlo crossing probability of `lambda * rect` at `level`.
///
/// Sample `s` uses noise stream `(seed, s)`, so estimates at different levels
/// share their draws.
pub fn estimate_crossing_probability(
    setup: &CrossingSetup,
    level: f64,
    lambda: f64,
    n_samples: usize,
    seed: u64,
) -> Result<CrossingEstimate> {
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be >= 1".into()));
    }
    if !level.is_finite() {
        return Err(Error::Parameter(format!(
            "level must be finite, got {level}"
        )));
    }
    let thr = setup.thresholds(lambda, n_samples, seed)?;
    Ok(CrossingEstimate::from_thresholds(&thr, level, lambda, seed))
}

/// Outcome of the bisection for the level where a square is crossed with
/// probability one half. This is a finite-size proxy for the critical level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalLevel {
    pub estimate: f64,
    pub bracket: Interval,
    pub side: f64,
    pub probes: Vec<CrossingEstimate>,
    /// Set when a probe ordering contradicts monotonicity beyond the CIs.
    pub non_monotone: bool,
}

impl CriticalLevel {
    pub fn width(&self) -> f64 {
        self.bracket.width()
    }
}

/// Bisection on the level for crossing probability 1/2 of the `side x side`
/// square, on common samples, until the bracket is at most `tol` wide.
pub fn estimate_critical_level(
    setup: &CrossingSetup,
    side: f64,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<CriticalLevel> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be >= 1".into()));
    }
    let square = CrossingSetup {
        rect: [side, side],
        ..setup.clone()
    };
    let thr = square.thresholds(1.0, n_samples, seed)?;
    let probe = |level: f64| CrossingEstimate::from_thresholds(&thr, level, 1.0, seed);
    let min = thr.iter().copied().fold(f64::INFINITY, f64::min);
    let max = thr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = min - tol;
    let mut hi = max;
    let mut probes = vec![probe(lo), probe(hi)];
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let p = probe(mid);
        if p.p_hat >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
        probes.push(p);
    }
    let non_monotone = probes.iter().any(|a| {
        probes
            .iter()
            .any(|b| a.level < b.level && a.ci_lo > b.ci_hi)
    });
    Ok(CriticalLevel {
        estimate: 0.5 * (lo + hi),
        bracket: Interval { lo, hi },
        side,
        probes,
        non_monotone,
    })
}
