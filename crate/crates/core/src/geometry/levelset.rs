//! Level-set length by marching squares and the per-sample coarea identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSample, Grid, GridSpec};
use crate::lattice::CellRect;
use crate::slope::{maximizer_gap, slope_gradient, SlopeField};

/// Length of `{g = level}` inside a box of grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetStats {
    pub level: f64,
    pub rect: CellRect,
    pub length: f64,
    pub segments: usize,
}

/// Point on the edge from corner `a` to corner `b` (local unit square).
fn cut(pa: [f64; 2], pb: [f64; 2], va: f64, vb: f64, level: f64) -> [f64; 2] {
    let t = (level - va) / (vb - va);
    [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
}

/// Calls `emit(p, q)` with the segments of the square whose lower-left node
/// is `(i, j)`, in local units relative to that node.
fn square_segments(
    g: &Grid,
    i: usize,
    j: usize,
    level: f64,
    mut emit: impl FnMut([f64; 2], [f64; 2]),
) {
    const P: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let v = [
        g.at(i, j),
        g.at(i + 1, j),
        g.at(i + 1, j + 1),
        g.at(i, j + 1),
    ];
    let up = v.map(|x| x >= level);
    let mut crossings: [Option<[f64; 2]>; 4] = [None; 4];
    for (a, slot) in crossings.iter_mut().enumerate() {
        let b = (a + 1) % 4;
        if up[a] != up[b] {
            *slot = Some(cut(P[a], P[b], v[a], v[b], level));
        }
    }
    let hits: Vec<usize> = (0..4).filter(|&e| crossings[e].is_some()).collect();
    match hits.len() {
        2 => emit(crossings[hits[0]].unwrap(), crossings[hits[1]].unwrap()),
        4 => {
            // Saddle: the centre value decides which diagonal pair is joined.
            let center_up = 0.25 * (v[0] + v[1] + v[2] + v[3]) >= level;
            let c = |e: usize| crossings[e].unwrap();
            // Corners 0 and 2 share a side. If they are joined through the
            // centre, segments cut off corners 1 and 3; otherwise 0 and 2.
            if center_up == up[0] {
                emit(c(0), c(1));
                emit(c(2), c(3));
            } else {
                emit(c(3), c(0));
                emit(c(1), c(2));
            }
        }
        _ => {}
    }
}

fn check_box(g: &Grid, rect: &CellRect) -> Result<()> {
    if rect.nx < 2 || rect.ny < 2 || rect.i + rect.nx > g.nx || rect.j + rect.ny > g.ny {
        return Err(Error::Bounds(format!(
            "node box {}x{} at ({}, {}) must have two nodes per side and fit in the {}x{} grid",
            rect.nx, rect.ny, rect.i, rect.j, g.nx, g.ny
        )));
    }
    Ok(())
}

/// Marching squares over the squares spanned by the nodes of `rect`, with
/// linear interpolation along edges. Zero-length segments are dropped.
pub fn level_set_length(g: &Grid, level: f64, rect: &CellRect, h: f64) -> Result<LevelSetStats> {
    check_box(g, rect)?;
    let mut length = 0.0;
    let mut segments = 0;
    for j in rect.j..rect.j + rect.ny - 1 {
        for i in rect.i..rect.i + rect.nx - 1 {
            square_segments(g, i, j, level, |p, q| {
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() * h;
                if d > 0.0 {
                    length += d;
                    segments += 1;
                }
            });
        }
    }
    Ok(LevelSetStats {
        level,
        rect: *rect,
        length,
        segments,
    })
}

/// Level-line segments in world coordinates, for rendering.
pub fn level_set_segments(
    g: &Grid,
    spec: &GridSpec,
    level: f64,
    rect: &CellRect,
) -> Result<Vec<[[f64; 2]; 2]>> {
    check_box(g, rect)?;
    let mut out = Vec::new();
    for j in rect.j..rect.j + rect.ny - 1 {
        for i in rect.i..rect.i + rect.nx - 1 {
            let o = spec.position(i, j);
            square_segments(g, i, j, level, |p, q| {
                if p != q {
                    let w = |p: [f64; 2]| [o[0] + p[0] * spec.h, o[1] + p[1] * spec.h];
                    out.push([w(p), w(q)]);
                }
            });
        }
    }
    Ok(out)
}

/// Non-negative, bounded test function of the level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Zero,
    /// `1` on `[lo, hi]`, `0` elsewhere.
    Indicator {
        lo: f64,
        hi: f64,
    },
    /// Smooth bump `exp(-1 / (1 - s^2))` with `s = (u - center) / radius`.
    Bump {
        center: f64,
        radius: f64,
    },
}

impl TestFunction {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Indicator { lo, hi } => f64::from(u8::from(lo <= u && u <= hi)),
            Self::Bump { center, radius } => {
                let s = (u - center) / radius;
                if s.abs() < 1.0 {
                    (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Midpoint rule on `[lo, hi]` with `n` levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl LevelGrid {
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        let du = self.step();
        (0..self.n).map(move |k| self.lo + (k as f64 + 0.5) * du)
    }
}

/// Both sides of the coarea identity on one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoareaReport {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    /// Nodes whose gradient came from finite differences (near ties).
    pub fallback_nodes: usize,
}

/// Gradient of `alpha` at a node: the ray formula, or central differences of
/// `alpha` when the maximizing ray is within `tie_tol` of a competitor.
pub fn alpha_gradient(
    fs: &FieldSample,
    sf: &SlopeField,
    i: usize,
    j: usize,
    tie_tol: f64,
) -> Result<([f64; 2], bool)> {
    if maximizer_gap(fs, sf, (i, j))? >= tie_tol {
        return Ok((slope_gradient(fs, sf, (i, j))?, false));
    }
    Ok((finite_difference(sf, i, j), true))
}

fn finite_difference(sf: &SlopeField, i: usize, j: usize) -> [f64; 2] {
    let a = &sf.alpha;
    let h = sf.spec.h;
    let (nx, ny) = (sf.usable_nx(), sf.spec.ny);
    let diff = |lo: (usize, usize), hi: (usize, usize), steps: f64| {
        (a.at(hi.0, hi.1) - a.at(lo.0, lo.1)) / (steps * h)
    };
    let dx = match (i > 0, i + 1 < nx) {
        (true, true) => diff((i - 1, j), (i + 1, j), 2.0),
        (false, true) => diff((i, j), (i + 1, j), 1.0),
        (true, false) => diff((i - 1, j), (i, j), 1.0),
        (false, false) => 0.0,
    };
    let dy = match (j > 0, j + 1 < ny) {
        (true, true) => diff((i, j - 1), (i, j + 1), 2.0),
        (false, true) => diff((i, j), (i, j + 1), 1.0),
        (true, false) => diff((i, j - 1), (i, j), 1.0),
        (false, false) => 0.0,
    };
    [dx, dy]
}

/// `∫_B φ(α) |∇α|` against `∫ φ(u) σ_u(α, B) du` on the node box `rect`.
///
/// The left side uses trapezoid weights on the nodes of `rect`, the right
/// side the midpoint rule of `levels`.
pub fn coarea_check(
    sf: &SlopeField,
    fs: &FieldSample,
    rect: &CellRect,
    phi: &TestFunction,
    levels: &LevelGrid,
    tie_tol: f64,
) -> Result<CoareaReport> {
    if !sf.spec.same_window(&fs.spec) {
        return Err(Error::Consistency(
            "slope field and field sample are on different grids".into(),
        ));
    }
    rect.check_within(sf.usable_nx(), sf.spec.ny)?;
    check_box(&sf.alpha, rect)?;
    let h = sf.spec.h;
    let weight = |k: usize, n: usize| if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
    let mut lhs = 0.0;
    let mut fallback_nodes = 0;
    for (i, j) in rect.cells() {
        let p = phi.eval(sf.alpha.at(i, j));
        if p == 0.0 {
            continue;
        }
        let (g, fell_back) = alpha_gradient(fs, sf, i, j, tie_tol)?;
        fallback_nodes += usize::from(fell_back);
        let w = weight(i - rect.i, rect.nx) * weight(j - rect.j, rect.ny) * h * h;
        lhs += w * p * (g[0] * g[0] + g[1] * g[1]).sqrt();
    }
    let du = levels.step();
    let mut rhs = 0.0;
    for u in levels.levels() {
        let p = phi.eval(u);
        if p != 0.0 {
            rhs += p * level_set_length(&sf.alpha, u, rect, h)?.length * du;
        }
    }
    let scale = lhs.abs().max(rhs.abs());
    let rel_err = if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    };
    Ok(CoareaReport {
        lhs,
        rhs,
        rel_err,
        fallback_nodes,
    })
}
