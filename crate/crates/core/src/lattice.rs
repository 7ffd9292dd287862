//! Square-lattice plumbing shared by the excursion and geometry modules:
//! neighbourhoods, exact path lengths and Dijkstra.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    Eight,
}

const AXIS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const KING: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

impl Connectivity {
    pub fn offsets(self) -> &'static [(i32, i32)] {
        match self {
            Self::Four => &AXIS,
            Self::Eight => &KING,
        }
    }

    /// Matching pair for site percolation duality.
    pub fn dual(self) -> Self {
        match self {
            Self::Four => Self::Eight,
            Self::Eight => Self::Four,
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "four" | "4" => Ok(Self::Four),
            "eight" | "8" => Ok(Self::Eight),
            _ => Err(crate::Error::Config(format!("unknown connectivity `{s}`"))),
        }
    }
}

/// Path length as `axis + diag * sqrt(2)` lattice steps, compared exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StepCount {
    pub axis: u32,
    pub diag: u32,
}

impl StepCount {
    pub const ZERO: Self = Self { axis: 0, diag: 0 };

    pub fn step(self, dx: i32, dy: i32) -> Self {
        if dx != 0 && dy != 0 {
            Self {
                axis: self.axis,
                diag: self.diag + 1,
            }
        } else {
            Self {
                axis: self.axis + 1,
                diag: self.diag,
            }
        }
    }

    pub fn plus(self, o: Self) -> Self {
        Self {
            axis: self.axis + o.axis,
            diag: self.diag + o.diag,
        }
    }

    /// Euclidean length for lattice spacing `h`.
    pub fn length(self, h: f64) -> f64 {
        (self.axis as f64 + self.diag as f64 * std::f64::consts::SQRT_2) * h
    }
}

impl Ord for StepCount {
    fn cmp(&self, other: &Self) -> Ordering {
        // a1 + d1 r2 vs a2 + d2 r2  <=>  (a1 - a2) vs (d2 - d1) r2
        let da = i128::from(self.axis) - i128::from(other.axis);
        let dd = i128::from(other.diag) - i128::from(self.diag);
        match (da.signum(), dd.signum()) {
            (0, 0) => Ordering::Equal,
            (s, t) if s != t && (s >= 0 && t <= 0) => Ordering::Greater,
            (s, t) if s != t => Ordering::Less,
            (1, 1) => (da * da).cmp(&(2 * dd * dd)),
            _ => (2 * dd * dd).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for StepCount {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Axis-aligned block of cells `[i, i + nx) x [j, j + ny)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRect {
    pub i: usize,
    pub j: usize,
    pub nx: usize,
    pub ny: usize,
}

impl CellRect {
    pub fn new(i: usize, j: usize, nx: usize, ny: usize) -> Self {
        Self { i, j, nx, ny }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i && j >= self.j && i < self.i + self.nx && j < self.j + self.ny
    }

    /// Errors unless the block is non-empty and fits in `[0, nx) x [0, ny)`.
    pub fn check_within(&self, nx: usize, ny: usize) -> crate::Result<()> {
        if self.nx == 0 || self.ny == 0 || self.i + self.nx > nx || self.j + self.ny > ny {
            return Err(crate::Error::Bounds(format!(
                "rectangle {}x{} at ({}, {}) does not fit in the {nx}x{ny} usable window",
                self.nx, self.ny, self.i, self.j
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.j..self.j + self.ny)
            .flat_map(move |j| (self.i..self.i + self.nx).map(move |i| (i, j)))
    }
}

/// Neighbours of `(i, j)` on an `nx x ny` lattice.
pub fn neighbors(
    i: usize,
    j: usize,
    nx: usize,
    ny: usize,
    conn: Connectivity,
) -> impl Iterator<Item = (usize, usize, i32, i32)> {
    conn.offsets().iter().filter_map(move |&(dx, dy)| {
        let (x, y) = (i as i64 + dx as i64, j as i64 + dy as i64);
        (x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny)
            .then_some((x as usize, y as usize, dx, dy))
    })
}

/// Result of a single-source search: distances and predecessors per cell.
pub struct ShortestPaths {
    pub dist: Vec<Option<StepCount>>,
    pub prev: Vec<u32>,
}

pub const NO_PREV: u32 = u32::MAX;

impl ShortestPaths {
    /// Cells from the source to `target`, inclusive.
    pub fn path_to(&self, target: usize) -> Vec<usize> {
        if self.dist[target].is_none() {
            return Vec::new();
        }
        let mut out = vec![target];
        let mut c = target;
        while self.prev[c] != NO_PREV {
            c = self.prev[c] as usize;
            out.push(c);
        }
        out.reverse();
        out
    }
}

/// Multi-source Dijkstra over the cells for which `open(i, j)` holds.
/// Stops early once `stop(cell)` returns true for a settled cell.
pub fn dijkstra(
    nx: usize,
    ny: usize,
    conn: Connectivity,
    sources: &[usize],
    open: impl Fn(usize, usize) -> bool,
    stop: impl FnMut(usize) -> bool,
) -> ShortestPaths {
    let sources: Vec<usize> = sources
        .iter()
        .copied()
        .filter(|&s| open(s % nx, s / nx))
        .collect();
    dijkstra_graph(
        nx * ny,
        &sources,
        |c, out| {
            for (x, y, dx, dy) in neighbors(c % nx, c / nx, nx, ny, conn) {
                if open(x, y) {
                    out.push((y * nx + x, dx != 0 && dy != 0));
                }
            }
        },
        stop,
    )
}

/// Dijkstra on an implicit graph of `n` nodes whose edges are axis or
/// diagonal lattice steps. `expand(node, out)` pushes `(neighbour, diagonal)`.
pub fn dijkstra_graph(
    n: usize,
    sources: &[usize],
    mut expand: impl FnMut(usize, &mut Vec<(usize, bool)>),
    mut stop: impl FnMut(usize) -> bool,
) -> ShortestPaths {
    let mut dist: Vec<Option<StepCount>> = vec![None; n];
    let mut prev = vec![NO_PREV; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut next = Vec::with_capacity(8);
    for &s in sources {
        if dist[s].is_none() {
            dist[s] = Some(StepCount::ZERO);
            heap.push(Reverse((StepCount::ZERO, s)));
        }
    }
    while let Some(Reverse((d, c))) = heap.pop() {
        if done[c] {
            continue;
        }
        done[c] = true;
        if stop(c) {
            break;
        }
        next.clear();
        expand(c, &mut next);
        for &(k, diag) in &next {
            if done[k] {
                continue;
            }
            let nd = if diag { d.step(1, 1) } else { d.step(1, 0) };
            if dist[k].is_none_or(|old| nd < old) {
                dist[k] = Some(nd);
                prev[k] = c as u32;
                heap.push(Reverse((nd, k)));
            }
        }
    }
    ShortestPaths { dist, prev }
}
