//! Intrinsic (chemical) distances inside excursion masks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::excursion::ExcursionMask;
use crate::lattice::{dijkstra, CellRect, Connectivity, StepCount};

/// Shortest path inside the open set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub found: bool,
    /// Euclidean length in grid length units; `+inf` when not found.
    pub length: f64,
    pub cells: Vec<(usize, usize)>,
}

impl PathResult {
    fn missing() -> Self {
        Self {
            found: false,
            length: f64::INFINITY,
            cells: Vec::new(),
        }
    }
}

pub fn chemical_distance(
    mask: &ExcursionMask,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<PathResult> {
    mask.check_cell(a.0, a.1)?;
    mask.check_cell(b.0, b.1)?;
    if !mask.is_open(a.0, a.1)
        || !mask.is_open(b.0, b.1)
        || mask.label(a.0, a.1) != mask.label(b.0, b.1)
    {
        return Ok(PathResult::missing());
    }
    let nx = mask.spec.nx;
    let target = b.1 * nx + b.0;
    let sp = dijkstra(
        nx,
        mask.spec.ny,
        mask.connectivity,
        &[a.1 * nx + a.0],
        |i, j| mask.is_open(i, j),
        |c| c == target,
    );
    Ok(path_from(&sp, target, nx, mask.spec.h))
}

fn path_from(sp: &crate::lattice::ShortestPaths, target: usize, nx: usize, h: f64) -> PathResult {
    match sp.dist[target] {
        None => PathResult::missing(),
        Some(d) => PathResult {
            found: true,
            length: d.length(h),
            cells: sp
                .path_to(target)
                .into_iter()
                .map(|c| (c % nx, c / nx))
                .collect(),
        },
    }
}

/// Shortest open path from any cell of `from` to any cell of `to`.
pub fn set_distance(
    mask: &ExcursionMask,
    from: &[(usize, usize)],
    to: &[(usize, usize)],
) -> Result<PathResult> {
    for &(i, j) in from.iter().chain(to) {
        mask.check_cell(i, j)?;
    }
    let nx = mask.spec.nx;
    let sources: Vec<usize> = from.iter().map(|&(i, j)| j * nx + i).collect();
    let mut goal = vec![false; mask.open.len()];
    for &(i, j) in to {
        goal[j * nx + i] = true;
    }
    let mut hit = None;
    let sp = dijkstra(
        nx,
        mask.spec.ny,
        mask.connectivity,
        &sources,
        |i, j| mask.is_open(i, j),
        |c| {
            if goal[c] {
                hit = Some(c);
            }
            goal[c]
        },
    );
    Ok(hit.map_or_else(PathResult::missing, |t| path_from(&sp, t, nx, mask.spec.h)))
}

/// Chemical diameter of one component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diameter {
    pub value: f64,
    /// False when the value is the double-sweep lower bound.
    pub exact: bool,
}

pub const EXACT_CUTOFF: usize = 400;

/// One component packed into its bounding box.
struct Patch {
    nx: usize,
    ny: usize,
    open: Vec<bool>,
    cells: Vec<usize>,
    conn: Connectivity,
}

impl Patch {
    fn new(mask_nx: usize, cells: &[usize], conn: Connectivity) -> Self {
        let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
        for &c in cells {
            let (i, j) = (c % mask_nx, c / mask_nx);
            i0 = i0.min(i);
            j0 = j0.min(j);
            i1 = i1.max(i);
            j1 = j1.max(j);
        }
        let (nx, ny) = (i1 - i0 + 1, j1 - j0 + 1);
        let mut open = vec![false; nx * ny];
        let local: Vec<usize> = cells
            .iter()
            .map(|&c| (c / mask_nx - j0) * nx + (c % mask_nx - i0))
            .collect();
        for &l in &local {
            open[l] = true;
        }
        Self {
            nx,
            ny,
            open,
            cells: local,
            conn,
        }
    }

    /// Farthest cell from `src`, its distance and the path back to `src`.
    fn eccentricity(&self, src: usize) -> (usize, StepCount, Vec<usize>) {
        let sp = dijkstra(
            self.nx,
            self.ny,
            self.conn,
            &[src],
            |i, j| self.open[j * self.nx + i],
            |_| false,
        );
        let mut best = (src, StepCount::ZERO);
        for &c in &self.cells {
            if let Some(d) = sp.dist[c] {
                if d > best.1 {
                    best = (c, d);
                }
            }
        }
        (best.0, best.1, sp.path_to(best.0))
    }
}

fn diameter_of(patch: &Patch, cutoff: usize, h: f64) -> Diameter {
    if patch.cells.len() <= cutoff {
        let d = patch
            .cells
            .iter()
            .map(|&c| patch.eccentricity(c).1)
            .max()
            .unwrap_or(StepCount::ZERO);
        return Diameter {
            value: d.length(h),
            exact: true,
        };
    }
    // four sweeps from the cell nearest the centroid: a double sweep, then
    // another from the midpoint of the first diametral path
    let n = patch.cells.len() as f64;
    let cx = patch
        .cells
        .iter()
        .map(|&c| (c % patch.nx) as f64)
        .sum::<f64>()
        / n;
    let cy = patch
        .cells
        .iter()
        .map(|&c| (c / patch.nx) as f64)
        .sum::<f64>()
        / n;
    let start = patch
        .cells
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let d = |c: usize| {
                ((c % patch.nx) as f64 - cx).powi(2) + ((c / patch.nx) as f64 - cy).powi(2)
            };
            d(a).total_cmp(&d(b))
        })
        .expect("non-empty");
    let (a1, _, _) = patch.eccentricity(start);
    let (_, d1, path) = patch.eccentricity(a1);
    let (a2, _, _) = patch.eccentricity(path[path.len() / 2]);
    let (_, d2, _) = patch.eccentricity(a2);
    Diameter {
        value: d1.max(d2).length(h),
        exact: false,
    }
}

pub fn chemical_diameter(mask: &ExcursionMask, id: u32) -> Result<Diameter> {
    chemical_diameter_with(mask, id, EXACT_CUTOFF)
}

/// Exact all-pairs maximum up to `cutoff` cells, double-sweep lower bound
/// (four sweeps) above it.
pub fn chemical_diameter_with(mask: &ExcursionMask, id: u32, cutoff: usize) -> Result<Diameter> {
    let cells = mask.component_cells(id)?;
    Ok(diameter_of(
        &Patch::new(mask.spec.nx, &cells, mask.connectivity),
        cutoff,
        mask.spec.h,
    ))
}

/// Sum of chemical diameters of the components of `mask ∩ rect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SChem {
    pub total: f64,
    pub components: usize,
    /// True when some diameter is a lower bound only.
    pub lower_bound: bool,
}

/// Components are relabelled inside `rect`, so paths may not leave it.
pub fn s_chem(mask: &ExcursionMask, rect: &CellRect) -> Result<SChem> {
    s_chem_with(mask, rect, EXACT_CUTOFF)
}

pub fn s_chem_with(mask: &ExcursionMask, rect: &CellRect, cutoff: usize) -> Result<SChem> {
    rect.check_within(mask.usable_nx(), mask.spec.ny)?;
    let spec = crate::field::GridSpec {
        origin: mask.spec.position(rect.i, rect.j),
        h: mask.spec.h,
        nx: rect.nx,
        ny: rect.ny,
        pad: 0,
    };
    let open: Vec<bool> = rect.cells().map(|(i, j)| mask.is_open(i, j)).collect();
    let sub = ExcursionMask::from_open(spec, mask.level, open, mask.connectivity, 0);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); sub.n_components as usize];
    for (k, &l) in sub.labels.iter().enumerate() {
        if l != crate::excursion::CLOSED {
            groups[l as usize].push(k);
        }
    }
    let diams = crate::par::map_range(groups.len(), |g| {
        diameter_of(
            &Patch::new(rect.nx, &groups[g], sub.connectivity),
            cutoff,
            sub.spec.h,
        )
    });
    Ok(SChem {
        total: diams.iter().map(|d| d.value).sum(),
        components: diams.len(),
        lower_bound: diams.iter().any(|d| !d.exact),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::field::GridSpec;

    fn mask(rows: &[&str]) -> ExcursionMask {
        let ny = rows.len();
        let nx = rows[0].len();
        let mut open = vec![false; nx * ny];
        for (r, line) in rows.iter().enumerate() {
            for (i, ch) in line.chars().enumerate() {
                open[(ny - 1 - r) * nx + i] = ch == '#';
            }
        }
        let spec = GridSpec {
            origin: [0.0, 0.0],
            h: 0.5,
            nx,
            ny,
            pad: 0,
        };
        ExcursionMask::from_open(spec, 0.0, open, Connectivity::Eight, 0)
    }

    #[test]
    fn corridor_distance() {
        let m = mask(&["#######"]);
        let p = chemical_distance(&m, (0, 0), (6, 0)).unwrap();
        assert!(p.found);
        assert_eq!(p.length, 3.0);
        assert_eq!(p.cells.len(), 7);
    }

    #[test]
    fn closed_endpoint_and_bounds() {
        let m = mask(&["#.#"]);
        assert!(!chemical_distance(&m, (1, 0), (2, 0)).unwrap().found);
        assert!(!chemical_distance(&m, (0, 0), (2, 0)).unwrap().found);
        assert!(matches!(
            chemical_distance(&m, (0, 0), (3, 0)),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn l_corridor_cuts_the_corner() {
        // arms of 4 and 3 steps meeting at the top-left corner
        let m = mask(&["#####", "#....", "#....", "#...."]);
        let p = chemical_distance(&m, (0, 0), (4, 3)).unwrap();
        let expect = (5.0 + std::f64::consts::SQRT_2) * 0.5;
        assert!((p.length - expect).abs() < 1e-12);
        assert!(
            p.length <= 7.0 * 0.5 && p.length >= 7.0 * 0.5 - (2.0 - std::f64::consts::SQRT_2) * 0.5
        );
    }

    #[test]
    fn diameters() {
        let m = mask(&["#.###", "....."]);
        assert_eq!(
            chemical_diameter(&m, 0).unwrap(),
            Diameter {
                value: 0.0,
                exact: true
            }
        );
        assert_eq!(chemical_diameter(&m, 1).unwrap().value, 1.0);
        assert!(matches!(
            chemical_diameter(&m, 2),
            Err(Error::UnknownComponent(2))
        ));
        let two = mask(&["###.###"]);
        let s = s_chem(&two, &CellRect::new(0, 0, 7, 1)).unwrap();
        assert_eq!(s.total, 2.0);
        assert_eq!(s.components, 2);
        let empty = mask(&["....."]);
        assert_eq!(
            s_chem(&empty, &CellRect::new(0, 0, 5, 1)).unwrap().total,
            0.0
        );
    }

    #[test]
    fn box_relabels_components() {
        // a U shape: connected globally, two pieces once the bottom is cut off
        let m = mask(&["#.#", "#.#", "###"]);
        assert_eq!(m.n_components, 1);
        let s = s_chem(&m, &CellRect::new(0, 1, 3, 2)).unwrap();
        assert_eq!(s.components, 2);
        assert_eq!(s.total, 1.0);
    }

    #[test]
    fn set_distance_between_balls() {
        let m = mask(&["#####", "#####"]);
        let p = set_distance(&m, &[(0, 0), (0, 1)], &[(4, 1), (3, 1)]).unwrap();
        assert!(p.found);
        assert_eq!(p.length, 1.5);
    }
}
