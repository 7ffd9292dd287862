//! Deterministic SVG rendering of grids, masks, level lines and paths.
//!
//! Cell `(i, j)` is drawn as a unit square with row 0 at the bottom; world
//! coordinates map through the grid spec, so overlays line up with cells.

use std::fmt::Write;

use crate::excursion::{ExcursionMask, CLOSED};
use crate::field::{Grid, GridSpec};

/// Accumulates layers over one grid window.
pub struct Canvas {
    spec: GridSpec,
    px: f64,
    body: String,
}

/// Piecewise-linear map from `[0, 1]` through dark blue, teal and yellow.
pub fn colormap(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, [f64; 3]); 4] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.33, [49.0, 104.0, 142.0]),
        (0.66, [53.0, 183.0, 121.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let k = STOPS.iter().position(|s| s.0 >= t).unwrap_or(3).max(1);
    let (t0, c0) = STOPS[k - 1];
    let (t1, c1) = STOPS[k];
    let u = (t - t0) / (t1 - t0);
    let mix = |a: f64, b: f64| (a + (b - a) * u).round() as u8;
    (mix(c0[0], c1[0]), mix(c0[1], c1[1]), mix(c0[2], c1[2]))
}

/// Distinct, stable colour per component id.
pub fn component_color(id: u32) -> (u8, u8, u8) {
    // golden-angle hue steps keep neighbouring ids apart
    let hue = (id as f64 * 137.507_764) % 360.0;
    hsl(hue, 0.65, 0.55)
}

fn hsl(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = l - c / 2.0;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let to = |v: f64| ((v + m) * 255.0).round() as u8;
    (to(r), to(g), to(b))
}

impl Canvas {
    /// `px` is the drawn size of one cell.
    pub fn new(spec: &GridSpec, px: f64) -> Self {
        Self {
            spec: spec.clone(),
            px,
            body: String::new(),
        }
    }

    fn cell(&mut self, i: usize, j: usize, rgb: (u8, u8, u8)) {
        let y = (self.spec.ny - 1 - j) as f64 * self.px;
        let _ = writeln!(
            self.body,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#{:02x}{:02x}{:02x}"/>"##,
            i as f64 * self.px,
            y,
            self.px,
            self.px,
            rgb.0,
            rgb.1,
            rgb.2
        );
    }

    /// Centre of a world point in canvas coordinates.
    fn point(&self, p: [f64; 2]) -> (f64, f64) {
        let x = (p[0] - self.spec.origin[0]) / self.spec.h;
        let y = (p[1] - self.spec.origin[1]) / self.spec.h;
        (
            (x + 0.5) * self.px,
            (self.spec.ny as f64 - 0.5 - y) * self.px,
        )
    }

    /// Colours every cell by its value, scaled between the finite extremes.
    pub fn heatmap(mut self, g: &Grid) -> Self {
        let (lo, hi) = g
            .data
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        for j in 0..g.ny {
            for i in 0..g.nx {
                self.cell(i, j, colormap((g.at(i, j) - lo) / span));
            }
        }
        self
    }

    /// Open cells coloured by component on a light background.
    pub fn mask(mut self, m: &ExcursionMask) -> Self {
        let (w, h) = (self.spec.nx as f64 * self.px, self.spec.ny as f64 * self.px);
        let _ = writeln!(
            self.body,
            r##"<rect width="{w}" height="{h}" fill="#f4f4f4"/>"##
        );
        for j in 0..m.spec.ny {
            for i in 0..m.spec.nx {
                let l = m.labels[j * m.spec.nx + i];
                if l != CLOSED {
                    self.cell(i, j, component_color(l));
                }
            }
        }
        self
    }

    /// Line segments in world coordinates, e.g. level lines.
    pub fn segments(mut self, segs: &[[[f64; 2]; 2]], stroke: &str) -> Self {
        let mut d = String::new();
        for s in segs {
            let (a, b) = (self.point(s[0]), self.point(s[1]));
            let _ = write!(d, "M{:.3} {:.3}L{:.3} {:.3}", a.0, a.1, b.0, b.1);
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{d}" stroke="{stroke}" stroke-width="{}" fill="none"/>"#,
            self.px * 0.3
        );
        self
    }

    /// Polyline through cell centres.
    pub fn path(mut self, cells: &[(usize, usize)], stroke: &str) -> Self {
        if cells.is_empty() {
            return self;
        }
        let pts: Vec<String> = cells
            .iter()
            .map(|&(i, j)| {
                let p = self.spec.position(i, j);
                let (x, y) = self.point(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" stroke="{stroke}" stroke-width="{}" fill="none"/>"#,
            pts.join(" "),
            self.px * 0.5
        );
        self
    }

    pub fn finish(self) -> String {
        let (w, h) = (self.spec.nx as f64 * self.px, self.spec.ny as f64 * self.px);
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" shape-rendering=\"crispEdges\">\n{}</svg>\n",
            self.body
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Connectivity;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), (68, 1, 84));
        assert_eq!(colormap(1.0), (253, 231, 37));
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }

    #[test]
    fn mask_draws_open_cells_only() {
        let spec = GridSpec {
            origin: [0.0, 0.0],
            h: 1.0,
            nx: 3,
            ny: 2,
            pad: 0,
        };
        let m = ExcursionMask::from_open(
            spec.clone(),
            0.0,
            vec![true, false, true, false, false, true],
            Connectivity::Four,
            0,
        );
        let svg = Canvas::new(&spec, 4.0)
            .mask(&m)
            .path(&[(0, 0), (2, 1)], "red")
            .finish();
        assert_eq!(svg.matches("<rect").count(), 1 + 3);
        // cell (0, 0) sits in the bottom row
        assert!(svg.contains(r#"<rect x="0" y="4" width="4" height="4""#));
        assert!(svg.contains(r#"points="2.000,6.000 10.000,2.000""#));
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = GridSpec {
            origin: [1.0, 2.0],
            h: 0.5,
            nx: 4,
            ny: 4,
            pad: 0,
        };
        let g = Grid::from_fn(4, 4, |i, j| (i * j) as f64);
        let a = Canvas::new(&spec, 2.0)
            .heatmap(&g)
            .segments(&[[[1.0, 2.0], [1.5, 2.5]]], "white")
            .finish();
        let b = Canvas::new(&spec, 2.0)
            .heatmap(&g)
            .segments(&[[[1.0, 2.0], [1.5, 2.5]]], "white")
            .finish();
        assert_eq!(a, b);
        assert!(a.contains("M1.000 7.000L3.000 5.000"));
    }
}
