//! Browser bindings: one field sample, its windowed slope field, and three
//! operations on it (heatmap, thresholding, chemical paths).
//!
//! Images are returned as RGBA bytes with row 0 at the top of the picture,
//! which is the bottom row of the grid.

use shadowlab::excursion::{crossing, threshold, Direction, ExcursionMask};
use shadowlab::field::{FieldSynth, GridSpec};
use shadowlab::geometry::chemical::chemical_distance;
use shadowlab::kernel::{KernelFamily, KernelSpec};
use shadowlab::lattice::{CellRect, Connectivity};
use shadowlab::slope::{window_cells, windowed_slope_field, SlopeField};
use shadowlab::svg::{colormap, component_color};
use wasm_bindgen::prelude::*;

fn js_err(e: shadowlab::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Lab {
    sf: SlopeField,
    mask: Option<ExcursionMask>,
    width: usize,
}

#[wasm_bindgen]
impl Lab {
    /// Samples `f` on a `width x height` window of spacing `h` and computes
    /// the slope field over rays shorter than `ray_window`.
    #[wasm_bindgen(constructor)]
    pub fn new(
        family: &str,
        scale: f64,
        h: f64,
        width: usize,
        height: usize,
        ray_window: f64,
        seed: u64,
    ) -> Result<Lab, JsError> {
        if width == 0 || height == 0 {
            return Err(JsError::new("window must be at least 1 x 1"));
        }
        let family: KernelFamily = family.parse().map_err(js_err)?;
        let kernel = KernelSpec {
            family,
            params: vec![scale, 1.0],
            trunc_radius: None,
        }
        .build()
        .map_err(js_err)?;
        let m = window_cells(ray_window, h);
        let spec = GridSpec::for_support([0.0, 0.0], h, width + m, height, kernel.trunc_radius());
        let fs = FieldSynth::new(&kernel, &spec)
            .map_err(js_err)?
            .sample(seed, 0);
        Ok(Lab {
            sf: windowed_slope_field(&fs, ray_window),
            mask: None,
            width,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.sf.spec.ny
    }

    /// Slope value at a visible cell.
    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        if i < self.width && j < self.height() {
            self.sf.alpha.at(i, j)
        } else {
            f64::NAN
        }
    }

    /// Heatmap of the slope field over the visible window.
    pub fn alpha_rgba(&self) -> Vec<u8> {
        let (lo, hi) = (0..self.height())
            .flat_map(|j| (0..self.width).map(move |i| (i, j)))
            .map(|(i, j)| self.sf.alpha.at(i, j))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        self.pixels(|i, j| {
            let (r, g, b) = colormap((self.sf.alpha.at(i, j) - lo) / span);
            [r, g, b, 255]
        })
    }

    /// Thresholds at `level` and returns the open set coloured by component.
    pub fn threshold_rgba(&mut self, level: f64) -> Vec<u8> {
        let mask = threshold(&self.sf, level, Connectivity::Eight);
        let img = self.pixels(|i, j| match mask.label(i, j) {
            Some(id) => {
                let (r, g, b) = component_color(id);
                [r, g, b, 255]
            }
            None => [240, 240, 240, 255],
        });
        self.mask = Some(mask);
        img
    }

    pub fn components(&self) -> u32 {
        self.mask.as_ref().map_or(0, |m| m.n_components)
    }

    pub fn open_fraction(&self) -> f64 {
        self.mask.as_ref().map_or(0.0, |m| {
            m.open_count() as f64 / (self.width * self.height()) as f64
        })
    }

    /// Left-right crossing of the whole window by the last threshold.
    pub fn crosses(&self) -> bool {
        self.mask.as_ref().is_some_and(|m| {
            crossing(
                m,
                &CellRect::new(0, 0, self.width, self.height()),
                Direction::Horizontal,
            )
            .unwrap_or(false)
        })
    }

    /// Shortest open path in the last threshold as flat `[i0, j0, i1, j1, ..]`;
    /// empty when the cells are not connected.
    pub fn chemical_path(
        &self,
        i0: usize,
        j0: usize,
        i1: usize,
        j1: usize,
    ) -> Result<Vec<u32>, JsError> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| JsError::new("threshold the field first"))?;
        let p = chemical_distance(mask, (i0, j0), (i1, j1)).map_err(js_err)?;
        Ok(p.cells
            .iter()
            .flat_map(|&(i, j)| [i as u32, j as u32])
            .collect())
    }

    /// Length of the path between two cells, `Infinity` when disconnected.
    pub fn chemical_length(
        &self,
        i0: usize,
        j0: usize,
        i1: usize,
        j1: usize,
    ) -> Result<f64, JsError> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| JsError::new("threshold the field first"))?;
        Ok(chemical_distance(mask, (i0, j0), (i1, j1))
            .map_err(js_err)?
            .length)
    }
}

impl Lab {
    fn pixels(&self, colour: impl Fn(usize, usize) -> [u8; 4]) -> Vec<u8> {
        let (w, h) = (self.width, self.height());
        let mut out = Vec::with_capacity(w * h * 4);
        for row in 0..h {
            let j = h - 1 - row;
            for i in 0..w {
                out.extend_from_slice(&colour(i, j));
            }
        }
        out
    }
}
