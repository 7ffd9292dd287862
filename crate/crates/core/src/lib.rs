//! Simulation laboratory for the slope field of a planar Gaussian field.
//!
//! `f = q * W` is synthesized on a grid from white noise `W`, the slope field
//! `alpha(z) = sup_{t>0} (f(z + t e1) - f(z)) / t` is computed row by row, and
//! the excursion sets `{alpha <= l}` are probed for crossings, chemical
//! distances, level-set lengths and truncation effects.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod excursion;
pub mod experiments;
mod fft2;
pub mod field;
pub mod geometry;
pub mod kernel;
pub mod lattice;
mod par;
pub mod rng;
pub mod slope;
pub mod snapshot;
pub mod stats;
pub mod svg;
pub mod unionfind;

pub use error::{Error, Result};
