//! Fractional Riesz transforms, Wolff potentials, scale sets, the multiscale
//! Cantor construction and nonlinear capacities for finite atomic measures
//! in R^d (d = 2, 3).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cantor;
pub mod capacity;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod gauges;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod kdtree;
pub mod measure;
pub mod quad;
pub mod riesz;
pub mod scales;

pub use error::{Error, Result};
pub use geometry::{Ball, GridSpec, Point};
pub use measure::{AmbientParams, AtomicMeasure};
