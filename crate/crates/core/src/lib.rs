//! Geometry of the Heisenberg group under the Koranyi metric, and the
//! multiscale machinery needed to study how flat a rectifiable curve is at
//! every location and scale.
//!
//! The crate is organized bottom-up:
//!
//! - [`point`] / [`metric`] / [`line`]: exact group arithmetic, the Koranyi
//!   norm and distance, dilations and isometries, horizontal lines and
//!   segments, and point-to-line/segment distances.
//! - [`curve`]: arclength-parametrized closed polylines built from horizontal
//!   segments, arcs, arc beta numbers, and curve generators (horizontal lifts,
//!   an oscillating tent family).
//! - [`multires`]: separated net hierarchies, multiresolution ball families,
//!   splitting into well-separated subfamilies, and dyadic-like cube forests.
//! - [`filtration`]: arc families cut out by cubes, completion into filtrations
//!   covering the whole domain circle, children and per-level deviations.
//! - [`verify`]: evaluators and randomized checkers for the curvature
//!   inequality, helper inequalities, ball beta numbers, flat/non-flat
//!   classification, and the diameter-mass martingale.
//! - [`pipeline`]: end-to-end runs (curve -> nets -> balls -> beta sums),
//!   experiment presets, and CSV/JSON reporting.

pub mod constants;
pub mod curve;
pub mod error;
pub mod filtration;
pub mod line;
pub mod metric;
pub mod multires;
pub mod pipeline;
pub mod point;
pub mod verify;

pub use curve::{Arc, Curve};
pub use error::{Error, Result};
pub use line::{HorizontalLine, HorizontalSegment};
pub use metric::MetricCtx;
pub use point::Point;
