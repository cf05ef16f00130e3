//! Reflected Brownian motion in planar convex domains, synchronous and
//! mirror couplings, cone-point detection, local-time measures and the
//! logarithmic strip maps used to analyze mirror couplings in wedges.
//!
//! Every random quantity is derived from a [`noise::SeedSpec`], so any
//! experiment is a pure function of its configuration.

pub mod cone;
pub mod geometry;
pub mod harness;
pub mod ltmeasure;
pub mod mirror;
pub mod noise;
pub mod reflect;
pub mod stats;
pub mod stripmap;

pub use geometry::{DomainSpec, Line, Point, UnitVector};
pub use noise::{IncrementStream, PathGrid, SeedSpec};
