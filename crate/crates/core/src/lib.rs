//! Tilings, avoidance games and fractal measures on unstable leaves of
//! linear hyperbolic and partially hyperbolic torus maps.
//!
//! The crate is organized around six pieces:
//!
//! * [`dynamics`] — explicit models (integer toral automorphisms, expanding
//!   circle maps) together with exact charts on their unstable leaves.
//! * [`tiling`] — level-indexed local tilings built from maximal separated
//!   site sets and their Voronoi cells, plus the property verifier.
//! * [`game`] — referees and transcripts for the classic nested-ball game
//!   and the tiling-based variant with integer level gaps.
//! * [`strategy`] — the avoidance strategy that steers the game's limit
//!   point away from a target rectangle, obstacle enumeration, adversaries
//!   and the interleaved multi-target schedule.
//! * [`fractal`] — tree-like families grown from game positions, stage
//!   measures, dimension lower bounds, a box-counting estimator and a
//!   transfer-matrix oracle for digit-avoidance sets.
//! * [`exact`] / [`geom`] — supporting arithmetic (dyadic number-field
//!   coordinates, high-precision root evaluation) and convex cell geometry.

pub mod error;
pub mod exact;
pub mod geom;
pub mod dynamics;
pub mod tiling;
pub mod game;
pub mod strategy;
pub mod fractal;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
