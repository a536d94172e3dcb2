//! Floor-field pedestrian simulation with adaptive group cohesion.
//!
//! The crate is split along the life of a simulated crowd:
//!
//! * [`environment`] holds the 0.4 m lattice, its markers and the three floor
//!   fields (path, obstacle, density) that agents perceive.
//! * [`population`] defines pedestrians, the recursive group forest, spawning,
//!   and the group geometry measures (centroid and the two dispersion metrics).
//! * [`behavior`] turns perception into utilities, applies the dispersion driven
//!   weight balance, and samples an action.
//! * [`engine`] advances the clock with a shuffled sequential update.
//! * [`metrics`] analyses trajectory logs, simulated or observed.
//! * [`scenario`] and [`sweep`] load run descriptions and execute density
//!   campaigns, optionally on the rayon pool (feature `parallel`).

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod behavior;
pub mod engine;
pub mod environment;
pub mod error;
pub mod metrics;
pub mod par;
pub mod population;
pub mod rng;
pub mod scenario;
pub mod sweep;

pub use error::{Error, Result};

/// Side of a square cell in metres.
pub const CELL_SIZE: f64 = 0.4;

/// Area of one cell in square metres.
pub const CELL_AREA: f64 = CELL_SIZE * CELL_SIZE;

/// Duration of one simulation step in seconds (one cell per step at about 1.2 m/s).
pub const STEP_SECONDS: f64 = 0.33;
