//! Discrete multi-agent pedestrian simulation on a square grid.
//!
//! Agents navigate floor fields (path, obstacle, density) with a softmax
//! utility over the Moore neighbourhood, move under a parallel update with
//! friction-based conflict resolution, and realise heterogeneous walking
//! speeds through an urn-based activation scheme with a diagonal-distance
//! penalty. Slope markers modify desired speeds on stairs and ramps.
//!
//! All field and utility arithmetic is generic over the floating point
//! scalar (see [`scalar::Scalar`]); speeds and urn fractions are exact
//! rationals so that refill pairs and slope round trips carry no rounding.

pub mod behavior;
pub mod engine;
pub mod fields;
pub mod metrics;
pub mod pgm;
pub mod rational;
pub mod rng;
pub mod scalar;
pub mod scenario;

pub use behavior::{Action, Group, GroupRegistry, Pedestrian};
pub use engine::{UrnState, World};
pub use fields::FloorField;
pub use metrics::MetricsAccumulator;
pub use rational::Rational;
pub use scalar::Scalar;
pub use scenario::{CalibrationParams, CellState, Coord, GridGeometry, ScenarioSpec};

/// Single-precision simulation world.
pub type World32 = World<f32>;
/// Double-precision simulation world (used by the CLI).
pub type World64 = World<f64>;
/// Single-precision floor field.
pub type Field32 = FloorField<f32>;
/// Double-precision floor field.
pub type Field64 = FloorField<f64>;
