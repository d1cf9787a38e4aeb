//! Closed-loop driving scenario generation, simulation and evaluation.
//!
//! A scenario document (four layers: environment, ego, adversaries,
//! background) is parsed into a [`scenario::ScenarioSpec`], simulated on a
//! deterministic 2D lane-graph world, scored with surrogate safety
//! metrics, and iteratively refined until its measured criticality matches
//! the declared intent band.

pub mod error;
pub mod geom;
pub mod rng;
pub mod agents;
pub mod batch;
pub mod behavior;
pub mod map;
pub mod metrics;
pub mod nl;
pub mod presets;
pub mod refine;
pub mod scenario;
pub mod sim;
pub mod svg;
pub mod trace;
pub mod world;

pub use error::{CoreError, Result, Violation};
