//! Acceleration-controlled agents confined to an interval, a disc or a convex
//! polygon: exact one-dimensional oracles, a direct-transcription optimal control
//! solver, and fictitious play over measures on trajectories.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod mfg;
pub mod ocp;
pub mod oracle1d;
pub mod quadrature;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{Domain, Point, State};
pub use trajectory::{CubicSegment, Trajectory};
