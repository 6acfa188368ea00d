//! Shakebot: a software re-embodiment of a desk-scale, one-axis shake table.
//!
//! The crate covers the full experiment stack:
//!
//! - [`ground_motion`]: single-pulse cosine trajectories, seismogram
//!   ingestion, zero-phase Butterworth filtering, velocity command series.
//! - [`actuation`]: stepper feasibility analysis, velocity-to-pulse-train
//!   conversion, a driver boundary with an ideal closed-loop mock, and the
//!   two-level safety state machine.
//! - [`perception`]: bed displacement from fiducial-marker poses, filtered
//!   accelerometer projection, and polynomial velocity fusion of the two
//!   asynchronous streams.
//! - [`calibration`]: perception scale factor, transmission factor and step
//!   resolution via overdetermined least squares on scripted motions.
//! - [`rocking`]: a deterministic 2D rocking-block oracle deciding whether a
//!   specimen topples under a given excitation, plus overturning response
//!   diagrams with refined boundary curves.
//! - [`harness`]: configuration, synthetic sensors, batch sweeps, the
//!   interactive experiment loop, and CSV/report emission behind the CLI.

pub mod actuation;
pub mod calibration;
pub mod error;
pub mod ground_motion;
pub mod harness;
pub mod perception;
pub mod rocking;

pub use error::{Error, Result};
