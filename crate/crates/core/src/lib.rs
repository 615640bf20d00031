//! Simulation and scheduling toolkit for autonomous wildfire monitoring with
//! reconfigurable Earth observation constellations.
//!
//! The crate is organised around one mission loop and the pieces it drives:
//!
//! - [`orbit`]: two-body propagation, orbital slot grids and impulsive maneuver costs.
//! - [`visibility`]: target, ground-station and sunlight visibility tensors.
//! - [`scene`]: fire ground truth ingestion and synthetic two-band raster rendering.
//! - [`detect`]: reference blob detector, early (PCA) and late (weighted box) fusion,
//!   pixel geolocation and detection scoring.
//! - [`confidence`]: recursive Bayesian confidence and the auxiliary/priority target registry.
//! - [`scheduler`]: the reconfigurable scheduling problem, its exact per-satellite solver,
//!   a brute-force oracle, a schedule validator and mid-horizon rescheduling.
//! - [`mission`]: the multi-Block orchestration with budget and resource carryover.
//! - [`io`]: scenario bundles, reports and file formats.
//!
//! Data-parallel loops (tensor sweeps, rendering, per-satellite solves) run on rayon when
//! the `parallel` feature is enabled and fall back to plain iteration otherwise; see
//! [`par::Execution`].

pub mod confidence;
pub mod detect;
pub mod error;
pub mod io;
pub mod mission;
pub mod orbit;
pub mod par;
pub mod scene;
pub mod scheduler;
pub mod time;
pub mod visibility;

pub use error::{Error, Result};
