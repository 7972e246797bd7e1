//! Simulation of single atoms falling through a high-finesse standing-wave
//! cavity, detected in real time by probe transmission and loaded on a
//! trigger into an intracavity far-off-resonance dipole trap (FORT).
//!
//! Modules, bottom-up:
//! - [`physics`]: mode functions, coupling, trap potential, derived numbers
//! - [`cavity`]: weak-drive transmission and dressed-state eigenvalues
//! - [`noise`]: intensity-noise heating law, PSD synthesis and estimation
//! - [`dynamics`]: classical trajectories in gravity plus the trap
//! - [`detection`]: photon counting, filtering, falling-edge trigger
//! - [`protocol`]: the release/cool/trigger/hold/redetect sequence
//! - [`harness`]: ensembles, background subtraction, exponential fits, transit survey
//! - [`config`]: flat `key=value` parameter files

pub mod cavity;
pub mod config;
pub mod constants;
pub mod detection;
pub mod dynamics;
mod error;
pub mod harness;
pub mod noise;
pub mod params;
pub mod physics;
pub mod protocol;
pub mod psd;
pub mod seed;
mod vec3;

pub use error::{Error, Result};
pub use params::{AtomSpecies, CavityQedParams, FortConfig};
pub use psd::NoisePsd;
pub use vec3::Vec3;
