//! Codebook-based beam training for pinching-antenna systems.
//!
//! Modules are layered bottom-up: [`physics`] (channel model), [`codebook`]
//! (phase-aligned antenna locations), [`swsu`] (single-user three-stage
//! training), [`noma`] (single-waveguide multi-user training with SIC),
//! [`mwmu`] (multi-waveguide training and hybrid beamforming), [`oracle`]
//! (exhaustive references and baselines) and [`harness`] (scenarios, sweeps,
//! overhead tables and CSV output).

pub mod codebook;
pub mod error;
pub mod format;
pub mod harness;
pub mod mwmu;
pub mod noma;
pub mod oracle;
pub mod physics;
pub mod swsu;

pub use error::{Error, Result};
