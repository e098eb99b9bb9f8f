//! Actin filaments as nonlinear RLC transmission lines.
//!
//! A filament is a chain of monomer cells, each a series inductor/resistor
//! feeding a voltage-dependent capacitor. Pulses injected at one end travel,
//! spread and decay along the chain; where several pulses meet the response
//! can be read out as a Boolean function of which inputs were driven.

pub mod analysis;
pub mod config;
pub mod gates;
pub mod integrator;
pub mod model;
pub mod params;
pub mod stimuli;
mod tridiag;

pub use analysis::{arrival_times, digitize_trace, estimate_speed, line_energy, Raster, Trace};
pub use config::{parse_config, ConfigError, FilamentSpec, RunConfig};
pub use gates::{builtin_gate_library, GateSpec, Library, LibraryEntry};
pub use integrator::{run_simulation, Method, RunFailure, RunSettings, SimError};
pub use model::{ClampSchedule, Filament, LatticeState, ModelError};
pub use params::{CellParams, DerivationInputs};
pub use stimuli::{apply_stimuli, Mode, Shape, StimulusSpec};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable value");
    hex::encode(Sha256::digest(&json))
}
