//! Desk-scale numerical models for a classical treatment of radiation and
//! matter.
//!
//! The crate is organised by subsystem:
//!
//! * [`field`] spectral modes, Planck energies and zero-point sampling.
//! * [`detection`] amplitude-linear photodetection at low light.
//! * [`interference`] two-source coincidence fringes and their visibility.
//! * [`eckart`] frame binding, atom permutations and point-group operations.
//! * [`ilcrs`] coherent Raman redshift along a sightline.
//! * [`soliton`] curved-filament stability and torus quantization.
//! * [`harness`] configuration, seeded orchestration and CSV/JSON output.

pub mod detection;
pub mod eckart;
pub mod field;
pub mod harness;
pub mod ilcrs;
pub mod interference;
pub mod numeric;
pub mod soliton;

/// Planck constant, J·s (exact SI value).
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K (exact SI value).
pub const BOLTZMANN_K: f64 = 1.380_649e-23;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
