//! Simulation of resolved-sideband optomechanical control of a two-level
//! optical emitter (an NV center `|m_s=0⟩ ↔ |E_y⟩` transition) driven by
//! optical tones and a classical surface-acoustic-wave phonon field.
//!
//! Conventions: user-facing frequencies are ordinary frequencies in MHz,
//! internal angular frequencies are rad/ns, time is in ns. The conversion
//! happens once, at the boundary, through [`units::angular`].
//!
//! Module map:
//! - [`params`], [`coupling`], [`bessel`], [`hamiltonian`]: physical
//!   parameters, coupling-rate formulas and the semiclassical Hamiltonian.
//! - [`lindblad`]: density-matrix dynamics and the closed-form two-level
//!   steady state.
//! - [`floquet`]: light-shifted sideband resonances from the one-period
//!   propagator.
//! - [`quantized`]: truncated Fock-space model of emitter ⊗ phonon mode.
//! - [`quadrature`], [`fit`], [`spectroscopy`]: PLE spectra, spectral
//!   diffusion and peak fitting.
//! - [`experiments`]: the Rabi pulse sequence and two-pathway interference.

pub mod bessel;
pub mod coupling;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod floquet;
pub mod hamiltonian;
pub mod lindblad;
pub mod params;
pub mod quadrature;
pub mod quantized;
pub mod spectroscopy;
pub mod units;

pub use error::{Error, Result};
pub use params::{Calibration, DriveConfig, EmitterParams, MaterialParams, OpticalTone, PhononDrive};
