//! Physical parameter types. Fields hold user-facing units (MHz, W, µW, m/s,
//! kg); accessor methods return the angular quantities used internally.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{require, Result};
use crate::units::angular;

/// Spontaneous-emission linewidth Γ/2π of the E_y transition (12 ns lifetime).
pub const DEFAULT_NU_GAMMA_MHZ: f64 = 13.3;

/// Spectral-diffusion FWHM that makes the zero-power Lorentzian-fitted
/// carrier width 175 MHz on the default 81-point, ±1.6·900 MHz grid, with
/// the fit window of ±450 MHz.
/// Regenerate with `spectroscopy::calibrate_sd_fwhm`.
pub const DEFAULT_SD_FWHM_MHZ: f64 = 175.97;

/// Reference operating point defining the RF calibration: β = 0.455 at
/// P_RF = 0.2 W with ν_m = 940 MHz.
pub const REFERENCE_BETA: f64 = 0.455;
pub const REFERENCE_P_RF_W: f64 = 0.2;
pub const REFERENCE_NU_M_MHZ: f64 = 940.0;

/// Optical-power-to-Rabi conversion Ω₀/(2π√P_o) in MHz/√µW.
pub const DEFAULT_KAPPA_OPT: f64 = 65.0;

/// Decay and dephasing of the two-level optical transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    /// Spontaneous-emission linewidth ν_Γ (MHz), Γ = 2π·ν_Γ.
    pub nu_gamma: f64,
    /// Pure-dephasing rate ν_φ (MHz), γ_φ = 2π·ν_φ.
    pub nu_phi: f64,
    /// Gaussian spectral-diffusion FWHM (MHz).
    pub sd_fwhm: f64,
}

impl EmitterParams {
    pub fn new(nu_gamma: f64, nu_phi: f64, sd_fwhm: f64) -> Result<Self> {
        let p = Self { nu_gamma, nu_phi, sd_fwhm };
        p.validate()?;
        Ok(p)
    }

    /// Dissipation-free emitter, used for unitary reference dynamics.
    pub fn lossless() -> Self {
        Self { nu_gamma: 0.0, nu_phi: 0.0, sd_fwhm: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.nu_gamma > 0.0, "nu_gamma", self.nu_gamma, "must be > 0")?;
        require(self.nu_phi >= 0.0, "nu_phi", self.nu_phi, "must be >= 0")?;
        require(self.sd_fwhm >= 0.0, "sd_fwhm", self.sd_fwhm, "must be >= 0")
    }

    pub fn with_sd_fwhm(mut self, sd_fwhm: f64) -> Self {
        self.sd_fwhm = sd_fwhm;
        self
    }

    /// Γ (rad/ns).
    pub fn gamma(&self) -> f64 {
        angular(self.nu_gamma)
    }

    /// γ_φ (rad/ns).
    pub fn gamma_phi(&self) -> f64 {
        angular(self.nu_phi)
    }

    /// Transverse rate Γ₂ = Γ/2 + γ_φ (rad/ns).
    pub fn gamma2(&self) -> f64 {
        0.5 * self.gamma() + self.gamma_phi()
    }
}

impl Default for EmitterParams {
    fn default() -> Self {
        Self { nu_gamma: DEFAULT_NU_GAMMA_MHZ, nu_phi: 0.0, sd_fwhm: DEFAULT_SD_FWHM_MHZ }
    }
}

/// Classical phonon drive: the excited-state energy is modulated as
/// β·ω_m·cos(ω_m t + φ_m), i.e. a peak shift of 2g√n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhononDrive {
    /// ν_m (MHz).
    pub nu_m: f64,
    /// φ_m (rad), kept in [0, 2π).
    pub phi_m: f64,
    /// Modulation index β = 2g√n/ω_m.
    pub beta: f64,
}

impl PhononDrive {
    pub fn new(nu_m: f64, phi_m: f64, beta: f64) -> Result<Self> {
        require(nu_m > 0.0, "nu_m", nu_m, "must be > 0")?;
        require(beta >= 0.0, "beta", beta, "must be >= 0")?;
        require(phi_m.is_finite(), "phi_m", phi_m, "must be finite")?;
        Ok(Self { nu_m, phi_m: phi_m.rem_euclid(TAU), beta })
    }

    /// Builds the drive from the peak coupling g√n/2π (MHz).
    pub fn from_g_sqrt_n(nu_m: f64, phi_m: f64, g_sqrt_n: f64) -> Result<Self> {
        Self::new(nu_m, phi_m, crate::coupling::g_sqrt_n_to_beta(g_sqrt_n, nu_m)?)
    }

    /// g√n/2π (MHz).
    pub fn g_sqrt_n(&self) -> f64 {
        0.5 * self.beta * self.nu_m
    }

    /// ω_m (rad/ns).
    pub fn omega_m(&self) -> f64 {
        angular(self.nu_m)
    }
}

/// One CW optical tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalTone {
    /// Optical Rabi frequency ν_Ω0 (MHz), Ω₀ = 2π·ν_Ω0.
    pub nu_rabi: f64,
    /// Detuning from the unshifted carrier transition (MHz); positive is blue.
    pub nu_detuning: f64,
    /// Optical phase (rad).
    pub phase: f64,
}

impl OpticalTone {
    pub fn new(nu_rabi: f64, nu_detuning: f64, phase: f64) -> Result<Self> {
        require(nu_rabi >= 0.0, "nu_rabi", nu_rabi, "must be >= 0")?;
        require(nu_detuning.is_finite(), "nu_detuning", nu_detuning, "must be finite")?;
        require(phase.is_finite(), "phase", phase, "must be finite")?;
        Ok(Self { nu_rabi, nu_detuning, phase })
    }
}

/// Optical tones plus at most one classical phonon drive. The first tone is
/// the reference that defines the rotating frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriveConfig {
    pub tones: Vec<OpticalTone>,
    pub phonon: Option<PhononDrive>,
}

impl DriveConfig {
    pub fn single(tone: OpticalTone, phonon: Option<PhononDrive>) -> Self {
        Self { tones: vec![tone], phonon }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.tones {
            OpticalTone::new(t.nu_rabi, t.nu_detuning, t.phase)?;
        }
        if let Some(p) = &self.phonon {
            PhononDrive::new(p.nu_m, p.phi_m, p.beta)?;
        }
        Ok(())
    }

    /// Detuning of the frame-defining tone (MHz), 0 with no tones.
    pub fn reference_detuning(&self) -> f64 {
        self.tones.first().map_or(0.0, |t| t.nu_detuning)
    }

    pub fn without_phonon(&self) -> Self {
        Self { tones: self.tones.clone(), phonon: None }
    }
}

/// Material constants of the emitter host and the acoustic mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Deformation potential D/2π per unit strain (MHz); 6.1e8 MHz = 610 THz.
    pub d_over_2pi: f64,
    /// Acoustic phase velocity ω_m/k_m (m/s).
    pub saw_velocity: f64,
    /// Effective oscillator mass (kg).
    pub mass: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        require(self.d_over_2pi > 0.0, "d_over_2pi", self.d_over_2pi, "must be > 0")?;
        require(self.saw_velocity > 0.0, "saw_velocity", self.saw_velocity, "must be > 0")?;
        require(self.mass > 0.0, "mass", self.mass, "must be > 0")
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self { d_over_2pi: 6.1e8, saw_velocity: 5600.0, mass: 1e-15 }
    }
}

/// Conversions from lab powers to drive strengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// g√n/2π = eta_rf·√P_RF (MHz/√W).
    pub eta_rf: f64,
    /// Ω₀/(2π√P_o) (MHz/√µW).
    pub kappa_opt: f64,
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        require(self.eta_rf >= 0.0, "eta_rf", self.eta_rf, "must be >= 0")?;
        require(self.kappa_opt >= 0.0, "kappa_opt", self.kappa_opt, "must be >= 0")
    }
}

impl Default for Calibration {
    fn default() -> Self {
        let eta_rf = crate::coupling::eta_rf_from_reference(REFERENCE_BETA, REFERENCE_P_RF_W, REFERENCE_NU_M_MHZ)
            .expect("reference calibration point is valid");
        Self { eta_rf, kappa_opt: DEFAULT_KAPPA_OPT }
    }
}
