//! Coupling-rate formulas linking material constants, lab powers and drive
//! strengths. ħ only appears in [`single_phonon_coupling`].

use std::f64::consts::TAU;

use crate::error::{require, Result};
use crate::params::MaterialParams;
use crate::units::{angular_si, HBAR};

/// Single-phonon electron-phonon coupling g/2π (MHz) of an oscillator mode of
/// frequency `nu_m` (MHz): g = D·k_m·√(ħ/2mω_m), with k_m = ω_m/v.
pub fn single_phonon_coupling(material: &MaterialParams, nu_m: f64) -> Result<f64> {
    material.validate()?;
    require(nu_m > 0.0, "nu_m", nu_m, "must be > 0")?;
    let omega_m = angular_si(nu_m);
    let k_m = omega_m / material.saw_velocity;
    let d = angular_si(material.d_over_2pi);
    let zpf = (HBAR / (2.0 * material.mass * omega_m)).sqrt();
    Ok(d * k_m * zpf / TAU * 1e-6)
}

/// Sideband Rabi frequency ν_Ω = ν_Ω0·β/2 (MHz), the linearised form of
/// g√n·Ω₀/ω_m.
pub fn sideband_rabi(nu_rabi: f64, beta: f64) -> Result<f64> {
    require(nu_rabi >= 0.0, "nu_rabi", nu_rabi, "must be >= 0")?;
    require(beta >= 0.0, "beta", beta, "must be >= 0")?;
    Ok(0.5 * nu_rabi * beta)
}

/// β = 2g√n/ω_m from g√n/2π and ν_m (both MHz).
pub fn g_sqrt_n_to_beta(g_sqrt_n: f64, nu_m: f64) -> Result<f64> {
    require(nu_m > 0.0, "nu_m", nu_m, "must be > 0")?;
    require(g_sqrt_n >= 0.0, "g_sqrt_n", g_sqrt_n, "must be >= 0")?;
    Ok(2.0 * g_sqrt_n / nu_m)
}

pub fn beta_to_g_sqrt_n(beta: f64, nu_m: f64) -> Result<f64> {
    require(nu_m > 0.0, "nu_m", nu_m, "must be > 0")?;
    require(beta >= 0.0, "beta", beta, "must be >= 0")?;
    Ok(0.5 * beta * nu_m)
}

/// SAW displacement amplitude (pm) implied by a sideband Rabi frequency:
/// A = 2·v·(Ω/Ω₀)/D with D in rad/s per unit strain.
pub fn saw_amplitude(nu_omega: f64, nu_rabi: f64, saw_velocity: f64, d_over_2pi: f64) -> Result<f64> {
    require(nu_rabi > 0.0, "nu_rabi", nu_rabi, "must be > 0 (division by zero)")?;
    require(nu_omega >= 0.0, "nu_omega", nu_omega, "must be >= 0")?;
    require(saw_velocity > 0.0, "saw_velocity", saw_velocity, "must be > 0")?;
    require(d_over_2pi > 0.0, "d_over_2pi", d_over_2pi, "must be > 0")?;
    let amplitude_m = 2.0 * saw_velocity * (nu_omega / nu_rabi) / angular_si(d_over_2pi);
    Ok(amplitude_m * 1e12)
}

/// Inverse of [`saw_amplitude`]: the sideband Rabi frequency (MHz) produced
/// by a SAW of amplitude `amplitude_pm`.
pub fn sideband_rabi_from_saw(amplitude_pm: f64, nu_rabi: f64, saw_velocity: f64, d_over_2pi: f64) -> Result<f64> {
    require(amplitude_pm >= 0.0, "amplitude_pm", amplitude_pm, "must be >= 0")?;
    require(saw_velocity > 0.0, "saw_velocity", saw_velocity, "must be > 0")?;
    require(d_over_2pi > 0.0, "d_over_2pi", d_over_2pi, "must be > 0")?;
    Ok(amplitude_pm * 1e-12 * angular_si(d_over_2pi) * nu_rabi / (2.0 * saw_velocity))
}

/// β = 2·eta_rf·√P_RF/ν_m.
pub fn rf_power_to_beta(p_rf: f64, eta_rf: f64, nu_m: f64) -> Result<f64> {
    require(p_rf >= 0.0, "p_rf", p_rf, "must be >= 0")?;
    require(eta_rf >= 0.0, "eta_rf", eta_rf, "must be >= 0")?;
    require(nu_m > 0.0, "nu_m", nu_m, "must be > 0")?;
    Ok(2.0 * eta_rf * p_rf.sqrt() / nu_m)
}

/// eta_rf (MHz/√W) such that `rf_power_to_beta(p_ref, eta, nu_m) == beta_ref`.
pub fn eta_rf_from_reference(beta_ref: f64, p_ref: f64, nu_m: f64) -> Result<f64> {
    require(p_ref > 0.0, "p_ref", p_ref, "must be > 0")?;
    require(beta_ref >= 0.0, "beta_ref", beta_ref, "must be >= 0")?;
    require(nu_m > 0.0, "nu_m", nu_m, "must be > 0")?;
    Ok(beta_ref * nu_m / (2.0 * p_ref.sqrt()))
}

/// ν_Ω0 = kappa_opt·√P_o, with P_o in µW.
pub fn optical_power_to_rabi(p_o: f64, kappa_opt: f64) -> Result<f64> {
    require(p_o >= 0.0, "p_o", p_o, "must be >= 0")?;
    require(kappa_opt >= 0.0, "kappa_opt", kappa_opt, "must be >= 0")?;
    Ok(kappa_opt * p_o.sqrt())
}
