//! Unit conversions. Ordinary frequency ν in MHz maps to angular frequency
//! ω = 2πν in rad/ns.

use std::f64::consts::TAU;

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// FWHM of a Gaussian in units of its standard deviation, 2√(2 ln 2).
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

/// MHz → rad/ns.
#[inline]
pub fn angular(nu_mhz: f64) -> f64 {
    TAU * nu_mhz * 1e-3
}

/// rad/ns → MHz.
#[inline]
pub fn ordinary(omega: f64) -> f64 {
    omega / (TAU * 1e-3)
}

/// MHz → rad/s, for formulas written in SI units.
#[inline]
pub fn angular_si(nu_mhz: f64) -> f64 {
    TAU * nu_mhz * 1e6
}

/// Period in ns of an ordinary frequency in MHz.
#[inline]
pub fn period_ns(nu_mhz: f64) -> f64 {
    1e3 / nu_mhz
}
