//! Locating phonon-sideband resonances of the semiclassical model.
//!
//! A strong optical tone light-shifts the sideband resonance away from
//! Δ = order·ν_m. Over one phonon period the single-tone Hamiltonian is
//! periodic, so the resonance is where the two Floquet quasi-energies have
//! their avoided crossing. The minimum quasi-energy gap there is the
//! effective sideband Rabi frequency.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::hamiltonian::{CompiledDrive, Mat2};
use crate::params::{DriveConfig, OpticalTone, PhononDrive};
use crate::units::{ordinary, period_ns};

const STEPS_PER_PERIOD: usize = 400;
const SCAN_POINTS: usize = 61;
const SCAN_HALF_WIDTH: f64 = 0.45;
const GOLDEN_TOL_MHZ: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandResonance {
    pub order: i32,
    /// Tone detuning at the avoided crossing (MHz).
    pub nu_detuning: f64,
    /// Minimum quasi-energy gap, i.e. the sideband Rabi frequency (MHz).
    pub nu_effective_rabi: f64,
}

/// One-period propagator U(T, 0) of the lossless single-tone Hamiltonian.
pub fn period_propagator(nu_detuning: f64, nu_rabi: f64, phonon: &PhononDrive) -> Result<Mat2> {
    let cfg = DriveConfig::single(OpticalTone::new(nu_rabi, nu_detuning, 0.0)?, Some(*phonon));
    let drive = CompiledDrive::new(&cfg);
    let h = period_ns(phonon.nu_m) / STEPS_PER_PERIOD as f64;
    let mi = Complex64::new(0.0, -1.0);
    let f = |t: f64, u: &Mat2| drive.matrix(t) * u * mi;
    let mut u = Mat2::identity();
    for i in 0..STEPS_PER_PERIOD {
        let t = i as f64 * h;
        let k1 = f(t, &u);
        let k2 = f(t + 0.5 * h, &(u + k1 * Complex64::new(0.5 * h, 0.0)));
        let k3 = f(t + 0.5 * h, &(u + k2 * Complex64::new(0.5 * h, 0.0)));
        let k4 = f(t + h, &(u + k3 * Complex64::new(h, 0.0)));
        u += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0);
    }
    Ok(u)
}

/// Quasi-energy splitting (MHz), folded into [0, ν_m/2].
pub fn quasi_energy_gap(nu_detuning: f64, nu_rabi: f64, phonon: &PhononDrive) -> Result<f64> {
    let u = period_propagator(nu_detuning, nu_rabi, phonon)?;
    // V = U/√det U = [[a, b], [−b*, a*]] has eigenvalues e^{±iθ}; atan2
    // keeps θ well conditioned near the crossing where θ → 0.
    let v = u / u.determinant().sqrt();
    let a = (v[(0, 0)] + v[(1, 1)].conj()) * 0.5;
    let b = (v[(0, 1)] - v[(1, 0)].conj()) * 0.5;
    let theta = (a.im * a.im + b.norm_sqr()).sqrt().atan2(a.re);
    // 2θ and 2π − 2θ are the same splitting modulo ω_m
    let phase = (2.0 * theta).min(TAU - 2.0 * theta);
    Ok(ordinary(phase / period_ns(phonon.nu_m)))
}

/// Finds the `order`-th sideband resonance (order −1 is the red sideband)
/// within ±0.45·ν_m of order·ν_m.
pub fn find_sideband_resonance(nu_rabi: f64, phonon: &PhononDrive, order: i32) -> Result<SidebandResonance> {
    require(nu_rabi >= 0.0, "nu_rabi", nu_rabi, "must be >= 0")?;
    require(phonon.beta > 0.0 || order == 0, "beta", phonon.beta, "must be > 0 for a sideband")?;
    let centre = order as f64 * phonon.nu_m;
    let half = SCAN_HALF_WIDTH * phonon.nu_m;
    let step = 2.0 * half / (SCAN_POINTS - 1) as f64;
    let gap = |d: f64| quasi_energy_gap(d, nu_rabi, phonon);
    let mut best = (0usize, f64::INFINITY);
    for i in 0..SCAN_POINTS {
        let g = gap(centre - half + i as f64 * step)?;
        if g < best.1 {
            best = (i, g);
        }
    }
    let mut a = centre - half + best.0.saturating_sub(1) as f64 * step;
    let mut b = centre - half + (best.0 + 1).min(SCAN_POINTS - 1) as f64 * step;
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (gap(c)?, gap(d)?);
    while (b - a).abs() > GOLDEN_TOL_MHZ {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = gap(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = gap(d)?;
        }
    }
    let nu_detuning = 0.5 * (a + b);
    let nu_effective_rabi = gap(nu_detuning)?;
    if !nu_effective_rabi.is_finite() {
        return Err(Error::Invalid("quasi-energy gap is not finite".into()));
    }
    Ok(SidebandResonance { order, nu_detuning, nu_effective_rabi })
}
