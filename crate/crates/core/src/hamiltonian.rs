//! Semiclassical Hamiltonian of the emitter under optical tones and a
//! classical phonon drive, in the frame rotating at the first (reference)
//! tone:
//!
//! H(t)/ħ = [−Δ_ref + β·ω_m·cos(ω_m t + φ_m)]·|e⟩⟨e|
//!        + Σ_j (Ω₀ⱼ/2)·(e^{+i(δ_j t + φ_j)}|g⟩⟨e| + h.c.)
//!
//! with δ_j the j-th tone's offset from the reference tone. Basis order is
//! (|g⟩, |e⟩); all entries are in rad/ns.

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::params::DriveConfig;
use crate::units::angular;

pub type Mat2 = Matrix2<Complex64>;

#[derive(Debug, Clone, Copy)]
struct Tone {
    half_rabi: f64,
    beat: f64,
    phase: f64,
}

#[derive(Debug, Clone, Copy)]
struct Modulation {
    amplitude: f64,
    omega_m: f64,
    phi_m: f64,
}

/// A [`DriveConfig`] converted once to angular units for repeated
/// evaluation inside the integrators.
#[derive(Debug, Clone)]
pub struct CompiledDrive {
    delta_ref: f64,
    tones: Vec<Tone>,
    static_coupling: Option<Complex64>,
    modulation: Option<Modulation>,
    modulation_on: bool,
}

impl CompiledDrive {
    pub fn new(config: &DriveConfig) -> Self {
        let nu_ref = config.reference_detuning();
        let tones: Vec<Tone> = config
            .tones
            .iter()
            .map(|t| Tone {
                half_rabi: 0.5 * angular(t.nu_rabi),
                beat: angular(t.nu_detuning - nu_ref),
                phase: t.phase,
            })
            .collect();
        let static_coupling = if tones.iter().all(|t| t.beat == 0.0) {
            Some(tones.iter().map(|t| Complex64::from_polar(t.half_rabi, t.phase)).sum())
        } else {
            None
        };
        let modulation = config.phonon.map(|p| Modulation {
            amplitude: p.beta * p.omega_m(),
            omega_m: p.omega_m(),
            phi_m: p.phi_m,
        });
        Self { delta_ref: angular(nu_ref), tones, static_coupling, modulation, modulation_on: true }
    }

    /// Square gating of the phonon drive.
    pub fn set_phonon_enabled(&mut self, on: bool) {
        self.modulation_on = on;
    }

    /// H_ee(t).
    #[inline]
    pub fn diagonal(&self, t: f64) -> f64 {
        match (&self.modulation, self.modulation_on) {
            (Some(m), true) => -self.delta_ref + m.amplitude * (m.omega_m * t + m.phi_m).cos(),
            _ => -self.delta_ref,
        }
    }

    /// H_ge(t), the ⟨g|H|e⟩ element.
    #[inline]
    pub fn coupling(&self, t: f64) -> Complex64 {
        if let Some(c) = self.static_coupling {
            return c;
        }
        self.tones
            .iter()
            .map(|tone| Complex64::from_polar(tone.half_rabi, tone.beat * t + tone.phase))
            .sum()
    }

    pub fn matrix(&self, t: f64) -> Mat2 {
        let c = self.coupling(t);
        Mat2::new(Complex64::new(0.0, 0.0), c, c.conj(), Complex64::new(self.diagonal(t), 0.0))
    }
}

/// H(t)/ħ for `config` (rad/ns).
pub fn semiclassical_hamiltonian(t: f64, config: &DriveConfig) -> Mat2 {
    CompiledDrive::new(config).matrix(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_j;
    use crate::params::{OpticalTone, PhononDrive};
    use std::f64::consts::TAU;

    #[test]
    fn resonant_tone_without_phonon_is_sigma_x() {
        let cfg = DriveConfig::single(OpticalTone::new(50.0, 0.0, 0.0).unwrap(), None);
        let h = semiclassical_hamiltonian(3.7, &cfg);
        let half = 0.5 * angular(50.0);
        assert_eq!(h[(0, 0)], Complex64::new(0.0, 0.0));
        assert_eq!(h[(1, 1)], Complex64::new(0.0, 0.0));
        assert!((h[(0, 1)] - half).norm() < 1e-15);
        assert!((h[(1, 0)] - half).norm() < 1e-15);
    }

    #[test]
    fn hermitian_for_multi_tone_drive() {
        let cfg = DriveConfig {
            tones: vec![
                OpticalTone::new(20.0, -900.0, 0.3).unwrap(),
                OpticalTone::new(5.0, 12.0, 1.1).unwrap(),
                OpticalTone::new(7.0, 450.0, -2.0).unwrap(),
            ],
            phonon: Some(PhononDrive::new(900.0, 0.4, 0.6).unwrap()),
        };
        let d = CompiledDrive::new(&cfg);
        for i in 0..500 {
            let h = d.matrix(i as f64 * 0.0137);
            assert_eq!(h, h.adjoint());
        }
    }

    #[test]
    fn diagonal_without_optical_drive() {
        let cfg = DriveConfig::single(
            OpticalTone::new(0.0, -100.0, 0.0).unwrap(),
            Some(PhononDrive::new(900.0, 0.0, 0.455).unwrap()),
        );
        let d = CompiledDrive::new(&cfg);
        for i in 0..100 {
            let h = d.matrix(i as f64 * 0.031);
            assert_eq!(h[(0, 1)], Complex64::new(0.0, 0.0));
        }
    }

    /// The only frequency content of H_ee(t) is at multiples of ν_m; with
    /// β = 0 it is constant.
    #[test]
    fn phonon_drive_adds_content_only_at_phonon_harmonics() {
        let nu_m = 900.0;
        let period = 1e3 / nu_m;
        let n = 256;
        let cycles = 4;
        let dt = cycles as f64 * period / n as f64;
        for beta in [0.0, 0.455] {
            let cfg = DriveConfig::single(
                OpticalTone::new(10.0, -250.0, 0.0).unwrap(),
                Some(PhononDrive::new(nu_m, 0.7, beta).unwrap()),
            );
            let d = CompiledDrive::new(&cfg);
            let samples: Vec<f64> = (0..n).map(|i| d.diagonal(i as f64 * dt)).collect();
            for k in 1..n / 2 {
                let bin: Complex64 = samples
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v * Complex64::from_polar(1.0, -TAU * (k * i) as f64 / n as f64))
                    .sum::<Complex64>()
                    / n as f64;
                let is_harmonic = k % cycles == 0 && beta > 0.0 && k / cycles == 1;
                if is_harmonic {
                    assert!(bin.norm() > 1.0);
                } else {
                    assert!(bin.norm() < 1e-10, "beta {beta} bin {k}: {}", bin.norm());
                }
            }
        }
    }

    /// Transforming to the modulation frame, the coupling component that is
    /// static at the red sideband has magnitude (Ω₀/2)·J₁(β).
    #[test]
    fn red_sideband_component_matches_first_bessel_weight() {
        let nu_m = 900.0;
        let beta = 0.455;
        let nu_rabi = 30.0;
        let tone = OpticalTone::new(nu_rabi, -nu_m, 0.0).unwrap();
        let phonon = PhononDrive::new(nu_m, 0.0, beta).unwrap();
        let d = CompiledDrive::new(&DriveConfig::single(tone, Some(phonon)));
        let omega_m = angular(nu_m);
        let period = TAU / omega_m;
        // |e⟩ accumulates θ(t) = ∫₀ᵗ H_ee = ω_m t + β sin(ω_m t); the
        // interaction-frame coupling is H_ge·e^{-iθ}. Midpoint rule over one
        // period is spectrally accurate for this periodic integrand.
        let n = 4000;
        let h = period / n as f64;
        let mut avg = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            let theta = omega_m * t + beta * (omega_m * t).sin();
            avg += d.coupling(t) * Complex64::from_polar(1.0, -theta);
        }
        avg /= n as f64;
        let expected = 0.5 * angular(nu_rabi) * bessel_j(1, beta).unwrap();
        assert!((avg.norm() - expected).abs() < 1e-12, "{} vs {}", avg.norm(), expected);
        // J_{-1} = -J_1: the resonant component carries a minus sign
        assert!((avg.re + expected).abs() < 1e-12);
    }
}
