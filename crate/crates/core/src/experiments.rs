//! Time-domain protocols: the gated-phonon Rabi sequence with time-binned
//! photon counts, and the two-pathway (carrier + red sideband) interference
//! scans over the phonon phase and the AOM frequency.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::rf_power_to_beta;
use crate::error::{require, Error, Result};
use crate::fit::{fit_damped_sinusoid, fit_fixed_period_sinusoid, linear_fit, FixedPeriodFit, LineFit, LmOptions};
use crate::floquet::find_sideband_resonance;
use crate::lindblad::{default_step, steady_state_excited_population, time_averaged_excited, DensityMatrix, Propagator};
use crate::params::{Calibration, DriveConfig, EmitterParams, OpticalTone, PhononDrive};
use crate::spectroscopy::DEFAULT_TRANSIENT_GAMMA;

/// Largest |ρ_ee − ρ_ee^CW| accepted at the start of the next pulse.
pub const REST_TOLERANCE: f64 = 1e-3;
/// Fits need at least this many bins.
pub const MIN_FIT_BINS: usize = 12;
/// Fewer fitted periods than this in the window flags the fit as ambiguous.
pub const MIN_PERIODS: f64 = 1.5;

/// Rabi pulse sequence: the optical tone is CW, the phonon drive is on for
/// `pulse_ns` and off for `rest_ns`, repeated `repetitions` times after each
/// reset to |g⟩. Frequencies in MHz, times in ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiSequenceConfig {
    pub pulse_ns: f64,
    pub rest_ns: f64,
    pub bin_ns: f64,
    pub repetitions: usize,
    pub nu_rabi: f64,
    pub beta: f64,
    pub nu_m: f64,
    pub phi_m: f64,
    /// Tone detuning; `None` tunes to the light-shifted red sideband.
    pub nu_detuning: Option<f64>,
    /// Detected photons per emitted photon.
    pub collection_eta: f64,
    /// Poisson shot noise on the bin counts when set.
    pub seed: Option<u64>,
}

impl Default for RabiSequenceConfig {
    fn default() -> Self {
        Self {
            pulse_ns: 90.0,
            rest_ns: 100.0,
            bin_ns: 2.8,
            repetitions: 100,
            nu_rabi: 290.0,
            beta: 0.455,
            nu_m: 940.0,
            phi_m: 0.0,
            nu_detuning: None,
            collection_eta: 1e-3,
            seed: None,
        }
    }
}

impl RabiSequenceConfig {
    pub fn validate(&self, emitter: &EmitterParams) -> Result<()> {
        require(self.pulse_ns > 0.0, "pulse_ns", self.pulse_ns, "must be > 0")?;
        require(self.bin_ns > 0.0, "bin_ns", self.bin_ns, "must be > 0")?;
        require(self.bin_ns <= self.pulse_ns, "bin_ns", self.bin_ns, "must not exceed the pulse length")?;
        let min_rest = 5.0 / emitter.gamma();
        require(self.rest_ns >= min_rest, "rest_ns", self.rest_ns, "must be >= 5/Gamma")?;
        require(self.repetitions >= 1, "repetitions", self.repetitions as f64, "must be >= 1")?;
        require(self.nu_rabi >= 0.0, "nu_rabi", self.nu_rabi, "must be >= 0")?;
        require(self.beta >= 0.0, "beta", self.beta, "must be >= 0")?;
        require(self.nu_m > 0.0, "nu_m", self.nu_m, "must be > 0")?;
        require(self.collection_eta >= 0.0 && self.collection_eta <= 1.0, "collection_eta", self.collection_eta, "must be in [0, 1]")
    }

    /// Detuning used for the tone: the override, the Floquet red-sideband
    /// resonance when β > 0, or −ν_m.
    pub fn resolved_detuning(&self) -> Result<f64> {
        match self.nu_detuning {
            Some(d) => Ok(d),
            None if self.beta > 0.0 => {
                Ok(find_sideband_resonance(self.nu_rabi, &PhononDrive::new(self.nu_m, self.phi_m, self.beta)?, -1)?.nu_detuning)
            }
            None => Ok(-self.nu_m),
        }
    }
}

/// Photon counts per time bin, summed over the repetitions of one
/// initialization cycle. Bin times are relative to each pulse start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCounts {
    pub bin_starts: Vec<f64>,
    pub bin_ns: f64,
    pub expected: Vec<f64>,
    pub sampled: Option<Vec<u64>>,
    pub nu_detuning: f64,
    /// Largest |ρ_ee − ρ_ee^CW| seen at a pulse start.
    pub rest_residual: f64,
}

impl BinnedCounts {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_starts.iter().map(|t| t + 0.5 * self.bin_ns).collect()
    }

    /// Sampled counts when present, else expected counts.
    pub fn values(&self) -> Vec<f64> {
        match &self.sampled {
            Some(s) => s.iter().map(|&c| c as f64).collect(),
            None => self.expected.clone(),
        }
    }
}

/// Runs the gated sequence from |g⟩. The phonon drive keeps its absolute
/// phase across pulses. Each pulse after the first must start within
/// [`REST_TOLERANCE`] of the CW excited population of the tone alone.
pub fn rabi_sequence(cfg: &RabiSequenceConfig, emitter: &EmitterParams) -> Result<BinnedCounts> {
    cfg.validate(emitter)?;
    let nu_detuning = cfg.resolved_detuning()?;
    let phonon = if cfg.beta > 0.0 { Some(PhononDrive::new(cfg.nu_m, cfg.phi_m, cfg.beta)?) } else { None };
    let drive = DriveConfig::single(OpticalTone::new(cfg.nu_rabi, nu_detuning, 0.0)?, phonon);
    let dt0 = default_step(&drive, emitter);
    let per_bin = (cfg.bin_ns / dt0).ceil() as usize;
    let h = cfg.bin_ns / per_bin as f64;
    let n_bins = (cfg.pulse_ns / cfg.bin_ns + 1e-9).floor() as usize;
    let tail = cfg.pulse_ns - n_bins as f64 * cfg.bin_ns;
    let rest_steps = (cfg.rest_ns / h).ceil() as usize;
    let h_rest = cfg.rest_ns / rest_steps as f64;
    let cw = steady_state_excited_population(nu_detuning, cfg.nu_rabi, emitter);
    let scale = cfg.collection_eta * emitter.gamma();

    let mut prop = Propagator::new(&DensityMatrix::ground(), &drive, emitter, 0.0)?;
    let mut expected = vec![0.0; n_bins];
    let mut rest_residual: f64 = 0.0;
    for rep in 0..cfg.repetitions {
        if rep > 0 {
            let r = (prop.rho_ee() - cw).abs();
            rest_residual = rest_residual.max(r);
            if r > REST_TOLERANCE {
                return Err(Error::RestTooShort { residual: r });
            }
        }
        prop.set_phonon_enabled(true);
        for e in expected.iter_mut() {
            *e += scale * prop.integrate_excited(per_bin, h)?;
        }
        if tail > 1e-9 {
            let n = (tail / h).ceil() as usize;
            for _ in 0..n {
                prop.step(tail / n as f64)?;
            }
        }
        prop.set_phonon_enabled(false);
        for _ in 0..rest_steps {
            prop.step(h_rest)?;
        }
    }
    let sampled = match cfg.seed {
        Some(seed) => Some(sample_poisson(&expected, seed)?),
        None => None,
    };
    Ok(BinnedCounts {
        bin_starts: (0..n_bins).map(|i| i as f64 * cfg.bin_ns).collect(),
        bin_ns: cfg.bin_ns,
        expected,
        sampled,
        nu_detuning,
        rest_residual,
    })
}

/// Poisson draws with one ChaCha stream seeded by `seed`, bins in order.
pub fn sample_poisson(expected: &[f64], seed: u64) -> Result<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    expected
        .iter()
        .map(|&lambda| {
            if lambda <= 0.0 {
                return Ok(0);
            }
            let d = Poisson::new(lambda).map_err(|e| Error::Invalid(format!("Poisson mean {lambda}: {e}")))?;
            Ok(d.sample(&mut rng) as u64)
        })
        .collect()
}

/// A·e^{−t/τ}·cos(2πνt + φ) + C fitted to a count trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    /// ν (MHz).
    pub frequency: f64,
    /// τ (ns); infinite when the fitted envelope does not decay.
    pub decay_time: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub residual_rms: f64,
    pub r_squared: f64,
    pub converged: bool,
    /// Fewer than 1.5 periods of the fitted oscillation fit in the window,
    /// or the oscillation carries no signal.
    pub ambiguous: bool,
}

/// Damped-sinusoid fit of binned counts, seeded from the strongest
/// periodogram component between one cycle per window and the bin Nyquist
/// frequency.
pub fn fit_rabi_counts(counts: &BinnedCounts) -> Result<RabiFit> {
    let n = counts.bin_starts.len();
    if n < MIN_FIT_BINS {
        return Err(Error::Invalid(format!("{n} bins, at least {MIN_FIT_BINS} are needed for a fit")));
    }
    // µs time base so the frequency comes out in MHz
    let t: Vec<f64> = counts.bin_centers().iter().map(|t| t * 1e-3).collect();
    let y = counts.values();
    let window = n as f64 * counts.bin_ns * 1e-3;
    let nyquist = 0.5 / (counts.bin_ns * 1e-3);
    let fit = fit_damped_sinusoid(&t, &y, 1.0 / window, nyquist, LmOptions::default())?;
    let m = fit.model;
    let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    let flat = !(spread > 0.0) || !(m.amplitude > 1e-6 * spread);
    Ok(RabiFit {
        frequency: m.frequency,
        decay_time: if m.decay_rate > 0.0 { 1e3 / m.decay_rate } else { f64::INFINITY },
        amplitude: m.amplitude,
        phase: m.phase,
        offset: m.offset,
        residual_rms: fit.residual_rms,
        r_squared: fit.r_squared,
        converged: fit.converged,
        ambiguous: flat || m.frequency * window < MIN_PERIODS || !fit.r_squared.is_finite() || fit.r_squared < 0.5,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiPowerRow {
    pub p_rf: f64,
    pub beta: f64,
    pub fit: RabiFit,
}

/// Rabi sequences at several RF powers with β from the calibration, and a
/// straight-line fit of the fitted frequency against √P_RF.
pub fn rabi_vs_rf_power(
    p_rf_list: &[f64],
    cfg: &RabiSequenceConfig,
    calibration: &Calibration,
    emitter: &EmitterParams,
) -> Result<(Vec<RabiPowerRow>, LineFit)> {
    if p_rf_list.len() < 2 {
        return Err(Error::Invalid("at least two RF powers are needed".into()));
    }
    let rows: Vec<RabiPowerRow> = p_rf_list
        .par_iter()
        .enumerate()
        .map(|(i, &p_rf)| {
            let beta = rf_power_to_beta(p_rf, calibration.eta_rf, cfg.nu_m)?;
            let c = RabiSequenceConfig { beta, seed: cfg.seed.map(|s| s.wrapping_add(i as u64)), ..cfg.clone() };
            Ok(RabiPowerRow { p_rf, beta, fit: fit_rabi_counts(&rabi_sequence(&c, emitter)?)? })
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.p_rf.sqrt()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.fit.frequency).collect();
    let line = linear_fit(&x, &y)?;
    Ok((rows, line))
}

/// Two tones from one laser: a sideband tone at −ν_m (phase 0) and the
/// AOM-shifted carrier tone at ν_AOM − ν_m (phase φ_AOM), with the phonon
/// drive (ν_m, φ_m, β). Frequencies in MHz, times in ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceConfig {
    pub nu_m: f64,
    pub beta: f64,
    pub phi_m: f64,
    pub nu_rabi_sideband: f64,
    pub nu_rabi_carrier: f64,
    pub phi_aom: f64,
    /// Defaults to ν_m (the resonant condition).
    pub nu_aom: Option<f64>,
    /// Defaults to 10/Γ.
    pub transient_ns: Option<f64>,
    pub t_int_ns: f64,
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        Self {
            nu_m: 900.0,
            beta: 0.455,
            phi_m: 0.0,
            nu_rabi_sideband: 5.0,
            // balances the carrier against the J₁(0.455)-weighted sideband path
            nu_rabi_carrier: 1.1,
            phi_aom: 0.0,
            nu_aom: None,
            transient_ns: None,
            t_int_ns: 1000.0,
        }
    }
}

impl InterferenceConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.nu_m > 0.0, "nu_m", self.nu_m, "must be > 0")?;
        require(self.beta >= 0.0, "beta", self.beta, "must be >= 0")?;
        require(self.nu_rabi_sideband >= 0.0, "nu_rabi_sideband", self.nu_rabi_sideband, "must be >= 0")?;
        require(self.nu_rabi_carrier >= 0.0, "nu_rabi_carrier", self.nu_rabi_carrier, "must be >= 0")?;
        require(self.t_int_ns > 0.0, "t_int_ns", self.t_int_ns, "must be > 0")?;
        if let Some(t) = self.transient_ns {
            require(t >= 0.0, "transient_ns", t, "must be >= 0")?;
        }
        Ok(())
    }

    /// Both tones, sideband first.
    pub fn drive(&self) -> Result<DriveConfig> {
        let nu_aom = self.nu_aom.unwrap_or(self.nu_m);
        let phonon = if self.beta > 0.0 { Some(PhononDrive::new(self.nu_m, self.phi_m, self.beta)?) } else { None };
        Ok(DriveConfig {
            tones: vec![
                OpticalTone::new(self.nu_rabi_sideband, -self.nu_m, 0.0)?,
                OpticalTone::new(self.nu_rabi_carrier, nu_aom - self.nu_m, self.phi_aom)?,
            ],
            phonon,
        })
    }
}

/// Time-averaged Γ·ρ_ee over T_int after the transient, from |g⟩.
pub fn interference_fluorescence(cfg: &InterferenceConfig, emitter: &EmitterParams) -> Result<f64> {
    cfg.validate()?;
    let transient = cfg.transient_ns.unwrap_or(DEFAULT_TRANSIENT_GAMMA / emitter.gamma());
    Ok(emitter.gamma() * time_averaged_excited(&cfg.drive()?, emitter, transient, cfg.t_int_ns)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub x: Vec<f64>,
    pub fluorescence: Vec<f64>,
}

/// Fluorescence versus φ_m at fixed ν_AOM.
pub fn interference_scan_phase(phi_grid: &[f64], cfg: &InterferenceConfig, emitter: &EmitterParams) -> Result<ScanTable> {
    let fluorescence = phi_grid
        .par_iter()
        .map(|&phi_m| interference_fluorescence(&InterferenceConfig { phi_m, ..cfg.clone() }, emitter))
        .collect::<Result<_>>()?;
    Ok(ScanTable { x: phi_grid.to_vec(), fluorescence })
}

/// Fluorescence versus ν_AOM at fixed φ_m.
pub fn interference_scan_aom(nu_aom_grid: &[f64], cfg: &InterferenceConfig, emitter: &EmitterParams) -> Result<ScanTable> {
    let fluorescence = nu_aom_grid
        .par_iter()
        .map(|&nu_aom| interference_fluorescence(&InterferenceConfig { nu_aom: Some(nu_aom), ..cfg.clone() }, emitter))
        .collect::<Result<_>>()?;
    Ok(ScanTable { x: nu_aom_grid.to_vec(), fluorescence })
}

/// 2π-periodic sinusoid fit of a phase scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub fit: FixedPeriodFit,
    /// RMS residual over the fringe amplitude.
    pub relative_residual: f64,
}

pub fn fit_fringe(scan: &ScanTable) -> Result<FringeFit> {
    let fit = fit_fixed_period_sinusoid(&scan.x, &scan.fluorescence, std::f64::consts::TAU)?;
    let rms = (scan
        .x
        .iter()
        .zip(&scan.fluorescence)
        .map(|(&x, &y)| (y - fit.offset - fit.amplitude * (x + fit.phase).cos()).powi(2))
        .sum::<f64>()
        / scan.x.len() as f64)
        .sqrt();
    Ok(FringeFit { fit, relative_residual: if fit.amplitude > 0.0 { rms / fit.amplitude } else { f64::INFINITY } })
}

/// Interference part of an AOM scan: half the difference of scans at φ_m
/// and φ_m + π, which cancels the pathway-incoherent background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AomResonance {
    pub nu_aom: Vec<f64>,
    pub interference: Vec<f64>,
    /// Full width at half maximum of |interference| around ν_m (MHz).
    pub fwhm: f64,
}

pub fn aom_resonance(nu_aom_grid: &[f64], cfg: &InterferenceConfig, emitter: &EmitterParams) -> Result<AomResonance> {
    let a = interference_scan_aom(nu_aom_grid, cfg, emitter)?;
    let shifted = InterferenceConfig { phi_m: cfg.phi_m + std::f64::consts::PI, ..cfg.clone() };
    let b = interference_scan_aom(nu_aom_grid, &shifted, emitter)?;
    let interference: Vec<f64> = a.fluorescence.iter().zip(&b.fluorescence).map(|(x, y)| 0.5 * (x - y)).collect();
    let fwhm = central_fwhm(nu_aom_grid, &interference, cfg.nu_m)?;
    Ok(AomResonance { nu_aom: nu_aom_grid.to_vec(), interference, fwhm })
}

/// FWHM of |y| around the grid point nearest `center`, from linear
/// interpolation of the half-maximum crossings on each side.
pub fn central_fwhm(x: &[f64], y: &[f64], center: f64) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Invalid("need at least 3 matching points".into()));
    }
    let i0 = (0..x.len()).min_by(|&a, &b| (x[a] - center).abs().total_cmp(&(x[b] - center).abs())).unwrap_or(0);
    let peak = y[i0].abs();
    if !(peak > 0.0) {
        return Err(Error::Invalid("no signal at the resonance".into()));
    }
    let half = 0.5 * peak;
    let a: Vec<f64> = y.iter().map(|v| v.abs() * y[i0].signum() * v.signum()).collect();
    let cross = |range: Box<dyn Iterator<Item = usize>>| -> Option<f64> {
        let mut prev = i0;
        for i in range {
            if a[i] < half {
                let t = (a[prev] - half) / (a[prev] - a[i]);
                return Some(x[prev] + t * (x[i] - x[prev]));
            }
            prev = i;
        }
        None
    };
    let right = cross(Box::new(i0 + 1..x.len())).ok_or_else(|| Error::Invalid("no half-maximum crossing above the resonance".into()))?;
    let left = cross(Box::new((0..i0).rev())).ok_or_else(|| Error::Invalid("no half-maximum crossing below the resonance".into()))?;
    Ok(right - left)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::DampedSinusoid;

    fn synthetic_counts(m: DampedSinusoid, bin: f64, n: usize) -> BinnedCounts {
        let starts: Vec<f64> = (0..n).map(|i| i as f64 * bin).collect();
        BinnedCounts {
            expected: starts.iter().map(|t| m.evaluate((t + 0.5 * bin) * 1e-3)).collect(),
            bin_starts: starts,
            bin_ns: bin,
            sampled: None,
            nu_detuning: 0.0,
            rest_residual: 0.0,
        }
    }

    #[test]
    fn fit_round_trip_on_synthetic_counts() {
        let m = DampedSinusoid { offset: 50.0, amplitude: 20.0, decay_rate: 15.0, frequency: 66.0, phase: 2.0 };
        let f = fit_rabi_counts(&synthetic_counts(m, 1.0, 90)).unwrap();
        assert!(((f.frequency - 66.0) / 66.0).abs() < 1e-6, "{f:?}");
        assert!(((f.decay_time - 1e3 / 15.0) / (1e3 / 15.0)).abs() < 1e-6);
        assert!(((f.amplitude - 20.0) / 20.0).abs() < 1e-6 && ((f.offset - 50.0) / 50.0).abs() < 1e-6);
        assert!(!f.ambiguous && f.converged);
    }

    #[test]
    fn fit_requires_enough_bins() {
        let m = DampedSinusoid { offset: 1.0, amplitude: 1.0, decay_rate: 0.0, frequency: 50.0, phase: 0.0 };
        assert!(fit_rabi_counts(&synthetic_counts(m, 2.8, 11)).is_err());
    }

    #[test]
    fn short_window_is_ambiguous() {
        let m = DampedSinusoid { offset: 1.0, amplitude: 1.0, decay_rate: 0.0, frequency: 10.0, phase: 0.3 };
        // 12 bins of 2.8 ns hold a third of a 10 MHz period
        let f = fit_rabi_counts(&synthetic_counts(m, 2.8, 12)).unwrap();
        assert!(f.ambiguous, "{f:?}");
    }

    #[test]
    fn poisson_sampling_is_seeded() {
        let lam = vec![0.0, 3.0, 50.5, 1e3];
        assert_eq!(sample_poisson(&lam, 7).unwrap(), sample_poisson(&lam, 7).unwrap());
        assert_ne!(sample_poisson(&lam, 7).unwrap(), sample_poisson(&lam, 8).unwrap());
        assert_eq!(sample_poisson(&lam, 7).unwrap()[0], 0);
    }

    #[test]
    fn rabi_config_validation() {
        let e = EmitterParams::default();
        let bad_bin = RabiSequenceConfig { bin_ns: 100.0, ..Default::default() };
        assert!(bad_bin.validate(&e).is_err());
        let bad_rest = RabiSequenceConfig { rest_ns: 10.0, ..Default::default() };
        assert!(bad_rest.validate(&e).is_err());
        assert!(RabiSequenceConfig::default().validate(&e).is_ok());
    }

    #[test]
    fn short_rest_is_reported() {
        // 5/Γ satisfies the bound but leaves the pulse ringing above 1e-3
        let e = EmitterParams::default();
        let cfg = RabiSequenceConfig { rest_ns: 5.0 / e.gamma(), repetitions: 3, ..Default::default() };
        assert!(matches!(rabi_sequence(&cfg, &e), Err(Error::RestTooShort { .. })));
    }

    #[test]
    fn central_fwhm_of_a_triangle() {
        let x: Vec<f64> = (0..21).map(|i| i as f64 - 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (1.0 - v.abs() / 4.0).max(0.0)).collect();
        assert!((central_fwhm(&x, &y, 0.0).unwrap() - 4.0).abs() < 1e-12);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((central_fwhm(&x, &neg, 0.0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn interference_config_has_two_tones() {
        let d = InterferenceConfig::default().drive().unwrap();
        assert_eq!(d.tones.len(), 2);
        assert_eq!(d.tones[1].nu_detuning, 0.0);
    }
}
