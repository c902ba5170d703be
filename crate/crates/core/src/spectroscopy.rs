//! Photoluminescence-excitation spectra, spectral-diffusion averaging,
//! Lorentzian peak fitting and the optical/RF power dependences.
//!
//! A scan evaluates the quasi-steady fluorescence Γ·⟨ρ_ee⟩ on a support
//! grid fine enough to resolve the homogeneous line, interpolates it with a
//! cubic spline and averages the interpolant over the static Gaussian offset
//! distribution at each requested detuning.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{optical_power_to_rabi, rf_power_to_beta};
use crate::error::{require, Error, Result};
use crate::fit::{fit_lorentzian_sum_bounded, levenberg_marquardt_bounded, linear_fit, linear_fit_through_origin, LineFit, LmOptions, LorentzPeak, PeakBounds};
use crate::lindblad::time_averaged_excited;
use crate::params::{Calibration, DriveConfig, EmitterParams, OpticalTone, PhononDrive};
use crate::quadrature::{auto_node_count, gauss_hermite};
use crate::units::GAUSSIAN_FWHM_PER_SIGMA;

/// Default scan: 81 points over ±1.6·ν_m.
pub const DEFAULT_GRID_POINTS: usize = 81;
pub const DEFAULT_GRID_HALF_SPAN: f64 = 1.6;
/// ν_m used for spectra when none is configured.
pub const DEFAULT_PLE_NU_M_MHZ: f64 = 900.0;
/// P_RF at which spectra are taken.
pub const DEFAULT_PLE_P_RF_W: f64 = 0.2;
/// P_RF of the linewidth-versus-power study.
pub const DEFAULT_LINEWIDTH_P_RF_W: f64 = 0.1;
/// Target zero-power Lorentzian width of the carrier (MHz).
pub const TARGET_LOW_POWER_FWHM_MHZ: f64 = 175.0;

/// Sampling rule of the PLE support grid, in units of the homogeneous
/// FWHM (ν_Γ + 2ν_φ).
const SUPPORT_POINTS_PER_FWHM: f64 = 4.0;
/// Default discarded transient in units of 1/Γ; leaves < 1e-4 residual in
/// the windowed average of ρ_ee.
pub const DEFAULT_TRANSIENT_GAMMA: f64 = 10.0;
/// Support extends this many standard deviations beyond the scan.
const SUPPORT_SIGMAS: f64 = 6.0;

pub fn default_grid(nu_m: f64) -> Vec<f64> {
    uniform_grid(-DEFAULT_GRID_HALF_SPAN * nu_m, DEFAULT_GRID_HALF_SPAN * nu_m, DEFAULT_GRID_POINTS)
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn check_uniform(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::Invalid(format!("detuning grid needs at least 2 points, got {}", grid.len())));
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::Invalid("detuning grid must be strictly increasing".into()));
    }
    for (i, &g) in grid.iter().enumerate() {
        if (g - (grid[0] + step * i as f64)).abs() > 1e-9 * step.max(grid[0].abs()) {
            return Err(Error::Invalid(format!("detuning grid is not uniform at index {i}")));
        }
    }
    Ok(step)
}

/// Natural cubic spline on a uniform grid; constant extrapolation.
#[derive(Debug, Clone)]
struct UniformSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl UniformSpline {
    fn new(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas)
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
                let (cp, dp) = if i == 0 { (0.0, 0.0) } else { (c[i - 1], d[i - 1]) };
                let denom = 4.0 - cp;
                c[i] = 1.0 / denom;
                d[i] = (rhs - dp) / denom;
            }
            for i in (0..k).rev() {
                let next = if i + 1 < k { m[i + 2] } else { 0.0 };
                m[i + 1] = d[i] - c[i] * next;
            }
        }
        Self { x0, h, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let u = (x - self.x0) / self.h;
        if u <= 0.0 {
            return self.y[0];
        }
        if u >= (n - 1) as f64 {
            return self.y[n - 1];
        }
        let i = (u.floor() as usize).min(n - 2);
        let t = u - i as f64;
        let a = 1.0 - t;
        let h2 = self.h * self.h / 6.0;
        a * self.y[i] + t * self.y[i + 1] + h2 * ((a * a * a - a) * self.m[i] + (t * t * t - t) * self.m[i + 1])
    }
}

/// Scan settings. `None` fields resolve to defaults from the emitter:
/// transient 10/Γ, window 10/Γ, node count from [`auto_node_count`] and a
/// support spacing of a quarter homogeneous FWHM.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PleOptions {
    pub transient_ns: Option<f64>,
    pub window_ns: Option<f64>,
    pub n_nodes: Option<usize>,
    pub support_spacing_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub nu_rabi: f64,
    pub beta: f64,
    pub nu_m: Option<f64>,
    pub transient_ns: f64,
    pub window_ns: f64,
    pub sd_fwhm: f64,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Laser detuning from the unshifted carrier (MHz), uniform.
    pub detunings: Vec<f64>,
    /// Γ·⟨ρ_ee⟩ (1/ns), spectral-diffusion averaged.
    pub fluorescence: Vec<f64>,
    pub meta: SpectrumMeta,
    /// Unaveraged quasi-steady fluorescence on the support grid.
    pub support_detunings: Vec<f64>,
    pub support_fluorescence: Vec<f64>,
}

impl Spectrum {
    pub fn step(&self) -> f64 {
        (self.detunings[self.detunings.len() - 1] - self.detunings[0]) / (self.detunings.len() - 1) as f64
    }

    /// Largest unaveraged ρ_ee with detuning in [lo, hi].
    pub fn max_rho_ee_in(&self, lo: f64, hi: f64, gamma: f64) -> f64 {
        self.support_detunings
            .iter()
            .zip(&self.support_fluorescence)
            .filter(|(d, _)| (lo..=hi).contains(*d))
            .map(|(_, f)| f / gamma)
            .fold(0.0, f64::max)
    }
}

/// Quasi-steady fluorescence Γ·⟨ρ_ee⟩ for the template with its first tone
/// moved to `nu_detuning`.
pub fn quasi_steady_fluorescence(
    template: &DriveConfig,
    emitter: &EmitterParams,
    nu_detuning: f64,
    transient: f64,
    window: f64,
) -> Result<f64> {
    let mut cfg = template.clone();
    cfg.tones[0].nu_detuning = nu_detuning;
    Ok(emitter.gamma() * time_averaged_excited(&cfg, emitter, transient, window)?)
}

/// PLE scan with a given averaging window (ns).
pub fn ple_scan(grid: &[f64], template: &DriveConfig, emitter: &EmitterParams, integration_window: f64) -> Result<Spectrum> {
    let opts = PleOptions { window_ns: Some(integration_window), ..Default::default() };
    ple_scan_with(grid, template, emitter, &opts)
}

pub fn ple_scan_with(grid: &[f64], template: &DriveConfig, emitter: &EmitterParams, opts: &PleOptions) -> Result<Spectrum> {
    emitter.validate()?;
    template.validate()?;
    if template.tones.len() != 1 {
        return Err(Error::Invalid(format!("a PLE scan uses exactly one optical tone, got {}", template.tones.len())));
    }
    let step = check_uniform(grid)?;
    let gamma = emitter.gamma();
    let transient = opts.transient_ns.unwrap_or(DEFAULT_TRANSIENT_GAMMA / gamma);
    let window = opts.window_ns.unwrap_or(10.0 / gamma);
    require(transient >= 5.0 / gamma * (1.0 - 1e-12), "transient_ns", transient, "must be >= 5/Gamma")?;
    require(window >= 10.0 / gamma * (1.0 - 1e-12), "integration_window", window, "must be >= 10/Gamma")?;
    let homogeneous = emitter.nu_gamma + 2.0 * emitter.nu_phi;
    let sd = emitter.sd_fwhm;
    let n_nodes = opts.n_nodes.unwrap_or_else(|| auto_node_count(sd, homogeneous));
    let eval = |d: f64| quasi_steady_fluorescence(template, emitter, d, transient, window);

    let (support_d, support_f, fluorescence) = if sd == 0.0 {
        let f: Vec<f64> = grid.par_iter().map(|&d| eval(d)).collect::<Result<_>>()?;
        (grid.to_vec(), f.clone(), f)
    } else {
        require(n_nodes >= 7 && n_nodes % 2 == 1, "n_nodes", n_nodes as f64, "must be odd and >= 7")?;
        let sigma = sd / GAUSSIAN_FWHM_PER_SIGMA;
        let spacing = opts.support_spacing_mhz.unwrap_or(homogeneous / SUPPORT_POINTS_PER_FWHM).min(step);
        require(spacing > 0.0, "support_spacing_mhz", spacing, "must be > 0")?;
        let lo = grid[0] - SUPPORT_SIGMAS * sigma;
        let hi = grid[grid.len() - 1] + SUPPORT_SIGMAS * sigma;
        let n = ((hi - lo) / spacing).ceil() as usize + 1;
        let h = (hi - lo) / (n - 1) as f64;
        let sd_grid: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let sf: Vec<f64> = sd_grid.par_iter().map(|&d| eval(d)).collect::<Result<_>>()?;
        let spline = UniformSpline::new(lo, h, sf.clone());
        let rule = gauss_hermite(n_nodes)?;
        let avg: Vec<f64> =
            grid.iter().map(|&d| rule.expectation(|x| spline.eval(d + sigma * x)).max(0.0)).collect();
        (sd_grid, sf, avg)
    };
    Ok(Spectrum {
        detunings: grid.to_vec(),
        fluorescence,
        meta: SpectrumMeta {
            nu_rabi: template.tones[0].nu_rabi,
            beta: template.phonon.map_or(0.0, |p| p.beta),
            nu_m: template.phonon.map(|p| p.nu_m),
            transient_ns: transient,
            window_ns: window,
            sd_fwhm: sd,
            n_nodes,
        },
        support_detunings: support_d,
        support_fluorescence: support_f,
    })
}

/// Lorentzian fit of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    /// Sorted by centre.
    pub peaks: Vec<LorentzPeak>,
    pub background: f64,
    pub residual_norm: f64,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when two centres fell within one grid step and were merged.
    pub merged: bool,
    pub warnings: Vec<String>,
}

impl PeakFit {
    /// Peak whose centre is nearest to `center`.
    pub fn nearest(&self, center: f64) -> Option<&LorentzPeak> {
        self.peaks.iter().min_by(|a, b| (a.center - center).abs().total_cmp(&(b.center - center).abs()))
    }

    /// Residual RMS relative to the amplitude of the peak nearest `center`.
    pub fn relative_residual(&self, center: f64) -> f64 {
        self.nearest(center).map_or(f64::INFINITY, |p| self.residual_rms / p.amplitude.abs())
    }
}

fn interp(x: &[f64], y: &[f64], at: f64) -> f64 {
    let i = x.partition_point(|&v| v < at).clamp(1, x.len() - 1);
    let t = (at - x[i - 1]) / (x[i] - x[i - 1]);
    y[i - 1] + t.clamp(0.0, 1.0) * (y[i] - y[i - 1])
}

/// Half-maximum width around `center`, by linear interpolation.
fn half_max_width(x: &[f64], y: &[f64], center: f64, floor: f64) -> Option<f64> {
    let peak = interp(x, y, center) - floor;
    if !(peak > 0.0) {
        return None;
    }
    let half = floor + 0.5 * peak;
    let i0 = x.partition_point(|&v| v < center).min(x.len() - 1);
    let right = (i0..x.len()).find(|&i| y[i] < half)?;
    let left = (0..=i0).rev().find(|&i| y[i] < half)?;
    Some((x[right] - x[left]).max(x[1] - x[0]))
}

fn seed_centers(spectrum: &Spectrum, n_peaks: usize) -> Vec<f64> {
    if let Some(nu_m) = spectrum.meta.nu_m.filter(|_| spectrum.meta.beta > 0.0) {
        return match n_peaks {
            1 => vec![0.0],
            2 => vec![-nu_m, 0.0],
            _ => vec![-nu_m, 0.0, nu_m],
        };
    }
    // local maxima, largest first
    let y = &spectrum.fluorescence;
    let mut maxima: Vec<usize> = (1..y.len() - 1).filter(|&i| y[i] >= y[i - 1] && y[i] >= y[i + 1]).collect();
    maxima.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let mut c: Vec<f64> = maxima.iter().take(n_peaks).map(|&i| spectrum.detunings[i]).collect();
    while c.len() < n_peaks {
        c.push(spectrum.detunings[y.len() / 2]);
    }
    c
}

/// Fits `n_peaks` ∈ {1, 2, 3} Lorentzians plus a constant background.
/// Without explicit `centers` the seeds are 0 and ±ν_m from the spectrum
/// metadata, or the largest local maxima when no phonon drive is recorded.
pub fn fit_lorentzians(spectrum: &Spectrum, n_peaks: usize, centers: Option<&[f64]>) -> Result<PeakFit> {
    if !(1..=3).contains(&n_peaks) {
        return Err(Error::Invalid(format!("n_peaks must be 1, 2 or 3, got {n_peaks}")));
    }
    let x = &spectrum.detunings;
    let y = &spectrum.fluorescence;
    let step = check_uniform(x)?;
    let centers = match centers {
        Some(c) if c.len() == n_peaks => c.to_vec(),
        Some(c) => return Err(Error::Invalid(format!("{} seed centres for {} peaks", c.len(), n_peaks))),
        None => seed_centers(spectrum, n_peaks),
    };
    let floor = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let biggest = centers.iter().cloned().max_by(|a, b| interp(x, y, *a).total_cmp(&interp(x, y, *b))).unwrap_or(0.0);
    let width = half_max_width(x, y, biggest, floor).unwrap_or(4.0 * step);
    let seeds: Vec<LorentzPeak> = centers
        .iter()
        .map(|&c| LorentzPeak { amplitude: (interp(x, y, c) - floor).max(1e-12 * y.iter().cloned().fold(0.0, f64::max)), center: c, fwhm: width })
        .collect();
    fit_from_seeds(x, y, step, seeds, floor, false, Vec::new())
}

fn fit_from_seeds(
    x: &[f64],
    y: &[f64],
    step: f64,
    seeds: Vec<LorentzPeak>,
    background: f64,
    merged: bool,
    mut warnings: Vec<String>,
) -> Result<PeakFit> {
    // Peaks stay attached to their resonances: centres within a quarter of
    // the peak spacing (or of the span) of the seed, widths up to half of it
    // or twice the seed width.
    let span = x[x.len() - 1] - x[0];
    let spacing = seeds
        .windows(2)
        .map(|w| (w[1].center - w[0].center).abs())
        .fold(span, f64::min)
        .max(2.0 * step);
    let bounds: Vec<PeakBounds> = seeds
        .iter()
        .map(|s| PeakBounds {
            lower: LorentzPeak { amplitude: 0.0, center: s.center - 0.25 * spacing, fwhm: 0.25 * step },
            upper: LorentzPeak { amplitude: f64::INFINITY, center: s.center + 0.25 * spacing, fwhm: (0.5 * spacing).max(2.0 * s.fwhm) },
        })
        .collect();
    let fit = fit_lorentzian_sum_bounded(x, y, &seeds, background, Some(&bounds), LmOptions::default())?;
    let mut peaks = fit.peaks.clone();
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    if !fit.converged {
        warnings.push(format!("Lorentzian fit did not converge in {} iterations", fit.iterations));
    }
    if peaks.len() > 1 {
        if let Some(i) = (0..peaks.len() - 1).find(|&i| (peaks[i + 1].center - peaks[i].center).abs() < step) {
            warnings.push(format!(
                "peaks at {:.3} and {:.3} MHz are within one grid step; merged and refitted with {} peaks",
                peaks[i].center,
                peaks[i + 1].center,
                peaks.len() - 1
            ));
            let drop = if peaks[i].amplitude.abs() >= peaks[i + 1].amplitude.abs() { i + 1 } else { i };
            peaks.remove(drop);
            return fit_from_seeds(x, y, step, peaks, fit.background, true, warnings);
        }
    }
    Ok(PeakFit {
        peaks,
        background: fit.background,
        residual_norm: fit.residual_norm,
        residual_rms: fit.residual_rms,
        iterations: fit.iterations,
        converged: fit.converged,
        merged,
        warnings,
    })
}

/// Half-width of the window used for single-resonance fits, in units of ν_m.
pub const RESONANCE_WINDOW: f64 = 0.5;

/// Single Lorentzian on a sloped background, fitted to one resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFit {
    pub peak: LorentzPeak,
    /// Background at the window centre.
    pub background: f64,
    /// Background slope (per MHz).
    pub slope: f64,
    pub residual_rms: f64,
    pub converged: bool,
}

/// Fits A/(1 + ((x − c)/(w/2))²) + B + S·(x − center) to the points within
/// `half_window` of `center`. Neighbouring resonances of a sideband
/// spectrum sit outside the window and their tails inside it are absorbed
/// by the sloped background.
pub fn fit_resonance(x: &[f64], y: &[f64], center: f64, half_window: f64) -> Result<ResonanceFit> {
    require(half_window > 0.0, "half_window", half_window, "must be > 0")?;
    let step = check_uniform(x)?;
    let (wx, wy): (Vec<f64>, Vec<f64>) =
        x.iter().zip(y).filter(|(v, _)| (*v - center).abs() <= half_window).map(|(a, b)| (*a, *b)).unzip();
    if wx.len() < 6 {
        return Err(Error::Invalid(format!("only {} points within the window around {center} MHz", wx.len())));
    }
    let floor = wy.iter().cloned().fold(f64::INFINITY, f64::min);
    let (imax, top) = wy.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let c0 = if (wx[imax] - center).abs() < 0.5 * half_window { wx[imax] } else { center };
    let w0 = half_max_width(&wx, &wy, c0, floor).unwrap_or(0.5 * half_window).min(2.0 * half_window);
    let p0 = [(top - floor).max(0.0), c0, w0, floor, 0.0];
    let bounds = [
        (0.0, f64::INFINITY),
        (center - 0.5 * half_window, center + 0.5 * half_window),
        (0.25 * step, 4.0 * half_window),
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
    ];
    let model = |x: f64, p: &[f64], g: &mut [f64]| {
        let (a, c, w) = (p[0], p[1], p[2]);
        let u = 2.0 * (x - c) / w;
        let l = 1.0 / (1.0 + u * u);
        g[0] = l;
        g[1] = 4.0 * a * u * l * l / w;
        g[2] = 2.0 * a * u * u * l * l / w;
        g[3] = 1.0;
        g[4] = x - center;
        a * l + p[3] + p[4] * (x - center)
    };
    let out = levenberg_marquardt_bounded(&wx, &wy, &p0, &bounds, model, LmOptions::default())?;
    let p = &out.params;
    Ok(ResonanceFit {
        peak: LorentzPeak { amplitude: p[0], center: p[1], fwhm: p[2] },
        background: p[3],
        slope: p[4],
        residual_rms: (out.ssr / wx.len() as f64).sqrt(),
        converged: out.converged,
    })
}

/// Spectral-diffusion FWHM that makes the zero-power carrier line on
/// `grid`, fitted by [`fit_resonance`] within ±[`RESONANCE_WINDOW`]·ν_m,
/// exactly `target_fwhm` wide. The zero-power line is the weak-drive
/// steady state, Lorentzian with FWHM ν_Γ + 2ν_φ.
pub fn calibrate_sd_fwhm(target_fwhm: f64, grid: &[f64], nu_m: f64, emitter: &EmitterParams) -> Result<f64> {
    let homogeneous = emitter.nu_gamma + 2.0 * emitter.nu_phi;
    require(target_fwhm > homogeneous, "target_fwhm", target_fwhm, "must exceed the homogeneous linewidth")?;
    check_uniform(grid)?;
    let hw = 0.5 * homogeneous;
    let fitted = |sd: f64| -> Result<f64> {
        // trapezoid over the Gaussian variable; geometric convergence for
        // this analytic integrand once h ≪ hw
        let sigma = sd / GAUSSIAN_FWHM_PER_SIGMA;
        let h = hw / 8.0;
        let m = (10.0 * sigma / h).ceil() as i64;
        let norm = h / (sigma * std::f64::consts::TAU.sqrt());
        let y: Vec<f64> = grid
            .iter()
            .map(|&d| {
                (-m..=m)
                    .map(|k| {
                        let x = k as f64 * h;
                        (-0.5 * (x / sigma).powi(2)).exp() / (1.0 + ((d + x) / hw).powi(2))
                    })
                    .sum::<f64>()
                    * norm
            })
            .collect();
        Ok(fit_resonance(grid, &y, 0.0, RESONANCE_WINDOW * nu_m)?.peak.fwhm)
    };
    let (mut lo, mut hi) = (0.2 * target_fwhm, 3.0 * target_fwhm);
    if fitted(lo)? > target_fwhm || fitted(hi)? < target_fwhm {
        return Err(Error::Invalid(format!("cannot bracket a spectral-diffusion width for target {target_fwhm} MHz")));
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if fitted(mid)? < target_fwhm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Shared settings for the power-dependence studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerScanSetup {
    pub nu_m: f64,
    pub calibration: Calibration,
    /// Defaults to [`default_grid`].
    pub grid: Option<Vec<f64>>,
    pub options: PleOptions,
}

impl Default for PowerScanSetup {
    fn default() -> Self {
        Self { nu_m: DEFAULT_PLE_NU_M_MHZ, calibration: Calibration::default(), grid: None, options: PleOptions::default() }
    }
}

impl PowerScanSetup {
    fn grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| default_grid(self.nu_m))
    }

    /// Spectrum at optical power `p_o` (µW) and RF power `p_rf` (W).
    pub fn spectrum(&self, p_o: f64, p_rf: f64, emitter: &EmitterParams) -> Result<Spectrum> {
        let nu_rabi = optical_power_to_rabi(p_o, self.calibration.kappa_opt)?;
        let beta = rf_power_to_beta(p_rf, self.calibration.eta_rf, self.nu_m)?;
        let phonon = if beta > 0.0 { Some(PhononDrive::new(self.nu_m, 0.0, beta)?) } else { None };
        let template = DriveConfig::single(OpticalTone::new(nu_rabi, 0.0, 0.0)?, phonon);
        let mut spec = ple_scan_with(&self.grid(), &template, emitter, &self.options)?;
        spec.meta.nu_m = Some(self.nu_m);
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthRow {
    pub p_o: f64,
    pub nu_rabi: f64,
    pub carrier_fwhm: f64,
    pub sideband_fwhm: f64,
    pub carrier_amplitude: f64,
    pub sideband_amplitude: f64,
    pub converged: bool,
}

fn check_ascending_positive(name: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Invalid(format!("{name} list is empty")));
    }
    for w in v.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Invalid(format!("{name} list must be strictly ascending")));
        }
    }
    require(v[0] > 0.0, name, v[0], "must be > 0")
}

/// Carrier and red-sideband widths versus optical power at RF power `p_rf`,
/// each from a [`fit_resonance`] window of ±ν_m/2.
pub fn linewidth_vs_power(p_o_list: &[f64], p_rf: f64, setup: &PowerScanSetup, emitter: &EmitterParams) -> Result<Vec<LinewidthRow>> {
    check_ascending_positive("p_o", p_o_list)?;
    p_o_list
        .iter()
        .map(|&p_o| {
            let spec = setup.spectrum(p_o, p_rf, emitter)?;
            let half = RESONANCE_WINDOW * setup.nu_m;
            let c = fit_resonance(&spec.detunings, &spec.fluorescence, 0.0, half)?;
            let s = fit_resonance(&spec.detunings, &spec.fluorescence, -setup.nu_m, half)?;
            Ok(LinewidthRow {
                p_o,
                nu_rabi: spec.meta.nu_rabi,
                carrier_fwhm: c.peak.fwhm,
                sideband_fwhm: s.peak.fwhm,
                carrier_amplitude: c.peak.amplitude,
                sideband_amplitude: s.peak.amplitude,
                converged: c.converged && s.converged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingRow {
    pub nu_m: f64,
    pub carrier_center: f64,
    pub sideband_center: f64,
    /// carrier_center − sideband_center (MHz).
    pub splitting: f64,
}

/// Carrier/red-sideband splitting for each ν_m at fixed powers, with a
/// straight-line fit of splitting against ν_m.
pub fn splitting_vs_nu_m(
    nu_m_list: &[f64],
    p_o: f64,
    p_rf: f64,
    setup: &PowerScanSetup,
    emitter: &EmitterParams,
) -> Result<(Vec<SplittingRow>, LineFit)> {
    check_ascending_positive("nu_m", nu_m_list)?;
    let rows: Vec<SplittingRow> = nu_m_list
        .iter()
        .map(|&nu_m| {
            let s = PowerScanSetup { nu_m, grid: None, ..setup.clone() };
            let spec = s.spectrum(p_o, p_rf, emitter)?;
            let half = RESONANCE_WINDOW * nu_m;
            let c = fit_resonance(&spec.detunings, &spec.fluorescence, 0.0, half)?.peak.center;
            let r = fit_resonance(&spec.detunings, &spec.fluorescence, -nu_m, half)?.peak.center;
            Ok(SplittingRow { nu_m, carrier_center: c, sideband_center: r, splitting: c - r })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.nu_m).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.splitting).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok((rows, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub powers: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub fit: LineFit,
    /// Largest unaveraged ρ_ee within ±ν_m/2 of the red sideband.
    pub max_sideband_rho_ee: f64,
    pub saturation_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeScalingSetup {
    pub p_o_list: Vec<f64>,
    pub p_rf_fixed: f64,
    pub p_rf_list: Vec<f64>,
    pub p_o_fixed: f64,
    pub scan: PowerScanSetup,
}

impl Default for AmplitudeScalingSetup {
    fn default() -> Self {
        Self {
            p_o_list: vec![0.01, 0.02, 0.04, 0.07, 0.1],
            p_rf_fixed: 0.1,
            p_rf_list: vec![0.02, 0.04, 0.08, 0.14, 0.2],
            p_o_fixed: 0.05,
            scan: PowerScanSetup::default(),
        }
    }
}

/// Low-saturation limit for the sideband (max ρ_ee).
pub const SATURATION_LIMIT: f64 = 0.1;

fn scaling_table(powers: &[f64], spectra: Vec<Spectrum>, nu_m: f64, gamma: f64) -> Result<ScalingTable> {
    let mut amplitudes = Vec::with_capacity(spectra.len());
    let mut max_rho: f64 = 0.0;
    for spec in &spectra {
        let s = fit_resonance(&spec.detunings, &spec.fluorescence, -nu_m, RESONANCE_WINDOW * nu_m)?;
        amplitudes.push(s.peak.amplitude);
        max_rho = max_rho.max(spec.max_rho_ee_in(-1.5 * nu_m, -0.5 * nu_m, gamma));
    }
    Ok(ScalingTable {
        powers: powers.to_vec(),
        fit: linear_fit_through_origin(powers, &amplitudes)?,
        amplitudes,
        max_sideband_rho_ee: max_rho,
        saturation_warning: max_rho >= SATURATION_LIMIT,
    })
}

/// Red-sideband amplitude ([`fit_resonance`]) versus P_o at fixed P_RF, and
/// versus P_RF at fixed P_o, each with a through-origin linear fit.
pub fn sideband_amplitude_scaling(setup: &AmplitudeScalingSetup, emitter: &EmitterParams) -> Result<(ScalingTable, ScalingTable)> {
    check_ascending_positive("p_o", &setup.p_o_list)?;
    check_ascending_positive("p_rf", &setup.p_rf_list)?;
    let s = &setup.scan;
    let vs_o: Vec<Spectrum> =
        setup.p_o_list.iter().map(|&p| s.spectrum(p, setup.p_rf_fixed, emitter)).collect::<Result<_>>()?;
    let vs_rf: Vec<Spectrum> =
        setup.p_rf_list.iter().map(|&p| s.spectrum(setup.p_o_fixed, p, emitter)).collect::<Result<_>>()?;
    Ok((
        scaling_table(&setup.p_o_list, vs_o, s.nu_m, emitter.gamma())?,
        scaling_table(&setup.p_rf_list, vs_rf, s.nu_m, emitter.gamma())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::lorentzian;
    use crate::lindblad::steady_state_excited_population;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic(x: &[f64], peaks: &[(f64, f64, f64)], bg: f64) -> Spectrum {
        let y: Vec<f64> = x.iter().map(|&v| bg + peaks.iter().map(|&(a, c, w)| lorentzian(v, a, c, w)).sum::<f64>()).collect();
        Spectrum {
            detunings: x.to_vec(),
            fluorescence: y.clone(),
            meta: SpectrumMeta { nu_rabi: 0.0, beta: 0.0, nu_m: None, transient_ns: 0.0, window_ns: 0.0, sd_fwhm: 0.0, n_nodes: 0 },
            support_detunings: x.to_vec(),
            support_fluorescence: y,
        }
    }

    #[test]
    fn spline_reproduces_cubics_in_the_interior() {
        let f = |x: f64| (0.3 * x).sin();
        let h = 0.05;
        let s = UniformSpline::new(0.0, h, (0..201).map(|i| f(i as f64 * h)).collect());
        for i in 0..100 {
            let x = 2.0 + i as f64 * 0.0613;
            assert!((s.eval(x) - f(x)).abs() < 1e-7);
        }
    }

    #[test]
    fn grid_checks() {
        assert_eq!(default_grid(900.0).len(), 81);
        assert!((default_grid(900.0)[0] + 1440.0).abs() < 1e-12);
        assert!(check_uniform(&[0.0, 1.0, 3.0]).is_err());
        assert!(check_uniform(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn three_peak_synthetic_fit() {
        let x = default_grid(900.0);
        let spec = synthetic(&x, &[(0.3, -900.0, 175.0), (1.0, 0.0, 175.0), (0.3, 900.0, 175.0)], 0.0);
        let fit = fit_lorentzians(&spec, 3, Some(&[-850.0, 30.0, 870.0])).unwrap();
        for (p, c) in fit.peaks.iter().zip([-900.0, 0.0, 900.0]) {
            assert!((p.center - c).abs() < 1.0);
        }
        assert!(!fit.merged);
    }

    #[test]
    fn degenerate_seeds_are_merged() {
        let x = default_grid(900.0);
        let spec = synthetic(&x, &[(1.0, 0.0, 175.0)], 0.05);
        let fit = fit_lorentzians(&spec, 2, Some(&[-5.0, 5.0])).unwrap();
        assert!(fit.merged);
        assert_eq!(fit.peaks.len(), 1);
        assert!((fit.peaks[0].fwhm - 175.0).abs() < 1e-4);
        assert!(!fit.warnings.is_empty());
    }

    #[test]
    fn bad_peak_count() {
        let x = default_grid(900.0);
        let spec = synthetic(&x, &[(1.0, 0.0, 175.0)], 0.0);
        assert!(fit_lorentzians(&spec, 4, None).is_err());
        assert!(fit_lorentzians(&spec, 0, None).is_err());
    }

    /// Pseudo-Lorentzian width of a Gaussian-broadened Lorentzian against a
    /// Monte-Carlo convolution with 10⁵ samples.
    #[test]
    fn diffusion_broadened_width_matches_monte_carlo() {
        let hw = 10.0;
        let sd = 170.0;
        let x = uniform_grid(-800.0, 800.0, 161);
        let lor = |d: f64| 1.0 / (1.0 + (d / hw).powi(2));
        let rule = gauss_hermite(auto_node_count(sd, 2.0 * hw)).unwrap();
        let sigma = sd / GAUSSIAN_FWHM_PER_SIGMA;
        let gh: Vec<f64> = x.iter().map(|&d| rule.expectation(|z| lor(d + sigma * z))).collect();
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let mc: Vec<f64> = x.iter().map(|&d| samples.iter().map(|s| lor(d + s)).sum::<f64>() / samples.len() as f64).collect();
        let width = |y: Vec<f64>| {
            let s = Spectrum { fluorescence: y, ..synthetic(&x, &[(1.0, 0.0, 1.0)], 0.0) };
            fit_lorentzians(&s, 1, Some(&[0.0])).unwrap().peaks[0].fwhm
        };
        let (a, b) = (width(gh), width(mc));
        assert!(((a - b) / b).abs() < 0.03, "{a} vs {b}");
    }

    #[test]
    fn resonance_fit_ignores_neighbours() {
        let x = default_grid(900.0);
        let spec = synthetic(&x, &[(0.2, -900.0, 150.0), (1.0, 0.0, 175.0), (0.2, 900.0, 150.0)], 0.0);
        let f = fit_resonance(&x, &spec.fluorescence, -900.0, 450.0).unwrap();
        // carrier tail inside the window is a slowly varying background
        assert!((f.peak.center + 900.0).abs() < 3.0, "{f:?}");
        assert!((f.peak.fwhm - 150.0).abs() < 15.0, "{f:?}");
        let g = fit_resonance(&x, &synthetic(&x, &[(1.0, 20.0, 175.0)], 0.1).fluorescence, 0.0, 450.0).unwrap();
        assert!((g.peak.fwhm - 175.0).abs() < 1e-5 && (g.peak.center - 20.0).abs() < 1e-6 && (g.background - 0.1).abs() < 1e-8);
        assert!(fit_resonance(&x, &spec.fluorescence, 0.0, 30.0).is_err());
    }

    #[test]
    fn calibration_reproduces_shipped_default() {
        let sd = calibrate_sd_fwhm(TARGET_LOW_POWER_FWHM_MHZ, &default_grid(900.0), 900.0, &EmitterParams::default()).unwrap();
        assert!((sd - crate::params::DEFAULT_SD_FWHM_MHZ).abs() < 0.01, "{sd}");
    }

    #[test]
    fn carrier_only_scan_matches_closed_form() {
        let e = EmitterParams { sd_fwhm: 0.0, ..EmitterParams::default() };
        let grid = uniform_grid(-60.0, 60.0, 13);
        let cfg = DriveConfig::single(OpticalTone::new(20.0, 0.0, 0.0).unwrap(), None);
        let spec = ple_scan(&grid, &cfg, &e, 10.0 / e.gamma()).unwrap();
        for (d, f) in grid.iter().zip(&spec.fluorescence) {
            let exact = steady_state_excited_population(*d, 20.0, &e);
            assert!((f / e.gamma() - exact).abs() < 1e-4, "{d}: {} vs {exact}", f / e.gamma());
        }
    }

    #[test]
    fn scan_preconditions() {
        let e = EmitterParams::default();
        let cfg = DriveConfig::single(OpticalTone::new(20.0, 0.0, 0.0).unwrap(), None);
        assert!(ple_scan(&[0.0, 1.0], &cfg, &e, 1.0).is_err());
        let two = DriveConfig { tones: vec![cfg.tones[0]; 2], phonon: None };
        assert!(ple_scan(&[0.0, 1.0], &two, &e, 200.0).is_err());
    }
}
