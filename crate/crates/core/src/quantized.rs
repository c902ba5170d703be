//! Truncated Fock-space model of the emitter coupled to one phonon mode.
//!
//! H/ħ = −Δ·σ_ee⊗I + ω_m·I⊗b†b + g·σ_ee⊗(b + b†) + (Ω₀/2)·σ_x⊗I in the
//! laser rotating frame, with no dissipation. Joint states are ordered
//! |s⟩⊗|n⟩, index s·(n_max + 1) + n with s = 0 for |g⟩ and 1 for |e⟩.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::fit::{fit_damped_sinusoid, LmOptions};
use crate::floquet::find_sideband_resonance;
use crate::lindblad::{evolve_sampled, DensityMatrix, MIN_STEPS_PER_PERIOD, STEPS_PER_PERIOD};
use crate::params::{DriveConfig, EmitterParams, OpticalTone, PhononDrive};
use crate::units::{angular, ordinary, period_ns};

/// Default Fock cutoff.
pub const DEFAULT_N_MAX: usize = 30;
/// Top-Fock occupation above which the truncation flag is raised.
pub const TRUNCATION_LIMIT: f64 = 1e-6;
/// Norm drift tolerated by unitary evolutions.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;

const SCAN_POINTS: usize = 61;
const SCAN_HALF_WIDTH: f64 = 0.3;
const GOLDEN_TOL_MHZ: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    Ground,
    Excited,
}

impl Level {
    fn index(self) -> usize {
        match self {
            Level::Ground => 0,
            Level::Excited => 1,
        }
    }
}

/// Phonon operators on the (n_max + 1)-dimensional Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperators {
    pub n_max: usize,
    /// b, with ⟨n−1|b|n⟩ = √n.
    pub lowering: DMatrix<f64>,
    /// b†b.
    pub number: DMatrix<f64>,
}

impl FockOperators {
    pub fn new(n_max: usize) -> Result<Self> {
        require(n_max >= 1, "n_max", n_max as f64, "must be >= 1")?;
        let d = n_max + 1;
        let mut lowering = DMatrix::zeros(d, d);
        for n in 1..d {
            lowering[(n - 1, n)] = (n as f64).sqrt();
        }
        let number = DMatrix::from_diagonal(&DVector::from_fn(d, |n, _| n as f64));
        Ok(Self { n_max, lowering, number })
    }

    pub fn raising(&self) -> DMatrix<f64> {
        self.lowering.transpose()
    }
}

/// Normalized state of emitter ⊗ phonon mode.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub n_max: usize,
    pub amplitudes: DVector<Complex64>,
}

impl JointState {
    pub fn dim(n_max: usize) -> usize {
        2 * (n_max + 1)
    }

    pub fn index(n_max: usize, level: Level, n: usize) -> usize {
        level.index() * (n_max + 1) + n
    }

    /// |s, n⟩.
    pub fn fock(level: Level, n: usize, n_max: usize) -> Result<Self> {
        require(n_max >= 1, "n_max", n_max as f64, "must be >= 1")?;
        if n > n_max {
            return Err(Error::Truncation { n_max, detail: format!("Fock state |{n}⟩ is outside the truncated space") });
        }
        let mut amplitudes = DVector::zeros(Self::dim(n_max));
        amplitudes[Self::index(n_max, level, n)] = Complex64::new(1.0, 0.0);
        Ok(Self { n_max, amplitudes })
    }

    /// |s⟩ ⊗ phonon state, renormalized when the phonon norm is within 1e-8
    /// of 1.
    pub fn product(level: Level, phonon: &DVector<Complex64>) -> Result<Self> {
        let n_max = phonon.len().checked_sub(1).filter(|&n| n >= 1).ok_or_else(|| {
            Error::Invalid(format!("phonon vector needs at least 2 entries, got {}", phonon.len()))
        })?;
        let mut amplitudes = DVector::zeros(Self::dim(n_max));
        let off = level.index() * (n_max + 1);
        amplitudes.rows_mut(off, n_max + 1).copy_from(phonon);
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Invalid(format!("phonon state norm is {norm}, expected 1")));
        }
        // absorb a truncated coherent-state tail
        Ok(Self { n_max, amplitudes: amplitudes / Complex64::new(norm, 0.0) })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// P_e = Σ_n |⟨e, n|ψ⟩|².
    pub fn excited_probability(&self) -> f64 {
        excited_probability(self.n_max, &self.amplitudes)
    }

    /// Σ_s |⟨s, n_max|ψ⟩|².
    pub fn top_fock_occupation(&self) -> f64 {
        top_fock_occupation(self.n_max, &self.amplitudes)
    }

    pub fn mean_phonon_number(&self) -> f64 {
        let d = self.n_max + 1;
        (0..2 * d).map(|i| (i % d) as f64 * self.amplitudes[i].norm_sqr()).sum()
    }

    /// ⟨b + b†⟩.
    pub fn displacement(&self) -> f64 {
        let d = self.n_max + 1;
        let mut b = Complex64::new(0.0, 0.0);
        for s in 0..2 {
            for n in 1..d {
                b += self.amplitudes[s * d + n - 1].conj() * self.amplitudes[s * d + n] * (n as f64).sqrt();
            }
        }
        2.0 * b.re
    }
}

fn excited_probability(n_max: usize, psi: &DVector<Complex64>) -> f64 {
    let d = n_max + 1;
    (d..2 * d).map(|i| psi[i].norm_sqr()).sum()
}

fn top_fock_occupation(n_max: usize, psi: &DVector<Complex64>) -> f64 {
    psi[n_max].norm_sqr() + psi[2 * n_max + 1].norm_sqr()
}

/// Coherent state e^{−|α|²/2} Σ αⁿ/√(n!) |n⟩, requiring n_max ≥ |α|² + 6|α|.
pub fn coherent_state(alpha: Complex64, n_max: usize) -> Result<DVector<Complex64>> {
    require(n_max >= 1, "n_max", n_max as f64, "must be >= 1")?;
    let a = alpha.norm();
    let needed = a * a + 6.0 * a;
    if (n_max as f64) < needed {
        return Err(Error::Truncation {
            n_max,
            detail: format!("coherent state |α| = {a} needs n_max >= {}", needed.ceil()),
        });
    }
    let mut v = DVector::zeros(n_max + 1);
    v[0] = Complex64::new((-0.5 * a * a).exp(), 0.0);
    for n in 1..=n_max {
        v[n] = v[n - 1] * alpha / (n as f64).sqrt();
    }
    let norm = v.norm();
    if norm < 1.0 - 1e-8 {
        return Err(Error::Truncation { n_max, detail: format!("coherent-state norm {norm} below 1 − 1e-8") });
    }
    Ok(v)
}

/// Full Hamiltonian (rad/ns) for detuning, phonon frequency, coupling g/2π
/// and Rabi frequency in MHz.
pub fn build_full_hamiltonian(nu_detuning: f64, nu_m: f64, g: f64, nu_rabi: f64, n_max: usize) -> Result<DMatrix<Complex64>> {
    require(n_max >= 1, "n_max", n_max as f64, "must be >= 1")?;
    require(nu_m > 0.0, "nu_m", nu_m, "must be > 0")?;
    require(g >= 0.0, "g", g, "must be >= 0")?;
    require(nu_rabi >= 0.0, "nu_rabi", nu_rabi, "must be >= 0")?;
    require(nu_detuning.is_finite(), "nu_detuning", nu_detuning, "must be finite")?;
    let d = n_max + 1;
    let (delta, wm, gw, half_rabi) = (angular(nu_detuning), angular(nu_m), angular(g), 0.5 * angular(nu_rabi));
    let mut h = DMatrix::<Complex64>::zeros(2 * d, 2 * d);
    let re = |x: f64| Complex64::new(x, 0.0);
    for n in 0..d {
        let (gi, ei) = (n, d + n);
        h[(gi, gi)] = re(n as f64 * wm);
        h[(ei, ei)] = re(n as f64 * wm - delta);
        h[(gi, ei)] = re(half_rabi);
        h[(ei, gi)] = re(half_rabi);
        if n + 1 < d {
            let c = re(gw * ((n + 1) as f64).sqrt());
            h[(ei, ei + 1)] = c;
            h[(ei + 1, ei)] = c;
        }
    }
    Ok(h)
}

/// Nonzero entries of a Hamiltonian, for repeated products.
struct SparseOperator {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOperator {
    fn from_dense(h: &DMatrix<Complex64>) -> Self {
        let mut entries = Vec::new();
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                if h[(i, j)] != Complex64::new(0.0, 0.0) {
                    entries.push((i, j, h[(i, j)]));
                }
            }
        }
        Self { dim: h.nrows(), entries }
    }

    /// out = −i·H·psi.
    fn derivative(&self, psi: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for &(i, j, v) in &self.entries {
            out[i] += v * psi[j];
        }
        for o in out.iter_mut() {
            *o = Complex64::new(o.im, -o.re);
        }
    }
}

/// Gershgorin interval [lo, hi] containing the spectrum of H (rad/ns).
fn gershgorin_interval(h: &DMatrix<Complex64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..h.nrows() {
        let off: f64 = (0..h.ncols()).filter(|&j| j != i).map(|j| h[(i, j)].norm()).sum();
        lo = lo.min(h[(i, i)].re - off);
        hi = hi.max(h[(i, i)].re + off);
    }
    if lo > hi {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

/// Energy ⟨ψ|H|ψ⟩ (rad/ns), conserved by the evolution.
fn energy(psi: &JointState, h: &DMatrix<Complex64>) -> f64 {
    psi.amplitudes.dotc(&(h * &psi.amplitudes)).re
}

/// Bound on |λ − ⟨ψ₀|H|ψ₀⟩| over the spectrum of H (rad/ns), from the
/// Gershgorin interval. The integrator evolves H − ⟨H⟩·I, which changes only
/// the global phase and keeps the populated levels slow.
pub fn spectral_radius_bound(h: &DMatrix<Complex64>, psi0: &JointState) -> f64 {
    let (lo, hi) = gershgorin_interval(h);
    let c = energy(psi0, h);
    (hi - c).abs().max((c - lo).abs())
}

/// Largest accepted step (ns): 1/20 of the period 2π/ρ, ρ from
/// [`spectral_radius_bound`].
pub fn schrodinger_max_step(h: &DMatrix<Complex64>, psi0: &JointState) -> f64 {
    let r = spectral_radius_bound(h, psi0);
    if r > 0.0 {
        TAU / r / MIN_STEPS_PER_PERIOD
    } else {
        f64::INFINITY
    }
}

/// Default step (ns): 1/40 of the period 2π/ρ.
pub fn schrodinger_default_step(h: &DMatrix<Complex64>, psi0: &JointState) -> f64 {
    let r = spectral_radius_bound(h, psi0);
    if r > 0.0 {
        TAU / r / STEPS_PER_PERIOD
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerTrajectory {
    pub times: Vec<f64>,
    pub p_excited: Vec<f64>,
    /// Largest |‖ψ‖ − 1| over the samples.
    pub max_norm_drift: f64,
    /// Largest top-Fock occupation over the samples.
    pub max_top_fock: f64,
    /// Set when the top-Fock occupation reached [`TRUNCATION_LIMIT`].
    pub truncated: bool,
    pub final_state: Vec<Complex64>,
}

/// RK4 evolution of ψ under a time-independent H, sampling every step.
pub fn evolve_schrodinger(psi0: &JointState, h: &DMatrix<Complex64>, t_span: f64, dt: f64) -> Result<SchrodingerTrajectory> {
    evolve_schrodinger_sampled(psi0, h, t_span, dt, 1)
}

/// As [`evolve_schrodinger`], recording every `stride`-th step. The step
/// count is ceil(t_span/dt), with dt shortened to land exactly on `t_span`.
pub fn evolve_schrodinger_sampled(
    psi0: &JointState,
    h: &DMatrix<Complex64>,
    t_span: f64,
    dt: f64,
    stride: usize,
) -> Result<SchrodingerTrajectory> {
    let dim = JointState::dim(psi0.n_max);
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::Invalid(format!("Hamiltonian is {}x{}, state dimension is {dim}", h.nrows(), h.ncols())));
    }
    require(t_span > 0.0, "t_span", t_span, "must be > 0")?;
    require(dt > 0.0, "dt", dt, "must be > 0")?;
    let limit = schrodinger_max_step(h, psi0);
    if dt > limit {
        return Err(Error::StepTooLarge { dt, max: limit });
    }
    let norm0 = psi0.norm();
    if (norm0 - 1.0).abs() > 1e-10 {
        return Err(Error::Invalid(format!("initial state norm is {norm0}, expected 1")));
    }
    let shift = energy(psi0, h);
    let mut shifted = h.clone();
    for i in 0..dim {
        shifted[(i, i)] -= shift;
    }
    let op = SparseOperator::from_dense(&shifted);
    let stride = stride.max(1);
    let n = (t_span / dt).ceil() as usize;
    let hs = t_span / n as f64;
    let n_max = psi0.n_max;
    let mut psi: Vec<Complex64> = psi0.amplitudes.iter().copied().collect();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![Complex64::default(); op.dim], vec![Complex64::default(); op.dim], vec![Complex64::default(); op.dim], vec![Complex64::default(); op.dim], vec![Complex64::default(); op.dim]);

    let mut out = SchrodingerTrajectory {
        times: vec![0.0],
        p_excited: vec![psi0.excited_probability()],
        max_norm_drift: 0.0,
        max_top_fock: psi0.top_fock_occupation(),
        truncated: false,
        final_state: Vec::new(),
    };
    for step in 1..=n {
        op.derivative(&psi, &mut k1);
        for i in 0..dim {
            tmp[i] = psi[i] + k1[i] * (0.5 * hs);
        }
        op.derivative(&tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = psi[i] + k2[i] * (0.5 * hs);
        }
        op.derivative(&tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = psi[i] + k3[i] * hs;
        }
        op.derivative(&tmp, &mut k4);
        for i in 0..dim {
            psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (hs / 6.0);
        }
        if step % stride == 0 || step == n {
            let v = DVector::from_column_slice(&psi);
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite { t: step as f64 * hs, step, detail: "state vector".into() });
            }
            out.max_norm_drift = out.max_norm_drift.max((v.norm() - 1.0).abs());
            out.max_top_fock = out.max_top_fock.max(top_fock_occupation(n_max, &v));
            if step % stride == 0 {
                out.times.push(step as f64 * hs);
                out.p_excited.push(excited_probability(n_max, &v));
            }
        }
    }
    out.truncated = out.max_top_fock >= TRUNCATION_LIMIT;
    let phase = Complex64::from_polar(1.0, -shift * n as f64 * hs);
    out.final_state = psi.into_iter().map(|z| z * phase).collect();
    Ok(out)
}

/// Exact propagation ψ(t) = V·e^{−iEt}·V†·ψ₀ by diagonalization, returning
/// P_e at each time.
pub fn exact_excited_probability(psi0: &JointState, h: &DMatrix<Complex64>, times: &[f64]) -> Result<Vec<f64>> {
    let dim = JointState::dim(psi0.n_max);
    if h.nrows() != dim {
        return Err(Error::Invalid(format!("Hamiltonian is {}x{}, state dimension is {dim}", h.nrows(), h.ncols())));
    }
    let eig = SymmetricEigen::new(h.clone());
    let c = eig.eigenvectors.adjoint() * &psi0.amplitudes;
    Ok(times
        .iter()
        .map(|&t| {
            let phased = DVector::from_fn(dim, |k, _| c[k] * Complex64::from_polar(1.0, -eig.eigenvalues[k] * t));
            excited_probability(psi0.n_max, &(&eig.eigenvectors * phased))
        })
        .collect())
}

/// Dressed-state avoided crossing between |g, n⟩ and |e, n + order⟩
/// (order −1: red sideband, +1: blue sideband).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockResonance {
    pub order: i32,
    pub n: usize,
    /// Laser detuning at the crossing (MHz).
    pub nu_detuning: f64,
    /// Minimum splitting of the two dressed states, i.e. the flop frequency (MHz).
    pub nu_gap: f64,
}

fn pair_gap(h: DMatrix<Complex64>, a: usize, b: usize) -> f64 {
    let eig = SymmetricEigen::new(h);
    let mut w: Vec<(f64, f64)> = (0..eig.eigenvalues.len())
        .map(|k| (eig.eigenvectors[(a, k)].norm_sqr() + eig.eigenvectors[(b, k)].norm_sqr(), eig.eigenvalues[k]))
        .collect();
    w.sort_by(|x, y| y.0.total_cmp(&x.0));
    ordinary((w[0].1 - w[1].1).abs())
}

/// Locates the sideband resonance of |g, n⟩ within ±0.3·ν_m of
/// Δ = order·ν_m as the minimum splitting of the two dressed states with the
/// largest weight on {|g, n⟩, |e, n + order⟩}.
pub fn find_fock_resonance(nu_m: f64, g: f64, nu_rabi: f64, n: usize, order: i32, n_max: usize) -> Result<FockResonance> {
    if order != 1 && order != -1 {
        return Err(Error::Invalid(format!("sideband order must be -1 or +1, got {order}")));
    }
    let partner = n as i64 + order as i64;
    if partner < 0 || partner as usize > n_max || n > n_max {
        return Err(Error::Truncation { n_max, detail: format!("|g,{n}⟩ ↔ |e,{partner}⟩ is outside the truncated space") });
    }
    let a = JointState::index(n_max, Level::Ground, n);
    let b = JointState::index(n_max, Level::Excited, partner as usize);
    let gap = |d: f64| -> Result<f64> { Ok(pair_gap(build_full_hamiltonian(d, nu_m, g, nu_rabi, n_max)?, a, b)) };
    let centre = order as f64 * nu_m;
    let half = SCAN_HALF_WIDTH * nu_m;
    let step = 2.0 * half / (SCAN_POINTS - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..SCAN_POINTS {
        let v = gap(centre - half + i as f64 * step)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    let mut lo = centre - half + best.0.saturating_sub(1) as f64 * step;
    let mut hi = centre - half + (best.0 + 1).min(SCAN_POINTS - 1) as f64 * step;
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (gap(c)?, gap(d)?);
    while hi - lo > GOLDEN_TOL_MHZ {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = gap(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = gap(d)?;
        }
    }
    let nu_detuning = 0.5 * (lo + hi);
    Ok(FockResonance { order, n, nu_detuning, nu_gap: gap(nu_detuning)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopMeasurement {
    pub resonance: FockResonance,
    /// Oscillation frequency of P_e(t) from a sinusoid fit (MHz).
    pub nu_fit: f64,
    pub r_squared: f64,
    pub truncated: bool,
}

/// Prepares |g, n⟩, drives it at the located sideband resonance for
/// `flops` periods of the dressed splitting and fits the oscillation of P_e.
pub fn measure_sideband_flop(nu_m: f64, g: f64, nu_rabi: f64, n: usize, order: i32, n_max: usize, flops: f64) -> Result<FlopMeasurement> {
    require(flops >= 1.5, "flops", flops, "must be >= 1.5 to fix a frequency")?;
    let resonance = find_fock_resonance(nu_m, g, nu_rabi, n, order, n_max)?;
    let h = build_full_hamiltonian(resonance.nu_detuning, nu_m, g, nu_rabi, n_max)?;
    let psi0 = JointState::fock(Level::Ground, n, n_max)?;
    let t_span = flops * period_ns(resonance.nu_gap);
    let dt = schrodinger_default_step(&h, &psi0);
    let samples = 400.0 * flops;
    let stride = ((t_span / dt / samples).floor() as usize).max(1);
    let traj = evolve_schrodinger_sampled(&psi0, &h, t_span, dt, stride)?;
    // µs time base so the fitted frequency is in MHz
    let t_us: Vec<f64> = traj.times.iter().map(|t| t * 1e-3).collect();
    let fit = fit_damped_sinusoid(&t_us, &traj.p_excited, 0.5 * resonance.nu_gap, 1.5 * resonance.nu_gap, LmOptions::default())?;
    Ok(FlopMeasurement { resonance, nu_fit: fit.model.frequency, r_squared: fit.r_squared, truncated: traj.truncated })
}

/// Quantized-versus-semiclassical comparison settings. Frequencies in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceConfig {
    pub nu_m: f64,
    /// Single-phonon coupling g/2π.
    pub g: f64,
    pub nu_rabi: f64,
    /// Tone detuning; `None` uses the semiclassical red-sideband resonance.
    pub nu_detuning: Option<f64>,
    /// Fock cutoff; `None` uses max(30, ⌈|α|² + 6|α|⌉ + 2).
    pub n_max: Option<usize>,
    /// Samples per phonon period.
    pub samples_per_period: usize,
    /// Integration steps per phonon period; `None` takes the finer of the
    /// two models' default steps.
    pub steps_per_period: Option<usize>,
}

impl Default for CorrespondenceConfig {
    fn default() -> Self {
        Self { nu_m: 940.0, g: 0.02 * 940.0, nu_rabi: 0.3 * 940.0, nu_detuning: None, n_max: None, samples_per_period: 20, steps_per_period: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// β = 2g|α|/ν_m of the matching classical drive.
    pub beta: f64,
    /// φ_m = −arg α.
    pub phi_m: f64,
    pub nu_detuning: f64,
    pub n_max: usize,
    pub times: Vec<f64>,
    pub p_quantum: Vec<f64>,
    pub rho_classical: Vec<f64>,
    pub max_deviation: f64,
    pub truncated: bool,
}

/// Semiclassical red-sideband flop frequency (MHz) and detuning matching a
/// coherent phonon state of amplitude α.
pub fn semiclassical_sideband(alpha: Complex64, cfg: &CorrespondenceConfig) -> Result<(f64, f64)> {
    let beta = 2.0 * cfg.g * alpha.norm() / cfg.nu_m;
    let r = find_sideband_resonance(cfg.nu_rabi, &PhononDrive::new(cfg.nu_m, -alpha.arg(), beta)?, -1)?;
    Ok((r.nu_detuning, r.nu_effective_rabi))
}

/// Evolves |g⟩⊗|α⟩ under the full Hamiltonian and |g⟩ under the classical
/// phonon drive with β = 2g|α|/ν_m and φ_m = −arg α, both lossless, and
/// returns the largest |P_e − ρ_ee| over `t_span` ns.
pub fn classical_correspondence(alpha: Complex64, cfg: &CorrespondenceConfig, t_span: f64) -> Result<Correspondence> {
    require(t_span > 0.0, "t_span", t_span, "must be > 0")?;
    require(cfg.samples_per_period >= 1, "samples_per_period", cfg.samples_per_period as f64, "must be >= 1")?;
    let a = alpha.norm();
    let n_max = cfg.n_max.unwrap_or_else(|| DEFAULT_N_MAX.max((a * a + 6.0 * a).ceil() as usize + 2));
    let beta = 2.0 * cfg.g * a / cfg.nu_m;
    let phi_m = if a > 0.0 { -alpha.arg() } else { 0.0 };
    let nu_detuning = match cfg.nu_detuning {
        Some(d) => d,
        None if beta > 0.0 => semiclassical_sideband(alpha, cfg)?.0,
        None => return Err(Error::Invalid("a detuning is required when β = 0".into())),
    };
    let psi0 = JointState::product(Level::Ground, &coherent_state(alpha, n_max)?)?;
    let h = build_full_hamiltonian(nu_detuning, cfg.nu_m, cfg.g, cfg.nu_rabi, n_max)?;

    let phonon = if beta > 0.0 { Some(PhononDrive::new(cfg.nu_m, phi_m, beta)?) } else { None };
    let drive = DriveConfig::single(OpticalTone::new(cfg.nu_rabi, nu_detuning, 0.0)?, phonon);
    let emitter = EmitterParams::lossless();
    let classical_dt = crate::lindblad::default_step(&drive, &emitter);

    // one step on a common grid of whole sub-divisions of a phonon period
    let tm = period_ns(cfg.nu_m);
    let dt_needed = match cfg.steps_per_period {
        Some(k) => tm / k.max(1) as f64,
        None => schrodinger_default_step(&h, &psi0).min(classical_dt),
    };
    let per_sample = ((tm / cfg.samples_per_period as f64) / dt_needed).ceil() as usize;
    let per_period = per_sample * cfg.samples_per_period;
    let dt = tm / per_period as f64;
    let n_steps = (t_span / dt).ceil() as usize;
    let t_end = n_steps as f64 * dt;

    let q = evolve_schrodinger_sampled(&psi0, &h, t_end, dt, per_sample)?;
    let c = evolve_sampled(&DensityMatrix::ground(), &drive, &emitter, t_end, dt, per_sample)?;
    let rho_classical = c.rho_ee();
    let max_deviation = q.p_excited.iter().zip(&rho_classical).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Correspondence {
        beta,
        phi_m,
        nu_detuning,
        n_max,
        times: q.times,
        p_quantum: q.p_excited,
        rho_classical,
        max_deviation,
        truncated: q.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eigenvalues(h: &DMatrix<Complex64>) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn fock_operators() {
        let f = FockOperators::new(8).unwrap();
        for n in 1..=8 {
            assert_eq!(f.lowering[(n - 1, n)], (n as f64).sqrt());
        }
        let comm = &f.lowering * f.raising() - f.raising() * &f.lowering;
        for n in 0..8 {
            assert!((comm[(n, n)] - 1.0).abs() < 1e-14);
        }
        assert!((&f.raising() * &f.lowering - &f.number).norm() < 1e-14);
        assert!(FockOperators::new(0).is_err());
    }

    #[test]
    fn hamiltonian_is_hermitian_with_expected_dimension() {
        let h = build_full_hamiltonian(-900.0, 900.0, 18.0, 270.0, 10).unwrap();
        assert_eq!(h.nrows(), 22);
        assert_eq!(h, h.adjoint());
        assert!(build_full_hamiltonian(0.0, 900.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn uncoupled_ladder() {
        let (d, nm, n_max) = (-350.0, 900.0, 6);
        let h = build_full_hamiltonian(d, nm, 0.0, 0.0, n_max).unwrap();
        let mut want: Vec<f64> = (0..=n_max).flat_map(|n| [angular(n as f64 * nm), angular(n as f64 * nm - d)]).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in eigenvalues(&h).iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    /// Ω₀ = 0: the excited manifold is a displaced oscillator with levels
    /// nω_m − Δ − g²/ω_m. Truncation only perturbs the top of the ladder.
    #[test]
    fn polaron_shift() {
        let (d, nm, g, n_max) = (-200.0, 900.0, 60.0, 40);
        let h = build_full_hamiltonian(d, nm, g, 0.0, n_max).unwrap();
        let e = eigenvalues(&h);
        let shift = angular(g * g / nm);
        for n in 0..10 {
            let ground = angular(n as f64 * nm);
            let excited = angular(n as f64 * nm - d) - shift;
            assert!(e.iter().any(|x| (x - ground).abs() < 1e-9), "ground {n}");
            assert!(e.iter().any(|x| (x - excited).abs() < 1e-9), "excited {n}");
        }
    }

    #[test]
    fn red_sideband_pairs_are_degenerate() {
        let nm = 900.0;
        let h = build_full_hamiltonian(-nm, nm, 0.0, 0.0, 5).unwrap();
        for n in 1..=5 {
            let a = JointState::index(5, Level::Ground, n);
            let b = JointState::index(5, Level::Excited, n - 1);
            assert!((h[(a, a)] - h[(b, b)]).norm() < 1e-12);
        }
    }

    #[test]
    fn coherent_state_moments() {
        let v = coherent_state(Complex64::new(0.0, 0.0), 5).unwrap();
        assert_eq!(v[0], Complex64::new(1.0, 0.0));
        let alpha = Complex64::new(2.0, 0.0);
        let s = JointState::product(Level::Ground, &coherent_state(alpha, 30).unwrap()).unwrap();
        assert!((s.mean_phonon_number() - 4.0).abs() < 1e-6);
        let alpha = Complex64::from_polar(2.0, 0.7);
        let s = JointState::product(Level::Excited, &coherent_state(alpha, 30).unwrap()).unwrap();
        assert!((s.displacement() - 2.0 * alpha.re).abs() < 1e-6);
        assert!((s.excited_probability() - 1.0).abs() < 1e-12);
        assert!(matches!(coherent_state(Complex64::new(3.0, 0.0), 20), Err(Error::Truncation { .. })));
    }

    #[test]
    fn zero_hamiltonian_leaves_the_state() {
        let psi = JointState::product(Level::Ground, &coherent_state(Complex64::new(1.0, 0.5), 12).unwrap()).unwrap();
        let h = DMatrix::zeros(26, 26);
        let t = evolve_schrodinger(&psi, &h, 5.0, 0.5).unwrap();
        let fin = DVector::from_vec(t.final_state.clone());
        assert!((fin - &psi.amplitudes).norm() < 1e-15);
    }

    #[test]
    fn rk4_matches_exact_propagation() {
        let h = build_full_hamiltonian(-880.0, 900.0, 20.0, 250.0, 12).unwrap();
        let psi = JointState::fock(Level::Ground, 2, 12).unwrap();
        let traj = evolve_schrodinger_sampled(&psi, &h, 50.0, schrodinger_default_step(&h, &psi), 50).unwrap();
        let exact = exact_excited_probability(&psi, &h, &traj.times).unwrap();
        for (a, b) in traj.p_excited.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert!(traj.max_norm_drift < NORM_DRIFT_LIMIT, "{}", traj.max_norm_drift);
    }

    #[test]
    fn step_and_dimension_validation() {
        let h = build_full_hamiltonian(-900.0, 900.0, 20.0, 250.0, 4).unwrap();
        let psi = JointState::fock(Level::Ground, 1, 4).unwrap();
        let too_big = 1.01 * schrodinger_max_step(&h, &psi);
        assert!(matches!(evolve_schrodinger(&psi, &h, 1.0, too_big), Err(Error::StepTooLarge { .. })));
        let wrong = JointState::fock(Level::Ground, 1, 5).unwrap();
        assert!(evolve_schrodinger(&wrong, &h, 1.0, 1e-4).is_err());
        assert!(JointState::fock(Level::Ground, 6, 5).is_err());
    }

    #[test]
    fn truncation_flag_is_raised() {
        // strong coupling pushes population to the top of a tiny space
        let h = build_full_hamiltonian(0.0, 100.0, 300.0, 200.0, 3).unwrap();
        let psi = JointState::fock(Level::Excited, 0, 3).unwrap();
        let t = evolve_schrodinger(&psi, &h, 5.0, schrodinger_default_step(&h, &psi)).unwrap();
        assert!(t.truncated);
    }

    /// Resonant two-level flop between |g, n⟩ and |e, n−1⟩ at frequency
    /// g√n·Ω₀/ω_m in the resolved-sideband limit.
    #[test]
    fn sideband_gap_follows_sqrt_n() {
        let (nm, g, rabi) = (940.0, 0.02 * 940.0, 0.3 * 940.0);
        let base = g * rabi / nm;
        for n in 1..=4usize {
            let r = find_fock_resonance(nm, g, rabi, n, -1, 12).unwrap();
            let want = base * (n as f64).sqrt();
            assert!(((r.nu_gap - want) / want).abs() < 0.05, "n={n}: {} vs {want}", r.nu_gap);
            let b = find_fock_resonance(nm, g, rabi, n, 1, 12).unwrap();
            let want = base * ((n + 1) as f64).sqrt();
            assert!(((b.nu_gap - want) / want).abs() < 0.05, "blue n={n}: {} vs {want}", b.nu_gap);
        }
    }

    #[test]
    fn resonance_search_rejects_invalid_pairs() {
        assert!(find_fock_resonance(900.0, 10.0, 100.0, 0, -1, 5).is_err());
        assert!(find_fock_resonance(900.0, 10.0, 100.0, 5, 1, 5).is_err());
        assert!(find_fock_resonance(900.0, 10.0, 100.0, 1, 2, 5).is_err());
    }

    #[test]
    fn flop_fit_matches_gap() {
        let (nm, g, rabi) = (940.0, 0.02 * 940.0, 0.3 * 940.0);
        let m = measure_sideband_flop(nm, g, rabi, 1, -1, 8, 3.0).unwrap();
        assert!(((m.nu_fit - m.resonance.nu_gap) / m.resonance.nu_gap).abs() < 0.01, "{m:?}");
        assert!(!m.truncated);
    }

    #[test]
    fn uncoupled_models_coincide() {
        let cfg = CorrespondenceConfig {
            g: 0.0,
            nu_detuning: Some(-940.0),
            n_max: Some(4),
            steps_per_period: Some(4000),
            ..Default::default()
        };
        let c = classical_correspondence(Complex64::new(0.0, 0.0), &cfg, 20.0).unwrap();
        assert_eq!(c.beta, 0.0);
        assert!(c.max_deviation < 1e-8, "{}", c.max_deviation);
    }
}
