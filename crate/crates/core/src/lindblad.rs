//! Density-matrix evolution of the driven two-level emitter with spontaneous
//! emission and pure dephasing, and the closed-form single-tone steady state.
//!
//! Collapse operators are L₁ = √Γ·σ₋ and L₂ = √(γ_φ/2)·σ_z, so coherences
//! decay at Γ₂ = Γ/2 + γ_φ.
//!
//! [`lindblad_rhs`] is the general matrix form of the generator. The
//! integrator uses an expanded two-level kernel instead; the two are checked
//! against each other in the tests.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::hamiltonian::{CompiledDrive, Mat2};
use crate::params::{DriveConfig, EmitterParams};
use crate::units::{angular, ordinary, period_ns};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Trace drift beyond which the state is renormalised (and counted).
pub const TRACE_DRIFT_LIMIT: f64 = 1e-10;

/// Default step = shortest characteristic period / this factor.
pub const STEPS_PER_PERIOD: f64 = 40.0;
/// Validation rejects steps longer than shortest period / this factor.
pub const MIN_STEPS_PER_PERIOD: f64 = 20.0;

/// 2×2 density matrix in the (|g⟩, |e⟩) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub Mat2);

impl DensityMatrix {
    pub fn ground() -> Self {
        Self(Mat2::new(Complex64::new(1.0, 0.0), ZERO, ZERO, ZERO))
    }

    pub fn excited() -> Self {
        Self(Mat2::new(ZERO, ZERO, ZERO, Complex64::new(1.0, 0.0)))
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat2::new(Complex64::new(0.5, 0.0), ZERO, ZERO, Complex64::new(0.5, 0.0)))
    }

    /// Builds ρ from populations and the coherence ρ_eg; ρ_ge is set to its
    /// conjugate.
    pub fn from_parts(rho_gg: f64, rho_ee: f64, rho_eg: Complex64) -> Self {
        Self(Mat2::new(Complex64::new(rho_gg, 0.0), rho_eg.conj(), rho_eg, Complex64::new(rho_ee, 0.0)))
    }

    /// Validates and wraps a general matrix.
    pub fn from_matrix(m: Mat2) -> Result<Self> {
        let rho = Self(m);
        rho.check().map_err(Error::Invalid)?;
        Ok(rho)
    }

    pub fn rho_gg(&self) -> f64 {
        self.0[(0, 0)].re
    }

    pub fn rho_ee(&self) -> f64 {
        self.0[(1, 1)].re
    }

    pub fn rho_eg(&self) -> Complex64 {
        self.0[(1, 0)]
    }

    pub fn trace(&self) -> Complex64 {
        self.0[(0, 0)] + self.0[(1, 1)]
    }

    pub fn determinant(&self) -> f64 {
        (self.0[(0, 0)] * self.0[(1, 1)] - self.0[(0, 1)] * self.0[(1, 0)]).re
    }

    /// Hermiticity (1e-12), unit trace (1e-10) and positivity (1e-10).
    pub fn check(&self) -> std::result::Result<(), String> {
        let m = &self.0;
        if (m[(0, 1)] - m[(1, 0)].conj()).norm() > 1e-12
            || m[(0, 0)].im.abs() > 1e-12
            || m[(1, 1)].im.abs() > 1e-12
        {
            return Err(format!("not Hermitian: {m:?}"));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(format!("trace {tr} != 1"));
        }
        let tol = 1e-10;
        let (gg, ee) = (self.rho_gg(), self.rho_ee());
        if self.determinant() < -tol || !(-tol..=1.0 + tol).contains(&gg) || !(-tol..=1.0 + tol).contains(&ee) {
            return Err(format!("not positive semidefinite: gg={gg}, ee={ee}, det={}", self.determinant()));
        }
        Ok(())
    }
}

/// Collapse channels, rates in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseSet {
    pub gamma: f64,
    pub gamma_phi: f64,
}

impl CollapseSet {
    pub fn new(gamma: f64, gamma_phi: f64) -> Result<Self> {
        require(gamma >= 0.0, "gamma", gamma, "must be >= 0")?;
        require(gamma_phi >= 0.0, "gamma_phi", gamma_phi, "must be >= 0")?;
        Ok(Self { gamma, gamma_phi })
    }

    pub fn from_emitter(e: &EmitterParams) -> Self {
        Self { gamma: e.gamma(), gamma_phi: e.gamma_phi() }
    }

    pub fn gamma2(&self) -> f64 {
        0.5 * self.gamma + self.gamma_phi
    }

    /// [√Γ·σ₋, √(γ_φ/2)·σ_z].
    pub fn operators(&self) -> [Mat2; 2] {
        let one = Complex64::new(1.0, 0.0);
        let sigma_minus = Mat2::new(ZERO, one, ZERO, ZERO);
        let sigma_z = Mat2::new(-one, ZERO, ZERO, one);
        [
            sigma_minus * Complex64::new(self.gamma.sqrt(), 0.0),
            sigma_z * Complex64::new((0.5 * self.gamma_phi).sqrt(), 0.0),
        ]
    }
}

/// dρ/dt = −i[H, ρ] + Σ_k (L_k ρ L_k† − ½{L_k†L_k, ρ}).
pub fn lindblad_rhs(rho: &DensityMatrix, h: &Mat2, collapse: &CollapseSet) -> Mat2 {
    let r = &rho.0;
    let mut d = (h * r - r * h) * (-I);
    for l in collapse.operators() {
        let ld = l.adjoint();
        let ldl = ld * l;
        d += l * r * ld - (ldl * r + r * ldl) * Complex64::new(0.5, 0.0);
    }
    d
}

/// Packed Hermitian 2×2 state used by the integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Packed {
    gg: f64,
    ee: f64,
    eg: Complex64,
}

impl Packed {
    fn from_rho(r: &DensityMatrix) -> Self {
        Self { gg: r.rho_gg(), ee: r.rho_ee(), eg: r.rho_eg() }
    }

    fn to_rho(self) -> DensityMatrix {
        DensityMatrix::from_parts(self.gg, self.ee, self.eg)
    }

    #[inline]
    fn axpy(self, h: f64, k: Packed) -> Packed {
        Packed { gg: self.gg + h * k.gg, ee: self.ee + h * k.ee, eg: self.eg + k.eg * h }
    }

    #[inline]
    fn is_finite(&self) -> bool {
        self.gg.is_finite() && self.ee.is_finite() && self.eg.re.is_finite() && self.eg.im.is_finite()
    }
}

/// Expanded generator for H = [[0, h_ge], [h_ge*, h_ee]].
#[inline]
fn packed_rhs(s: &Packed, h_ee: f64, h_ge: Complex64, gamma: f64, gamma2: f64) -> Packed {
    let h_eg = h_ge.conj();
    let pump = 2.0 * (h_eg * s.eg.conj()).im;
    let decay = gamma * s.ee;
    Packed {
        gg: -pump + decay,
        ee: pump - decay,
        eg: -I * (h_eg * (s.gg - s.ee) + s.eg * h_ee) - s.eg * gamma2,
    }
}

/// Shortest characteristic period (ns) of the driven dynamics: phonon
/// period, tone beats, optical Rabi period, the local precession period
/// 1/(|Δ_ref| + β·ν_m) and 1/Γ₂.
pub fn shortest_period(config: &DriveConfig, emitter: &EmitterParams) -> f64 {
    let mut fastest: f64 = 0.0;
    let nu_ref = config.reference_detuning();
    let mut local = nu_ref.abs();
    if let Some(p) = &config.phonon {
        fastest = fastest.max(p.nu_m);
        local += p.beta * p.nu_m;
    }
    fastest = fastest.max(local);
    let rabi_sum: f64 = config.tones.iter().map(|t| t.nu_rabi).sum();
    fastest = fastest.max(rabi_sum);
    for t in &config.tones {
        fastest = fastest.max((t.nu_detuning - nu_ref).abs());
    }
    let mut period = if fastest > 0.0 { period_ns(fastest) } else { f64::INFINITY };
    let g2 = emitter.gamma2();
    if g2 > 0.0 {
        period = period.min(1.0 / g2);
    }
    period
}

/// Largest accepted step (ns).
pub fn max_step(config: &DriveConfig, emitter: &EmitterParams) -> f64 {
    shortest_period(config, emitter) / MIN_STEPS_PER_PERIOD
}

/// Default step (ns): shortest period / 40, shortened so that a whole number
/// of steps fits in one phonon period when a phonon drive is present.
pub fn default_step(config: &DriveConfig, emitter: &EmitterParams) -> f64 {
    let mut dt = shortest_period(config, emitter) / STEPS_PER_PERIOD;
    if !dt.is_finite() {
        dt = 1.0;
    }
    if let Some(p) = &config.phonon {
        let tm = period_ns(p.nu_m);
        dt = tm / (tm / dt).ceil();
    }
    dt
}

/// Fixed-step RK4 propagator for the Lindblad equation. Time is absolute,
/// so consecutive segments (e.g. gated phonon pulses) keep their phases.
#[derive(Debug, Clone)]
pub struct Propagator {
    drive: CompiledDrive,
    gamma: f64,
    gamma2: f64,
    state: Packed,
    t: f64,
    steps: usize,
    renormalizations: usize,
}

impl Propagator {
    pub fn new(rho0: &DensityMatrix, config: &DriveConfig, emitter: &EmitterParams, t0: f64) -> Result<Self> {
        config.validate()?;
        rho0.check().map_err(Error::Invalid)?;
        let c = CollapseSet::from_emitter(emitter);
        Ok(Self {
            drive: CompiledDrive::new(config),
            gamma: c.gamma,
            gamma2: c.gamma2(),
            state: Packed::from_rho(rho0),
            t: t0,
            steps: 0,
            renormalizations: 0,
        })
    }

    pub fn set_phonon_enabled(&mut self, on: bool) {
        self.drive.set_phonon_enabled(on);
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> DensityMatrix {
        self.state.to_rho()
    }

    pub fn rho_ee(&self) -> f64 {
        self.state.ee
    }

    /// Number of trace renormalisations performed so far.
    pub fn renormalizations(&self) -> usize {
        self.renormalizations
    }

    /// One RK4 step of length `h`.
    pub fn step(&mut self, h: f64) -> Result<()> {
        let t = self.t;
        let (g, g2) = (self.gamma, self.gamma2);
        let d = &self.drive;
        let (e0, c0) = (d.diagonal(t), d.coupling(t));
        let (e1, c1) = (d.diagonal(t + 0.5 * h), d.coupling(t + 0.5 * h));
        let (e2, c2) = (d.diagonal(t + h), d.coupling(t + h));
        let s = self.state;
        let k1 = packed_rhs(&s, e0, c0, g, g2);
        let k2 = packed_rhs(&s.axpy(0.5 * h, k1), e1, c1, g, g2);
        let k3 = packed_rhs(&s.axpy(0.5 * h, k2), e1, c1, g, g2);
        let k4 = packed_rhs(&s.axpy(h, k3), e2, c2, g, g2);
        let w = h / 6.0;
        let mut next = Packed {
            gg: s.gg + w * (k1.gg + 2.0 * k2.gg + 2.0 * k3.gg + k4.gg),
            ee: s.ee + w * (k1.ee + 2.0 * k2.ee + 2.0 * k3.ee + k4.ee),
            eg: s.eg + (k1.eg + k2.eg * 2.0 + k3.eg * 2.0 + k4.eg) * w,
        };
        self.steps += 1;
        self.t = t + h;
        if !next.is_finite() {
            return Err(Error::NonFinite {
                t: self.t,
                step: self.steps,
                detail: format!("rho_gg={}, rho_ee={}, rho_eg={}", next.gg, next.ee, next.eg),
            });
        }
        let tr = next.gg + next.ee;
        if (tr - 1.0).abs() > TRACE_DRIFT_LIMIT {
            next.gg /= tr;
            next.ee /= tr;
            next.eg /= tr;
            self.renormalizations += 1;
        }
        self.state = next;
        Ok(())
    }

    /// Advances `n` steps of length `h`, returning the trapezoid integral of
    /// ρ_ee over the interval.
    pub fn integrate_excited(&mut self, n: usize, h: f64) -> Result<f64> {
        let mut acc = 0.5 * self.state.ee;
        for i in 0..n {
            self.step(h)?;
            acc += if i + 1 == n { 0.5 * self.state.ee } else { self.state.ee };
        }
        Ok(acc * h)
    }
}

/// Sampled evolution. Samples are uniformly spaced in time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub renormalizations: usize,
}

impl Trajectory {
    pub fn rho_ee(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.rho_ee()).collect()
    }

    pub fn coherence(&self) -> Vec<Complex64> {
        self.states.iter().map(|s| s.rho_eg()).collect()
    }
}

/// Evolves `rho0` for `t_span` ns with step `dt`, sampling every step.
pub fn evolve(rho0: &DensityMatrix, config: &DriveConfig, emitter: &EmitterParams, t_span: f64, dt: f64) -> Result<Trajectory> {
    evolve_sampled(rho0, config, emitter, t_span, dt, 1)
}

/// As [`evolve`], recording every `stride`-th step. The step count is
/// ceil(t_span/dt), with dt shortened to land exactly on `t_span`.
pub fn evolve_sampled(
    rho0: &DensityMatrix,
    config: &DriveConfig,
    emitter: &EmitterParams,
    t_span: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    require(t_span > 0.0, "t_span", t_span, "must be > 0")?;
    require(dt > 0.0, "dt", dt, "must be > 0")?;
    let limit = max_step(config, emitter);
    if dt > limit {
        return Err(Error::StepTooLarge { dt, max: limit });
    }
    let stride = stride.max(1);
    let n = (t_span / dt).ceil() as usize;
    let h = t_span / n as f64;
    let mut prop = Propagator::new(rho0, config, emitter, 0.0)?;
    let mut times = vec![0.0];
    let mut states = vec![*rho0];
    for i in 1..=n {
        prop.step(h)?;
        if i % stride == 0 {
            times.push(i as f64 * h);
            states.push(prop.state());
        }
    }
    Ok(Trajectory { times, states, renormalizations: prop.renormalizations() })
}

/// Time-averaged ρ_ee over `window` ns after discarding `transient` ns,
/// starting from |g⟩. With a phonon drive the window is extended to a whole
/// number of phonon periods.
pub fn time_averaged_excited(config: &DriveConfig, emitter: &EmitterParams, transient: f64, window: f64) -> Result<f64> {
    let dt = default_step(config, emitter);
    let mut window = window;
    if let Some(p) = &config.phonon {
        let tm = period_ns(p.nu_m);
        window = (window / tm).ceil() * tm;
    }
    let mut prop = Propagator::new(&DensityMatrix::ground(), config, emitter, 0.0)?;
    let n0 = (transient / dt).ceil() as usize;
    for _ in 0..n0 {
        prop.step(dt)?;
    }
    let n = (window / dt).round().max(1.0) as usize;
    let h = window / n as f64;
    Ok(prop.integrate_excited(n, h)? / window)
}

/// Closed-form steady-state ρ_ee for one tone and no phonon drive:
/// ρ_ee = X/(1+2X), X = Ω₀²Γ₂ / (2Γ(Γ₂² + Δ²)).
pub fn steady_state_excited_population(nu_detuning: f64, nu_rabi: f64, emitter: &EmitterParams) -> f64 {
    let (gamma, g2) = (emitter.gamma(), emitter.gamma2());
    let (delta, omega) = (angular(nu_detuning), angular(nu_rabi));
    let x = omega * omega * g2 / (2.0 * gamma * (g2 * g2 + delta * delta));
    x / (1.0 + 2.0 * x)
}

/// Power-broadened FWHM (MHz) of the steady-state line:
/// (1/π)·√(Γ₂² + Ω₀²Γ₂/Γ).
pub fn power_broadened_fwhm(nu_rabi: f64, emitter: &EmitterParams) -> f64 {
    let (gamma, g2) = (emitter.gamma(), emitter.gamma2());
    let omega = angular(nu_rabi);
    2.0 * ordinary((g2 * g2 + omega * omega * g2 / gamma).sqrt())
}

/// Detected photon rate (counts/ns) = η·Γ·ρ_ee.
pub fn fluorescence_rate(rho_ee: f64, emitter: &EmitterParams, collection_eta: f64) -> Result<f64> {
    require((0.0..=1.0).contains(&collection_eta), "collection_eta", collection_eta, "must be in [0, 1]")?;
    Ok(collection_eta * emitter.gamma() * rho_ee)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{OpticalTone, PhononDrive};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emitter(nu_gamma: f64, nu_phi: f64) -> EmitterParams {
        EmitterParams { nu_gamma, nu_phi, sd_fwhm: 0.0 }
    }

    fn random_rho(rng: &mut ChaCha8Rng) -> DensityMatrix {
        // mixture of a random pure state with the identity
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let p: f64 = rng.gen_range(0.0..1.0);
        let ee = (theta / 2.0).sin().powi(2);
        let eg = Complex64::from_polar((theta / 2.0).sin() * (theta / 2.0).cos(), phi);
        let r = DensityMatrix::from_parts(1.0 - ee, ee, eg);
        DensityMatrix(r.0 * Complex64::new(p, 0.0) + DensityMatrix::maximally_mixed().0 * Complex64::new(1.0 - p, 0.0))
    }

    #[test]
    fn generator_examples() {
        let e = emitter(13.3, 0.0);
        let c = CollapseSet::from_emitter(&e);
        let d = lindblad_rhs(&DensityMatrix::excited(), &Mat2::zeros(), &c);
        assert!((d[(1, 1)].re + e.gamma()).abs() < 1e-15);

        let e = emitter(0.0, 5.0);
        let c = CollapseSet::from_emitter(&e);
        let d = lindblad_rhs(&DensityMatrix::maximally_mixed(), &Mat2::zeros(), &c);
        assert!(d.norm() < 1e-15);

        let e = emitter(13.3, 4.0);
        let c = CollapseSet::from_emitter(&e);
        let rho = DensityMatrix::from_parts(0.5, 0.5, Complex64::new(0.5, 0.0));
        let d = lindblad_rhs(&rho, &Mat2::zeros(), &c);
        let expected = -(e.gamma() / 2.0 + e.gamma_phi()) * 0.5;
        assert!((d[(1, 0)] - expected).norm() < 1e-15);
        assert!((d[(0, 1)] - expected).norm() < 1e-15);
    }

    #[test]
    fn packed_kernel_matches_matrix_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let rho = random_rho(&mut rng);
            let h_ee: f64 = rng.gen_range(-5.0..5.0);
            let h_ge = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let c = CollapseSet::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)).unwrap();
            let h = Mat2::new(ZERO, h_ge, h_ge.conj(), Complex64::new(h_ee, 0.0));
            let full = lindblad_rhs(&rho, &h, &c);
            let p = packed_rhs(&Packed::from_rho(&rho), h_ee, h_ge, c.gamma, c.gamma2());
            assert!((full[(0, 0)].re - p.gg).abs() < 1e-13);
            assert!((full[(1, 1)].re - p.ee).abs() < 1e-13);
            assert!((full[(1, 0)] - p.eg).norm() < 1e-13);
            // traceless and Hermitian
            assert!((full[(0, 0)] + full[(1, 1)]).norm() < 1e-13);
            assert!((full - full.adjoint()).norm() < 1e-13);
        }
    }

    #[test]
    fn free_decay_is_exponential() {
        let e = emitter(13.3, 0.0);
        let cfg = DriveConfig::single(OpticalTone::new(0.0, 0.0, 0.0).unwrap(), None);
        let span = 5.0 / e.gamma();
        let traj = evolve(&DensityMatrix::excited(), &cfg, &e, span, 0.05).unwrap();
        let err = traj
            .times
            .iter()
            .zip(traj.rho_ee())
            .map(|(t, p)| (p - (-e.gamma() * t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn coherence_decays_at_gamma2() {
        let e = emitter(13.3, 6.0);
        let cfg = DriveConfig::single(OpticalTone::new(0.0, 0.0, 0.0).unwrap(), None);
        let rho0 = DensityMatrix::from_parts(0.5, 0.5, Complex64::new(0.5, 0.0));
        let traj = evolve(&rho0, &cfg, &e, 30.0, 0.02).unwrap();
        for (t, c) in traj.times.iter().zip(traj.coherence()) {
            assert!((c.re - 0.5 * (-e.gamma2() * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn bare_rabi_flopping() {
        let e = EmitterParams::lossless();
        let nu = 50.0;
        let cfg = DriveConfig::single(OpticalTone::new(nu, 0.0, 0.0).unwrap(), None);
        let traj = evolve(&DensityMatrix::ground(), &cfg, &e, 100.0, 0.01).unwrap();
        let w = angular(nu);
        for (t, p) in traj.times.iter().zip(traj.rho_ee()) {
            assert!((p - (w * t / 2.0).sin().powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn diagonal_hamiltonian_transfers_no_population() {
        let e = emitter(13.3, 2.0);
        let cfg = DriveConfig::single(
            OpticalTone::new(0.0, -300.0, 0.0).unwrap(),
            Some(PhononDrive::new(900.0, 0.3, 0.455).unwrap()),
        );
        let traj = evolve(&DensityMatrix::ground(), &cfg, &e, 50.0, default_step(&cfg, &e)).unwrap();
        assert!(traj.rho_ee().iter().all(|p| p.abs() < 1e-15));
    }

    #[test]
    fn step_validation() {
        let e = emitter(13.3, 0.0);
        let cfg = DriveConfig::single(OpticalTone::new(10.0, 0.0, 0.0).unwrap(), Some(PhononDrive::new(900.0, 0.0, 0.1).unwrap()));
        let err = evolve(&DensityMatrix::ground(), &cfg, &e, 10.0, 0.2).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
        let dt = default_step(&cfg, &e);
        let tm = period_ns(900.0);
        assert!(((tm / dt) - (tm / dt).round()).abs() < 1e-9);
        assert!(dt <= max_step(&cfg, &e));
    }

    #[test]
    fn relaxes_to_ground_without_drive() {
        let e = emitter(13.3, 3.0);
        let cfg = DriveConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let rho0 = random_rho(&mut rng);
            let span = 30.0 / e.gamma();
            let traj = evolve_sampled(&rho0, &cfg, &e, span, 0.1, 1000).unwrap();
            assert!(traj.states.last().unwrap().rho_ee() < 1e-6);
        }
    }

    #[test]
    fn closed_form_limits() {
        let e = emitter(13.3, 0.0);
        assert!(steady_state_excited_population(0.0, 1e-6, &e) < 1e-12);
        assert!((steady_state_excited_population(0.0, 1e6, &e) - 0.5).abs() < 1e-6);
        // Ω₀ = 0: FWHM = Γ₂/π in ordinary frequency = ν_Γ here
        assert!((power_broadened_fwhm(0.0, &e) - 13.3).abs() < 1e-12);
        // log-log slope → 1 at strong drive
        let (a, b) = (power_broadened_fwhm(1e4, &e), power_broadened_fwhm(2e4, &e));
        let slope = (b / a).ln() / 2f64.ln();
        assert!((slope - 1.0).abs() < 0.02);
    }

    #[test]
    fn closed_form_fwhm_matches_scan() {
        let e = emitter(13.3, 2.5);
        for nu_rabi in [0.0, 5.0, 40.0, 150.0] {
            let expected = power_broadened_fwhm(nu_rabi, &e);
            let peak = steady_state_excited_population(0.0, nu_rabi.max(1e-9), &e);
            // bisection on the half-maximum crossing
            let (mut lo, mut hi) = (0.0, 10.0 * expected);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if steady_state_excited_population(mid, nu_rabi.max(1e-9), &e) > 0.5 * peak {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let scanned = 2.0 * lo;
            assert!(((scanned - expected) / expected).abs() < 0.005, "{nu_rabi}: {scanned} vs {expected}");
        }
    }

    #[test]
    fn long_time_average_matches_closed_form() {
        let e = emitter(13.3, 0.0);
        let cfg = DriveConfig::single(OpticalTone::new(65.0, 100.0, 0.0).unwrap(), None);
        let avg = time_averaged_excited(&cfg, &e, 40.0 / e.gamma(), 400.0 / e.gamma()).unwrap();
        let exact = steady_state_excited_population(100.0, 65.0, &e);
        assert!((avg - exact).abs() < 1e-4, "{avg} vs {exact}");
    }

    #[test]
    fn fluorescence_rate_examples() {
        let e = emitter(13.3, 0.0);
        assert_eq!(fluorescence_rate(0.0, &e, 1.0).unwrap(), 0.0);
        assert!((fluorescence_rate(0.5, &e, 1.0).unwrap() - 0.0418).abs() < 5e-5);
        assert!((fluorescence_rate(0.4, &e, 0.3).unwrap() - 2.0 * fluorescence_rate(0.2, &e, 0.3).unwrap()).abs() < 1e-15);
        assert!(fluorescence_rate(0.5, &e, 1.5).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::ground().check().is_ok());
        let bad = Mat2::new(Complex64::new(0.7, 0.0), ZERO, ZERO, Complex64::new(0.7, 0.0));
        assert!(DensityMatrix::from_matrix(bad).is_err());
        let nonpos = DensityMatrix::from_parts(0.5, 0.5, Complex64::new(0.9, 0.0));
        assert!(nonpos.check().is_err());
    }
}
