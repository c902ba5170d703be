//! Acceptance criteria. Each check runs the simulator at the stated
//! operating point and compares against the pinned tolerance.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sideband_core::bessel::{jacobi_anger_components, required_order};
use sideband_core::coupling::optical_power_to_rabi;
use sideband_core::experiments::{
    aom_resonance, fit_fringe, fit_rabi_counts, interference_scan_phase, rabi_sequence, rabi_vs_rf_power, InterferenceConfig,
    RabiSequenceConfig,
};
use sideband_core::hamiltonian::CompiledDrive;
use sideband_core::lindblad::{default_step, evolve_sampled, max_step, steady_state_excited_population, DensityMatrix};
use sideband_core::params::{Calibration, DriveConfig, EmitterParams, OpticalTone, PhononDrive};
use sideband_core::spectroscopy::{
    calibrate_sd_fwhm, default_grid, fit_resonance, linewidth_vs_power, ple_scan, sideband_amplitude_scaling, splitting_vs_nu_m,
    uniform_grid, AmplitudeScalingSetup, PowerScanSetup, DEFAULT_LINEWIDTH_P_RF_W, RESONANCE_WINDOW, TARGET_LOW_POWER_FWHM_MHZ,
};
use sideband_core::units::GAUSSIAN_FWHM_PER_SIGMA;
use sideband_sim::commands::oracle_report;
use sideband_sim::config::RunConfig;

#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!("{} criterion {} ({}): {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

fn verdict(id: u32, name: &'static str, result: Result<(bool, String), String>) -> Verdict {
    match result {
        Ok((passed, detail)) => Verdict { id, name, passed, detail },
        Err(e) => Verdict { id, name, passed: false, detail: format!("error: {e}") },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b) / b
}

/// Runs the saw subcommand in-process and returns its report.
fn saw_report() -> Result<serde_json::Value, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("saw");
    let args: Vec<String> = ["sideband-sim", "saw", "--out", out.to_str().ok_or("non-UTF-8 temp path")?]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let code = sideband_sim::run(args);
    if code != 0 {
        return Err(format!("saw exited with {code}"));
    }
    let text = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn field(v: &serde_json::Value, key: &str) -> Result<f64, String> {
    v[key].as_f64().ok_or_else(|| format!("report has no numeric \"{key}\""))
}

/// SAW amplitude from Ω/2π = 66 MHz, Ω₀/2π = 290 MHz, v = 5600 m/s, D/2π = 610 THz.
pub fn saw_amplitude() -> Verdict {
    verdict(1, "SAW amplitude", (|| {
        let r = saw_report()?;
        let a = field(&r, "a_saw_pm")?;
        Ok(((0.665..=0.735).contains(&a), format!("A_SAW = {a:.5} pm, required [0.665, 0.735]")))
    })())
}

/// g for m = 1 pg at ν_m = 900 MHz.
pub fn single_phonon_coupling() -> Verdict {
    verdict(2, "single-phonon coupling", (|| {
        let r = saw_report()?;
        let g = field(&r, "g_mhz")?;
        let (m, nu) = (field(&r, "mass_kg")?, field(&r, "nu_m_mhz")?);
        let inputs = (m - 1e-15).abs() < 1e-27 && nu == 900.0;
        Ok(((1.5..=2.4).contains(&g) && inputs, format!("g/2pi = {g:.4} MHz at m = {m:e} kg, nu_m = {nu} MHz, required [1.5, 2.4]")))
    })())
}

/// Carrier/red-sideband splitting against ν_m over 860..940 MHz.
pub fn sideband_splitting() -> Verdict {
    verdict(3, "sideband splitting", (|| {
        let nu_m = [860.0, 880.0, 900.0, 920.0, 940.0];
        let (_, line) = splitting_vs_nu_m(&nu_m, 0.4, 0.2, &PowerScanSetup::default(), &EmitterParams::default())
            .map_err(|e| e.to_string())?;
        let ok = (line.slope - 1.0).abs() <= 0.01 && line.intercept.abs() < 2.0;
        Ok((ok, format!("slope {:.5} (1 +/- 0.01), intercept {:.3} MHz (|b| < 2)", line.slope, line.intercept)))
    })())
}

/// Low-power carrier and sideband widths after calibrating the spectral
/// diffusion width.
pub fn low_power_linewidth() -> Verdict {
    verdict(4, "low-power linewidth", (|| {
        let nu_m = 900.0;
        let base = EmitterParams::default();
        let sd = calibrate_sd_fwhm(TARGET_LOW_POWER_FWHM_MHZ, &default_grid(nu_m), nu_m, &base).map_err(|e| e.to_string())?;
        let e = base.with_sd_fwhm(sd);
        let rows = linewidth_vs_power(&[0.01, 0.05], DEFAULT_LINEWIDTH_P_RF_W, &PowerScanSetup::default(), &e).map_err(|e| e.to_string())?;
        let mut ok = true;
        let mut parts = vec![format!("sd_fwhm {sd:.2} MHz")];
        for r in &rows {
            ok &= (r.carrier_fwhm - 175.0).abs() <= 10.0 && (r.sideband_fwhm - 175.0).abs() <= 10.0;
            parts.push(format!("P_o {} uW: carrier {:.1}, sideband {:.1} MHz", r.p_o, r.carrier_fwhm, r.sideband_fwhm));
        }
        Ok((ok, format!("{} (175 +/- 10)", parts.join("; "))))
    })())
}

/// Closed-form steady-state line, convolved with the spectral-diffusion
/// Gaussian by trapezoid, fitted like the simulated spectra.
fn convolved_closed_form_fwhm(nu_rabi: f64, grid: &[f64], nu_m: f64, e: &EmitterParams) -> Result<f64, String> {
    let sigma = e.sd_fwhm / GAUSSIAN_FWHM_PER_SIGMA;
    let h = 0.5;
    let m = (10.0 * sigma / h).ceil() as i64;
    let y: Vec<f64> = grid
        .iter()
        .map(|&d| {
            (-m..=m)
                .map(|k| {
                    let x = k as f64 * h;
                    let w = if k.abs() == m { 0.5 } else { 1.0 };
                    w * (-0.5 * (x / sigma).powi(2)).exp() * steady_state_excited_population(d + x, nu_rabi, e)
                })
                .sum::<f64>()
                * h
                / (sigma * TAU.sqrt())
        })
        .collect();
    Ok(fit_resonance(grid, &y, 0.0, RESONANCE_WINDOW * nu_m).map_err(|e| e.to_string())?.peak.fwhm)
}

/// Carrier power broadening against the convolved closed form, and the
/// sideband width over the same decade.
pub fn power_broadening() -> Verdict {
    verdict(5, "power broadening", (|| {
        let e = EmitterParams::default();
        let setup = PowerScanSetup::default();
        let powers = [1.0, 2.0, 5.0, 10.0];
        let rows = linewidth_vs_power(&powers, DEFAULT_LINEWIDTH_P_RF_W, &setup, &e).map_err(|e| e.to_string())?;
        let grid = default_grid(setup.nu_m);
        let mut ok = true;
        let mut worst: f64 = 0.0;
        for r in &rows {
            let nu_rabi = optical_power_to_rabi(r.p_o, Calibration::default().kappa_opt).map_err(|e| e.to_string())?;
            let oracle = convolved_closed_form_fwhm(nu_rabi, &grid, setup.nu_m, &e)?;
            let d = rel(r.carrier_fwhm, oracle);
            worst = if d.abs() > worst.abs() { d } else { worst };
            ok &= d.abs() < 0.10;
        }
        let growth = rel(rows[rows.len() - 1].sideband_fwhm, rows[0].sideband_fwhm);
        ok &= growth < 0.15;
        Ok((
            ok,
            format!(
                "carrier vs convolved closed form: worst {:+.2}% (< 10%); sideband {:.1} -> {:.1} MHz, growth {:+.2}% (< 15%)",
                100.0 * worst,
                rows[0].sideband_fwhm,
                rows[rows.len() - 1].sideband_fwhm,
                100.0 * growth
            ),
        ))
    })())
}

/// Through-origin linearity of the sideband amplitude in P_o and P_RF.
pub fn linear_power_scaling() -> Verdict {
    verdict(6, "linear power scaling", (|| {
        let (vs_o, vs_rf) = sideband_amplitude_scaling(&AmplitudeScalingSetup::default(), &EmitterParams::default()).map_err(|e| e.to_string())?;
        let ok = vs_o.fit.r_squared > 0.99 && vs_rf.fit.r_squared > 0.99 && !vs_o.saturation_warning && !vs_rf.saturation_warning;
        Ok((
            ok,
            format!(
                "R^2 vs P_o {:.5}, vs P_RF {:.5} (> 0.99); max sideband rho_ee {:.3}/{:.3} (< 0.1)",
                vs_o.fit.r_squared, vs_rf.fit.r_squared, vs_o.max_sideband_rho_ee, vs_rf.max_sideband_rho_ee
            ),
        ))
    })())
}

/// Rabi frequency at the reference point and the √P_RF law.
pub fn rabi_frequency() -> Verdict {
    verdict(7, "Rabi frequency", (|| {
        let e = EmitterParams::default();
        let cfg = RabiSequenceConfig::default();
        let f = fit_rabi_counts(&rabi_sequence(&cfg, &e).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let (rows, line) = rabi_vs_rf_power(&[0.2, 0.1, 0.05], &cfg, &Calibration::default(), &e).map_err(|e| e.to_string())?;
        let ok = rel(f.frequency, 66.0).abs() <= 0.05 && line.r_squared > 0.99;
        let nus: Vec<String> = rows.iter().map(|r| format!("{:.2}", r.fit.frequency)).collect();
        Ok((
            ok,
            format!(
                "nu = {:.3} MHz ({:+.2}% vs 66, within 5%); P, P/2, P/4 -> [{}] MHz, R^2 vs sqrt(P_RF) {:.5} (> 0.99)",
                f.frequency,
                100.0 * rel(f.frequency, 66.0),
                nus.join(", "),
                line.r_squared
            ),
        ))
    })())
}

/// Coherent-state correspondence and Fock-state flops.
pub fn quantized_correspondence() -> Verdict {
    verdict(8, "quantized-model correspondence", (|| {
        let (r, ..) = oracle_report(&RunConfig::default()).map_err(|e| e.to_string())?;
        let ok = r.correspondence_pass && r.fock_n1_pass && r.fock_ratio_pass;
        Ok((
            ok,
            format!(
                "alpha = 3 max deviation {:.4} (< 0.05){}; n=1 flop {:.4} vs {:.4} MHz ({:+.2}%, within 5%); n=4/n=1 {:.4} (2 +/- 5%)",
                r.max_deviation,
                if r.correspondence_pass { "" } else { " not met" },
                r.fock[0].nu_fit_mhz,
                r.fock_expected_n1_mhz,
                100.0 * rel(r.fock[0].nu_fit_mhz, r.fock_expected_n1_mhz),
                r.fock_ratio
            ),
        ))
    })())
}

/// φ_m fringe shape and the 1/T_int scaling of the AOM resonance width.
pub fn interference() -> Verdict {
    verdict(9, "interference", (|| {
        let e = EmitterParams::default();
        let cfg = InterferenceConfig::default();
        let grid: Vec<f64> = (0..24).map(|i| i as f64 * TAU / 24.0).collect();
        let fringe = fit_fringe(&interference_scan_phase(&grid, &cfg, &e).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let mut widths = Vec::new();
        for t_int in [1000.0, 2000.0] {
            let span = 2000.0 / t_int;
            let g = uniform_grid(cfg.nu_m - span, cfg.nu_m + span, 41);
            let c = InterferenceConfig { phi_m: -fringe.fit.phase, t_int_ns: t_int, ..cfg.clone() };
            widths.push(aom_resonance(&g, &c, &e).map_err(|e| e.to_string())?.fwhm);
        }
        let ratio = widths[0] / widths[1];
        let ok = fringe.relative_residual < 0.03 && rel(ratio, 2.0).abs() <= 0.2;
        Ok((
            ok,
            format!(
                "fringe relative residual {:.4} (< 0.03); FWHM {:.4} MHz at 1 us, {:.4} MHz at 2 us, ratio {:.3} (2 +/- 20%)",
                fringe.relative_residual, widths[0], widths[1], ratio
            ),
        ))
    })())
}

fn random_config(rng: &mut ChaCha8Rng) -> (DriveConfig, EmitterParams, DensityMatrix) {
    let nu_detuning = rng.gen_range(-2000.0..2000.0);
    let nu_m = rng.gen_range(200.0..1500.0);
    let beta = rng.gen_range(0.0..1.5);
    let cfg = DriveConfig {
        tones: vec![
            OpticalTone::new(rng.gen_range(0.0..500.0), nu_detuning, 0.0).expect("valid tone"),
            OpticalTone::new(rng.gen_range(0.0..200.0), nu_detuning + nu_m, rng.gen_range(0.0..TAU)).expect("valid tone"),
        ],
        phonon: Some(PhononDrive::new(nu_m, rng.gen_range(0.0..TAU), beta).expect("valid drive")),
    };
    let e = EmitterParams::new(13.3, rng.gen_range(0.0..50.0), 0.0).expect("valid emitter");
    let p: f64 = rng.gen_range(0.0..1.0);
    let c = rng.gen_range(0.0..1.0) * (p * (1.0 - p)).sqrt();
    let rho = DensityMatrix::from_parts(1.0 - p, p, Complex64::from_polar(c, rng.gen_range(0.0..TAU)));
    (cfg, e, rho)
}

fn final_state(cfg: &DriveConfig, e: &EmitterParams, t_span: f64, steps: usize) -> Result<DensityMatrix, String> {
    let tr = evolve_sampled(&DensityMatrix::ground(), cfg, e, t_span, t_span / steps as f64, steps).map_err(|e| e.to_string())?;
    Ok(*tr.states.last().expect("trajectory has samples"))
}

/// Physicality on random configs, RK4 order, β = 0 spectra and the
/// Jacobi–Anger reconstruction.
pub fn numerics_suite() -> Verdict {
    verdict(10, "numerics property suite", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(20_24);
        let mut bad = 0;
        for _ in 0..100 {
            let (cfg, e, rho0) = random_config(&mut rng);
            let tr = evolve_sampled(&rho0, &cfg, &e, 15.0, default_step(&cfg, &e), 5).map_err(|e| e.to_string())?;
            if tr.states.iter().any(|s| s.check().is_err()) {
                bad += 1;
            }
        }

        let e = EmitterParams::new(13.3, 5.0, 0.0).map_err(|e| e.to_string())?;
        let cfg = DriveConfig::single(
            OpticalTone::new(290.0, -900.0, 0.3).map_err(|e| e.to_string())?,
            Some(PhononDrive::new(940.0, 0.4, 0.455).map_err(|e| e.to_string())?),
        );
        let n0 = (20.0 / max_step(&cfg, &e)).ceil() as usize;
        let reference = final_state(&cfg, &e, 20.0, 64 * n0)?;
        let errs: Vec<f64> =
            [1, 2, 4].iter().map(|k| final_state(&cfg, &e, 20.0, k * n0).map(|s| (s.0 - reference.0).norm())).collect::<Result<_, _>>()?;
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();

        let mut carrier_err: f64 = 0.0;
        for (nu_rabi, nu_phi) in [(5.0, 0.0), (20.0, 0.0), (60.0, 10.0)] {
            let e = EmitterParams::new(13.3, nu_phi, 0.0).map_err(|e| e.to_string())?;
            let grid = uniform_grid(-150.0, 150.0, 31);
            let cfg = DriveConfig::single(OpticalTone::new(nu_rabi, 0.0, 0.0).map_err(|e| e.to_string())?, None);
            let spec = ple_scan(&grid, &cfg, &e, 10.0 / e.gamma()).map_err(|e| e.to_string())?;
            for (d, f) in grid.iter().zip(&spec.fluorescence) {
                carrier_err = carrier_err.max((f / e.gamma() - steady_state_excited_population(*d, nu_rabi, &e)).abs());
            }
        }

        let mut ja_err: f64 = 0.0;
        let nu_m = 900.0;
        let omega_m = TAU * nu_m * 1e-3;
        for beta in [0.05, 0.3, 0.455, 0.7, 1.0] {
            let phi_m = 0.37;
            let cfg = DriveConfig::single(
                OpticalTone::new(100.0, -nu_m, 0.0).map_err(|e| e.to_string())?,
                Some(PhononDrive::new(nu_m, phi_m, beta).map_err(|e| e.to_string())?),
            );
            let drive = CompiledDrive::new(&cfg);
            let ja = jacobi_anger_components(beta, 0.0, nu_m, required_order(beta, 1e-8).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let delta_ref = TAU * cfg.reference_detuning() * 1e-3;
            for i in 0..400 {
                let t = i as f64 * 5e-3 / nu_m;
                let theta = omega_m * t + phi_m;
                ja_err = ja_err.max((-delta_ref + omega_m * ja.modulation(theta) - drive.diagonal(t)).abs());
                ja_err = ja_err.max((ja.phase_factor(theta) - Complex64::from_polar(1.0, beta * theta.sin())).norm());
            }
        }
        let ok = bad == 0 && orders.iter().all(|o| (3.5..=4.5).contains(o)) && carrier_err < 1e-4 && ja_err < 1e-3;
        Ok((
            ok,
            format!(
                "{bad}/100 configs unphysical; RK4 orders {:.3}, {:.3} ([3.5, 4.5]); beta=0 spectra max error {carrier_err:.2e} (< 1e-4); Jacobi-Anger max error {ja_err:.2e} (< 1e-3)",
                orders[0], orders[1]
            ),
        ))
    })())
}

/// All criteria in order.
pub fn all() -> Vec<fn() -> Verdict> {
    vec![
        saw_amplitude,
        single_phonon_coupling,
        sideband_splitting,
        low_power_linewidth,
        power_broadening,
        linear_power_scaling,
        rabi_frequency,
        quantized_correspondence,
        interference,
        numerics_suite,
    ]
}
