use sideband_core::params::EmitterParams;
use sideband_core::spectroscopy::{fit_lorentzians, PowerScanSetup};

#[test]
fn three_peak_fit_at_the_ple_operating_point() {
    let e = EmitterParams::default();
    let setup = PowerScanSetup::default();
    let spec = setup.spectrum(0.4, 0.2, &e).unwrap();
    let fit = fit_lorentzians(&spec, 3, None).unwrap();
    assert!(fit.converged && fit.peaks.len() == 3, "{fit:?}");
    for (p, c) in fit.peaks.iter().zip([-900.0, 0.0, 900.0]) {
        assert!((p.center - c).abs() < 0.01 * 900.0, "{p:?}");
    }
    // |J₋₁| = |J₁|
    let (red, blue) = (fit.peaks[0].amplitude, fit.peaks[2].amplitude);
    assert!(((red - blue) / blue).abs() < 0.02);
    assert!(fit.relative_residual(0.0) < 0.025, "{}", fit.relative_residual(0.0));
}
