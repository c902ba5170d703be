//! Integer-order Bessel functions and the Jacobi–Anger expansion of the
//! phonon-modulated optical coupling,
//! e^{iβ sin θ} = Σ_k J_k(β) e^{ikθ}.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

/// Largest |x| accepted by [`bessel_j`].
pub const BESSEL_MAX_ARG: f64 = 30.0;

const SERIES_MAX_ARG: f64 = 8.0;
const SERIES_TERMS: usize = 25;
const INTEGRAL_PANELS: usize = 256;

/// J_k(x) for k ≥ 0 and |x| ≤ 30.
///
/// For |x| ≤ 8 the ascending series is summed with a fixed 25 terms; the
/// truncation error there is below 1e-20 and cancellation costs at most
/// ~1e-14. Beyond that the series loses digits to cancellation, so Bessel's
/// integral (1/π)∫₀^π cos(kτ − x sin τ) dτ is evaluated with the trapezoid
/// rule, which converges geometrically for this periodic integrand.
pub fn bessel_j(k: u32, x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > BESSEL_MAX_ARG {
        return Err(Error::Range { x, limit: BESSEL_MAX_ARG });
    }
    if x.abs() <= SERIES_MAX_ARG {
        Ok(series(k, x))
    } else {
        Ok(integral(k, x))
    }
}

/// J_k(x) for any integer order, using J_{−k} = (−1)^k J_k.
pub fn bessel_j_signed(k: i32, x: f64) -> Result<f64> {
    let v = bessel_j(k.unsigned_abs(), x)?;
    Ok(if k < 0 && k % 2 != 0 { -v } else { v })
}

fn series(k: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for j in 1..=k {
        term *= half / j as f64;
    }
    let q = half * half;
    let mut sum = term;
    for m in 1..SERIES_TERMS {
        term *= -q / (m as f64 * (m as f64 + k as f64));
        sum += term;
    }
    sum
}

fn integral(k: u32, x: f64) -> f64 {
    let h = PI / INTEGRAL_PANELS as f64;
    let f = |tau: f64| (k as f64 * tau - x * tau.sin()).cos();
    let mut s = 0.5 * (f(0.0) + f(PI));
    for i in 1..INTEGRAL_PANELS {
        s += f(i as f64 * h);
    }
    s * h / PI
}

/// One term of the Jacobi–Anger expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandComponent {
    pub order: i32,
    /// J_order(β).
    pub weight: f64,
    /// ν + order·ν_m (MHz).
    pub nu_effective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiAnger {
    pub beta: f64,
    pub components: Vec<SidebandComponent>,
    /// Σ J_k² over the returned orders (1 for the untruncated expansion).
    pub captured_power: f64,
    /// Set when `captured_power < 1 − 1e-6`.
    pub truncated: bool,
}

impl JacobiAnger {
    /// Truncated Σ J_k e^{ikθ}.
    pub fn phase_factor(&self, theta: f64) -> Complex64 {
        self.components
            .iter()
            .map(|c| c.weight * Complex64::from_polar(1.0, c.order as f64 * theta))
            .sum()
    }

    /// d/dθ of the truncated phase factor.
    pub fn phase_factor_derivative(&self, theta: f64) -> Complex64 {
        self.components
            .iter()
            .map(|c| Complex64::new(0.0, c.order as f64 * c.weight) * Complex64::from_polar(1.0, c.order as f64 * theta))
            .sum()
    }

    /// β·cos θ rebuilt from the truncated series via F'/F = iβ cos θ.
    pub fn modulation(&self, theta: f64) -> f64 {
        let f = self.phase_factor(theta);
        let df = self.phase_factor_derivative(theta);
        (Complex64::new(0.0, -1.0) * df * f.conj()).re / f.norm_sqr()
    }
}

/// Smallest order N with Σ_{|k|≤N} J_k(β)² ≥ 1 − `tol`.
pub fn required_order(beta: f64, tol: f64) -> Result<usize> {
    require(beta >= 0.0, "beta", beta, "must be >= 0")?;
    let mut power = bessel_j(0, beta)?.powi(2);
    let mut n = 0usize;
    while power < 1.0 - tol {
        n += 1;
        if n > 60 {
            return Err(Error::Invalid(format!("Jacobi-Anger expansion for beta = {beta} needs more than 60 orders")));
        }
        power += 2.0 * bessel_j(n as u32, beta)?.powi(2);
    }
    Ok(n)
}

/// Components k = −max_order..=max_order of e^{iβ sin θ} with effective
/// detunings ν + k·ν_m.
pub fn jacobi_anger_components(beta: f64, nu_detuning: f64, nu_m: f64, max_order: usize) -> Result<JacobiAnger> {
    require(beta >= 0.0, "beta", beta, "must be >= 0")?;
    require(nu_m > 0.0, "nu_m", nu_m, "must be > 0")?;
    let max_order = max_order as i32;
    let mut components = Vec::new();
    for k in -max_order..=max_order {
        let weight = bessel_j_signed(k, beta)?;
        if beta == 0.0 && k != 0 {
            continue;
        }
        components.push(SidebandComponent { order: k, weight, nu_effective: nu_detuning + k as f64 * nu_m });
    }
    let captured_power: f64 = components.iter().map(|c| c.weight * c.weight).sum();
    Ok(JacobiAnger { beta, components, captured_power, truncated: captured_power < 1.0 - 1e-6 })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bessel's integral by composite Simpson on a fine grid; independent of
    /// both evaluation paths above.
    fn simpson_oracle(k: i32, x: f64) -> f64 {
        let n = 4000;
        let h = PI / n as f64;
        let f = |t: f64| (k as f64 * t - x * t.sin()).cos();
        let mut s = f(0.0) + f(PI);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        s * h / 3.0 / PI
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert!(bessel_j(0, 2.404_825_557_695_773).unwrap().abs() < 1e-4);
    }

    #[test]
    fn j1_at_reference_modulation_index() {
        let oracle = simpson_oracle(1, 0.455);
        let j1 = bessel_j(1, 0.455).unwrap();
        assert!((j1 - oracle).abs() < 1e-12, "{j1} vs {oracle}");
        // frozen from the Simpson oracle
        assert!((j1 - 0.221_660).abs() < 1e-5, "{j1}");
    }

    #[test]
    fn agrees_with_quadrature_oracle_over_domain() {
        for k in 0..8u32 {
            for i in -60..=60 {
                let x = i as f64 * 0.5;
                let v = bessel_j(k, x).unwrap();
                let o = simpson_oracle(k as i32, x);
                assert!((v - o).abs() < 1e-12, "J_{k}({x}) = {v} vs {o}");
            }
        }
    }

    #[test]
    fn out_of_range_is_an_error() {
        assert!(matches!(bessel_j(0, 30.5), Err(Error::Range { .. })));
        assert!(bessel_j(0, f64::NAN).is_err());
    }

    #[test]
    fn negative_orders() {
        assert_eq!(bessel_j_signed(-1, 0.7).unwrap(), -bessel_j(1, 0.7).unwrap());
        assert_eq!(bessel_j_signed(-2, 0.7).unwrap(), bessel_j(2, 0.7).unwrap());
    }

    #[test]
    fn expansion_at_zero_modulation_is_the_carrier_alone() {
        let ja = jacobi_anger_components(0.0, 10.0, 900.0, 3).unwrap();
        assert_eq!(ja.components.len(), 1);
        assert_eq!(ja.components[0].order, 0);
        assert_eq!(ja.components[0].weight, 1.0);
        assert_eq!(ja.components[0].nu_effective, 10.0);
        assert!(!ja.truncated);
    }

    #[test]
    fn small_modulation_first_order_weight_is_half_beta() {
        for i in 1..=20 {
            let beta = 0.01 * i as f64;
            let ja = jacobi_anger_components(beta, 0.0, 900.0, 2).unwrap();
            let first = ja.components.iter().find(|c| c.order == 1).unwrap();
            assert!(((first.weight - beta / 2.0) / (beta / 2.0)).abs() < 0.01);
        }
    }

    #[test]
    fn truncation_flag() {
        let ja = jacobi_anger_components(1.0, 0.0, 900.0, 1).unwrap();
        assert!(ja.truncated);
        let n = required_order(1.0, 1e-6).unwrap();
        let ja = jacobi_anger_components(1.0, 0.0, 900.0, n).unwrap();
        assert!(!ja.truncated && ja.captured_power >= 1.0 - 1e-6);
        let red = ja.components.iter().find(|c| c.order == -1).unwrap();
        assert_eq!(red.nu_effective, -900.0);
    }

    #[test]
    fn phase_factor_reconstruction() {
        let beta = 0.8;
        let ja = jacobi_anger_components(beta, 0.0, 900.0, 20).unwrap();
        for i in 0..50 {
            let th = i as f64 * 0.13;
            let exact = Complex64::from_polar(1.0, beta * th.sin());
            assert!((ja.phase_factor(th) - exact).norm() < 1e-10);
            assert!((ja.modulation(th) - beta * th.cos()).abs() < 1e-9);
        }
    }
}
