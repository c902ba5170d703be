//! Gauss–Hermite quadrature and the static spectral-diffusion average.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{require, Error, Result};
use crate::units::GAUSSIAN_FWHM_PER_SIGMA;

/// Node count cap for automatic selection.
pub const MAX_AUTO_NODES: usize = 4001;

/// Rule for E[f(X)] with X ~ N(0, 1): Σ wᵢ f(xᵢ), Σ wᵢ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Orthonormal Hermite recurrence at z, returning (p_n, p_{n−1}) scaled by
/// e^{−s} together with s, so that large |z| and n do not overflow.
fn hermite_pair(n: usize, z: f64) -> (f64, f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    let mut log_scale = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
        let m = p1.abs().max(p2.abs());
        if m > 1e150 {
            p1 /= m;
            p2 /= m;
            log_scale += m.ln();
        }
    }
    (p1, p2, log_scale)
}

/// Number of eigenvalues below `x` of the Hermite Jacobi matrix (zero
/// diagonal, off-diagonal √(k/2)), by Sturm sequence.
fn eigenvalues_below(n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut q = -x;
    if q < 0.0 {
        count += 1;
    }
    for k in 1..n {
        let q_prev = if q == 0.0 { f64::EPSILON } else { q };
        q = -x - 0.5 * k as f64 / q_prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Nodes and weights of the n-point physicists' rule for ∫ e^{−z²} g(z) dz.
/// Each node is bracketed by Sturm bisection on the Jacobi matrix and then
/// polished by Newton iteration on the orthonormal recurrence.
fn physicists_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut z_all = vec![0.0; n];
    let mut w_all = vec![0.0; n];
    let nf = n as f64;
    let top = (2.0 * nf + 1.0).sqrt() + 1.0;
    for i in n / 2..n {
        // i-th smallest eigenvalue, i ≥ n/2 so it is ≥ 0
        let (mut lo, mut hi) = (-1e-3, top);
        while hi - lo > 1e-9 * hi.abs().max(1.0) {
            let mid = 0.5 * (lo + hi);
            if eigenvalues_below(n, mid) > i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut z = 0.5 * (lo + hi);
        let mut converged = false;
        for _ in 0..20 {
            let (p1, p2, _) = hermite_pair(n, z);
            let dz = p1 / ((2.0 * nf).sqrt() * p2);
            if dz.is_finite() {
                z -= dz;
            }
            if !dz.is_finite() || dz.abs() <= 1e-15 * z.abs().max(1.0) {
                converged = (z - 0.5 * (lo + hi)).abs() < 1e-6 * z.abs().max(1.0);
                break;
            }
        }
        if !converged {
            return Err(Error::Invalid(format!("Gauss-Hermite node {i} of {n} did not converge")));
        }
        if n % 2 == 1 && i == n / 2 {
            z = 0.0;
        }
        let (_, p2, s) = hermite_pair(n, z);
        // w = 2/(p_n')² = 1/(n·p_{n−1}²)
        let ln_w = -nf.ln() - 2.0 * (p2.abs().ln() + s);
        z_all[i] = z;
        w_all[i] = ln_w.exp();
        z_all[n - 1 - i] = -z;
        w_all[n - 1 - i] = w_all[i];
    }
    if z_all.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Invalid(format!("Gauss-Hermite nodes for n = {n} are not distinct")));
    }
    Ok((z_all, w_all))
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<GaussHermite>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// n-point rule for the standard normal density, cached per n.
pub fn gauss_hermite(n: usize) -> Result<Arc<GaussHermite>> {
    require(n >= 1, "n_nodes", n as f64, "must be >= 1")?;
    if let Some(r) = cache().lock().expect("quadrature cache poisoned").get(&n) {
        return Ok(Arc::clone(r));
    }
    let (z, w) = physicists_rule(n)?;
    let rule = Arc::new(GaussHermite {
        nodes: z.iter().map(|z| z * 2f64.sqrt()).collect(),
        weights: w.iter().map(|w| w / PI.sqrt()).collect(),
    });
    cache().lock().expect("quadrature cache poisoned").insert(n, Arc::clone(&rule));
    Ok(rule)
}

/// Smallest odd node count that resolves a feature of width `feature_fwhm`
/// under a Gaussian of width `sd_fwhm`: n ≥ (4πσ/feature_fwhm)², which puts
/// the central node spacing πσ/√n at a quarter of the feature width. At
/// least 7 and at most [`MAX_AUTO_NODES`].
pub fn auto_node_count(sd_fwhm: f64, feature_fwhm: f64) -> usize {
    let sigma = sd_fwhm / GAUSSIAN_FWHM_PER_SIGMA;
    let n = if feature_fwhm > 0.0 { (4.0 * PI * sigma / feature_fwhm).powi(2).ceil() } else { f64::INFINITY };
    let n = n.clamp(7.0, MAX_AUTO_NODES as f64) as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// E[f(Δ + δ)] over a static Gaussian offset δ with FWHM `sd_fwhm` (MHz).
pub fn spectral_diffusion_average<F: Fn(f64) -> f64>(f: F, nu_detuning: f64, sd_fwhm: f64, n_nodes: usize) -> Result<f64> {
    require(n_nodes >= 7 && n_nodes % 2 == 1, "n_nodes", n_nodes as f64, "must be odd and >= 7")?;
    require(sd_fwhm >= 0.0, "sd_fwhm", sd_fwhm, "must be >= 0")?;
    if sd_fwhm == 0.0 {
        return Ok(f(nu_detuning));
    }
    let sigma = sd_fwhm / GAUSSIAN_FWHM_PER_SIGMA;
    Ok(gauss_hermite(n_nodes)?.expectation(|x| f(nu_detuning + sigma * x)))
}
