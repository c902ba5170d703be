//! Least-squares fitting: a Levenberg–Marquardt core with Lorentzian and
//! damped-sinusoid models, periodogram seeding and linear regressions.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping rule: relative parameter step below `tol`, relative SSR
/// reduction below `SSR_RTOL`, or `max_iter` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Σ residual².
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_data(x: &[f64], y: &[f64], n_params: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!("x has {} points but y has {}", x.len(), y.len())));
    }
    if x.len() < n_params {
        return Err(Error::Invalid(format!("{} points cannot determine {} parameters", x.len(), n_params)));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite data point".into()));
    }
    Ok(())
}

/// Relative SSR reduction treated as stationary.
pub const SSR_RTOL: f64 = 1e-12;

/// Minimises Σ (yᵢ − f(xᵢ; p))². `model(x, p, grad)` returns f and writes
/// ∂f/∂p into `grad`.
pub fn levenberg_marquardt<F>(x: &[f64], y: &[f64], p0: &[f64], model: F, opts: LmOptions) -> Result<LmOutcome>
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let free = vec![(f64::NEG_INFINITY, f64::INFINITY); p0.len()];
    levenberg_marquardt_bounded(x, y, p0, &free, model, opts)
}

/// As [`levenberg_marquardt`] with box constraints `bounds[k] = (lo, hi)`;
/// trial steps are projected onto the box.
pub fn levenberg_marquardt_bounded<F>(
    x: &[f64],
    y: &[f64],
    p0: &[f64],
    bounds: &[(f64, f64)],
    model: F,
    opts: LmOptions,
) -> Result<LmOutcome>
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let np = p0.len();
    check_data(x, y, np)?;
    if bounds.len() != np || bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::Invalid("one (lo, hi) bound pair with lo <= hi is required per parameter".into()));
    }
    let m = x.len();
    let mut p: Vec<f64> = p0.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
    let mut grad = vec![0.0; np];
    let eval = |p: &[f64], jac: Option<&mut DMatrix<f64>>, grad: &mut [f64]| -> (DVector<f64>, f64) {
        let mut r = DVector::zeros(m);
        let mut jac = jac;
        for i in 0..m {
            let f = model(x[i], p, grad);
            r[i] = y[i] - f;
            if let Some(j) = jac.as_deref_mut() {
                for k in 0..np {
                    j[(i, k)] = grad[k];
                }
            }
        }
        let ssr = r.norm_squared();
        (r, ssr)
    };
    let mut jac = DMatrix::zeros(m, np);
    let (mut r, mut ssr) = eval(&p, Some(&mut jac), &mut grad);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let mut jtr = jac.transpose() * &r;
        let mut a = jtj.clone();
        for k in 0..np {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            // freeze parameters held at a bound by the descent direction
            let (lo, hi) = bounds[k];
            if (p[k] <= lo && jtr[k] < 0.0) || (p[k] >= hi && jtr[k] > 0.0) {
                for j in 0..np {
                    a[(k, j)] = 0.0;
                    a[(j, k)] = 0.0;
                }
                a[(k, k)] = 1.0;
                jtr[k] = 0.0;
            }
        }
        let step = match a.cholesky() {
            Some(c) => c.solve(&jtr),
            None => {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
                continue;
            }
        };
        let trial: Vec<f64> =
            p.iter().zip(step.iter()).zip(bounds).map(|((a, b), (lo, hi))| (a + b).clamp(*lo, *hi)).collect();
        let (_, trial_ssr) = eval(&trial, None, &mut grad);
        // SSR differences at the minimum are round-off; tolerating them lets
        // the Gauss-Newton steps resolve the stationary point itself.
        if trial_ssr.is_finite() && trial_ssr <= ssr * (1.0 + 1e-13) {
            let small = p.iter().zip(&trial).all(|(v, t)| (t - v).abs() <= opts.tol * (v.abs() + opts.tol))
                || ssr - trial_ssr <= SSR_RTOL * ssr;
            p = trial;
            let (r2, s2) = eval(&p, Some(&mut jac), &mut grad);
            r = r2;
            ssr = s2;
            lambda = (lambda / 10.0).max(1e-12);
            if small || ssr == 0.0 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left: p is stationary to working precision
                converged = true;
                break;
            }
        }
    }
    Ok(LmOutcome { params: p, ssr, iterations, converged })
}

/// A/(1 + ((x − c)/(w/2))²).
pub fn lorentzian(x: f64, amplitude: f64, center: f64, fwhm: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    amplitude / (1.0 + u * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzPeak {
    pub amplitude: f64,
    pub center: f64,
    /// Always reported positive.
    pub fwhm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzFit {
    pub peaks: Vec<LorentzPeak>,
    pub background: f64,
    /// √(Σ residual²).
    pub residual_norm: f64,
    /// Root-mean-square residual.
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LorentzFit {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.background + self.peaks.iter().map(|p| lorentzian(x, p.amplitude, p.center, p.fwhm)).sum::<f64>()
    }
}

/// Fits B + Σ_p Lorentzian_p with analytic Jacobian, starting from `seeds`
/// and a background guess.
pub fn fit_lorentzian_sum(x: &[f64], y: &[f64], seeds: &[LorentzPeak], background: f64, opts: LmOptions) -> Result<LorentzFit> {
    fit_lorentzian_sum_bounded(x, y, seeds, background, None, opts)
}

/// Per-peak box constraints for [`fit_lorentzian_sum_bounded`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakBounds {
    pub lower: LorentzPeak,
    pub upper: LorentzPeak,
}

pub fn fit_lorentzian_sum_bounded(
    x: &[f64],
    y: &[f64],
    seeds: &[LorentzPeak],
    background: f64,
    bounds: Option<&[PeakBounds]>,
    opts: LmOptions,
) -> Result<LorentzFit> {
    if seeds.is_empty() {
        return Err(Error::Invalid("at least one peak seed is required".into()));
    }
    let mut p0 = vec![background];
    for s in seeds {
        if !(s.fwhm > 0.0) {
            return Err(Error::Invalid(format!("seed FWHM must be > 0, got {}", s.fwhm)));
        }
        p0.extend([s.amplitude, s.center, s.fwhm]);
    }
    let model = |x: f64, p: &[f64], g: &mut [f64]| {
        g[0] = 1.0;
        let mut f = p[0];
        for k in 0..(p.len() - 1) / 3 {
            let (a, c, w) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
            let u = 2.0 * (x - c) / w;
            let l = 1.0 / (1.0 + u * u);
            f += a * l;
            g[1 + 3 * k] = l;
            g[2 + 3 * k] = 4.0 * a * u * l * l / w;
            g[3 + 3 * k] = 2.0 * a * u * u * l * l / w;
        }
        f
    };
    let mut bounds_ = vec![(f64::NEG_INFINITY, f64::INFINITY)];
    match bounds {
        Some(b) if b.len() == seeds.len() => {
            for pb in b {
                bounds_.extend([
                    (pb.lower.amplitude, pb.upper.amplitude),
                    (pb.lower.center, pb.upper.center),
                    (pb.lower.fwhm, pb.upper.fwhm),
                ]);
            }
        }
        Some(b) => return Err(Error::Invalid(format!("{} bounds for {} peaks", b.len(), seeds.len()))),
        None => bounds_.extend(std::iter::repeat((f64::NEG_INFINITY, f64::INFINITY)).take(3 * seeds.len())),
    }
    let out = levenberg_marquardt_bounded(x, y, &p0, &bounds_, model, opts)?;
    let peaks = out.params[1..]
        .chunks(3)
        .map(|c| LorentzPeak { amplitude: c[0], center: c[1], fwhm: c[2].abs() })
        .collect();
    Ok(LorentzFit {
        peaks,
        background: out.params[0],
        residual_norm: out.ssr.sqrt(),
        residual_rms: (out.ssr / x.len() as f64).sqrt(),
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// c + a·e^{−κt}·cos(2πf·t + φ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedSinusoid {
    pub offset: f64,
    pub amplitude: f64,
    pub decay_rate: f64,
    /// Cycles per unit of t.
    pub frequency: f64,
    pub phase: f64,
}

impl DampedSinusoid {
    pub fn evaluate(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (-self.decay_rate * t).exp() * (TAU * self.frequency * t + self.phase).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub model: DampedSinusoid,
    pub residual_rms: f64,
    pub r_squared: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Strongest frequency in [f_lo, f_hi] of the mean-removed data, with the
/// phase of that component. Samples need not be uniform.
pub fn periodogram_peak(t: &[f64], y: &[f64], f_lo: f64, f_hi: f64) -> Result<(f64, f64)> {
    check_data(t, y, 2)?;
    if !(f_hi > f_lo && f_lo >= 0.0) {
        return Err(Error::Invalid(format!("bad frequency range [{f_lo}, {f_hi}]")));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let span = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t.iter().cloned().fold(f64::INFINITY, f64::min);
    let df = 1.0 / (16.0 * span.max(f64::MIN_POSITIVE));
    let n = (((f_hi - f_lo) / df).ceil() as usize).clamp(2, 200_000);
    let component = |f: f64| -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (&ti, &yi) in t.iter().zip(y) {
            let (s, c) = (TAU * f * ti).sin_cos();
            re += (yi - mean) * c;
            im -= (yi - mean) * s;
        }
        (re * re + im * im, im.atan2(re))
    };
    let mut best = (f_lo, f64::NEG_INFINITY, 0.0);
    for i in 0..=n {
        let f = f_lo + (f_hi - f_lo) * i as f64 / n as f64;
        let (p, ph) = component(f);
        if p > best.1 {
            best = (f, p, ph);
        }
    }
    Ok((best.0, best.2))
}

/// Damped-sinusoid fit seeded from the periodogram peak in [f_lo, f_hi].
pub fn fit_damped_sinusoid(t: &[f64], y: &[f64], f_lo: f64, f_hi: f64, opts: LmOptions) -> Result<SinusoidFit> {
    check_data(t, y, 5)?;
    let (f0, phase0) = periodogram_peak(t, y, f_lo, f_hi)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let p0 = [mean, 0.5 * (hi - lo), 0.0, f0, phase0];
    let model = |t: f64, p: &[f64], g: &mut [f64]| {
        let e = (-p[2] * t).exp();
        let arg = TAU * p[3] * t + p[4];
        let (s, c) = arg.sin_cos();
        g[0] = 1.0;
        g[1] = e * c;
        g[2] = -t * p[1] * e * c;
        g[3] = -p[1] * e * s * TAU * t;
        g[4] = -p[1] * e * s;
        p[0] + p[1] * e * c
    };
    let out = levenberg_marquardt(t, y, &p0, model, opts)?;
    let mut m = DampedSinusoid {
        offset: out.params[0],
        amplitude: out.params[1],
        decay_rate: out.params[2],
        frequency: out.params[3],
        phase: out.params[4],
    };
    if m.amplitude < 0.0 {
        m.amplitude = -m.amplitude;
        m.phase += std::f64::consts::PI;
    }
    if m.frequency < 0.0 {
        m.frequency = -m.frequency;
        m.phase = -m.phase;
    }
    m.phase = m.phase.rem_euclid(TAU);
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(SinusoidFit {
        model: m,
        residual_rms: (out.ssr / t.len() as f64).sqrt(),
        r_squared: if sst > 0.0 { 1.0 - out.ssr / sst } else { 1.0 },
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// c + a·cos(2π·x/period + φ) with the period fixed; linear in (c, a cos φ,
/// a sin φ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPeriodFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub r_squared: f64,
}

pub fn fit_fixed_period_sinusoid(x: &[f64], y: &[f64], period: f64) -> Result<FixedPeriodFit> {
    check_data(x, y, 3)?;
    if !(period > 0.0) {
        return Err(Error::Invalid(format!("period must be > 0, got {period}")));
    }
    let m = x.len();
    let a = DMatrix::from_fn(m, 3, |i, j| {
        let th = TAU * x[i] / period;
        match j {
            0 => 1.0,
            1 => th.cos(),
            _ => th.sin(),
        }
    });
    let b = DVector::from_column_slice(y);
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Invalid(format!("sinusoid regression failed: {e}")))?;
    let resid = &b - &a * &sol;
    let mean = y.iter().sum::<f64>() / m as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    // c + p cos θ + q sin θ = c + A cos(θ + φ) with A cos φ = p, A sin φ = −q
    let (p, q) = (sol[1], sol[2]);
    Ok(FixedPeriodFit {
        offset: sol[0],
        amplitude: p.hypot(q),
        phase: (-q).atan2(p).rem_euclid(TAU),
        r_squared: if sst > 0.0 { 1.0 - resid.norm_squared() / sst } else { 1.0 },
    })
}

/// Least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// 1 − SSR/Σ(y − ȳ)².
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    check_data(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("x values are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok(LineFit { slope, intercept, r_squared: r_squared(x, y, slope, intercept) })
}

/// y = k·x. R² is the centred coefficient, so a constant signal does not
/// score well merely by being far from zero.
pub fn linear_fit_through_origin(x: &[f64], y: &[f64]) -> Result<LineFit> {
    check_data(x, y, 1)?;
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("x values are all zero".into()));
    }
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    Ok(LineFit { slope, intercept: 0.0, r_squared: r_squared(x, y, slope, 0.0) })
}

fn r_squared(x: &[f64], y: &[f64], slope: f64, intercept: f64) -> f64 {
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    if sst > 0.0 {
        1.0 - ssr / sst
    } else if ssr == 0.0 {
        1.0
    } else {
        0.0
    }
}
