//! Least-squares fit of `Θ(t) = Θ0 (1 + t/t0)^γ` to a cooling trajectory.

use crate::error::{Error, Result};

/// Minimum decay `Θ_max / Θ_min` accepted for a fit (two decades).
pub const MIN_DECAY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaffFit {
    pub exponent: f64,
    pub t0: f64,
    pub theta0: f64,
    /// Root-mean-square residual of `log Θ`.
    pub residual: f64,
}

/// For fixed `t0` the model is linear in `(log Θ0, γ)`; returns the fit and
/// its sum of squared log residuals.
fn linear_fit(times: &[f64], log_theta: &[f64], t0: f64) -> (f64, f64, f64) {
    let n = times.len() as f64;
    let x: Vec<f64> = times.iter().map(|t| (t / t0).ln_1p()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = log_theta.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(log_theta) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse = x
        .iter()
        .zip(log_theta)
        .map(|(xi, yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    (slope, intercept, sse)
}

pub fn haff_fit(times: &[f64], theta: &[f64]) -> Result<HaffFit> {
    if times.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: theta.len(),
        });
    }
    if times.len() < 4 {
        return Err(Error::FitRefused("need at least four records".into()));
    }
    if theta.iter().any(|&x| !(x > 0.0 && x.is_finite())) || times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::FitRefused("temperatures must be positive and times nonnegative".into()));
    }
    let max = theta.iter().cloned().fold(f64::MIN, f64::max);
    let min = theta.iter().cloned().fold(f64::MAX, f64::min);
    if max / min < MIN_DECAY {
        return Err(Error::FitRefused(format!(
            "temperature decays by a factor {:.3}, below the required {MIN_DECAY}",
            max / min
        )));
    }
    let log_theta: Vec<f64> = theta.iter().map(|x| x.ln()).collect();
    let span = times.iter().cloned().fold(0.0, f64::max);
    // Scan log t0 coarsely, then refine the bracket by golden section.
    let lo = (span * 1e-4).ln();
    let hi = (span * 1e4).ln();
    let scan = 400;
    let objective = |s: f64| linear_fit(times, &log_theta, s.exp()).2;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=scan {
        let s = lo + (hi - lo) * i as f64 / scan as f64;
        let v = objective(s);
        if v < best.1 {
            best = (s, v);
        }
    }
    let step = (hi - lo) / scan as f64;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = objective(d);
        }
    }
    let t0 = (0.5 * (a + b)).exp();
    let (exponent, intercept, sse) = linear_fit(times, &log_theta, t0);
    Ok(HaffFit {
        exponent,
        t0,
        theta0: intercept.exp(),
        residual: (sse / times.len() as f64).sqrt(),
    })
}
