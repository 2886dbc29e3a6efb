//! Detection of a statistically steady regime in a trajectory.

use crate::error::{Error, Result};
use crate::observables::{batch_mean, MomentRecord};
use crate::Vec3;

/// Number of batches for the plateau standard errors.
const BATCHES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyValue {
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyVerdict {
    pub steady: bool,
    /// Start of the first accepted window pair.
    pub t_star: Option<f64>,
    /// Plateau averages from `t_star` to the end: `Θ`, `|u - u1|`, `Y_2`.
    pub theta: Option<SteadyValue>,
    pub drift_speed: Option<SteadyValue>,
    pub y2: Option<SteadyValue>,
}

struct Series {
    theta: Vec<f64>,
    speed: Vec<f64>,
    y2: Vec<f64>,
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn pair_is_flat(s: &Series, a: usize, window: usize, tol: f64) -> bool {
    let (ra, rb) = (a..a + window, a + window..a + 2 * window);
    let theta_scale = mean_and_sd(&s.theta[rb.clone()]).0.abs();
    let checks: [(&[f64], f64); 3] = [
        (&s.theta, theta_scale),
        (&s.speed, theta_scale.sqrt()),
        (&s.y2, mean_and_sd(&s.y2[rb.clone()]).0.abs()),
    ];
    checks.iter().all(|(values, scale)| {
        let (ma, sa) = mean_and_sd(&values[ra.clone()]);
        let (mb, sb) = mean_and_sd(&values[rb.clone()]);
        let drift = (ma - mb).abs();
        let noise = (sa * sa + sb * sb).sqrt();
        drift <= tol * scale && drift <= 2.0 * noise.max(f64::MIN_POSITIVE)
    })
}

/// Compares adjacent windows of `window` records over `Θ`, `|u - u1|` and
/// `Y_2`. A pair is flat when every drift of the window means is below `tol`
/// times the series scale and below twice the record-to-record scatter
/// inside the windows. The regime counts as steady
/// when some pair and the final pair are both flat; `t_star` is the start
/// of the earliest flat pair.
pub fn detect_steady(records: &[MomentRecord], u1: &Vec3, window: usize, tol: f64) -> Result<SteadyVerdict> {
    if window < BATCHES {
        return Err(Error::InvalidParameter(format!("steady window must hold at least {BATCHES} records")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("steady tolerance must be positive, got {tol}")));
    }
    let mut y2 = Vec::with_capacity(records.len());
    for r in records {
        y2.push(r.y_r(2.0).ok_or_else(|| Error::InvalidParameter("records lack Y_2".into()))?);
    }
    let s = Series {
        theta: records.iter().map(|r| r.theta).collect(),
        speed: records.iter().map(|r| (r.u - u1).norm()).collect(),
        y2,
    };
    let unsteady = SteadyVerdict {
        steady: false,
        t_star: None,
        theta: None,
        drift_speed: None,
        y2: None,
    };
    let n = records.len();
    if n < 2 * window || !pair_is_flat(&s, n - 2 * window, window, tol) {
        return Ok(unsteady);
    }
    let stride = (window / 4).max(1);
    let start = (0..=n - 2 * window)
        .step_by(stride)
        .find(|&a| pair_is_flat(&s, a, window, tol))
        .unwrap_or(n - 2 * window);
    let plateau = |v: &[f64]| {
        let (mean, se) = batch_mean(&v[start..], 2 * BATCHES);
        SteadyValue { mean, se }
    };
    Ok(SteadyVerdict {
        steady: true,
        t_star: Some(records[start].t),
        theta: Some(plateau(&s.theta)),
        drift_speed: Some(plateau(&s.speed)),
        y2: Some(plateau(&s.y2)),
    })
}
