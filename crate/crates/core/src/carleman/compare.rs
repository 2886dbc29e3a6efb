//! Cross-check of the grid operator against short DSMC bath sweeps.

use rand::Rng;

use super::KernelGrid;
use crate::background::{relative_speed_moment, BathParams};
use crate::dsmc::{step_l, Ensemble};
use crate::error::{Error, Result};
use crate::kinematics::RestitutionParams;
use crate::observables::batch_mean;
use crate::Vec3;

const SAFETY: f64 = 1.5;

/// Rates of change under `L` estimated three ways. DSMC values are means
/// over replicate sweeps with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmcComparison {
    /// `h³ Σ |L_grid f̂ - L_dsmc f̂|`.
    pub l1_distance: f64,
    /// `h³ Σ |L_grid f̂|`, the scale of the distance.
    pub l1_grid: f64,
    pub mass_rate_grid: f64,
    pub mass_rate_dsmc: f64,
    /// `d/dt ∫ |v - u1|² f`.
    pub energy_rate_grid: f64,
    pub energy_rate_dsmc: (f64, f64),
    /// From the sphere-averaged collision map; `NaN` for tabulated baths.
    pub energy_rate_analytic: f64,
    pub theta_rate_grid: f64,
    pub theta_rate_dsmc: (f64, f64),
}

fn histogram(ens: &[Vec3], grid: &KernelGrid) -> Result<Vec<f64>> {
    let spec = grid.spec();
    let weight = 1.0 / (ens.len() as f64 * spec.cell_volume());
    let mut f = vec![0.0; spec.len()];
    for v in ens {
        let i = spec
            .nearest(v)
            .ok_or_else(|| Error::SupportMismatch(format!("particle {v:?} lies outside the grid")))?;
        f[i] += weight;
    }
    Ok(f)
}

fn energy_and_theta(vs: &[Vec3], u1: &Vec3) -> (f64, f64) {
    let n = vs.len() as f64;
    let u = vs.iter().fold(Vec3::zeros(), |a, v| a + v) / n;
    let energy = vs.iter().map(|v| (v - u1).norm_squared()).sum::<f64>() / n;
    let theta = vs.iter().map(|v| (v - u).norm_squared()).sum::<f64>() / (3.0 * n);
    (energy, theta)
}

/// `(1/λ) mean_i E_w[-2κ(1-κ)|q|³ + 8κ (Θ1/m1) |q|]` for a Maxwellian bath.
pub(crate) fn analytic_energy_rate(vs: &[Vec3], params: &RestitutionParams, bath: &BathParams) -> Result<f64> {
    let kappa = params.kappa();
    let s2 = bath.thermal_speed().powi(2);
    let mut acc = 0.0;
    for v in vs {
        acc += -2.0 * kappa * (1.0 - kappa) * relative_speed_moment(bath, v, 3.0)?
            + 8.0 * kappa * s2 * relative_speed_moment(bath, v, 1.0)?;
    }
    Ok(acc / (vs.len() as f64 * bath.lambda()))
}

/// Bins `ens` on the grid nodes, applies the grid operator, and compares
/// with `replicates` independent `step_l` sweeps of length `dt` from the
/// same ensemble. Each sweep's increments are divided by its expected
/// exposure `p / ν_max`, which makes them unbiased for the rate at `f̂`.
pub fn compare_dsmc<R: Rng + ?Sized>(
    ens: &Ensemble,
    grid: &KernelGrid,
    params: &RestitutionParams,
    bath: &BathParams,
    dt: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<DsmcComparison> {
    if replicates < 2 {
        return Err(Error::InvalidParameter("need at least 2 DSMC replicates".into()));
    }
    let spec = *grid.spec();
    let h3 = spec.cell_volume();
    let u1 = bath.u1();
    let f0 = histogram(ens.velocities(), grid)?;
    let lf = grid.apply_l(&f0)?;

    let mut dsmc_lf = vec![0.0; spec.len()];
    let mut energy_rates = Vec::with_capacity(replicates);
    let mut theta_rates = Vec::with_capacity(replicates);
    let mut mass_rate_dsmc = 0.0;
    let (e0, th0) = energy_and_theta(ens.velocities(), &u1);
    for _ in 0..replicates {
        let mut e = ens.clone();
        let stats = step_l(&mut e, dt, params, bath, SAFETY, rng)?;
        let exposure = stats.candidate_probability * bath.lambda() / stats.majorant;
        let f1 = histogram(e.velocities(), grid)?;
        for (acc, (a, b)) in dsmc_lf.iter_mut().zip(f1.iter().zip(&f0)) {
            *acc += (a - b) / exposure / replicates as f64;
        }
        mass_rate_dsmc += (e.len() as f64 - ens.len() as f64) / exposure / replicates as f64;
        let (e1, th1) = energy_and_theta(e.velocities(), &u1);
        energy_rates.push((e1 - e0) / exposure);
        theta_rates.push((th1 - th0) / exposure);
    }

    let mut mass = 0.0;
    let mut first = Vec3::zeros();
    let mut mass_rate = 0.0;
    let mut u_rate = Vec3::zeros();
    let mut energy_rate = 0.0;
    for (i, (&fi, &li)) in f0.iter().zip(&lf).enumerate() {
        let x = spec.node(i);
        mass += fi * h3;
        first += x * fi * h3;
        mass_rate += li * h3;
        u_rate += x * li * h3;
        energy_rate += (x - u1).norm_squared() * li * h3;
    }
    let u = first / mass;
    // Θ = (E - |u - u1|²)/3 at unit mass.
    let theta_rate = (energy_rate - 2.0 * (u - u1).dot(&u_rate)) / 3.0;
    let analytic = if bath.is_maxwellian() {
        analytic_energy_rate(ens.velocities(), params, bath)?
    } else {
        f64::NAN
    };
    Ok(DsmcComparison {
        l1_distance: lf.iter().zip(&dsmc_lf).map(|(a, b)| (a - b).abs()).sum::<f64>() * h3,
        l1_grid: lf.iter().map(|a| a.abs()).sum::<f64>() * h3,
        mass_rate_grid: mass_rate,
        mass_rate_dsmc,
        energy_rate_grid: energy_rate,
        energy_rate_dsmc: batch_mean(&energy_rates, replicates),
        energy_rate_analytic: analytic,
        theta_rate_grid: theta_rate,
        theta_rate_dsmc: batch_mean(&theta_rates, replicates),
    })
}
