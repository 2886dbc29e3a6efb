//! Quick invariant checks behind `granular-bath validate`. Each check is
//! small enough to finish in about a second.

use std::fmt;

use granular_bath::background::{nu, nu_monte_carlo, BathParams};
use granular_bath::carleman::{equilibrium_temperature, kernel, planar_kernel, GridSpec, KernelGrid, PlaneRule};
use granular_bath::dsmc::{read_checkpoint, run, step_q, write_checkpoint, Ensemble, SimConfig};
use granular_bath::kinematics::{
    collide_l_sigma, collide_q, energy_split_check, sphere_average_l, sphere_average_q, RestitutionParams,
};
use granular_bath::observables::{bound_params, f_aux_checked, moments, read_csv, write_csv, DEFAULT_Y_ORDERS};
use granular_bath::quadrature::SphereRule;
use granular_bath::{Result, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.status, self.name, self.detail)
    }
}

fn verdict(pass: bool, detail: String) -> (Status, String) {
    (if pass { Status::Pass } else { Status::Fail }, detail)
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0 * scale
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = random_vec(rng, 1.0);
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

struct Ctx {
    params: RestitutionParams,
    bath: BathParams,
    seed: u64,
}

impl Ctx {
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ (salt << 32))
    }
}

fn collision_maps(c: &Ctx) -> Result<(Status, String)> {
    let mut rng = c.rng(1);
    let m1 = c.params.m1();
    let mut worst_p: f64 = 0.0;
    let mut ell_ok = true;
    for _ in 0..1000 {
        let (v, w, s) = (random_vec(&mut rng, 3.0), random_vec(&mut rng, 3.0), unit(&mut rng));
        let (vp, wp) = collide_q(&v, &w, &s, &c.params)?;
        worst_p = worst_p.max((vp + wp - v - w).norm() / (v.norm() + w.norm()));
        let (vs, ws) = collide_l_sigma(&v, &w, &s, &c.params)?;
        worst_p = worst_p.max((vs + ws * m1 - v - w * m1).norm() / (v.norm() + m1 * w.norm()));
        let split = energy_split_check(&v, &w, &vs, &ws, &c.params)?;
        ell_ok &= split.ell >= c.params.e() - 1e-12 && split.ell <= 1.0 + 1e-12 && split.residual < 1e-12;
    }
    Ok(verdict(
        worst_p < 1e-14 && ell_ok,
        format!("max relative momentum error {worst_p:.1e}, restitution factor in [e, 1]: {ell_ok}"),
    ))
}

fn sphere_averages(c: &Ctx) -> Result<(Status, String)> {
    let rule = SphereRule::default();
    let mut rng = c.rng(2);
    let eps = c.params.epsilon();
    let kappa = c.params.kappa();
    let u1 = c.bath.u1();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (v, w) = (u1 + random_vec(&mut rng, 3.0), u1 + random_vec(&mut rng, 3.0));
        let q = v - w;
        let got = sphere_average_q(|x| x.norm_squared(), &v, &w, &c.params, &rule);
        let expected = -(1.0 - eps * eps) / 4.0 * q.norm_squared();
        worst = worst.max((got - expected).abs() / q.norm_squared());
        let avg = sphere_average_l(|x| (x - u1).norm_squared(), &v, &w, &c.params, &rule);
        let expected = -2.0 * kappa * (1.0 - kappa) * q.norm_squared() - 2.0 * kappa * q.dot(&(w - u1));
        for got in [avg.n_form, avg.sigma_form] {
            worst = worst.max((got - expected).abs() / expected.abs());
        }
    }
    Ok(verdict(worst <= 1e-8, format!("max relative error {worst:.1e} (tol 1e-8)")))
}

fn collision_frequency(c: &Ctx) -> Result<(Status, String)> {
    let mut rng = c.rng(3);
    let mut worst: f64 = 0.0;
    for v in [c.bath.u1(), c.bath.u1() + Vec3::new(1.0, -0.5, 2.0)] {
        let exact = nu(&c.bath, &v);
        let (mc, se) = nu_monte_carlo(&c.bath, &v, 200_000, &mut rng);
        worst = worst.max((exact - mc).abs() / se);
    }
    Ok(verdict(worst <= 4.0, format!("ν versus Monte Carlo: max deviation {worst:.2} SE (tol 4)")))
}

fn kernel_forms(c: &Ctx) -> Result<(Status, String)> {
    if !c.bath.is_maxwellian() {
        return Ok((Status::Skip, "closed form needs a Maxwellian bath".into()));
    }
    let rule = PlaneRule::maxwellian();
    let mut rng = c.rng(4);
    let s = c.bath.thermal_speed();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (v, w) = (c.bath.u1() + random_vec(&mut rng, 3.0 * s), c.bath.u1() + random_vec(&mut rng, 3.0 * s));
        let a = kernel(&v, &w, &c.params, &c.bath)?;
        let b = planar_kernel(&v, &w, &c.params, &c.bath, &rule)?;
        worst = worst.max((a - b).abs() / a);
    }
    Ok(verdict(worst <= 1e-8, format!("closed form versus planar quadrature: {worst:.1e} (tol 1e-8)")))
}

fn grid_operator(c: &Ctx) -> Result<(Status, String)> {
    let spec = GridSpec::for_bath(&c.bath, 12)?;
    let grid = KernelGrid::new(spec, &c.params, &c.bath)?;
    let mut rng = c.rng(5);
    let f: Vec<f64> = (0..spec.len()).map(|_| rng.random::<f64>()).collect();
    let lf = grid.apply_l(&f)?;
    let scale: f64 = lf.iter().map(|x| x.abs()).sum();
    let defect = lf.iter().sum::<f64>().abs() / scale;
    let mut detail = format!("relative mass defect {defect:.1e}");
    let mut pass = defect < 1e-12;
    if c.bath.is_maxwellian() {
        let m = spec.maxwellian(&c.bath.u1(), equilibrium_temperature(&c.params, &c.bath));
        let lm = grid.apply_l(&m)?;
        let loss: Vec<f64> = grid.gain_column_sums().iter().zip(&m).map(|(a, b)| a * b).collect();
        let worst = lm.iter().zip(&loss).map(|(a, b)| a.abs() / b).fold(0.0, f64::max);
        pass &= worst < 1e-10;
        detail += &format!(", equilibrium residual {worst:.1e} relative to the loss term");
    }
    Ok(verdict(pass, detail))
}

fn grid_uniqueness(c: &Ctx) -> Result<(Status, String)> {
    let spec = GridSpec::for_bath(&c.bath, 8)?;
    let grid = KernelGrid::new(spec, &c.params, &c.bath)?;
    let mut rng = c.rng(6);
    let mut start = || (0..spec.len()).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
    let (a, b) = (start(), start());
    let fa = grid.steady_state(Some(&a), None)?;
    let fb = grid.steady_state(Some(&b), None)?;
    let l1: f64 = fa.values.iter().zip(&fb.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * spec.cell_volume();
    Ok(verdict(l1 <= 1e-8, format!("two random starts differ by {l1:.1e} in L¹ (tol 1e-8)")))
}

fn dsmc_conservation(c: &Ctx) -> Result<(Status, String)> {
    let mut rng = c.rng(7);
    let mut ens = Ensemble::maxwellian(10_000, Vec3::new(1.0, -0.5, 0.25), 1.0, c.seed, &mut rng)?;
    let total = |e: &Ensemble| e.velocities().iter().fold(Vec3::zeros(), |a, v| a + v);
    let p0 = total(&ens);
    let mut collisions = 0;
    while collisions < 100_000 {
        collisions += step_q(&mut ens, 0.05, 1.0, &c.params, 1.5, &mut rng)?.collisions;
    }
    let drift = (total(&ens) - p0).norm() / p0.norm();
    Ok(verdict(
        drift <= 1e-10 && ens.len() == 10_000,
        format!("{collisions} collisions, relative momentum drift {drift:.1e} (tol 1e-10)"),
    ))
}

fn moment_identity(c: &Ctx) -> Result<(Status, String)> {
    let mut rng = c.rng(8);
    let ens = Ensemble::maxwellian(10_000, c.bath.u1() + Vec3::x(), 2.0, c.seed, &mut rng)?;
    let rec = moments(ens.velocities(), &DEFAULT_Y_ORDERS, &c.bath.u1())?;
    let f = f_aux_checked(ens.velocities(), &rec, &c.bath)?;
    Ok(verdict(
        (rec.rho - 1.0).abs() <= 1e-12,
        format!("F = {f:.6} agrees with the direct form; mass {}", rec.rho),
    ))
}

fn checkpoint_round_trip(c: &Ctx) -> Result<(Status, String)> {
    let mut rng = c.rng(9);
    let ens = Ensemble::maxwellian(1000, Vec3::zeros(), 1.0, c.seed, &mut rng)?;
    let _: u64 = rng.random();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &ens, &rng)?;
    let (back, mut rng_back) = read_checkpoint(bytes.as_slice())?;
    let same_rng = rng_back.random::<u64>() == rng.random::<u64>();
    Ok(verdict(back == ens && same_rng, format!("{} bytes, state restored: {}", bytes.len(), back == ens && same_rng)))
}

fn short_run(c: &Ctx) -> SimConfig {
    let mut sim = SimConfig::new(1.0, c.params, Some(c.bath.clone()));
    sim.n_particles = 2000;
    sim.dt = 0.01;
    sim.t_end = 0.5;
    sim.seed = c.seed;
    sim.record_every = 5;
    sim.diagnostics.lp_p = Some(1.5);
    sim
}

fn csv_round_trip(c: &Ctx) -> Result<(Status, String)> {
    let traj = run(&short_run(c), &mut [])?;
    let mut bytes = Vec::new();
    write_csv(&mut bytes, &traj.records, 1.5)?;
    let back = read_csv(bytes.as_slice(), 1.5)?;
    let same = back.len() == traj.records.len()
        && back.iter().zip(&traj.records).all(|(a, b)| a.csv_fields(1.5) == b.csv_fields(1.5));
    Ok(verdict(same, format!("{} records parsed back identically: {same}", back.len())))
}

fn reproducibility(c: &Ctx) -> Result<(Status, String)> {
    let sim = short_run(c);
    let csv = || -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_csv(&mut out, &run(&sim, &mut [])?.records, 1.5)?;
        Ok(out)
    };
    let (a, b) = (csv()?, csv()?);
    Ok(verdict(a == b, format!("two single-threaded runs byte-identical: {}", a == b)))
}

fn temperature_bound(c: &Ctx) -> Result<(Status, String)> {
    let mut sim = short_run(c);
    sim.t_end = 2.0;
    let traj = run(&sim, &mut [])?;
    let u1 = c.bath.u1();
    let bound = bound_params(&c.params, &c.bath, traj.records[0].f_aux.unwrap_or(f64::NAN))?.bound;
    let bad = traj
        .records
        .iter()
        .filter(|r| r.energy_about(&u1) > bound + 4.0 * r.se.energy)
        .count();
    Ok(verdict(bad == 0, format!("{} records, {bad} above the bound {bound:.4} + 4σ", traj.records.len())))
}

type Check = fn(&Ctx) -> Result<(Status, String)>;

const CHECKS: [(&str, Check); 12] = [
    ("collision maps conserve momentum", collision_maps),
    ("sphere-averaged energy identities", sphere_averages),
    ("collision frequency", collision_frequency),
    ("kernel closed form", kernel_forms),
    ("grid operator mass and equilibrium", grid_operator),
    ("grid steady-state uniqueness", grid_uniqueness),
    ("DSMC momentum conservation", dsmc_conservation),
    ("moment identity", moment_identity),
    ("checkpoint round trip", checkpoint_round_trip),
    ("trajectory CSV round trip", csv_round_trip),
    ("reproducibility", reproducibility),
    ("temperature bound", temperature_bound),
];

/// Runs every check with the parameters and bath of `cfg`, calling
/// `report` as each finishes.
pub fn validate<F: FnMut(&CheckResult)>(cfg: &RunConfig, mut report: F) -> Vec<CheckResult> {
    let bath = cfg.sim.bath.clone().expect("validate mode has a bath");
    let ctx = Ctx {
        params: cfg.sim.restitution,
        bath,
        seed: cfg.sim.seed,
    };
    CHECKS
        .iter()
        .map(|(name, check)| {
            let (status, detail) = check(&ctx).unwrap_or_else(|e| (Status::Fail, format!("error: {e}")));
            let result = CheckResult { name, status, detail };
            report(&result);
            result
        })
        .collect()
}
