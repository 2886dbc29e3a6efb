//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --release --test acceptance -- 3 5`.

use std::process::ExitCode;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use granular_bath::background::{nu, BathParams};
use granular_bath::carleman::{equilibrium_temperature, kernel, planar_kernel, GridSpec, KernelGrid, OrbitGrid, PlaneRule};
use granular_bath::dsmc::{detect_steady, run, step_q, Ensemble, InitialCondition, SimConfig, Trajectory};
use granular_bath::kinematics::{sphere_average_l, sphere_average_q, RestitutionParams};
use granular_bath::observables::{
    batch_mean, bound_params, fraction_non_increasing, haff_fit, moving_average, write_csv, HReference,
    HistogramGrid, MomentRecord, PhiTag, ReferenceDensity,
};
use granular_bath::quadrature::SphereRule;
use granular_bath::{Result, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Result<Verdict>;

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0 * scale
}

fn maxwell_bath(m1: f64) -> BathParams {
    BathParams::maxwellian(m1, Vec3::zeros(), 1.0, 1.0).expect("valid bath")
}

fn params(eps: f64, e: f64, m1: f64) -> RestitutionParams {
    RestitutionParams::new(eps, e, m1).expect("valid parameters")
}

fn kinematic_identities() -> Result<Verdict> {
    let rule = SphereRule::new(64, 64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let sets = [(1.0, 1.0, 1.0), (0.8, 0.8, 1.0), (0.5, 0.9, 2.0), (0.3, 0.6, 0.5), (0.95, 0.7, 3.0)];
    let mut worst_q: f64 = 0.0;
    let mut worst_l: f64 = 0.0;
    for (eps, e, m1) in sets {
        let p = params(eps, e, m1);
        let kappa = p.kappa();
        let u1 = random_vec(&mut rng, 1.0);
        for _ in 0..100 {
            let v = random_vec(&mut rng, 3.0);
            let w = random_vec(&mut rng, 3.0);
            let q = v - w;
            let q2 = q.norm_squared();

            let got = sphere_average_q(|x| x.norm_squared(), &v, &w, &p, &rule);
            let expected = -(1.0 - eps * eps) / 4.0 * q2;
            // In the elastic case the identity is exact zero; measure against |v|² + |w|².
            let scale = if expected != 0.0 { expected.abs() } else { v.norm_squared() + w.norm_squared() };
            worst_q = worst_q.max((got - expected).abs() / scale);

            let avg = sphere_average_l(|x| (x - u1).norm_squared(), &v, &w, &p, &rule);
            let expected = -2.0 * kappa * (1.0 - kappa) * q2 - 2.0 * kappa * q.dot(&(w - u1));
            for got in [avg.n_form, avg.sigma_form] {
                worst_l = worst_l.max((got - expected).abs() / expected.abs());
            }
        }
    }
    Ok(Verdict::new(
        worst_q <= 1e-8 && worst_l <= 1e-8,
        format!("max relative error Q {worst_q:.2e}, L {worst_l:.2e} (tol 1e-8)"),
    ))
}

fn conservation() -> Result<Verdict> {
    let p = params(0.8, 1.0, 1.0);
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut ens = Ensemble::maxwellian(n, Vec3::new(1.0, -0.5, 0.25), 1.0, 202, &mut rng)?;
    let total = |e: &Ensemble| e.velocities().iter().fold(Vec3::zeros(), |a, v| a + v);
    let p0 = total(&ens);
    let mut collisions = 0usize;
    let mut worst: f64 = 0.0;
    while collisions < 1_000_000 {
        collisions += step_q(&mut ens, 0.05, 1.0, &p, 1.5, &mut rng)?.collisions;
        worst = worst.max((total(&ens) - p0).norm() / p0.norm());
    }
    let count_ok = ens.len() == n;
    Ok(Verdict::new(
        worst <= 1e-10 && count_ok,
        format!("{collisions} collisions, max relative momentum drift {worst:.2e} (tol 1e-10), N constant: {count_ok}"),
    ))
}

fn energy_dissipation() -> Result<Verdict> {
    let eps = 0.5;
    let tau = 1.0;
    let p = params(eps, 1.0, 1.0);
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let ens = Ensemble::maxwellian(n, Vec3::zeros(), 1.0, 303, &mut rng)?;
    let vs = ens.velocities();
    // Exact mean of |v_i - v_j|³ over distinct pairs.
    let sum: f64 = (0..n)
        .into_par_iter()
        .map(|i| vs[i + 1..].iter().map(|w| (vs[i] - w).norm().powi(3)).sum::<f64>())
        .sum();
    let mean_q3 = sum / (n as f64 * (n as f64 - 1.0) / 2.0);
    let predicted = -tau * (1.0 - eps * eps) / 8.0 * mean_q3;

    let e0 = ens.mean_square_speed();
    let dt = 0.05;
    let replicates = 200;
    let mut rates = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let mut e = ens.clone();
        let stats = step_q(&mut e, dt, tau, &p, 1.5, &mut rng)?;
        // Expected exposure of one sweep, 2M / (N τ Qmax).
        let exposure = 2.0 * stats.candidates as f64 / (n as f64 * tau * stats.majorant);
        rates.push((e.mean_square_speed() - e0) / exposure);
    }
    let (rate, se) = batch_mean(&rates, replicates);
    let dev = (rate - predicted).abs();
    Ok(Verdict::new(
        dev <= 3.0 * se,
        format!("DSMC dE/dt {rate:.5} ± {se:.5}, predicted {predicted:.5}, deviation {:.2} SE (tol 3)", dev / se),
    ))
}

fn driven_config(seed: u64) -> SimConfig {
    let mut c = SimConfig::new(1.0, params(0.8, 0.8, 1.0), Some(maxwell_bath(1.0)));
    c.n_particles = 100_000;
    c.dt = 0.01;
    c.t_end = 20.0;
    c.seed = seed;
    c.record_every = 10;
    c
}

/// Shared by the temperature-bound and moment-propagation checks.
fn driven_run() -> Result<&'static Trajectory> {
    static RUN: OnceLock<Trajectory> = OnceLock::new();
    if let Some(t) = RUN.get() {
        return Ok(t);
    }
    let traj = run(&driven_config(404), &mut [])?;
    Ok(RUN.get_or_init(|| traj))
}

fn temperature_bound() -> Result<Verdict> {
    let config = driven_config(404);
    let bath = config.bath.clone().expect("driven run has a bath");
    let traj = driven_run()?;
    let u1 = bath.u1();
    let f0 = traj.records[0].f_aux.expect("bath present");
    let bound = bound_params(&config.restitution, &bath, f0)?.bound;
    let relax = 1.0 / nu(&bath, &u1);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for r in &traj.records {
        let margin = r.energy_about(&u1) - (bound + 4.0 * r.se.energy);
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    Ok(Verdict::new(
        violations == 0,
        format!(
            "{} records over {:.0} relaxation times, bound {bound:.4}, closest approach {worst:.4}, violations {violations}",
            traj.records.len(),
            config.t_end / relax
        ),
    ))
}

fn haff_cooling() -> Result<Verdict> {
    let mut c = SimConfig::new(1.0, params(0.8, 1.0, 1.0), None);
    c.n_particles = 100_000;
    c.dt = 0.05;
    c.t_end = 150.0;
    c.seed = 505;
    c.record_every = 20;
    let traj = run(&c, &mut [])?;
    let fit = haff_fit(&traj.times(), &traj.series(|r| r.theta))?;
    let rel = (fit.exponent + 2.0).abs() / 2.0;
    Ok(Verdict::new(
        rel <= 0.1,
        format!("fitted exponent {:.4}, t0 {:.3}, relative deviation {rel:.3} (tol 0.1)", fit.exponent, fit.t0),
    ))
}

fn third_cumulants(vs: &[Vec3]) -> Vec3 {
    let n = vs.len() as f64;
    let u = vs.iter().fold(Vec3::zeros(), |a, v| a + v) / n;
    vs.iter().fold(Vec3::zeros(), |a, v| {
        let d = v - u;
        a + d.component_mul(&d).component_mul(&d)
    }) / n
}

/// Long-time averages of Θ over the second half of a run, with batch-means
/// standard errors.
fn late_theta(traj: &Trajectory, t_from: f64) -> (f64, f64) {
    let late: Vec<f64> = traj.records.iter().filter(|r| r.t >= t_from).map(|r| r.theta).collect();
    batch_mean(&late, 10)
}

fn elastic_equilibrium() -> Result<Verdict> {
    let p = params(1.0, 1.0, 1.0);
    let bath = maxwell_bath(1.0);
    let mut c = SimConfig::new(0.0, p, Some(bath.clone()));
    c.n_particles = 100_000;
    c.dt = 0.02;
    c.t_end = 30.0;
    c.seed = 606;
    c.record_every = 10;
    c.init = InitialCondition::Maxwellian {
        u0: Vec3::new(0.5, 0.0, 0.0),
        theta0: 2.0,
    };
    let t_from = c.t_end / 2.0;
    let mut cumulants: Vec<Vec3> = Vec::new();
    let mut obs = |e: &Ensemble, r: &MomentRecord| -> Result<()> {
        if r.t >= t_from {
            cumulants.push(third_cumulants(e.velocities()));
        }
        Ok(())
    };
    let traj = run(&c, &mut [&mut obs])?;
    let (theta, se) = late_theta(&traj, t_from);
    let theta_ok = (theta - 1.0).abs() <= 4.0 * se;
    let mut k3_worst: f64 = 0.0;
    for a in 0..3 {
        let series: Vec<f64> = cumulants.iter().map(|k| k[a]).collect();
        let (m, s) = batch_mean(&series, 10);
        k3_worst = k3_worst.max(m.abs() / s);
    }

    let spec = GridSpec::for_bath(&bath, 48)?;
    let grid = OrbitGrid::new(spec, &p, &bath)?;
    let start = grid.restrict(&spec.maxwellian(&bath.u1(), 1.5))?;
    let steady = grid.steady_state(Some(&start), None)?;
    let target = spec.maxwellian(&bath.u1(), equilibrium_temperature(&p, &bath));
    let grid_worst = steady
        .values
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    Ok(Verdict::new(
        theta_ok && k3_worst <= 4.0 && grid_worst <= 1e-3,
        format!(
            "Θ {theta:.4} ± {se:.4} (|Θ-1| = {:.2} SE); max |κ3| {k3_worst:.2} SE; grid {} iterations, max nodewise relative error {grid_worst:.2e}",
            (theta - 1.0).abs() / se,
            steady.iterations
        ),
    ))
}

fn l1(a: &[f64], b: &[f64], h3: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * h3
}

fn inelastic_steady() -> Result<Verdict> {
    let mut pass = true;
    let mut lines = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_unique: f64 = 0.0;
    for (k, e) in [0.7, 0.9].into_iter().enumerate() {
        for (j, m1) in [0.5, 1.0, 2.0].into_iter().enumerate() {
            let p = params(1.0, e, m1);
            let bath = maxwell_bath(m1);
            let spec = GridSpec::for_bath(&bath, 48)?;
            let grid = OrbitGrid::new(spec, &p, &bath)?;
            let a = grid.steady_state(None, None)?;
            let random: Vec<f64> = (0..grid.orbit_count()).map(|_| rng.random::<f64>()).collect();
            let b = grid.steady_state(Some(&random), None)?;
            let unique = l1(&a.values, &b.values, spec.cell_volume());
            worst_unique = worst_unique.max(unique);

            let mut c = SimConfig::new(0.0, p, Some(bath.clone()));
            c.n_particles = 100_000;
            c.dt = 0.02;
            c.t_end = 30.0;
            c.seed = 710 + (3 * k + j) as u64;
            c.record_every = 10;
            c.init = InitialCondition::Maxwellian {
                u0: Vec3::zeros(),
                theta0: bath.thermal_speed().powi(2),
            };
            let traj = run(&c, &mut [])?;
            let (theta, se) = late_theta(&traj, c.t_end / 2.0);
            let dev = (theta - a.theta).abs();
            let ok = dev <= 0.02 * a.theta + 4.0 * se && unique <= 1e-8;
            pass &= ok;
            lines.push(format!(
                "e={e} m1={m1}: grid Θ {:.5}, DSMC Θ {theta:.5} ± {se:.5}, rel dev {:.4}, uniqueness L¹ {unique:.1e}",
                a.theta,
                dev / a.theta
            ));
        }
    }

    // Arbitrary starts off the symmetric subspace on a full grid.
    let p = params(1.0, 0.7, 0.5);
    let bath = maxwell_bath(0.5);
    let spec = GridSpec::for_bath(&bath, 16)?;
    let full = KernelGrid::new(spec, &p, &bath)?;
    let starts: Vec<Vec<f64>> = (0..2).map(|_| (0..spec.len()).map(|_| rng.random::<f64>()).collect()).collect();
    let fa = full.steady_state(Some(&starts[0]), None)?;
    let fb = full.steady_state(Some(&starts[1]), None)?;
    let unique_full = l1(&fa.values, &fb.values, spec.cell_volume());
    pass &= unique_full <= 1e-8;
    worst_unique = worst_unique.max(unique_full);
    lines.push(format!("16³ full grid, random starts: L¹ {unique_full:.1e}"));
    for l in &lines {
        println!("      {l}");
    }
    Ok(Verdict::new(pass, format!("6 parameter sets; worst uniqueness L¹ {worst_unique:.1e} (tol 1e-8)")))
}

fn driven_steady() -> Result<Verdict> {
    let mut values = Vec::new();
    for seed in [801, 802] {
        let mut c = SimConfig::new(1.0, params(0.9, 0.9, 1.0), Some(maxwell_bath(1.0)));
        c.n_particles = 100_000;
        c.dt = 0.02;
        c.t_end = 30.0;
        c.seed = seed;
        c.record_every = 5;
        c.steady_window = 40;
        let traj = run(&c, &mut [])?;
        let verdict = detect_steady(&traj.records, &c.u1(), c.steady_window, c.steady_tol)?;
        values.push((verdict.steady, verdict.theta, verdict.t_star));
    }
    let mut pass = true;
    let mut thetas = Vec::new();
    for (steady, theta, _) in &values {
        match theta {
            Some(t) if *steady && t.mean > 0.0 => thetas.push(*t),
            _ => pass = false,
        }
    }
    let detail = if thetas.len() == 2 {
        let (a, b) = (thetas[0], thetas[1]);
        let combined = (a.se * a.se + b.se * b.se).sqrt();
        let dev = (a.mean - b.mean).abs();
        pass &= dev <= 4.0 * combined;
        format!(
            "Θ {:.5} ± {:.5} (t* {:.1}) vs {:.5} ± {:.5} (t* {:.1}), {:.2} combined SE (tol 4)",
            a.mean,
            a.se,
            values[0].2.unwrap_or(f64::NAN),
            b.mean,
            b.se,
            values[1].2.unwrap_or(f64::NAN),
            dev / combined
        )
    } else {
        format!("steady verdicts: {:?}", values.iter().map(|v| v.0).collect::<Vec<_>>())
    };
    Ok(Verdict::new(pass, detail))
}

fn h_theorem() -> Result<Verdict> {
    let p = params(1.0, 0.8, 1.0);
    let bath = maxwell_bath(1.0);
    let var = equilibrium_temperature(&p, &bath);
    let grid = HistogramGrid::new(bath.u1(), 5.0 * var.sqrt(), 16)?;
    let reference = HReference::new(&ReferenceDensity::Maxwellian { mean: bath.u1(), var }, grid)?;
    let mut c = SimConfig::new(0.0, p, Some(bath.clone()));
    c.n_particles = 200_000;
    c.dt = 0.01;
    // Ends while H is still well above the histogram noise floor.
    c.t_end = 1.6;
    c.seed = 909;
    c.record_every = 2;
    c.init = InitialCondition::Maxwellian {
        u0: bath.u1(),
        theta0: 0.1 * var,
    };
    c.diagnostics.h_reference = Some(Arc::new(reference));
    let traj = run(&c, &mut [])?;
    let h = traj.series(|r| r.h_value(PhiTag::Quadratic).unwrap_or(f64::NAN));
    if h.iter().any(|x| !x.is_finite()) {
        return Ok(Verdict::new(false, "H undefined on some record"));
    }
    let smooth = moving_average(&h, 5);
    let frac = fraction_non_increasing(&smooth);
    let ratio = h[h.len() - 1] / h[0];
    Ok(Verdict::new(
        frac >= 0.95 && ratio < 0.05,
        format!(
            "H {:.4} → {:.4} (ratio {ratio:.4}, tol 0.05); smoothed non-increasing fraction {frac:.3} (tol 0.95)",
            h[0],
            h[h.len() - 1]
        ),
    ))
}

fn kernel_quadrature() -> Result<Verdict> {
    let p = params(1.0, 0.8, 1.0);
    let bath = BathParams::maxwellian(1.0, Vec3::new(0.2, -0.1, 0.0), 1.0, 1.0)?;
    let rule = PlaneRule::maxwellian();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = random_vec(&mut rng, 3.0);
        let w = random_vec(&mut rng, 3.0);
        let a = kernel(&v, &w, &p, &bath)?;
        let b = planar_kernel(&v, &w, &p, &bath, &rule)?;
        worst = worst.max((a - b).abs() / a);
    }
    Ok(Verdict::new(worst <= 1e-8, format!("max relative error {worst:.2e} (tol 1e-8)")))
}

fn moment_propagation() -> Result<Verdict> {
    let config = driven_config(404);
    let traj = driven_run()?;
    let k = config
        .diagnostics
        .y_orders
        .iter()
        .position(|&r| r == 3.0)
        .expect("Y3 is recorded");
    let half = config.t_end / 2.0;
    let (first, second): (Vec<&MomentRecord>, Vec<&MomentRecord>) = traj.records.iter().partition(|r| r.t <= half);
    let y3 = |r: &MomentRecord| r.y_r(3.0).expect("Y3 is recorded");
    let max_first = first.iter().map(|r| y3(r)).fold(f64::MIN, f64::max);
    let peak = second
        .iter()
        .max_by(|a, b| y3(a).total_cmp(&y3(b)))
        .expect("second half has records");
    let allowed = max_first + 4.0 * peak.se.y[k];
    Ok(Verdict::new(
        y3(peak) <= allowed,
        format!(
            "Y3(0) {:.3}; max first half {max_first:.3}, max second half {:.3}, allowed {allowed:.3}",
            y3(&traj.records[0]),
            y3(peak)
        ),
    ))
}

fn reproducibility() -> Result<Verdict> {
    let mut c = SimConfig::new(1.0, params(0.8, 0.9, 1.5), Some(BathParams::maxwellian(1.5, Vec3::x(), 1.0, 0.7)?));
    c.n_particles = 4000;
    c.dt = 0.02;
    c.t_end = 2.0;
    c.seed = 1212;
    c.record_every = 5;
    c.diagnostics.lp_p = Some(1.5);
    c.diagnostics.sigma = true;
    let var = equilibrium_temperature(&c.restitution, c.bath.as_ref().expect("bath"));
    c.diagnostics.h_reference = Some(Arc::new(HReference::new(
        &ReferenceDensity::Maxwellian { mean: Vec3::x(), var },
        HistogramGrid::new(Vec3::x(), 5.0 * var.sqrt(), 16)?,
    )?));
    let csv = |c: &SimConfig| -> Result<Vec<u8>> {
        let traj = run(c, &mut [])?;
        let mut out = Vec::new();
        write_csv(&mut out, &traj.records, 1.5)?;
        Ok(out)
    };
    let a = csv(&c)?;
    let b = csv(&c)?;
    Ok(Verdict::new(
        a == b && !a.is_empty(),
        format!("two runs, {} CSV bytes each, identical: {}", a.len(), a == b),
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 12] = [
        (1, "kinematic identities", kinematic_identities),
        (2, "conservation", conservation),
        (3, "energy dissipation rate", energy_dissipation),
        (4, "temperature bound", temperature_bound),
        (5, "Haff cooling", haff_cooling),
        (6, "elastic-bath equilibrium", elastic_equilibrium),
        (7, "inelastic linear steady state", inelastic_steady),
        (8, "driven steady state", driven_steady),
        (9, "H-theorem", h_theorem),
        (10, "kernel closed form vs quadrature", kernel_quadrature),
        (11, "moment propagation", moment_propagation),
        (12, "reproducibility", reproducibility),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = check().unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        if !verdict.pass {
            failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {} [{:.1} s]",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
