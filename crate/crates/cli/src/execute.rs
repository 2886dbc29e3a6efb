//! Runs a simulation mode and writes its outputs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use granular_bath::carleman::{equilibrium_temperature, GridSpec, KernelGrid, OrbitGrid, SteadyState};
use granular_bath::dsmc::{detect_steady, run, SteadyVerdict, Trajectory};
use granular_bath::observables::{
    batch_mean, bound_params, haff_fit, write_csv, BoundParams, HReference, HistogramGrid, ReferenceDensity,
};
use granular_bath::{BathParams, Error};
use log::{info, warn};

use crate::config::{GridSettings, RunConfig, RunMode};
use crate::CliError;

pub const CONFIG_FILE: &str = "config.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const GRID_FILE: &str = "steady_grid.csv";
pub const PLOT_FILE: &str = "plot.gp";
pub const FAULT_FILE: &str = "fault.gbds";

pub const EXIT_OK: i32 = 0;
pub const EXIT_BOUND_VIOLATION: i32 = 2;
pub const EXIT_NUMERICAL_FAULT: i32 = 3;

/// Cells per axis and half width (in equilibrium thermal speeds) of the
/// histogram grid for `H`.
const H_GRID_N: usize = 16;
const H_GRID_EXTENT: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: String,
}

struct BoundCheck {
    params: BoundParams,
    worst_margin: f64,
    violations: usize,
}

fn check_bound(traj: &Trajectory, cfg: &RunConfig, bath: &BathParams) -> Result<BoundCheck, CliError> {
    let u1 = bath.u1();
    let f0 = traj.records[0].f_aux.expect("records carry F when a bath is present");
    let params = bound_params(&cfg.sim.restitution, bath, f0)?;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut violations = 0;
    for r in &traj.records {
        let margin = r.energy_about(&u1) - (params.bound + 4.0 * r.se.energy);
        worst_margin = worst_margin.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    Ok(BoundCheck {
        params,
        worst_margin,
        violations,
    })
}

/// Equilibrium Maxwellian of the bath operator, when it is known in closed form.
fn h_reference(cfg: &RunConfig) -> Result<Option<HReference>, CliError> {
    let Some(bath) = cfg.sim.bath.as_ref().filter(|b| b.is_maxwellian()) else {
        return Ok(None);
    };
    let var = equilibrium_temperature(&cfg.sim.restitution, bath);
    let grid = HistogramGrid::new(bath.u1(), H_GRID_EXTENT * var.sqrt(), H_GRID_N)?;
    Ok(Some(HReference::new(&ReferenceDensity::Maxwellian { mean: bath.u1(), var }, grid)?))
}

pub fn solve_grid(cfg: &RunConfig, settings: GridSettings) -> granular_bath::Result<SteadyState> {
    let bath = cfg.sim.bath.as_ref().expect("linear mode has a bath");
    let spec = GridSpec::new(bath.u1(), settings.extent * bath.thermal_speed(), settings.n)?;
    let params = &cfg.sim.restitution;
    if bath.is_maxwellian() && settings.n.is_multiple_of(2) {
        OrbitGrid::new(spec, params, bath)?.steady_state(None, None)
    } else {
        if settings.n > 16 {
            warn!("full {0}³ grid solve without symmetry reduction; this is slow", settings.n);
        }
        KernelGrid::new(spec, params, bath)?.steady_state(None, None)
    }
}

/// Plateau temperature: from the steady verdict when there is one,
/// otherwise a batch mean over the second half of the run.
fn dsmc_theta(traj: &Trajectory, verdict: Option<&SteadyVerdict>, t_end: f64) -> (f64, f64, &'static str) {
    if let Some(v) = verdict.filter(|v| v.steady).and_then(|v| v.theta) {
        return (v.mean, v.se, "steady plateau");
    }
    let late: Vec<f64> = traj.records.iter().filter(|r| r.t >= t_end / 2.0).map(|r| r.theta).collect();
    let (m, se) = batch_mean(&late, 10);
    (m, se, "second-half mean")
}

fn plot_script(cfg: &RunConfig, bound: Option<&BoundCheck>, has_h: bool, haff: Option<(f64, f64, f64)>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script; run `gnuplot {PLOT_FILE}` in this directory.");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set xlabel 't'");
    let _ = writeln!(s);
    let _ = writeln!(s, "set output 'theta.png'");
    let _ = writeln!(s, "set ylabel 'temperature'");
    if cfg.mode == RunMode::Cooling {
        let _ = writeln!(s, "set logscale y");
        match haff {
            Some((theta0, t0, gamma)) => {
                let _ = writeln!(s, "haff(x) = {theta0:e} * (1 + x / {t0:e}) ** ({gamma:e})");
                let _ = writeln!(
                    s,
                    "plot '{TRAJECTORY_FILE}' using 't':'theta' with lines title 'Θ(t)', haff(x) dashtype 2 title 'fit'"
                );
            }
            None => {
                let _ = writeln!(s, "plot '{TRAJECTORY_FILE}' using 't':'theta' with lines title 'Θ(t)'");
            }
        }
        let _ = writeln!(s, "unset logscale");
    } else {
        let _ = writeln!(s, "plot '{TRAJECTORY_FILE}' using 't':'theta' with lines title 'Θ(t)'");
    }
    if let Some(b) = bound {
        let _ = writeln!(s);
        let _ = writeln!(s, "set output 'energy_bound.png'");
        let _ = writeln!(s, "set ylabel 'F(t)'");
        let _ = writeln!(s, "bound = {:e}", b.params.bound);
        let _ = writeln!(
            s,
            "plot '{TRAJECTORY_FILE}' using 't':'F' with lines title 'F(t)', bound with lines dashtype 2 title 'bound'"
        );
    }
    if has_h {
        let _ = writeln!(s);
        let _ = writeln!(s, "set output 'h.png'");
        let _ = writeln!(s, "set ylabel 'H'");
        let _ = writeln!(s, "set logscale y");
        let _ = writeln!(
            s,
            "plot '{TRAJECTORY_FILE}' using 't':'Hquad' with lines title 'H, (x-1)^2', \\\n     '' using 't':'Hent' with lines title 'H, x log x'"
        );
    }
    s
}

/// Runs `cfg` (any mode but validate) and writes all outputs under `out`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.resolved.to_json()? + "\n")?;
    let mut sim = cfg.sim.clone();
    sim.fault_dump = Some(out.join(FAULT_FILE));
    let href = h_reference(cfg)?;
    let has_h = href.is_some();
    sim.diagnostics.h_reference = href.map(Arc::new);

    info!("{} run: N = {}, dt = {}, t_end = {}", cfg.mode.name(), sim.n_particles, sim.dt, sim.t_end);
    let traj = run(&sim, &mut [])?;
    let lp_p = sim.diagnostics.lp_p.unwrap_or(2.0);
    write_csv(BufWriter::new(File::create(out.join(TRAJECTORY_FILE))?), &traj.records, lp_p)?;

    let mut exit_code = EXIT_OK;
    let mut rep = String::new();
    let last = traj.records.last().expect("runs record at least once");
    let _ = writeln!(rep, "mode: {}", cfg.mode.name());
    let _ = writeln!(
        rep,
        "seed: {}  threads: {}  N: {}  dt: {}  t_end: {}",
        sim.seed, sim.threads, sim.n_particles, sim.dt, sim.t_end
    );
    let s = &traj.stats;
    let _ = writeln!(
        rep,
        "steps: {}  Q collisions: {}/{}  L collisions: {}/{}  majorant overflows: {}",
        s.steps, s.q_collisions, s.q_candidates, s.l_collisions, s.l_candidates, s.overflows
    );
    let _ = writeln!(
        rep,
        "final: t = {}  theta = {:.6} ± {:.6}  u = ({:.5}, {:.5}, {:.5})",
        last.t, last.theta, last.se.theta, last.u.x, last.u.y, last.u.z
    );

    let bound = match &sim.bath {
        Some(bath) => {
            let b = check_bound(&traj, cfg, bath)?;
            let _ = writeln!(rep);
            let _ = writeln!(rep, "[temperature bound]");
            let _ = writeln!(
                rep,
                "gamma1 = {:.6}  gamma2 = {:.6}  bound max{{(gamma2/gamma1)^2, F(0)}} = {:.6}",
                b.params.gamma1, b.params.gamma2, b.params.bound
            );
            let _ = writeln!(
                rep,
                "records: {}  worst margin (3Θ+|u-u1|² - bound - 4σ): {:.6}  violations: {}",
                traj.records.len(),
                b.worst_margin,
                b.violations
            );
            let _ = writeln!(rep, "status: {}", if b.violations == 0 { "PASS" } else { "FAIL" });
            if b.violations > 0 {
                exit_code = EXIT_BOUND_VIOLATION;
            }
            Some(b)
        }
        None => None,
    };

    let mut haff = None;
    if cfg.mode == RunMode::Cooling {
        let _ = writeln!(rep);
        let _ = writeln!(rep, "[cooling law]");
        match haff_fit(&traj.times(), &traj.series(|r| r.theta)) {
            Ok(fit) => {
                let _ = writeln!(
                    rep,
                    "theta(t) = {:.6} (1 + t/{:.6})^{:.5}  rms log residual {:.2e}",
                    fit.theta0, fit.t0, fit.exponent, fit.residual
                );
                haff = Some((fit.theta0, fit.t0, fit.exponent));
            }
            Err(e) => {
                let _ = writeln!(rep, "{e}");
            }
        }
    }

    let mut verdict = None;
    if matches!(cfg.mode, RunMode::Linear | RunMode::Full) {
        let _ = writeln!(rep);
        let _ = writeln!(rep, "[steady state]");
        match detect_steady(&traj.records, &sim.u1(), sim.steady_window, sim.steady_tol) {
            Ok(v) => {
                let _ = writeln!(rep, "steady: {}", v.steady);
                if let Some(t) = v.t_star {
                    let _ = writeln!(rep, "t*: {t}");
                }
                if let Some(th) = v.theta {
                    let _ = writeln!(rep, "theta: {:.6} ± {:.6}", th.mean, th.se);
                }
                if let Some(d) = v.drift_speed {
                    let _ = writeln!(rep, "|u - u1|: {:.6} ± {:.6}", d.mean, d.se);
                }
                if let Some(y) = v.y2 {
                    let _ = writeln!(rep, "Y2: {:.6} ± {:.6}", y.mean, y.se);
                }
                verdict = Some(v);
            }
            Err(e) => {
                let _ = writeln!(rep, "no verdict: {e}");
            }
        }
    }

    if let Some(settings) = cfg.grid {
        let _ = writeln!(rep);
        let _ = writeln!(rep, "[grid steady state]");
        info!("solving the {}³ grid equilibrium", settings.n);
        match solve_grid(cfg, settings) {
            Ok(steady) => {
                steady.write_csv(BufWriter::new(File::create(out.join(GRID_FILE))?))?;
                let (theta, se, how) = dsmc_theta(&traj, verdict.as_ref(), sim.t_end);
                let diff = theta - steady.theta;
                let _ = writeln!(
                    rep,
                    "grid: {}³ over ±{} thermal speeds, {} iterations, residual {:.2e}",
                    settings.n, settings.extent, steady.iterations, steady.residual
                );
                let _ = writeln!(rep, "grid theta: {:.6}", steady.theta);
                let _ = writeln!(rep, "DSMC theta ({how}): {theta:.6} ± {se:.6}");
                let _ = writeln!(
                    rep,
                    "discrepancy: {diff:.6} ({:.3}% of grid theta, {:.2} SE)",
                    100.0 * diff / steady.theta,
                    diff.abs() / se
                );
            }
            Err(e @ Error::NonConvergence { .. }) => {
                let _ = writeln!(rep, "grid solve failed: {e}");
                if exit_code == EXIT_OK {
                    exit_code = EXIT_NUMERICAL_FAULT;
                }
            }
            Err(e) => return Err(e.into()),
        }
    }

    fs::write(out.join(PLOT_FILE), plot_script(cfg, bound.as_ref(), has_h, haff))?;
    fs::write(out.join(REPORT_FILE), &rep)?;
    Ok(Outcome { exit_code, report: rep })
}
