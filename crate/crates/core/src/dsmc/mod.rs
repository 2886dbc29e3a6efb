//! Direct simulation Monte Carlo for `∂t f = τ Q(f, f) + L(f)`.
//!
//! Each step of length `dt` applies a `τQ` sweep and then an `L` sweep
//! (first-order splitting). Diagnostics are recorded every `record_every`
//! steps and at the end of the run.

mod checkpoint;
mod steady;
mod sweep;

use std::path::PathBuf;
use std::sync::Arc;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use steady::{detect_steady, SteadyValue, SteadyVerdict};
pub use sweep::{l_majorant, q_majorant, step_l, step_l_parallel, step_q, step_q_parallel, StepStats};

use crate::background::BathParams;
use crate::error::{Error, Result};
use crate::kinematics::RestitutionParams;
use crate::observables::{
    f_aux_checked, lp_norm, moments, sigma_freq, HReference, HistogramGrid, MomentRecord, PhiTag, DEFAULT_Y_ORDERS,
};
use crate::Vec3;

/// `N` equally weighted particles at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    velocities: Vec<Vec3>,
    t: f64,
    seed: u64,
}

impl Ensemble {
    pub fn new(velocities: Vec<Vec3>, t: f64, seed: u64) -> Result<Self> {
        if velocities.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "an ensemble needs at least 2 particles, got {}",
                velocities.len()
            )));
        }
        if velocities.iter().any(|v| !v.iter().all(|c| c.is_finite())) || !t.is_finite() {
            return Err(Error::InvalidParameter("non-finite ensemble state".into()));
        }
        Ok(Self { velocities, t, seed })
    }

    /// Draws `n` velocities from `N(u0, θ0 I)`.
    pub fn maxwellian<R: Rng + ?Sized>(n: usize, u0: Vec3, theta0: f64, seed: u64, rng: &mut R) -> Result<Self> {
        if !(theta0 >= 0.0 && theta0.is_finite()) {
            return Err(Error::InvalidParameter(format!("initial temperature must be ≥ 0, got {theta0}")));
        }
        let s = theta0.sqrt();
        let velocities = (0..n)
            .map(|_| {
                u0 + s * Vec3::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                )
            })
            .collect();
        Self::new(velocities, 0.0, seed)
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mean_velocity(&self) -> Vec3 {
        self.velocities.iter().fold(Vec3::zeros(), |a, v| a + v) / self.len() as f64
    }

    /// `(1/N) Σ |v_i|²`.
    pub fn mean_square_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm_squared()).sum::<f64>() / self.len() as f64
    }

    fn all_finite(&self) -> bool {
        self.velocities.iter().all(|v| v.iter().all(|c| c.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Maxwellian { u0: Vec3, theta0: f64 },
    Given(Arc<Vec<Vec3>>),
}

/// Which diagnostics each record carries beyond the moments.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub y_orders: Vec<f64>,
    /// When set, records carry `‖f‖_2` and `‖f‖_p` for this `p`.
    pub lp_p: Option<f64>,
    /// Histogram grid for the norms; by default a thermal grid around the
    /// current bulk velocity.
    pub lp_grid: Option<HistogramGrid>,
    pub h_reference: Option<Arc<HReference>>,
    pub sigma: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            y_orders: DEFAULT_Y_ORDERS.to_vec(),
            lp_p: None,
            lp_grid: None,
            h_reference: None,
            sigma: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub tau: f64,
    pub restitution: RestitutionParams,
    pub bath: Option<BathParams>,
    pub dt: f64,
    pub t_end: f64,
    pub n_particles: usize,
    pub seed: u64,
    pub init: InitialCondition,
    pub majorant_safety: f64,
    /// Window length in records for [`detect_steady`].
    pub steady_window: usize,
    pub steady_tol: f64,
    pub record_every: usize,
    /// `1` runs the serial sweeps; more uses per-worker generator streams.
    pub threads: usize,
    pub diagnostics: Diagnostics,
    /// Where to dump the ensemble when a numerical fault aborts the run.
    pub fault_dump: Option<PathBuf>,
}

impl SimConfig {
    pub fn new(tau: f64, restitution: RestitutionParams, bath: Option<BathParams>) -> Self {
        Self {
            tau,
            restitution,
            bath,
            dt: 0.01,
            t_end: 1.0,
            n_particles: 10_000,
            seed: 0,
            init: InitialCondition::Maxwellian {
                u0: Vec3::zeros(),
                theta0: 1.0,
            },
            majorant_safety: 1.5,
            steady_window: 50,
            steady_tol: 0.02,
            record_every: 10,
            threads: 1,
            diagnostics: Diagnostics::default(),
            fault_dump: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("τ must be finite and ≥ 0, got {}", self.tau));
        }
        if self.tau == 0.0 && self.bath.is_none() {
            return bad("τ = 0 without a bath leaves nothing to simulate".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be ≥ 0, got {}", self.t_end));
        }
        if self.n_particles < 2 {
            return bad(format!("need at least 2 particles, got {}", self.n_particles));
        }
        if !(self.majorant_safety > 1.0 && self.majorant_safety.is_finite()) {
            return bad(format!("majorant_safety must exceed 1, got {}", self.majorant_safety));
        }
        if self.record_every == 0 || self.threads == 0 {
            return bad("record_every and threads must be positive".into());
        }
        if let InitialCondition::Given(v) = &self.init {
            if v.len() != self.n_particles {
                return Err(Error::DimensionMismatch {
                    expected: self.n_particles,
                    got: v.len(),
                });
            }
        }
        if let Some(p) = self.diagnostics.lp_p {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::Domain(format!("p must lie in (1, ∞), got {p}")));
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn u1(&self) -> Vec3 {
        self.bath.as_ref().map_or_else(Vec3::zeros, |b| b.u1())
    }
}

/// Receives the ensemble at every recorded time.
pub trait Observer {
    fn observe(&mut self, ensemble: &Ensemble, record: &MomentRecord) -> Result<()>;
}

impl<F: FnMut(&Ensemble, &MomentRecord) -> Result<()>> Observer for F {
    fn observe(&mut self, ensemble: &Ensemble, record: &MomentRecord) -> Result<()> {
        self(ensemble, record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub steps: u64,
    pub q_candidates: u64,
    pub q_collisions: u64,
    pub l_candidates: u64,
    pub l_collisions: u64,
    pub overflows: u64,
}

impl RunStats {
    fn add(&mut self, q: Option<StepStats>, l: Option<StepStats>) {
        self.steps += 1;
        if let Some(q) = q {
            self.q_candidates += q.candidates as u64;
            self.q_collisions += q.collisions as u64;
            self.overflows += q.overflows as u64;
        }
        if let Some(l) = l {
            self.l_candidates += l.candidates as u64;
            self.l_collisions += l.collisions as u64;
            self.overflows += l.overflows as u64;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<MomentRecord>,
    pub stats: RunStats,
    pub final_ensemble: Ensemble,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.series(|r| r.t)
    }

    pub fn series<F: Fn(&MomentRecord) -> f64>(&self, f: F) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

/// A resumable run: ensemble, generator and step counter.
pub struct Simulation {
    config: SimConfig,
    ensemble: Ensemble,
    rng: ChaCha8Rng,
    step: u64,
    stats: RunStats,
    pool: Option<rayon::ThreadPool>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ensemble = match &config.init {
            InitialCondition::Maxwellian { u0, theta0 } => {
                Ensemble::maxwellian(config.n_particles, *u0, *theta0, config.seed, &mut rng)?
            }
            InitialCondition::Given(v) => Ensemble::new(v.as_ref().clone(), 0.0, config.seed)?,
        };
        Self::assemble(config, ensemble, rng, 0)
    }

    /// Continues from a checkpointed ensemble and generator.
    pub fn resume(config: SimConfig, ensemble: Ensemble, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if ensemble.len() != config.n_particles {
            return Err(Error::DimensionMismatch {
                expected: config.n_particles,
                got: ensemble.len(),
            });
        }
        let step = (ensemble.t / config.dt).round() as u64;
        Self::assemble(config, ensemble, rng, step)
    }

    fn assemble(config: SimConfig, ensemble: Ensemble, rng: ChaCha8Rng, step: u64) -> Result<Self> {
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            config,
            ensemble,
            rng,
            step,
            stats: RunStats::default(),
            pool,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    /// Advances by one `dt`.
    pub fn advance(&mut self) -> Result<()> {
        let c = &self.config;
        let ens = &mut self.ensemble;
        let (q, l) = match &self.pool {
            None => {
                let q = if c.tau > 0.0 {
                    Some(step_q(ens, c.dt, c.tau, &c.restitution, c.majorant_safety, &mut self.rng)?)
                } else {
                    None
                };
                let l = match &c.bath {
                    Some(b) => Some(step_l(ens, c.dt, &c.restitution, b, c.majorant_safety, &mut self.rng)?),
                    None => None,
                };
                (q, l)
            }
            Some(pool) => {
                let rng = &mut self.rng;
                let step = self.step;
                pool.install(|| -> Result<_> {
                    let q = if c.tau > 0.0 {
                        Some(step_q_parallel(
                            ens,
                            c.dt,
                            c.tau,
                            &c.restitution,
                            c.majorant_safety,
                            rng,
                            step,
                            c.threads,
                        )?)
                    } else {
                        None
                    };
                    let seed = rng.get_seed();
                    let l = match &c.bath {
                        Some(b) => Some(step_l_parallel(
                            ens,
                            c.dt,
                            &c.restitution,
                            b,
                            c.majorant_safety,
                            &seed,
                            step,
                            c.threads,
                        )?),
                        None => None,
                    };
                    Ok((q, l))
                })?
            }
        };
        self.step += 1;
        self.ensemble.t = self.step as f64 * self.config.dt;
        self.stats.add(q, l);
        if !self.ensemble.all_finite() {
            return Err(self.fault("non-finite velocity after collision sweep".into()));
        }
        Ok(())
    }

    fn fault(&self, detail: String) -> Error {
        if let Some(path) = &self.config.fault_dump {
            match save_checkpoint(path, &self.ensemble, &self.rng) {
                Ok(()) => warn!("ensemble dumped to {}", path.display()),
                Err(e) => warn!("could not dump ensemble: {e}"),
            }
        }
        Error::NumericalFault {
            step: self.step,
            word_pos: self.rng.get_word_pos(),
            detail,
        }
    }

    /// Diagnostics of the current ensemble.
    pub fn record(&self) -> Result<MomentRecord> {
        let c = &self.config;
        let d = &c.diagnostics;
        let vs = &self.ensemble.velocities;
        let mut rec = moments(vs, &d.y_orders, &c.u1())?;
        rec.t = self.ensemble.t;
        if let Some(b) = &c.bath {
            rec.f_aux = Some(f_aux_checked(vs, &rec, b)?);
        }
        if let Some(p) = d.lp_p {
            let grid = d.lp_grid.unwrap_or_else(|| HistogramGrid::thermal(rec.u, rec.theta));
            let mut orders = vec![2.0];
            if p != 2.0 {
                orders.push(p);
            }
            for q in orders {
                let est = lp_norm(vs, q, &grid)?;
                if est.concentrated {
                    debug!("‖f‖_{q} at t = {} looks concentrated", rec.t);
                }
                rec.lp.push((q, est.value));
            }
        }
        if let Some(h) = &d.h_reference {
            for tag in [PhiTag::Quadratic, PhiTag::Entropy] {
                let value = h.h_phi(vs, tag).unwrap_or_else(|e| {
                    debug!("H at t = {}: {e}", rec.t);
                    f64::NAN
                });
                rec.h.push((tag, value));
            }
        }
        if d.sigma {
            rec.sigma_mean = sigma_freq(vs, c.bath.as_ref(), c.tau);
        }
        let core = [rec.rho, rec.u.x, rec.u.y, rec.u.z, rec.theta, rec.f_aux.unwrap_or(0.0)];
        if core.iter().chain(rec.y.iter().map(|(_, y)| y)).any(|x| !x.is_finite()) {
            return Err(self.fault(format!("non-finite moment at t = {}", rec.t)));
        }
        Ok(rec)
    }

    /// Runs to `t_end`, recording at the current step, every
    /// `record_every` steps and at the last step.
    pub fn run(mut self, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
        let total = self.config.total_steps();
        let every = self.config.record_every as u64;
        let mut records = Vec::new();
        let mut emit = |sim: &Simulation, records: &mut Vec<MomentRecord>| -> Result<()> {
            let rec = sim.record()?;
            for o in observers.iter_mut() {
                o.observe(&sim.ensemble, &rec)?;
            }
            records.push(rec);
            Ok(())
        };
        emit(&self, &mut records)?;
        while self.step < total {
            self.advance()?;
            if self.step.is_multiple_of(every) || self.step == total {
                emit(&self, &mut records)?;
            }
        }
        info!(
            "run finished: {} steps, {} Q and {} L collisions, {} majorant overflows",
            self.stats.steps, self.stats.q_collisions, self.stats.l_collisions, self.stats.overflows
        );
        Ok(Trajectory {
            records,
            stats: self.stats,
            final_ensemble: self.ensemble,
        })
    }
}

/// Builds a simulation from `config` and runs it to `t_end`.
pub fn run(config: &SimConfig, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
    Simulation::new(config.clone())?.run(observers)
}
