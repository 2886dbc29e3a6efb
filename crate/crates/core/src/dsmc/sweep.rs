//! Collision sweeps: Nanbu–Babovsky pairing for `τQ` and independent bath
//! encounters for `L`, each with majorant rejection.

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;

use super::Ensemble;
use crate::background::{abs_moment, sample_bath, BathKind, BathParams};
use crate::error::{Error, Result};
use crate::kinematics::{collide_l_sigma_unchecked, collide_q_unchecked, RestitutionParams};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub candidates: usize,
    pub collisions: usize,
    pub overflows: usize,
    /// Majorant of the kernel used by the final attempt (`|q|` for `Q`,
    /// `|v - w|` for `L`).
    pub majorant: f64,
    /// Per-particle candidate probability of the `L` sweep.
    pub candidate_probability: f64,
}

fn unit_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::from(UnitSphere.sample(rng))
}

fn check_safety(safety: f64) -> Result<()> {
    if safety > 1.0 && safety.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("majorant_safety must exceed 1, got {safety}")))
    }
}

/// `2 max_i |v_i - ū|`, which bounds every pairwise `|v_i - v_j|`.
pub fn q_majorant(velocities: &[Vec3]) -> f64 {
    let mean = velocities.iter().fold(Vec3::zeros(), |a, v| a + v) / velocities.len() as f64;
    2.0 * velocities.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max)
}

/// Bound on `|v - w|` for bath encounters: `max_i |v_i - u1|` plus the
/// bath reach, which is exact for tables and `4 E|w - u1|` for Maxwellians.
pub fn l_majorant(velocities: &[Vec3], bath: &BathParams) -> f64 {
    let u1 = bath.u1();
    let reach = match bath.kind() {
        BathKind::Maxwellian => 4.0 * abs_moment(bath, 1.0).expect("order 1 is valid"),
        BathKind::Tabulated(t) => {
            let (lo, hi) = (t.origin(), t.upper_corner());
            let mut far: f64 = 0.0;
            for corner in 0..8 {
                let c = Vec3::new(
                    if corner & 1 == 0 { lo.x } else { hi.x },
                    if corner & 2 == 0 { lo.y } else { hi.y },
                    if corner & 4 == 0 { lo.z } else { hi.z },
                );
                far = far.max((c - u1).norm());
            }
            far
        }
    };
    velocities.iter().map(|v| (v - u1).norm()).fold(0.0, f64::max) + reach
}

fn candidate_pairs(n: usize, tau: f64, qmax: f64, dt: f64) -> Result<usize> {
    let m = (n as f64 * tau * qmax * dt / 2.0).ceil() as usize;
    if 2 * m > n {
        return Err(Error::TimeStepTooLarge(format!(
            "{m} candidate pairs requested from {n} particles (τ·Qmax·dt = {:.3} must stay ≤ 1)",
            tau * qmax * dt
        )));
    }
    Ok(m)
}

/// Applies one candidate pair; returns `Err(())` on majorant overflow.
#[inline]
fn try_pair<R: Rng + ?Sized>(
    v: &Vec3,
    w: &Vec3,
    qmax: f64,
    zeta: f64,
    rng: &mut R,
) -> std::result::Result<Option<(Vec3, Vec3)>, ()> {
    let q = (v - w).norm();
    if q > qmax {
        return Err(());
    }
    if rng.random::<f64>() * qmax < q {
        let sigma = unit_sphere(rng);
        Ok(Some(collide_q_unchecked(v, w, &sigma, zeta)))
    } else {
        Ok(None)
    }
}

/// One `τQ` sweep of length `dt`.
pub fn step_q<R: Rng + ?Sized>(
    ens: &mut Ensemble,
    dt: f64,
    tau: f64,
    params: &RestitutionParams,
    majorant_safety: f64,
    rng: &mut R,
) -> Result<StepStats> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("step_q needs τ > 0, got {tau}")));
    }
    check_safety(majorant_safety)?;
    let n = ens.velocities.len();
    let mut qmax = q_majorant(&ens.velocities);
    let mut stats = StepStats::default();
    if qmax == 0.0 {
        return Ok(stats);
    }
    let mut log: Vec<(usize, Vec3)> = Vec::new();
    'attempt: loop {
        let m = candidate_pairs(n, tau, qmax, dt)?;
        let picks = index::sample(rng, n, 2 * m);
        stats.candidates = m;
        stats.collisions = 0;
        stats.majorant = qmax;
        log.clear();
        for k in 0..m {
            let i = picks.index(2 * k);
            let j = picks.index(2 * k + 1);
            let (vi, vj) = (ens.velocities[i], ens.velocities[j]);
            match try_pair(&vi, &vj, qmax, params.zeta(), rng) {
                Ok(Some((a, b))) => {
                    log.push((i, vi));
                    log.push((j, vj));
                    ens.velocities[i] = a;
                    ens.velocities[j] = b;
                    stats.collisions += 1;
                }
                Ok(None) => {}
                Err(()) => {
                    for &(idx, old) in log.iter().rev() {
                        ens.velocities[idx] = old;
                    }
                    stats.overflows += 1;
                    warn!("Q majorant overflow at t = {}: Qmax {qmax} enlarged", ens.t);
                    qmax *= majorant_safety;
                    continue 'attempt;
                }
            }
        }
        return Ok(stats);
    }
}

/// One `L` sweep of length `dt`: every particle meets a fresh bath partner
/// with probability `1 - exp(-ν_max dt)` and the encounter is accepted with
/// probability `|v - w| / (λ ν_max)`.
pub fn step_l<R: Rng + ?Sized>(
    ens: &mut Ensemble,
    dt: f64,
    params: &RestitutionParams,
    bath: &BathParams,
    majorant_safety: f64,
    rng: &mut R,
) -> Result<StepStats> {
    check_safety(majorant_safety)?;
    let mut lmax = l_majorant(&ens.velocities, bath);
    let mut stats = StepStats::default();
    let mut log: Vec<(usize, Vec3)> = Vec::new();
    loop {
        let p = l_candidate_probability(lmax, bath, dt)?;
        stats.majorant = lmax;
        stats.candidate_probability = p;
        log.clear();
        match l_sweep(&mut ens.velocities, 0, p, lmax, params, bath, &mut log, rng) {
            Ok((candidates, collisions)) => {
                stats.candidates = candidates;
                stats.collisions = collisions;
                return Ok(stats);
            }
            Err(()) => {
                for &(idx, old) in log.iter().rev() {
                    ens.velocities[idx] = old;
                }
                stats.overflows += 1;
                warn!("L majorant overflow at t = {}: bound {lmax} enlarged", ens.t);
                lmax *= majorant_safety;
            }
        }
    }
}

fn l_candidate_probability(lmax: f64, bath: &BathParams, dt: f64) -> Result<f64> {
    let rate = lmax / bath.lambda();
    if rate * dt >= 1.0 {
        return Err(Error::TimeStepTooLarge(format!(
            "bath majorant rate {rate:.4} times dt = {dt} must stay below 1"
        )));
    }
    Ok(-(-rate * dt).exp_m1())
}

#[allow(clippy::too_many_arguments)]
fn l_sweep<R: Rng + ?Sized>(
    velocities: &mut [Vec3],
    offset: usize,
    p: f64,
    lmax: f64,
    params: &RestitutionParams,
    bath: &BathParams,
    log: &mut Vec<(usize, Vec3)>,
    rng: &mut R,
) -> std::result::Result<(usize, usize), ()> {
    let mut candidates = 0;
    let mut collisions = 0;
    for (i, v) in velocities.iter_mut().enumerate() {
        if rng.random::<f64>() >= p {
            continue;
        }
        candidates += 1;
        let w = sample_bath(bath, rng);
        let q = (*v - w).norm();
        if q > lmax {
            return Err(());
        }
        if rng.random::<f64>() * lmax < q {
            let sigma = unit_sphere(rng);
            let (v_post, _) = collide_l_sigma_unchecked(v, &w, &sigma, params);
            log.push((offset + i, *v));
            *v = v_post;
            collisions += 1;
        }
    }
    Ok((candidates, collisions))
}

/// Derives the generator of one worker for one attempt of one step.
fn worker_rng(seed: &[u8; 32], step: u64, attempt: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*seed);
    rng.set_stream(1 + ((step << 24) | (attempt.min(0xff) << 16) | worker as u64));
    rng
}

/// `(i, v_i', j, v_j')` for one accepted pair.
type PairUpdate = (usize, Vec3, usize, Vec3);
/// Previous velocity of a particle a worker changed.
type Undo = (usize, Vec3);
/// `(candidates, collisions)`, or `Err` on a majorant overflow.
type WorkerTally = std::result::Result<(usize, usize), ()>;

/// Parallel `τQ` sweep. Pairs are drawn from `rng`; their collisions are
/// split across `workers` generators derived from `(seed, step, worker)`.
#[allow(clippy::too_many_arguments)]
pub fn step_q_parallel(
    ens: &mut Ensemble,
    dt: f64,
    tau: f64,
    params: &RestitutionParams,
    majorant_safety: f64,
    rng: &mut ChaCha8Rng,
    step: u64,
    workers: usize,
) -> Result<StepStats> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("step_q needs τ > 0, got {tau}")));
    }
    check_safety(majorant_safety)?;
    let workers = workers.max(1);
    let n = ens.velocities.len();
    let mut qmax = q_majorant(&ens.velocities);
    let mut stats = StepStats::default();
    if qmax == 0.0 {
        return Ok(stats);
    }
    let seed = rng.get_seed();
    let zeta = params.zeta();
    for attempt in 0u64.. {
        let m = candidate_pairs(n, tau, qmax, dt)?;
        let picks = index::sample(rng, n, 2 * m).into_vec();
        let chunk = m.div_ceil(workers).max(1);
        let velocities = &ens.velocities;
        let results: Vec<Option<Vec<PairUpdate>>> = picks
            .par_chunks(2 * chunk)
            .enumerate()
            .map(|(w, pairs)| {
                let mut local = worker_rng(&seed, step, attempt, w);
                let mut out = Vec::new();
                for pair in pairs.chunks_exact(2) {
                    let (i, j) = (pair[0], pair[1]);
                    match try_pair(&velocities[i], &velocities[j], qmax, zeta, &mut local) {
                        Ok(Some((a, b))) => out.push((i, a, j, b)),
                        Ok(None) => {}
                        Err(()) => return None,
                    }
                }
                Some(out)
            })
            .collect();
        stats.candidates = m;
        stats.majorant = qmax;
        if results.iter().any(Option::is_none) {
            stats.overflows += 1;
            warn!("Q majorant overflow at t = {}: Qmax {qmax} enlarged", ens.t);
            qmax *= majorant_safety;
            continue;
        }
        stats.collisions = 0;
        for (i, a, j, b) in results.into_iter().flatten().flatten() {
            ens.velocities[i] = a;
            ens.velocities[j] = b;
            stats.collisions += 1;
        }
        break;
    }
    Ok(stats)
}

/// Parallel `L` sweep over contiguous particle blocks, one derived generator
/// per block.
#[allow(clippy::too_many_arguments)]
pub fn step_l_parallel(
    ens: &mut Ensemble,
    dt: f64,
    params: &RestitutionParams,
    bath: &BathParams,
    majorant_safety: f64,
    seed: &[u8; 32],
    step: u64,
    workers: usize,
) -> Result<StepStats> {
    check_safety(majorant_safety)?;
    let workers = workers.max(1);
    let n = ens.velocities.len();
    let mut lmax = l_majorant(&ens.velocities, bath);
    let mut stats = StepStats::default();
    // Streams for the L sweep are kept apart from those of the Q sweep.
    let step_key = step | (1 << 39);
    for attempt in 0u64.. {
        let p = l_candidate_probability(lmax, bath, dt)?;
        let chunk = n.div_ceil(workers);
        let results: Vec<(WorkerTally, Vec<Undo>)> = ens
            .velocities
            .par_chunks_mut(chunk)
            .enumerate()
            .map(|(w, block)| {
                let mut local = worker_rng(seed, step_key, attempt, w);
                let mut log = Vec::new();
                let r = l_sweep(block, w * chunk, p, lmax, params, bath, &mut log, &mut local);
                (r, log)
            })
            .collect();
        stats.majorant = lmax;
        stats.candidate_probability = p;
        if results.iter().any(|(r, _)| r.is_err()) {
            for (_, log) in &results {
                for &(idx, old) in log.iter().rev() {
                    ens.velocities[idx] = old;
                }
            }
            stats.overflows += 1;
            warn!("L majorant overflow at t = {}: bound {lmax} enlarged", ens.t);
            lmax *= majorant_safety;
            continue;
        }
        stats.candidates = 0;
        stats.collisions = 0;
        for (r, _) in results {
            let (c, k) = r.expect("checked above");
            stats.candidates += c;
            stats.collisions += k;
        }
        break;
    }
    Ok(stats)
}
