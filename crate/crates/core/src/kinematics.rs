//! Collision maps for grain–grain (`Q`) and grain–bath (`L`) encounters, and
//! the sphere-averaged collision functionals that enter the weak forms.
//!
//! The granular particle mass is fixed to 1 throughout; `m1` is the mass of a
//! bath particle.

use crate::error::{Error, Result};
use crate::quadrature::SphereRule;
use crate::Vec3;

const UNIT_TOLERANCE: f64 = 1e-12;

/// Restitution and mass parameters, with every derived coefficient cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestitutionParams {
    epsilon: f64,
    zeta: f64,
    e: f64,
    beta: f64,
    m1: f64,
    alpha: f64,
    kappa: f64,
    gamma_c: f64,
    gamma_bar: f64,
}

impl RestitutionParams {
    /// `epsilon`: grain–grain restitution, `e`: grain–bath restitution, both
    /// in `(0, 1]`; `m1 > 0`: bath particle mass.
    pub fn new(epsilon: f64, e: f64, m1: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "e must lie in (0, 1], got {e}"
            )));
        }
        if !(m1 > 0.0 && m1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "m1 must be positive and finite, got {m1}"
            )));
        }
        let zeta = 0.5 * (1.0 + epsilon);
        let beta = 0.5 * (1.0 - e);
        let alpha = m1 / (1.0 + m1);
        let kappa = alpha * (1.0 - beta);
        let one_minus_2beta = 1.0 - 2.0 * beta;
        Ok(Self {
            epsilon,
            zeta,
            e,
            beta,
            m1,
            alpha,
            kappa,
            gamma_c: alpha * (1.0 - beta) / one_minus_2beta,
            gamma_bar: (1.0 - alpha) * (1.0 - beta) / one_minus_2beta,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }
    pub fn e(&self) -> f64 {
        self.e
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn m1(&self) -> f64 {
        self.m1
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    /// `α(1-β)`, the fraction of the normal relative velocity a grain loses to
    /// the bath particle.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }
    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }
}

/// A pair of velocities about to collide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityPair {
    pub v: Vec3,
    pub w: Vec3,
}

impl VelocityPair {
    pub fn new(v: Vec3, w: Vec3) -> Result<Self> {
        if !(v.iter().all(|c| c.is_finite()) && w.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidParameter("velocity components must be finite".into()));
        }
        Ok(Self { v, w })
    }

    /// Relative velocity `v - w`.
    pub fn q(&self) -> Vec3 {
        self.v - self.w
    }
}

fn check_unit(n: &Vec3) -> Result<()> {
    let norm = n.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitVector { norm });
    }
    Ok(())
}

/// Grain–grain collision in the σ-parametrization.
pub fn collide_q(v: &Vec3, w: &Vec3, sigma: &Vec3, params: &RestitutionParams) -> Result<(Vec3, Vec3)> {
    check_unit(sigma)?;
    Ok(collide_q_unchecked(v, w, sigma, params.zeta))
}

#[inline]
pub(crate) fn collide_q_unchecked(v: &Vec3, w: &Vec3, sigma: &Vec3, zeta: f64) -> (Vec3, Vec3) {
    let q = v - w;
    let qn = q.norm();
    if qn == 0.0 {
        return (*v, *w);
    }
    let delta = (sigma * qn - q) * (0.5 * zeta);
    (v + delta, w - delta)
}

/// Grain–bath collision in the σ-parametrization. Conserves `v + m1·w`.
pub fn collide_l_sigma(
    v: &Vec3,
    w: &Vec3,
    sigma: &Vec3,
    params: &RestitutionParams,
) -> Result<(Vec3, Vec3)> {
    check_unit(sigma)?;
    Ok(collide_l_sigma_unchecked(v, w, sigma, params))
}

#[inline]
pub(crate) fn collide_l_sigma_unchecked(
    v: &Vec3,
    w: &Vec3,
    sigma: &Vec3,
    params: &RestitutionParams,
) -> (Vec3, Vec3) {
    let q = v - w;
    let qn = q.norm();
    if qn == 0.0 {
        return (*v, *w);
    }
    let jump = (q - sigma * qn) * (1.0 - params.beta);
    (v - jump * params.alpha, w + jump * (1.0 - params.alpha))
}

/// Grain–bath collision parametrized by the impact direction `n`.
/// The normal relative velocity is reversed and scaled by `e`.
pub fn collide_l_n(v: &Vec3, w: &Vec3, n: &Vec3, params: &RestitutionParams) -> Result<(Vec3, Vec3)> {
    check_unit(n)?;
    let q = v - w;
    if q.norm() == 0.0 {
        return Ok((*v, *w));
    }
    let jump = n * (2.0 * (1.0 - params.beta) * q.dot(n));
    Ok((v - jump * params.alpha, w + jump * (1.0 - params.alpha)))
}

/// `(1/4π) ∮ [ψ(v') + ψ(w') - ψ(v) - ψ(w)] dσ` for the grain–grain map.
pub fn sphere_average_q<F: Fn(&Vec3) -> f64>(
    psi: F,
    v: &Vec3,
    w: &Vec3,
    params: &RestitutionParams,
    rule: &SphereRule,
) -> f64 {
    let q = v - w;
    if q.norm() == 0.0 {
        return 0.0;
    }
    let base = psi(v) + psi(w);
    rule.average(&q, |sigma| {
        let (vp, wp) = collide_q_unchecked(v, w, sigma, params.zeta);
        psi(&vp) + psi(&wp) - base
    })
}

/// The two quadrature routes to the grain–bath functional `J_e[ψ](v, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathAverage {
    /// `(1/2π) ∮ |q̂·n| (ψ(v*) - ψ(v)) dn`
    pub n_form: f64,
    /// `(1/4π) ∮ (ψ(ṽ*) - ψ(v)) dσ`
    pub sigma_form: f64,
}

impl BathAverage {
    pub fn discrepancy(&self) -> f64 {
        (self.n_form - self.sigma_form).abs()
    }
}

pub fn sphere_average_l<F: Fn(&Vec3) -> f64>(
    psi: F,
    v: &Vec3,
    w: &Vec3,
    params: &RestitutionParams,
    rule: &SphereRule,
) -> BathAverage {
    let q = v - w;
    let qn = q.norm();
    if qn == 0.0 {
        return BathAverage {
            n_form: 0.0,
            sigma_form: 0.0,
        };
    }
    let q_hat = q / qn;
    let base = psi(v);
    let k2 = 2.0 * params.kappa;
    // (1/2π)∮ = 2·(1/4π)∮
    let n_form = 2.0
        * rule.average_split(&q, |n| {
            let qdotn = q.dot(n);
            let v_star = v - n * (k2 * qdotn);
            q_hat.dot(n).abs() * (psi(&v_star) - base)
        });
    let sigma_form = rule.average(&q, |sigma| {
        let v_star = v - (q - sigma * qn) * params.kappa;
        psi(&v_star) - base
    });
    BathAverage { n_form, sigma_form }
}

/// Result of checking the center-of-mass energy decomposition of a
/// grain–bath collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySplit {
    /// `|v* - w*| / |v - w|`, which lies in `[e, 1]`.
    pub ell: f64,
    /// Relative mismatch of `|v*|² + m1|w*|² = (|z|² + ℓ² m1 |q|²)/(1 + m1)`,
    /// `z = v + m1 w`.
    pub residual: f64,
}

pub fn energy_split_check(
    v: &Vec3,
    w: &Vec3,
    v_post: &Vec3,
    w_post: &Vec3,
    params: &RestitutionParams,
) -> Result<EnergySplit> {
    let q = v - w;
    let qn = q.norm();
    if qn == 0.0 {
        return Err(Error::DegeneratePair);
    }
    let m1 = params.m1;
    let ell = (v_post - w_post).norm() / qn;
    let z = v + w * m1;
    let lhs = v_post.norm_squared() + m1 * w_post.norm_squared();
    let rhs = (z.norm_squared() + ell * ell * m1 * qn * qn) / (1.0 + m1);
    let scale = if lhs > 0.0 { lhs } else { 1.0 };
    Ok(EnergySplit {
        ell,
        residual: (lhs - rhs).abs() / scale,
    })
}

/// Squared restitution factor of the σ-map: `β² + (1-β)² + 2β(1-β) q̂·σ`.
pub fn ell_squared_sigma(q: &Vec3, sigma: &Vec3, params: &RestitutionParams) -> f64 {
    let b = params.beta;
    let c = q.normalize().dot(sigma);
    b * b + (1.0 - b) * (1.0 - b) + 2.0 * b * (1.0 - b) * c
}
