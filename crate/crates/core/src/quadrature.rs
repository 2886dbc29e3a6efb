//! Gauss–Legendre nodes and a product rule on the unit sphere.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::Vec3;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes come from Newton iteration on the three-term recurrence, started
/// from the Tricomi approximation; this is accurate to machine precision
/// for the orders used here (up to a few hundred).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&t| t * half).collect(),
    )
}

/// Product rule on S²: Gauss–Legendre in `cos θ` times the trapezoid rule in
/// `φ`. The polar axis is chosen per call, so integrands that only depend on
/// the angle to a fixed direction are resolved by the Legendre factor alone.
#[derive(Debug, Clone)]
pub struct SphereRule {
    mu: Vec<f64>,
    mu_weights: Vec<f64>,
    // Same order, split at mu = 0, for integrands with a kink there.
    mu_split: Vec<f64>,
    mu_split_weights: Vec<f64>,
    cos_phi: Vec<f64>,
    sin_phi: Vec<f64>,
}

pub const DEFAULT_SPHERE_ORDER: usize = 64;

impl Default for SphereRule {
    fn default() -> Self {
        Self::new(DEFAULT_SPHERE_ORDER, DEFAULT_SPHERE_ORDER).expect("default order is valid")
    }
}

impl SphereRule {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 {
            return Err(Error::QuadratureOrder(n_theta));
        }
        if n_phi < 2 {
            return Err(Error::QuadratureOrder(n_phi));
        }
        let (mu, mu_weights) = gauss_legendre(n_theta);
        let (lo, lo_w) = gauss_legendre_interval(n_theta, -1.0, 0.0);
        let (hi, hi_w) = gauss_legendre_interval(n_theta, 0.0, 1.0);
        let mu_split = lo.into_iter().chain(hi).collect();
        let mu_split_weights = lo_w.into_iter().chain(hi_w).collect();
        let (sin_phi, cos_phi) = (0..n_phi)
            .map(|k| (2.0 * PI * k as f64 / n_phi as f64).sin_cos())
            .unzip();
        Ok(Self {
            mu,
            mu_weights,
            mu_split,
            mu_split_weights,
            cos_phi,
            sin_phi,
        })
    }

    /// `(1/4π) ∮ f(σ) dσ` with the polar axis along `axis`.
    pub fn average<F: FnMut(&Vec3) -> f64>(&self, axis: &Vec3, f: F) -> f64 {
        self.average_with(axis, &self.mu, &self.mu_weights, f)
    }

    /// Like [`average`](Self::average), but splits the polar integral at the
    /// equator of `axis` so that integrands containing `|axis·σ|` stay smooth
    /// on each panel.
    pub fn average_split<F: FnMut(&Vec3) -> f64>(&self, axis: &Vec3, f: F) -> f64 {
        self.average_with(axis, &self.mu_split, &self.mu_split_weights, f)
    }

    fn average_with<F: FnMut(&Vec3) -> f64>(
        &self,
        axis: &Vec3,
        mu: &[f64],
        weights: &[f64],
        mut f: F,
    ) -> f64 {
        let (e3, e1, e2) = orthonormal_frame(axis);
        let n_phi = self.cos_phi.len() as f64;
        let mut acc = 0.0;
        for (&m, &w) in mu.iter().zip(weights) {
            let s = (1.0 - m * m).max(0.0).sqrt();
            let mut ring = 0.0;
            for (&c, &sn) in self.cos_phi.iter().zip(&self.sin_phi) {
                let dir = e3 * m + e1 * (s * c) + e2 * (s * sn);
                ring += f(&dir);
            }
            acc += w * ring / n_phi;
        }
        // Legendre weights sum to 2 over mu in [-1, 1].
        0.5 * acc
    }
}

/// Right-handed orthonormal frame whose third vector is `axis / |axis|`.
/// A zero axis yields the canonical frame.
pub fn orthonormal_frame(axis: &Vec3) -> (Vec3, Vec3, Vec3) {
    let norm = axis.norm();
    let e3 = if norm > 0.0 { axis / norm } else { Vec3::z() };
    let helper = if e3.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (helper - e3 * e3.dot(&helper)).normalize();
    let e2 = e3.cross(&e1);
    (e3, e1, e2)
}
