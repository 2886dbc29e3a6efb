//! The gain kernel `k(v, w)` of the bath operator: the rate density for a
//! grain at `w` to leave with velocity `v`.
//!
//! With `z = v - w`, every bath partner sending `w` to `v` lies on the plane
//! through `w + z / (2κ)` orthogonal to `z`, and
//!
//! ```text
//! k(v, w) = 1 / (4π λ κ² |z|) ∫_plane F1 dA.
//! ```
//!
//! For a Maxwellian bath the planar integral is a one-dimensional Gaussian
//! in the signed distance from `u1` to the plane.

use std::f64::consts::PI;

use crate::background::{BathKind, BathParams};
use crate::error::{Error, Result};
use crate::kinematics::RestitutionParams;
use crate::quadrature::{gauss_legendre_interval, orthonormal_frame};
use crate::Vec3;

/// Precomputed constants of the Maxwellian closed form.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ClosedForm {
    u1: Vec3,
    prefactor: f64,
    half_over_kappa: f64,
    inv_two_var: f64,
}

impl ClosedForm {
    pub(crate) fn new(params: &RestitutionParams, bath: &BathParams) -> Self {
        let kappa = params.kappa();
        let var = bath.thermal_speed().powi(2);
        Self {
            u1: bath.u1(),
            prefactor: 1.0 / (4.0 * PI * bath.lambda() * kappa * kappa * (2.0 * PI * var).sqrt()),
            half_over_kappa: 0.5 / kappa,
            inv_two_var: 0.5 / var,
        }
    }

    /// `k(v, w)` for `v != w`.
    #[inline]
    pub(crate) fn eval(&self, v: &Vec3, w: &Vec3) -> f64 {
        let z = v - w;
        let r = z.norm();
        let d = (w - self.u1).dot(&z) / r + r * self.half_over_kappa;
        self.prefactor / r * (-d * d * self.inv_two_var).exp()
    }
}

fn check_pair(v: &Vec3, w: &Vec3) -> Result<()> {
    if !(v.iter().chain(w.iter()).all(|c| c.is_finite())) {
        return Err(Error::InvalidParameter("non-finite velocity".into()));
    }
    if v == w {
        return Err(Error::SingularDiagonal);
    }
    Ok(())
}

/// Closed-form kernel for a Maxwellian bath; `v` is the outgoing and `w`
/// the incoming velocity.
pub fn kernel(v: &Vec3, w: &Vec3, params: &RestitutionParams, bath: &BathParams) -> Result<f64> {
    if !bath.is_maxwellian() {
        return Err(Error::InvalidParameter(
            "the closed-form kernel needs a Maxwellian bath; use planar_kernel".into(),
        ));
    }
    check_pair(v, w)?;
    Ok(ClosedForm::new(params, bath).eval(v, w))
}

/// Tensor Gauss–Legendre rule on `[-1, 1]²` built from `panels` equal
/// panels of `order` points per axis.
#[derive(Debug, Clone)]
pub struct PlaneRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PlaneRule {
    pub fn new(panels: usize, order: usize) -> Result<Self> {
        if panels == 0 || order == 0 {
            return Err(Error::QuadratureOrder(order.min(panels)));
        }
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        let width = 2.0 / panels as f64;
        for p in 0..panels {
            let a = -1.0 + p as f64 * width;
            let (x, w) = gauss_legendre_interval(order, a, a + width);
            nodes.extend(x);
            weights.extend(w);
        }
        Ok(Self { nodes, weights })
    }

    /// Suited to smooth Maxwellian planes.
    pub fn maxwellian() -> Self {
        Self::new(4, 24).expect("valid rule")
    }

    /// Many low-order panels, for piecewise-trilinear tables.
    pub fn tabulated() -> Self {
        Self::new(64, 4).expect("valid rule")
    }
}

/// Half side of the square on the plane that carries the bath mass.
fn plane_reach(bath: &BathParams) -> f64 {
    match bath.kind() {
        BathKind::Maxwellian => 9.0 * bath.thermal_speed(),
        BathKind::Tabulated(t) => {
            let c = bath.u1();
            let lo = t.origin() - c;
            let hi = t.upper_corner() - c;
            Vec3::new(lo.x.abs().max(hi.x.abs()), lo.y.abs().max(hi.y.abs()), lo.z.abs().max(hi.z.abs())).norm()
        }
    }
}

/// Kernel from a direct 2-D quadrature of `F1` over the collision plane;
/// works for any bath.
pub fn planar_kernel(
    v: &Vec3,
    w: &Vec3,
    params: &RestitutionParams,
    bath: &BathParams,
    rule: &PlaneRule,
) -> Result<f64> {
    check_pair(v, w)?;
    let kappa = params.kappa();
    let z = v - w;
    let r = z.norm();
    let (e3, e1, e2) = orthonormal_frame(&z);
    let c = bath.u1();
    let foot = c + e3 * ((w - c).dot(&e3) + r / (2.0 * kappa));
    let reach = plane_reach(bath);
    let mut acc = 0.0;
    for (a, wa) in rule.nodes.iter().zip(&rule.weights) {
        let row = foot + e1 * (reach * a);
        let mut inner = 0.0;
        for (b, wb) in rule.nodes.iter().zip(&rule.weights) {
            inner += wb * bath.density(&(row + e2 * (reach * b)));
        }
        acc += wa * inner;
    }
    acc *= reach * reach;
    Ok(acc / (4.0 * PI * bath.lambda() * kappa * kappa * r))
}
