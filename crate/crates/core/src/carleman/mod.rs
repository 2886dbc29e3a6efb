//! Deterministic velocity-grid discretization of the bath operator
//!
//! ```text
//! L f(v) = ∫ k(v, w) f(w) dw - ν(v) f(v)
//! ```
//!
//! on a cell-centred cubic grid, its equilibrium by power iteration, and a
//! cross-check against DSMC.
//!
//! The singular diagonal `k(v, v)` is dropped and the loss at node `j` uses
//! the discrete gain column sum `ν̃_j = Σ_{i≠j} h³ k(v_i, v_j)` instead of
//! `ν(v_j)`. The discrete operator then conserves mass to round-off, and
//! since `k` satisfies pointwise detailed balance with a Maxwellian of
//! variance `κ/(1-κ) Θ1/m1`, that Maxwellian sampled on the nodes is an exact
//! discrete equilibrium. Viewed as a matrix `K` acting on node values, the
//! compensation sits on the diagonal: `K_jj = ν_j - ν̃_j`.

mod compare;
mod grid;
mod kernel;
mod orbits;

use std::io::Write;

pub use compare::{compare_dsmc, DsmcComparison};
pub use grid::{KernelGrid, DENSE_CACHE_LIMIT};
pub use kernel::{kernel, planar_kernel, PlaneRule};
pub use orbits::OrbitGrid;

use crate::background::{write_grid_csv, BathParams};
use crate::error::{Error, Result};
use crate::kinematics::RestitutionParams;
use crate::Vec3;

/// Default nodes per axis.
pub const DEFAULT_GRID_N: usize = 48;
/// Default half extent in bath thermal speeds `sqrt(Θ1/m1)`.
pub const DEFAULT_EXTENT: f64 = 8.0;
/// Successive-iterate `L¹` distance at which the power iteration stops.
pub const STEADY_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 20_000;
/// Fraction of the previous iterate kept at each node.
pub const LAZINESS: f64 = 0.1;

/// `n³` cell-centred nodes `center - half_width + (i + ½) h` per axis, with
/// `h = 2 half_width / n` and flat index `(i n + j) n + k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub center: Vec3,
    pub half_width: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(center: Vec3, half_width: f64, n: usize) -> Result<Self> {
        if n < 2 || !(half_width > 0.0 && half_width.is_finite()) || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid needs n ≥ 2 and a positive half width, got n={n}, half_width={half_width}"
            )));
        }
        Ok(Self { center, half_width, n })
    }

    /// Grid centred on `u1` spanning `±DEFAULT_EXTENT` thermal speeds.
    pub fn for_bath(bath: &BathParams, n: usize) -> Result<Self> {
        Self::new(bath.u1(), DEFAULT_EXTENT * bath.thermal_speed(), n)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, flat: usize) -> Vec3 {
        let n = self.n;
        let idx = Vec3::new((flat / (n * n)) as f64, ((flat / n) % n) as f64, (flat % n) as f64);
        self.center - Vec3::repeat(self.half_width) + (idx + Vec3::repeat(0.5)) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Node whose cell contains `v`.
    pub fn nearest(&self, v: &Vec3) -> Option<usize> {
        let h = self.spacing();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let s = (v[a] - (self.center[a] - self.half_width)) / h;
            if !(s >= 0.0 && s < self.n as f64) {
                return None;
            }
            idx[a] = s as usize;
        }
        Some((idx[0] * self.n + idx[1]) * self.n + idx[2])
    }

    /// Discrete mass, mean and temperature of node values.
    pub fn moments(&self, f: &[f64]) -> (f64, Vec3, f64) {
        let h3 = self.cell_volume();
        let mut mass = 0.0;
        let mut first = Vec3::zeros();
        for (i, &fi) in f.iter().enumerate() {
            mass += fi;
            first += self.node(i) * fi;
        }
        let mean = first / mass;
        let second: f64 = f.iter().enumerate().map(|(i, &fi)| fi * (self.node(i) - mean).norm_squared()).sum();
        (mass * h3, mean, second / (3.0 * mass))
    }

    /// The Maxwellian `N(mean, var I)` sampled on the nodes and scaled to unit
    /// discrete mass.
    pub fn maxwellian(&self, mean: &Vec3, var: f64) -> Vec<f64> {
        let mut f: Vec<f64> = (0..self.len())
            .map(|i| (-(self.node(i) - mean).norm_squared() / (2.0 * var)).exp())
            .collect();
        let mass: f64 = f.iter().sum::<f64>() * self.cell_volume();
        f.iter_mut().for_each(|x| *x /= mass);
        f
    }
}

/// Temperature of the bath equilibrium, `κ/(1-κ) Θ1/m1`.
pub fn equilibrium_temperature(params: &RestitutionParams, bath: &BathParams) -> f64 {
    let kappa = params.kappa();
    kappa / (1.0 - kappa) * bath.thermal_speed().powi(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub spec: GridSpec,
    /// Node values with unit discrete mass.
    pub values: Vec<f64>,
    pub mean: Vec3,
    pub theta: f64,
    pub iterations: usize,
    /// Final successive-iterate `L¹` distance.
    pub residual: f64,
}

impl SteadyState {
    fn new(spec: GridSpec, values: Vec<f64>, iterations: usize, residual: f64) -> Self {
        let (_, mean, theta) = spec.moments(&values);
        Self {
            spec,
            values,
            mean,
            theta,
            iterations,
            residual,
        }
    }

    /// Writes `vx,vy,vz,density` rows, readable as a tabulated bath.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_grid_csv(writer, self.values.len(), |i| (self.spec.node(i), self.values[i]))
    }
}

/// Lazy power iteration `F ← normalize(diag(ν̂)⁻¹ (G F + (ν̂ - ν̃) F))` with
/// `ν̂ = ν̃ / (1 - LAZINESS)`. Its fixed points are those of `G F = ν̃ F`, and
/// every iterate stays nonnegative with unit mass. Each node keeps only the
/// fraction `LAZINESS` of its old value, so nodes whose outgoing kernel mass
/// mostly leaves the grid still converge quickly in relative terms, while
/// the retained part rules out oscillation. `weights` are the masses carried
/// by one unit of each entry.
pub(crate) fn power_iteration<G: Fn(&[f64]) -> Vec<f64>>(
    gain: G,
    nu_gain: &[f64],
    weights: &[f64],
    init: Vec<f64>,
    max_iterations: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let m = nu_gain.len();
    if init.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: init.len(),
        });
    }
    if init.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter("initial iterate must be finite and nonnegative".into()));
    }
    if nu_gain.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter("gain column sums must be positive at every node".into()));
    }
    let nu_hat: Vec<f64> = nu_gain.iter().map(|x| x / (1.0 - LAZINESS)).collect();
    let normalize = |f: &mut Vec<f64>| -> Result<()> {
        let mass: f64 = f.iter().zip(weights).map(|(x, w)| x * w).sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("iterate has mass {mass}")));
        }
        f.iter_mut().for_each(|x| *x /= mass);
        Ok(())
    };
    let mut f = init;
    normalize(&mut f)?;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        let g = gain(&f);
        let mut next: Vec<f64> = (0..m)
            .map(|i| (g[i] + (nu_hat[i] - nu_gain[i]) * f[i]) / nu_hat[i])
            .collect();
        normalize(&mut next)?;
        residual = next.iter().zip(&f).zip(weights).map(|((a, b), w)| (a - b).abs() * w).sum();
        f = next;
        if residual < STEADY_TOLERANCE {
            return Ok((f, it, residual));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        residual,
        last: f,
    })
}
