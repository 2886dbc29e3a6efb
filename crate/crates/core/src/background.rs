//! The host distribution `F1`: samplers, absolute moments, the constant `C0`
//! and the collision frequency `ν(v) = (1/λ) E|v - w|`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, StandardNormal};
use libm::{erf, tgamma as gamma};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::Vec3;

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Density on a regular 3-D grid, interpolated trilinearly and zero outside
/// the grid box.
#[derive(Debug)]
pub struct TabulatedDensity {
    origin: Vec3,
    spacing: Vec3,
    dims: [usize; 3],
    values: Vec<f64>,
    sampler: OnceLock<WeightedAliasIndex<f64>>,
}

impl Clone for TabulatedDensity {
    fn clone(&self) -> Self {
        Self {
            origin: self.origin,
            spacing: self.spacing,
            dims: self.dims,
            values: self.values.clone(),
            sampler: OnceLock::new(),
        }
    }
}

impl PartialEq for TabulatedDensity {
    fn eq(&self, other: &Self) -> bool {
        self.origin == other.origin
            && self.spacing == other.spacing
            && self.dims == other.dims
            && self.values == other.values
    }
}

impl TabulatedDensity {
    /// `values` are indexed with `z` fastest: `(ix * ny + iy) * nz + iz`.
    pub fn new(origin: Vec3, spacing: Vec3, dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Table(format!("need at least 2 nodes per axis, got {dims:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Table(format!("spacing must be positive, got {spacing:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Table(format!("density values must be finite and nonnegative, found {bad}")));
        }
        let table = Self {
            origin,
            spacing,
            dims,
            values,
            sampler: OnceLock::new(),
        };
        let mass = table.mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Table(format!("density integrates to {mass}, expected 1")));
        }
        Ok(table)
    }

    /// Rescales `values` to unit mass before validating.
    pub fn normalized(origin: Vec3, spacing: Vec3, dims: [usize; 3], mut values: Vec<f64>) -> Result<Self> {
        let probe = Self {
            origin,
            spacing,
            dims,
            values: values.clone(),
            sampler: OnceLock::new(),
        };
        if values.len() != dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch {
                expected: dims.iter().product(),
                got: values.len(),
            });
        }
        let mass = probe.mass();
        if !(mass > 0.0) {
            return Err(Error::Table("density has no mass".into()));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(origin, spacing, dims, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn origin(&self) -> Vec3 {
        self.origin
    }
    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn upper_corner(&self) -> Vec3 {
        let mut c = self.origin;
        for a in 0..3 {
            c[a] += self.spacing[a] * (self.dims[a] - 1) as f64;
        }
        c
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn node(&self, flat: usize) -> Vec3 {
        let k = flat % self.dims[2];
        let j = (flat / self.dims[2]) % self.dims[1];
        let i = flat / (self.dims[1] * self.dims[2]);
        self.origin + Vec3::new(i as f64 * self.spacing.x, j as f64 * self.spacing.y, k as f64 * self.spacing.z)
    }

    /// Integration weight of a node: the exact integral of its trilinear
    /// basis function.
    fn node_weight(&self, flat: usize) -> f64 {
        let idx = [
            flat / (self.dims[1] * self.dims[2]),
            (flat / self.dims[2]) % self.dims[1],
            flat % self.dims[2],
        ];
        (0..3)
            .map(|a| {
                let edge = idx[a] == 0 || idx[a] == self.dims[a] - 1;
                self.spacing[a] * if edge { 0.5 } else { 1.0 }
            })
            .product()
    }

    fn mass(&self) -> f64 {
        (0..self.values.len()).map(|i| self.values[i] * self.node_weight(i)).sum()
    }

    pub fn value_at(&self, w: &Vec3) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = (w[a] - self.origin[a]) / self.spacing[a];
            let top = (self.dims[a] - 1) as f64;
            if !(s >= 0.0 && s <= top) {
                return 0.0;
            }
            let i = (s.floor() as usize).min(self.dims[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut weight = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                idx[a] = base[a] + up as usize;
                weight *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if weight != 0.0 {
                acc += weight * self.values[self.index(idx[0], idx[1], idx[2])];
            }
        }
        acc
    }

    /// `∫ g(w) F(w) dw`, evaluated cell by cell with a 2-point Gauss rule per
    /// axis; exact for `g` of degree ≤ 2 per axis.
    pub fn expectation<G: Fn(&Vec3) -> f64>(&self, g: G) -> f64 {
        let t = 0.5 / 3f64.sqrt();
        let offsets = [0.5 - t, 0.5 + t];
        let [nx, ny, nz] = self.dims;
        let cell_volume = self.spacing.product();
        let mut acc = 0.0;
        for i in 0..nx - 1 {
            for j in 0..ny - 1 {
                for k in 0..nz - 1 {
                    let corner = [
                        self.values[self.index(i, j, k)],
                        self.values[self.index(i, j, k + 1)],
                        self.values[self.index(i, j + 1, k)],
                        self.values[self.index(i, j + 1, k + 1)],
                        self.values[self.index(i + 1, j, k)],
                        self.values[self.index(i + 1, j, k + 1)],
                        self.values[self.index(i + 1, j + 1, k)],
                        self.values[self.index(i + 1, j + 1, k + 1)],
                    ];
                    if corner.iter().all(|&c| c == 0.0) {
                        continue;
                    }
                    let base = self.node(self.index(i, j, k));
                    let mut cell = 0.0;
                    for &a in &offsets {
                        for &b in &offsets {
                            for &c in &offsets {
                                let f = corner[0] * (1.0 - a) * (1.0 - b) * (1.0 - c)
                                    + corner[1] * (1.0 - a) * (1.0 - b) * c
                                    + corner[2] * (1.0 - a) * b * (1.0 - c)
                                    + corner[3] * (1.0 - a) * b * c
                                    + corner[4] * a * (1.0 - b) * (1.0 - c)
                                    + corner[5] * a * (1.0 - b) * c
                                    + corner[6] * a * b * (1.0 - c)
                                    + corner[7] * a * b * c;
                                if f > 0.0 {
                                    let w = base
                                        + Vec3::new(a * self.spacing.x, b * self.spacing.y, c * self.spacing.z);
                                    cell += f * g(&w);
                                }
                            }
                        }
                    }
                    acc += cell * cell_volume / 8.0;
                }
            }
        }
        acc
    }

    pub fn mean(&self) -> Vec3 {
        Vec3::new(
            self.expectation(|w| w.x),
            self.expectation(|w| w.y),
            self.expectation(|w| w.z),
        )
    }

    /// `∫ F log F`. Reported for inspection; an infinite or NaN value means
    /// the table does not have finite entropy.
    pub fn entropy(&self) -> f64 {
        self.expectation_of_density(|f| if f > 0.0 { f.ln() } else { 0.0 })
    }

    fn expectation_of_density<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        // Reuse the cell rule with a closure that re-evaluates the density.
        self.expectation(|w| g(self.value_at(w)))
    }

    fn alias(&self) -> &WeightedAliasIndex<f64> {
        self.sampler.get_or_init(|| {
            let weights = (0..self.values.len())
                .map(|i| self.values[i] * self.node_weight(i))
                .collect();
            WeightedAliasIndex::new(weights).expect("validated table has positive mass")
        })
    }

    /// Draws from the trilinear density exactly: a node is picked with
    /// probability proportional to its mass, then each coordinate follows the
    /// node's hat function (halved at the box faces).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let flat = self.alias().sample(rng);
        let mut w = self.node(flat);
        let idx = [
            flat / (self.dims[1] * self.dims[2]),
            (flat / self.dims[2]) % self.dims[1],
            flat % self.dims[2],
        ];
        for a in 0..3 {
            let offset = (rng.random::<f64>() - rng.random::<f64>()) * self.spacing[a];
            let offset = if idx[a] == 0 {
                offset.abs()
            } else if idx[a] == self.dims[a] - 1 {
                -offset.abs()
            } else {
                offset
            };
            w[a] += offset;
        }
        w
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["vx", "vy", "vz", "density"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Table(format!(
                "header must be vx,vy,vz,density, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let mut row = [0.0; 4];
            for (slot, field) in row.iter_mut().zip(record.iter()) {
                *slot = field
                    .parse()
                    .map_err(|_| Error::Table(format!("unparsable number {field:?}")))?;
            }
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    fn from_rows(rows: &[[f64; 4]]) -> Result<Self> {
        let mut axes: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            let mut c: Vec<f64> = rows.iter().map(|r| r[a]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            axes[a] = c;
        }
        let dims = [axes[0].len(), axes[1].len(), axes[2].len()];
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Table(format!("need at least 2 nodes per axis, got {dims:?}")));
        }
        let mut spacing = Vec3::zeros();
        for a in 0..3 {
            let h = (axes[a][dims[a] - 1] - axes[a][0]) / (dims[a] - 1) as f64;
            for (i, x) in axes[a].iter().enumerate() {
                let ideal = axes[a][0] + h * i as f64;
                if (x - ideal).abs() > 1e-9 * h.max(x.abs()) {
                    return Err(Error::Table(format!("axis {a} is not regularly spaced near {x}")));
                }
            }
            spacing[a] = h;
        }
        let total = dims.iter().product::<usize>();
        if rows.len() != total {
            return Err(Error::Table(format!("expected {total} rows for a full grid, got {}", rows.len())));
        }
        let origin = Vec3::new(axes[0][0], axes[1][0], axes[2][0]);
        let mut values = vec![f64::NAN; total];
        for r in rows {
            let mut idx = [0usize; 3];
            for a in 0..3 {
                idx[a] = ((r[a] - origin[a]) / spacing[a]).round() as usize;
            }
            let flat = (idx[0] * dims[1] + idx[1]) * dims[2] + idx[2];
            if !values[flat].is_nan() {
                return Err(Error::Table(format!("duplicate node ({}, {}, {})", r[0], r[1], r[2])));
            }
            values[flat] = r[3];
        }
        Self::new(origin, spacing, dims, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_grid_csv(writer, self.values.len(), |i| (self.node(i), self.values[i]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Writes `(node, density)` rows under the `vx,vy,vz,density` header.
pub(crate) fn write_grid_csv<W: Write, F: Fn(usize) -> (Vec3, f64)>(writer: W, len: usize, row: F) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["vx", "vy", "vz", "density"])?;
    for i in 0..len {
        let (v, d) = row(i);
        wtr.write_record([v.x.to_string(), v.y.to_string(), v.z.to_string(), d.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum BathKind {
    Maxwellian,
    Tabulated(Arc<TabulatedDensity>),
}

/// Host distribution `F1` together with the bath mass and mean free path.
#[derive(Debug, Clone, PartialEq)]
pub struct BathParams {
    m1: f64,
    u1: Vec3,
    theta1: f64,
    lambda: f64,
    kind: BathKind,
}

impl BathParams {
    pub fn maxwellian(m1: f64, u1: Vec3, theta1: f64, lambda: f64) -> Result<Self> {
        check_positive("m1", m1)?;
        check_positive("theta1", theta1)?;
        check_positive("lambda", lambda)?;
        if !u1.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("u1 must be finite".into()));
        }
        Ok(Self {
            m1,
            u1,
            theta1,
            lambda,
            kind: BathKind::Maxwellian,
        })
    }

    /// The bulk velocity and temperature are taken from the table itself.
    pub fn tabulated(m1: f64, lambda: f64, table: TabulatedDensity) -> Result<Self> {
        check_positive("m1", m1)?;
        check_positive("lambda", lambda)?;
        let u1 = table.mean();
        let theta1 = m1 / 3.0 * table.expectation(|w| (w - u1).norm_squared());
        if !(theta1 >= 0.0) {
            return Err(Error::Table("table has undefined temperature".into()));
        }
        Ok(Self {
            m1,
            u1,
            theta1,
            lambda,
            kind: BathKind::Tabulated(Arc::new(table)),
        })
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }
    pub fn u1(&self) -> Vec3 {
        self.u1
    }
    pub fn theta1(&self) -> f64 {
        self.theta1
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn kind(&self) -> &BathKind {
        &self.kind
    }
    pub fn is_maxwellian(&self) -> bool {
        matches!(self.kind, BathKind::Maxwellian)
    }

    /// Per-component standard deviation `sqrt(Θ1/m1)` of bath velocities.
    pub fn thermal_speed(&self) -> f64 {
        (self.theta1 / self.m1).sqrt()
    }

    pub fn density(&self, w: &Vec3) -> f64 {
        match &self.kind {
            BathKind::Maxwellian => maxwellian_density(w, &self.u1, self.thermal_speed().powi(2)),
            BathKind::Tabulated(t) => t.value_at(w),
        }
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
    }
}

/// Isotropic Gaussian density with mean `u` and per-component variance `var`.
pub fn maxwellian_density(w: &Vec3, u: &Vec3, var: f64) -> f64 {
    (2.0 * std::f64::consts::PI * var).powf(-1.5) * (-(w - u).norm_squared() / (2.0 * var)).exp()
}

pub fn sample_bath<R: Rng + ?Sized>(bath: &BathParams, rng: &mut R) -> Vec3 {
    match &bath.kind {
        BathKind::Maxwellian => {
            let s = bath.thermal_speed();
            let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            bath.u1 + Vec3::from(z) * s
        }
        BathKind::Tabulated(t) => t.sample(rng),
    }
}

fn check_order(k: f64) -> Result<()> {
    if k >= 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("moment order must be nonnegative, got {k}")))
    }
}

/// `E|w - u1|^k` under `F1`.
pub fn abs_moment(bath: &BathParams, k: f64) -> Result<f64> {
    check_order(k)?;
    Ok(match &bath.kind {
        BathKind::Maxwellian => bath.thermal_speed().powf(k) * central_chi_moment(k),
        BathKind::Tabulated(t) => {
            let u1 = bath.u1;
            t.expectation(|w| (w - u1).norm().powf(k))
        }
    })
}

/// `E|w|^k` under `F1`.
pub fn abs_moment_origin(bath: &BathParams, k: f64) -> Result<f64> {
    relative_speed_moment(bath, &Vec3::zeros(), k)
}

/// `E|v - w|^k` for `w ~ F1`.
pub fn relative_speed_moment(bath: &BathParams, v: &Vec3, k: f64) -> Result<f64> {
    check_order(k)?;
    Ok(match &bath.kind {
        BathKind::Maxwellian => {
            let s = bath.thermal_speed();
            s.powf(k) * noncentral_chi_moment((v - bath.u1).norm() / s, k)
        }
        BathKind::Tabulated(t) => t.expectation(|w| (v - w).norm().powf(k)),
    })
}

/// `E|Z|^k` for a standard normal vector `Z` in three dimensions.
pub fn central_chi_moment(k: f64) -> f64 {
    2f64.powf(0.5 * k) * gamma(0.5 * (3.0 + k)) / gamma(1.5)
}

/// `E|Z + a e|^k` for a standard normal vector `Z` in three dimensions and a
/// unit vector `e`, by Gauss–Legendre quadrature of the radial density.
pub fn noncentral_chi_moment(a: f64, k: f64) -> f64 {
    if a < 1e-8 {
        return central_chi_moment(k);
    }
    const PANEL: f64 = 2.0;
    const REACH: f64 = 13.0;
    thread_local! {
        static RULE: (Vec<f64>, Vec<f64>) = gauss_legendre(24);
    }
    let lo = (a - REACH).max(0.0);
    let hi = a + REACH;
    let panels = ((hi - lo) / PANEL).ceil() as usize;
    let width = (hi - lo) / panels as f64;
    let norm = 1.0 / (a * (2.0 * std::f64::consts::PI).sqrt());
    RULE.with(|(x, w)| {
        let mut acc = 0.0;
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * width;
            let half = 0.5 * width;
            for (&t, &wt) in x.iter().zip(w) {
                let r = mid + half * t;
                let density = r * (-0.5 * (r - a) * (r - a)).exp() * -(-2.0 * r * a).exp_m1();
                acc += wt * half * r.powf(k) * density;
            }
        }
        acc * norm
    })
}

/// `E|Z + a e|` in closed form, `Z` standard normal in three dimensions.
pub fn mean_noncentral_speed(a: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    if a < 1e-4 {
        return 2.0 * c * (1.0 + a * a / 6.0);
    }
    c * (-0.5 * a * a).exp() + (a + 1.0 / a) * erf(a / std::f64::consts::SQRT_2)
}

/// `E|v - w|` for `w ~ F1`.
pub fn mean_relative_speed(bath: &BathParams, v: &Vec3) -> f64 {
    match &bath.kind {
        BathKind::Maxwellian => {
            let s = bath.thermal_speed();
            s * mean_noncentral_speed((v - bath.u1).norm() / s)
        }
        BathKind::Tabulated(t) => t.expectation(|w| (v - w).norm()),
    }
}

/// `C0 = 2 max{E|w - u1|, E|w - u1|³ / E|w - u1|²}`.
pub fn c0(bath: &BathParams) -> f64 {
    let m1 = abs_moment(bath, 1.0).expect("order is valid");
    let m2 = abs_moment(bath, 2.0).expect("order is valid");
    let m3 = abs_moment(bath, 3.0).expect("order is valid");
    let ratio = if m2 > 0.0 { m3 / m2 } else { 0.0 };
    2.0 * m1.max(ratio)
}

/// Bath collision frequency `ν(v) = (1/λ) E|v - w|`.
pub fn nu(bath: &BathParams, v: &Vec3) -> f64 {
    mean_relative_speed(bath, v) / bath.lambda
}

/// Monte Carlo estimate of `ν(v)` from `n` bath draws, with its standard
/// error.
pub fn nu_monte_carlo<R: Rng + ?Sized>(bath: &BathParams, v: &Vec3, n: usize, rng: &mut R) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let d = (v - sample_bath(bath, rng)).norm() / bath.lambda;
        sum += d;
        sum_sq += d * d;
    }
    let n = n as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi {
    /// `min ν(v) / sqrt(1 + |v|²)` over the probed points.
    pub chi: f64,
    pub argmin: Vec3,
}

/// Empirical lower-bound constant for `ν(v) ≥ χ sqrt(1 + |v|²)`, probed on a
/// cubic lattice of `points_per_axis³` points restricted to the ball of the
/// given radius about the origin.
pub fn empirical_chi(bath: &BathParams, radius: f64, points_per_axis: usize) -> Result<Chi> {
    if points_per_axis < 2 || !(radius > 0.0) {
        return Err(Error::InvalidParameter("need a positive radius and at least 2 points per axis".into()));
    }
    let step = 2.0 * radius / (points_per_axis - 1) as f64;
    let mut best = Chi {
        chi: f64::INFINITY,
        argmin: Vec3::zeros(),
    };
    for i in 0..points_per_axis {
        for j in 0..points_per_axis {
            for k in 0..points_per_axis {
                let v = Vec3::new(i as f64, j as f64, k as f64) * step - Vec3::repeat(radius);
                if v.norm() > radius * (1.0 + 1e-12) {
                    continue;
                }
                let ratio = nu(bath, &v) / (1.0 + v.norm_squared()).sqrt();
                if ratio < best.chi {
                    best = Chi { chi: ratio, argmin: v };
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_bath() -> BathParams {
        BathParams::maxwellian(1.0, Vec3::zeros(), 1.0, 1.0).unwrap()
    }

    fn uniform_cube(n: usize, side: f64) -> TabulatedDensity {
        let h = side / (n - 1) as f64;
        let values = vec![1.0 / side.powi(3); n * n * n];
        TabulatedDensity::new(Vec3::repeat(-0.5 * side), Vec3::repeat(h), [n, n, n], values).unwrap()
    }

    #[test]
    fn invalid_bath_parameters_are_rejected() {
        assert!(BathParams::maxwellian(0.0, Vec3::zeros(), 1.0, 1.0).is_err());
        assert!(BathParams::maxwellian(1.0, Vec3::zeros(), -1.0, 1.0).is_err());
        assert!(BathParams::maxwellian(1.0, Vec3::zeros(), 1.0, 0.0).is_err());
        let bad = TabulatedDensity::new(Vec3::zeros(), Vec3::repeat(1.0), [2, 2, 2], vec![0.5; 8]);
        assert!(bad.is_err());
        let neg = TabulatedDensity::new(Vec3::zeros(), Vec3::repeat(1.0), [2, 2, 2], vec![-1.0, 3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(neg.is_err());
    }

    #[test]
    fn maxwellian_sampler_moments() {
        let bath = BathParams::maxwellian(2.0, Vec3::new(0.5, -1.0, 2.0), 3.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let var = 1.5;
        let mut sum = Vec3::zeros();
        let mut sum_sq = Vec3::zeros();
        let mut fourth = 0.0;
        for _ in 0..n {
            let w = sample_bath(&bath, &mut rng);
            sum += w;
            let d = w - bath.u1();
            sum_sq += d.component_mul(&d);
            fourth += d.norm_squared().powi(2);
        }
        let nf = n as f64;
        for a in 0..3 {
            let se_mean = (var / nf).sqrt();
            assert!((sum[a] / nf - bath.u1()[a]).abs() < 4.0 * se_mean);
            let se_var = (2.0 * var * var / nf).sqrt();
            assert!((sum_sq[a] / nf - var).abs() < 4.0 * se_var);
        }
        let m4 = abs_moment(&bath, 4.0).unwrap();
        let sd4 = (abs_moment(&bath, 8.0).unwrap() - m4 * m4).sqrt();
        assert!((fourth / nf - m4).abs() < 4.0 * sd4 / nf.sqrt());
    }

    #[test]
    fn abs_moment_closed_forms() {
        let bath = BathParams::maxwellian(2.0, Vec3::new(1.0, 0.0, 0.0), 3.0, 1.0).unwrap();
        assert!((abs_moment(&bath, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((abs_moment(&bath, 2.0).unwrap() - 4.5).abs() < 1e-13);
        assert!((abs_moment(&bath, 4.0).unwrap() - 15.0 * 1.5 * 1.5).abs() < 1e-12);
        assert!(matches!(abs_moment(&bath, -1.0), Err(Error::Domain(_))));
        // E|w|² about the origin adds |u1|².
        assert!((abs_moment_origin(&bath, 2.0).unwrap() - 5.5).abs() < 1e-10);
        assert!((abs_moment_origin(&bath, 4.0).unwrap() - (1.0 + 2.0 * 5.0 * 1.5 + 15.0 * 2.25)).abs() < 1e-9);
    }

    #[test]
    fn first_moment_and_c0_against_monte_carlo() {
        let bath = unit_bath();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000_000;
        let (mut s1, mut s2, mut s3, mut s11, mut s33) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let r = sample_bath(&bath, &mut rng).norm();
            s1 += r;
            s11 += r * r;
            s2 += r * r;
            s3 += r * r * r;
            s33 += r.powi(6);
        }
        let nf = n as f64;
        let m1 = s1 / nf;
        let se1 = ((s11 / nf - m1 * m1) / nf).sqrt();
        let exact1 = abs_moment(&bath, 1.0).unwrap();
        assert!((m1 - exact1).abs() < 4.0 * se1, "{m1} vs {exact1}");
        let m3 = s3 / nf;
        let se3 = ((s33 / nf - m3 * m3) / nf).sqrt();
        assert!((m3 - abs_moment(&bath, 3.0).unwrap()).abs() < 4.0 * se3);
        let mc_c0 = 2.0 * m1.max(m3 / (s2 / nf));
        // the ratio branch dominates; its error is driven by the third moment
        assert!((mc_c0 - c0(&bath)).abs() < 2.0 * 4.0 * se3 / 3.0 + 1e-3);
        let exact = 2.0 * exact1.max(abs_moment(&bath, 3.0).unwrap() / 3.0);
        assert!((c0(&bath) - exact).abs() < 1e-12);
    }

    #[test]
    fn point_mass_table_has_vanishing_c0() {
        // A narrow tent around u1 approximates the zero-temperature limit.
        let n = 3;
        let h = 1e-6;
        let mut values = vec![0.0; 27];
        values[13] = 1.0 / (h * h * h);
        let t = TabulatedDensity::new(Vec3::repeat(-h), Vec3::repeat(h), [n, n, n], values).unwrap();
        let bath = BathParams::tabulated(1.0, 1.0, t).unwrap();
        assert!(c0(&bath) < 1e-5);
        assert!(bath.u1().norm() < 1e-12);
    }

    #[test]
    fn noncentral_moments() {
        for a in [0.0, 1e-5, 0.3, 1.0, 2.5, 7.0] {
            let m2 = noncentral_chi_moment(a, 2.0);
            assert!((m2 - (3.0 + a * a)).abs() < 1e-12, "a={a}: {m2}");
            let m4 = noncentral_chi_moment(a, 4.0);
            let exact = a.powi(4) + 10.0 * a * a + 15.0;
            assert!((m4 - exact).abs() < 1e-11 * exact);
            let m1 = noncentral_chi_moment(a, 1.0);
            assert!((m1 - mean_noncentral_speed(a)).abs() < 1e-12, "a={a}: {m1} vs {}", mean_noncentral_speed(a));
        }
        assert!((mean_noncentral_speed(0.0) - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn nu_at_bath_velocity_against_monte_carlo() {
        let bath = BathParams::maxwellian(1.0, Vec3::new(0.3, 0.0, -0.2), 1.0, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mc, se) = nu_monte_carlo(&bath, &bath.u1(), 10_000_000, &mut rng);
        let exact = nu(&bath, &bath.u1());
        assert!((mc - exact).abs() < 4.0 * se, "{mc} ± {se} vs {exact}");
    }

    #[test]
    fn nu_asymptotics_and_lower_bounds() {
        let bath = BathParams::maxwellian(1.5, Vec3::new(1.0, 0.0, 0.0), 2.0, 0.5).unwrap();
        let far = Vec3::new(1e4, 0.0, 0.0);
        let ratio = nu(&bath, &far) / (far - bath.u1()).norm();
        assert!((ratio * bath.lambda() - 1.0).abs() < 1e-6);
        let m1 = abs_moment(&bath, 1.0).unwrap();
        for i in 0..50 {
            let v = Vec3::new(0.37 * i as f64 - 4.0, 0.1 * i as f64, -0.05 * i as f64);
            let lower = ((v - bath.u1()).norm() - m1).abs() / bath.lambda();
            assert!(nu(&bath, &v) >= lower);
        }
        let chi = empirical_chi(&bath, 6.0, 13).unwrap();
        assert!(chi.chi > 0.0);
        for i in 0..20 {
            let v = Vec3::new(0.5 * i as f64 - 5.0, 0.2, -0.1 * i as f64).map(|c| c.clamp(-3.4, 3.4));
            assert!(nu(&bath, &v) >= chi.chi * (1.0 + v.norm_squared()).sqrt() * (1.0 - 0.05));
        }
    }

    #[test]
    fn tabulated_uniform_cube_sampling_matches_cdf() {
        let table = uniform_cube(5, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let mut xs: Vec<Vec3> = (0..n).map(|_| table.sample(&mut rng)).collect();
        for a in 0..3 {
            xs.sort_by(|p, q| p[a].total_cmp(&q[a]));
            let mut d: f64 = 0.0;
            for (i, p) in xs.iter().enumerate() {
                let cdf = (p[a] + 1.0) / 2.0;
                assert!((0.0..=1.0).contains(&cdf));
                d = d.max((cdf - i as f64 / n as f64).abs()).max((cdf - (i + 1) as f64 / n as f64).abs());
            }
            // Kolmogorov critical value at the 0.1% level.
            assert!(d < 1.95 / (n as f64).sqrt(), "axis {a}: D = {d}");
        }
    }

    #[test]
    fn tabulated_moments_and_density() {
        let table = uniform_cube(9, 2.0);
        let bath = BathParams::tabulated(1.0, 1.0, table).unwrap();
        assert!(bath.u1().norm() < 1e-14);
        // Var of U(-1, 1) is 1/3 per component.
        assert!((bath.theta1() - 1.0 / 3.0).abs() < 1e-13);
        assert!((abs_moment(&bath, 2.0).unwrap() - 1.0).abs() < 1e-13);
        assert!((bath.density(&Vec3::new(0.1, 0.2, 0.3)) - 0.125).abs() < 1e-15);
        assert_eq!(bath.density(&Vec3::new(1.1, 0.0, 0.0)), 0.0);
        if let BathKind::Tabulated(t) = bath.kind() {
            assert!((t.entropy() - 0.125f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn tabulated_csv_round_trip() {
        let n = 6;
        let h = 0.8;
        let origin = Vec3::repeat(-2.0);
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let w = origin + Vec3::new(i as f64, j as f64, k as f64) * h;
                    values.push((-w.norm_squared() / 2.0).exp());
                }
            }
        }
        let table = TabulatedDensity::normalized(origin, Vec3::repeat(h), [n, n, n], values).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = TabulatedDensity::read_csv(buf.as_slice()).unwrap();
        assert_eq!(table, back);

        let bad_header = b"x,y,z,f\n0,0,0,1\n";
        assert!(TabulatedDensity::read_csv(&bad_header[..]).is_err());
    }

    #[test]
    fn tabulated_nu_agrees_with_maxwellian() {
        let n = 41;
        let half = 7.0;
        let h = 2.0 * half / (n - 1) as f64;
        let origin = Vec3::repeat(-half);
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let w = origin + Vec3::new(i as f64, j as f64, k as f64) * h;
                    values.push(maxwellian_density(&w, &Vec3::zeros(), 1.0));
                }
            }
        }
        let table = TabulatedDensity::normalized(origin, Vec3::repeat(h), [n, n, n], values).unwrap();
        let tab = BathParams::tabulated(1.0, 1.0, table).unwrap();
        let max = BathParams::maxwellian(1.0, Vec3::zeros(), 1.0 + h * h / 6.0, 1.0).unwrap();
        for v in [Vec3::zeros(), Vec3::new(1.0, -0.5, 2.0)] {
            let rel = (nu(&tab, &v) - nu(&max, &v)).abs() / nu(&max, &v);
            assert!(rel < 2e-3, "{rel}");
        }
        // Trilinear interpolation widens each node into a hat of variance h²/6.
        assert!((tab.theta1() - (1.0 + h * h / 6.0)).abs() < 1e-3);
    }
}
