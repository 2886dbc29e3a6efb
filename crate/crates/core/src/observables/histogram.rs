//! Histogram estimators on regular cubic grids: `L^p` norms, relative
//! functionals `H_Φ(f|F)` and ball masses.

use std::sync::Arc;

use libm::{erf, erfc};

use crate::background::TabulatedDensity;
use crate::error::{Error, Result};
use crate::Vec3;

/// Cube of `n³` equal cells centred at `center` with half side `half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramGrid {
    pub center: Vec3,
    pub half_width: f64,
    pub n: usize,
}

impl HistogramGrid {
    pub fn new(center: Vec3, half_width: f64, n: usize) -> Result<Self> {
        if n == 0 || !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "histogram grid needs n ≥ 1 and a positive half width, got n={n}, half_width={half_width}"
            )));
        }
        Ok(Self { center, half_width, n })
    }

    /// Default diagnostic grid: 64³ cells spanning ±6 thermal widths.
    pub fn thermal(center: Vec3, theta: f64) -> Self {
        Self {
            center,
            half_width: 6.0 * theta.max(1e-300).sqrt(),
            n: 64,
        }
    }

    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n, ..*self }
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(3)
    }

    pub fn cell_count(&self) -> usize {
        self.n * self.n * self.n
    }

    fn axis_index(&self, x: f64, axis: usize) -> Option<usize> {
        let s = (x - (self.center[axis] - self.half_width)) / self.cell_width();
        if s >= 0.0 && s < self.n as f64 {
            Some(s as usize)
        } else {
            None
        }
    }

    pub fn cell_of(&self, v: &Vec3) -> Option<usize> {
        let i = self.axis_index(v.x, 0)?;
        let j = self.axis_index(v.y, 1)?;
        let k = self.axis_index(v.z, 2)?;
        Some((i * self.n + j) * self.n + k)
    }

    /// Lower corner of the cell along each axis.
    pub fn cell_lower(&self, flat: usize) -> Vec3 {
        let n = self.n;
        let idx = Vec3::new((flat / (n * n)) as f64, ((flat / n) % n) as f64, (flat % n) as f64);
        self.center - Vec3::repeat(self.half_width) + idx * self.cell_width()
    }

    pub fn cell_center(&self, flat: usize) -> Vec3 {
        self.cell_lower(flat) + Vec3::repeat(0.5 * self.cell_width())
    }
}

/// Occupied cells and their counts, sorted by cell index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHistogram {
    pub cells: Vec<(usize, u64)>,
    pub total: usize,
    pub outside: usize,
}

pub fn histogram(samples: &[Vec3], grid: &HistogramGrid) -> SparseHistogram {
    let mut idx: Vec<usize> = Vec::with_capacity(samples.len());
    let mut outside = 0;
    for v in samples {
        match grid.cell_of(v) {
            Some(c) => idx.push(c),
            None => outside += 1,
        }
    }
    idx.sort_unstable();
    let mut cells: Vec<(usize, u64)> = Vec::new();
    for c in idx {
        match cells.last_mut() {
            Some((last, count)) if *last == c => *count += 1,
            _ => cells.push((c, 1)),
        }
    }
    SparseHistogram {
        cells,
        total: samples.len(),
        outside,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpEstimate {
    pub p: f64,
    pub value: f64,
    /// The same estimate on a grid of twice the resolution.
    pub refined: f64,
    /// `refined / value - 1`.
    pub sensitivity: f64,
    pub outside_fraction: f64,
    /// Set when refinement inflates the estimate the way a point mass would.
    pub concentrated: bool,
    /// Set when no sample falls inside the grid.
    pub degenerate: bool,
}

fn lp_on_grid(samples: &[Vec3], p: f64, grid: &HistogramGrid) -> (f64, SparseHistogram) {
    let h = histogram(samples, grid);
    let vol = grid.cell_volume();
    let n = h.total as f64;
    let sum: f64 = h
        .cells
        .iter()
        .map(|&(_, c)| {
            let density = c as f64 / (n * vol);
            density.powf(p) * vol
        })
        .sum();
    (sum.powf(1.0 / p), h)
}

/// Histogram estimate of `‖f‖_p`, with its sensitivity to halving the cell
/// width.
pub fn lp_norm(samples: &[Vec3], p: f64, grid: &HistogramGrid) -> Result<LpEstimate> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p must lie in (1, ∞), got {p}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let (value, h) = lp_on_grid(samples, p, grid);
    let (refined, _) = lp_on_grid(samples, p, &grid.refined());
    let degenerate = h.cells.is_empty();
    // A point mass scales by 8^((p-1)/p) under refinement, a smooth density by
    // about 1; flag anything past the geometric midpoint.
    let threshold = 8f64.powf((p - 1.0) / (2.0 * p));
    Ok(LpEstimate {
        p,
        value: if degenerate { f64::NAN } else { value },
        refined: if degenerate { f64::NAN } else { refined },
        sensitivity: refined / value - 1.0,
        outside_fraction: h.outside as f64 / h.total as f64,
        concentrated: !degenerate && refined / value > threshold,
        degenerate,
    })
}

/// Radius below which Hölder's inequality caps the mass of any ball at 1/2,
/// given an `L^p` bound `C = 2 ‖f0‖_p`: `C |B_r|^{1 - 1/p} ≤ 1/2`.
pub fn non_concentration_radius(lp0: f64, p: f64) -> f64 {
    let c = 2.0 * lp0;
    let volume = (0.5 / c).powf(p / (p - 1.0));
    (3.0 * volume / (4.0 * std::f64::consts::PI)).cbrt()
}

/// Fraction of samples within distance `r` of `center`.
pub fn ball_mass(samples: &[Vec3], center: &Vec3, r: f64) -> f64 {
    let inside = samples.iter().filter(|v| (*v - center).norm() <= r).count();
    inside as f64 / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhiTag {
    /// `Φ(x) = (x - 1)²`
    Quadratic,
    /// `Φ(x) = x log x`
    Entropy,
}

impl PhiTag {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            PhiTag::Quadratic => (x - 1.0) * (x - 1.0),
            PhiTag::Entropy => {
                if x > 0.0 {
                    x * x.ln()
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceDensity {
    Maxwellian { mean: Vec3, var: f64 },
    Table(Arc<TabulatedDensity>),
}

/// Reference density `F` reduced to cell masses on a fixed histogram grid.
/// The mass outside the grid is kept as one extra cell.
#[derive(Debug, Clone)]
pub struct HReference {
    grid: HistogramGrid,
    masses: Vec<f64>,
    outside_mass: f64,
}

fn gaussian_interval(lo: f64, hi: f64, mean: f64, sd: f64) -> f64 {
    let a = (lo - mean) / (sd * std::f64::consts::SQRT_2);
    let b = (hi - mean) / (sd * std::f64::consts::SQRT_2);
    if a > 0.0 {
        0.5 * (erfc(a) - erfc(b))
    } else if b < 0.0 {
        0.5 * (erfc(-b) - erfc(-a))
    } else {
        0.5 * (erf(b) - erf(a))
    }
}

impl HReference {
    pub fn new(reference: &ReferenceDensity, grid: HistogramGrid) -> Result<Self> {
        let n = grid.n;
        let w = grid.cell_width();
        let mut masses = vec![0.0; grid.cell_count()];
        match reference {
            ReferenceDensity::Maxwellian { mean, var } => {
                if !(*var > 0.0) {
                    return Err(Error::InvalidParameter("reference variance must be positive".into()));
                }
                let sd = var.sqrt();
                let axis: Vec<Vec<f64>> = (0..3)
                    .map(|a| {
                        (0..n)
                            .map(|i| {
                                let lo = grid.center[a] - grid.half_width + i as f64 * w;
                                gaussian_interval(lo, lo + w, mean[a], sd)
                            })
                            .collect()
                    })
                    .collect();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            masses[(i * n + j) * n + k] = axis[0][i] * axis[1][j] * axis[2][k];
                        }
                    }
                }
            }
            ReferenceDensity::Table(t) => {
                let g = 0.5 / 3f64.sqrt();
                let offs = [0.5 - g, 0.5 + g];
                for (c, m) in masses.iter_mut().enumerate() {
                    let lower = grid.cell_lower(c);
                    let mut acc = 0.0;
                    for &a in &offs {
                        for &b in &offs {
                            for &d in &offs {
                                acc += t.value_at(&(lower + Vec3::new(a, b, d) * w));
                            }
                        }
                    }
                    *m = acc * grid.cell_volume() / 8.0;
                }
            }
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::SupportMismatch("reference has no mass on the grid".into()));
        }
        if total > 1.0 {
            masses.iter_mut().for_each(|m| *m /= total);
        }
        Ok(Self {
            grid,
            masses,
            outside_mass: (1.0 - total).max(0.0),
        })
    }

    pub fn grid(&self) -> &HistogramGrid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Reference mass outside the grid.
    pub fn outside_mass(&self) -> f64 {
        self.outside_mass
    }

    /// Histogram estimate of `H_Φ(f|F) = ∫ F Φ(f/F)`.
    pub fn h_phi(&self, samples: &[Vec3], tag: PhiTag) -> Result<f64> {
        let h = histogram(samples, &self.grid);
        let n = h.total as f64;
        if h.outside > 0 && !(self.outside_mass > 0.0) {
            return Err(Error::SupportMismatch(format!(
                "{} samples fall outside the reference grid",
                h.outside
            )));
        }
        let mut acc = 0.0;
        let mut occupied_mass = 0.0;
        for &(c, count) in &h.cells {
            let mass = self.masses[c];
            if mass <= 0.0 {
                return Err(Error::SupportMismatch(format!(
                    "reference vanishes in occupied cell {:?}",
                    self.grid.cell_center(c)
                )));
            }
            occupied_mass += mass;
            acc += mass * tag.eval(count as f64 / n / mass);
        }
        let empty_mass = (1.0 - self.outside_mass - occupied_mass).max(0.0);
        acc += tag.eval(0.0) * empty_mass;
        if self.outside_mass > 0.0 {
            acc += self.outside_mass * tag.eval(h.outside as f64 / n / self.outside_mass);
        }
        Ok(acc)
    }
}

/// One-shot `H_Φ(f|F)`; build an [`HReference`] once when evaluating many
/// snapshots against the same reference.
pub fn h_phi(samples: &[Vec3], reference: &ReferenceDensity, grid: HistogramGrid, tag: PhiTag) -> Result<f64> {
    HReference::new(reference, grid)?.h_phi(samples, tag)
}
