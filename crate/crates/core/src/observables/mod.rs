//! Ensemble diagnostics: moments, the functional `F(t)`, the temperature
//! bound, histogram norms, relative functionals and collision frequencies.

mod haff;
mod histogram;

use std::io::{Read, Write};

pub use haff::{haff_fit, HaffFit, MIN_DECAY};
pub use histogram::{
    ball_mass, h_phi, histogram, lp_norm, non_concentration_radius, HReference, HistogramGrid, LpEstimate,
    PhiTag, ReferenceDensity, SparseHistogram,
};

use crate::background::{abs_moment, c0, nu, BathParams};
use crate::error::{Error, Result};
use crate::kinematics::RestitutionParams;
use crate::Vec3;

/// Default moment orders `r` of `Y_r = ∫ f |v|^{2r}`.
pub const DEFAULT_Y_ORDERS: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

pub const CSV_HEADER: [&str; 16] = [
    "t", "rho", "ux", "uy", "uz", "theta", "F", "Y1", "Y1.5", "Y2", "Y3", "L2", "Lp", "Hquad", "Hent", "sigma",
];

/// Monte Carlo standard errors of a snapshot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StdErrors {
    pub theta: f64,
    /// Of `mean |v - u1|²`, which equals `3Θ + |u - u1|²`.
    pub energy: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRecord {
    pub t: f64,
    pub rho: f64,
    pub u: Vec3,
    pub theta: f64,
    /// `F = 3Θ + |u - u1|² + 3Θ1/m1`; absent without a bath.
    pub f_aux: Option<f64>,
    /// `(r, Y_r)`
    pub y: Vec<(f64, f64)>,
    /// `(p, ‖f‖_p)`
    pub lp: Vec<(f64, f64)>,
    pub h: Vec<(PhiTag, f64)>,
    /// Mean of `Σ(f)(v) = τ (|·| * f)(v) + ν(v)` over the ensemble.
    pub sigma_mean: f64,
    pub se: StdErrors,
}

impl MomentRecord {
    pub fn y_r(&self, r: f64) -> Option<f64> {
        self.y.iter().find(|(q, _)| *q == r).map(|x| x.1)
    }

    pub fn lp_value(&self, p: f64) -> Option<f64> {
        self.lp.iter().find(|(q, _)| *q == p).map(|x| x.1)
    }

    pub fn h_value(&self, tag: PhiTag) -> Option<f64> {
        self.h.iter().find(|(q, _)| *q == tag).map(|x| x.1)
    }

    /// `3Θ + |u - u1|²`.
    pub fn energy_about(&self, u1: &Vec3) -> f64 {
        3.0 * self.theta + (self.u - u1).norm_squared()
    }

    /// The 16 CSV fields; `lp_p` selects the `Lp` column.
    pub fn csv_fields(&self, lp_p: f64) -> Vec<String> {
        let opt = |x: Option<f64>| x.unwrap_or(f64::NAN).to_string();
        let mut out = vec![
            self.t.to_string(),
            self.rho.to_string(),
            self.u.x.to_string(),
            self.u.y.to_string(),
            self.u.z.to_string(),
            self.theta.to_string(),
            opt(self.f_aux),
        ];
        for r in DEFAULT_Y_ORDERS {
            out.push(opt(self.y_r(r)));
        }
        out.push(opt(self.lp_value(2.0)));
        out.push(opt(self.lp_value(lp_p)));
        out.push(opt(self.h_value(PhiTag::Quadratic)));
        out.push(opt(self.h_value(PhiTag::Entropy)));
        out.push(self.sigma_mean.to_string());
        out
    }

    fn from_csv_fields(fields: &[f64], lp_p: f64) -> Self {
        let some = |x: f64| if x.is_nan() { None } else { Some(x) };
        let y = DEFAULT_Y_ORDERS
            .iter()
            .zip(&fields[7..11])
            .filter(|(_, v)| !v.is_nan())
            .map(|(&r, &v)| (r, v))
            .collect();
        let mut lp = Vec::new();
        if let Some(v) = some(fields[11]) {
            lp.push((2.0, v));
        }
        if let Some(v) = some(fields[12]) {
            if lp_p != 2.0 {
                lp.push((lp_p, v));
            }
        }
        let mut h = Vec::new();
        if let Some(v) = some(fields[13]) {
            h.push((PhiTag::Quadratic, v));
        }
        if let Some(v) = some(fields[14]) {
            h.push((PhiTag::Entropy, v));
        }
        Self {
            t: fields[0],
            rho: fields[1],
            u: Vec3::new(fields[2], fields[3], fields[4]),
            theta: fields[5],
            f_aux: some(fields[6]),
            y,
            lp,
            h,
            sigma_mean: fields[15],
            se: StdErrors::default(),
        }
    }
}

/// Writes records as CSV with the fixed column order. Floats use the
/// shortest representation that round-trips; absent values are `NaN`.
pub fn write_csv<W: Write>(writer: W, records: &[MomentRecord], lp_p: f64) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for r in records {
        wtr.write_record(r.csv_fields(lp_p))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a trajectory CSV; standard errors are not part of the format and
/// come back as zero.
pub fn read_csv<R: Read>(reader: R, lp_p: f64) -> Result<Vec<MomentRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Table(format!(
            "unexpected trajectory header: {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let fields = row
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Table(format!("unparsable number {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if fields.len() != CSV_HEADER.len() {
            return Err(Error::DimensionMismatch {
                expected: CSV_HEADER.len(),
                got: fields.len(),
            });
        }
        out.push(MomentRecord::from_csv_fields(&fields, lp_p));
    }
    Ok(out)
}

fn mean_and_se<I: Iterator<Item = f64>>(values: I) -> (f64, f64) {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    if n < 2.0 {
        return (mean, 0.0);
    }
    (mean, (m2 / (n - 1.0) / n).sqrt())
}

/// Empirical mass, bulk velocity, temperature and `Y_r` of an ensemble with
/// equal weights `1/N`. Histogram, `H` and `Σ` fields are left empty.
pub fn moments(velocities: &[Vec3], y_orders: &[f64], u1: &Vec3) -> Result<MomentRecord> {
    let n = velocities.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 particles, got {n}")));
    }
    let weight = 1.0 / n as f64;
    // Equal weights; a running sum would drift by O(n ε).
    let rho = n as f64 * weight;
    let u = velocities.iter().fold(Vec3::zeros(), |acc, v| acc + v) * weight;
    let (c2, se_c2) = mean_and_se(velocities.iter().map(|v| (v - u).norm_squared()));
    let (_, se_energy) = mean_and_se(velocities.iter().map(|v| (v - u1).norm_squared()));
    let mut y = Vec::with_capacity(y_orders.len());
    let mut se_y = Vec::with_capacity(y_orders.len());
    for &r in y_orders {
        let (m, se) = mean_and_se(velocities.iter().map(|v| v.norm_squared().powf(r)));
        y.push((r, m));
        se_y.push(se);
    }
    Ok(MomentRecord {
        t: 0.0,
        rho,
        u,
        theta: c2 / 3.0,
        f_aux: None,
        y,
        lp: Vec::new(),
        h: Vec::new(),
        sigma_mean: f64::NAN,
        se: StdErrors {
            theta: se_c2 / 3.0,
            energy: se_energy,
            y: se_y,
        },
    })
}

/// `F = 3Θ + |u - u1|² + E|w - u1|²` from the record's moments.
pub fn f_aux(record: &MomentRecord, bath: &BathParams) -> f64 {
    record.energy_about(&bath.u1()) + abs_moment(bath, 2.0).expect("order 2 is valid")
}

/// `F = mean |v - u1|² + E|w - u1|²` straight from the particles.
pub fn f_aux_direct(velocities: &[Vec3], bath: &BathParams) -> f64 {
    let u1 = bath.u1();
    let direct = velocities.iter().map(|v| (v - u1).norm_squared()).sum::<f64>() / velocities.len() as f64;
    direct + abs_moment(bath, 2.0).expect("order 2 is valid")
}

/// Computes `F` both ways and fails if they differ by more than `1e-10`
/// relative.
pub fn f_aux_checked(velocities: &[Vec3], record: &MomentRecord, bath: &BathParams) -> Result<f64> {
    let a = f_aux(record, bath);
    let b = f_aux_direct(velocities, bath);
    if (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::IdentityViolation(format!("F from moments {a} differs from direct {b}")));
    }
    Ok(a)
}

/// Rates of the differential inequality `F' ≤ -γ1 F^{3/2} + γ2 F` and the
/// resulting bound on `3Θ + |u - u1|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub bound: f64,
}

impl BoundParams {
    pub fn from_constants(kappa: f64, lambda: f64, c0: f64, f0: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidParameter(format!("kappa must lie in (0, 1), got {kappa}")));
        }
        if !(c0 > 0.0) {
            return Err(Error::InvalidParameter(format!("C0 must be positive, got {c0}")));
        }
        let gamma1 = 2.0 * kappa * (1.0 - kappa) / lambda;
        let gamma2 = 2.0 * c0 * kappa / lambda;
        Ok(Self {
            gamma1,
            gamma2,
            bound: (gamma2 / gamma1).powi(2).max(f0),
        })
    }
}

pub fn bound_params(restitution: &RestitutionParams, bath: &BathParams, f0: f64) -> Result<BoundParams> {
    BoundParams::from_constants(restitution.kappa(), bath.lambda(), c0(bath), f0)
}

/// Largest number of particles used on each side of the `|v_i - v_j|`
/// average in [`sigma_freq`].
pub const SIGMA_OUTER: usize = 2_000;
pub const SIGMA_INNER: usize = 10_000;

fn strided(len: usize, cap: usize) -> impl Iterator<Item = usize> {
    let stride = len.div_ceil(cap).max(1);
    (0..len).step_by(stride)
}

/// Mean over the ensemble of `Σ(f)(v_i) = τ (1/N) Σ_j |v_i - v_j| + ν(v_i)`.
/// Ensembles above the caps are subsampled with fixed strides, which keeps
/// the result deterministic.
pub fn sigma_freq(velocities: &[Vec3], bath: Option<&BathParams>, tau: f64) -> f64 {
    let n = velocities.len();
    if n == 0 {
        return f64::NAN;
    }
    let mut self_part = 0.0;
    if tau > 0.0 {
        let outer: Vec<usize> = strided(n, SIGMA_OUTER).collect();
        let inner: Vec<usize> = strided(n, SIGMA_INNER).collect();
        let mut acc = 0.0;
        for &i in &outer {
            let vi = velocities[i];
            acc += inner.iter().map(|&j| (vi - velocities[j]).norm()).sum::<f64>();
        }
        self_part = tau * acc / (outer.len() * inner.len()) as f64;
    }
    let bath_part = match bath {
        Some(b) => {
            let idx: Vec<usize> = strided(n, SIGMA_INNER).collect();
            idx.iter().map(|&i| nu(b, &velocities[i])).sum::<f64>() / idx.len() as f64
        }
        None => 0.0,
    };
    self_part + bath_part
}

/// Mean of a series with a batch-means standard error (`batches`
/// contiguous blocks), which accounts for correlation between records.
pub fn batch_mean(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let batches = batches.min(n);
    if batches < 2 {
        return (mean, f64::NAN);
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, se) = mean_and_se(means.into_iter());
    (mean, se)
}

/// Centered moving average over `window` records; the output is shorter by
/// `window - 1`.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    values.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

/// Fraction of consecutive pairs with `x[k+1] ≤ x[k]`.
pub fn fraction_non_increasing(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let ok = values.windows(2).filter(|w| w[1] <= w[0]).count();
    ok as f64 / (values.len() - 1) as f64
}
