//! Reduction to functions invariant under the 48 symmetries of the cube.
//!
//! For a Maxwellian bath and a grid centred on `u1` with even `n`, the
//! signed permutations of the axes map nodes to nodes and leave `k`
//! unchanged, so `L` preserves invariant node functions. Those are
//! determined by one value per orbit, which brings a 48³ grid down to 2600
//! unknowns.

use rayon::prelude::*;

use super::kernel::ClosedForm;
use super::{power_iteration, GridSpec, SteadyState, DEFAULT_MAX_ITERATIONS};
use crate::background::{nu, BathParams};
use crate::error::{Error, Result};
use crate::kinematics::RestitutionParams;

/// Orbit bookkeeping for an `n³` grid with even `n`.
#[derive(Debug, Clone)]
pub(crate) struct Orbits {
    node_orbit: Vec<u32>,
    rep_nodes: Vec<usize>,
    sizes: Vec<usize>,
}

impl Orbits {
    pub(crate) fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("orbit reduction needs an even n, got {n}")));
        }
        let m = n / 2;
        // Distance index of an axis position from the centre plane.
        let dist = |k: usize| if k >= m { k - m } else { m - 1 - k };
        let mut table = vec![u32::MAX; m * m * m];
        let mut rep_nodes = Vec::new();
        for a in 0..m {
            for b in a..m {
                for c in b..m {
                    table[(a * m + b) * m + c] = rep_nodes.len() as u32;
                    rep_nodes.push(((m + a) * n + m + b) * n + m + c);
                }
            }
        }
        let mut sizes = vec![0usize; rep_nodes.len()];
        let mut node_orbit = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut d = [dist(i), dist(j), dist(k)];
                    d.sort_unstable();
                    let id = table[(d[0] * m + d[1]) * m + d[2]];
                    sizes[id as usize] += 1;
                    node_orbit.push(id);
                }
            }
        }
        Ok(Self {
            node_orbit,
            rep_nodes,
            sizes,
        })
    }

    pub(crate) fn count(&self) -> usize {
        self.rep_nodes.len()
    }

    pub(crate) fn orbit_of(&self, node: usize) -> usize {
        self.node_orbit[node] as usize
    }

    pub(crate) fn rep_nodes(&self) -> &[usize] {
        &self.rep_nodes
    }
}

/// The operator restricted to symmetric node functions: `R[A][B]` is the
/// gain at the representative of orbit `A` from unit values on orbit `B`.
#[derive(Debug, Clone)]
pub struct OrbitGrid {
    spec: GridSpec,
    orbits: Orbits,
    r: Vec<f64>,
    nu: Vec<f64>,
    nu_gain: Vec<f64>,
}

impl OrbitGrid {
    pub fn new(spec: GridSpec, params: &RestitutionParams, bath: &BathParams) -> Result<Self> {
        if !bath.is_maxwellian() {
            return Err(Error::InvalidParameter("orbit reduction needs a Maxwellian bath".into()));
        }
        if spec.center != bath.u1() {
            return Err(Error::InvalidParameter("orbit reduction needs a grid centred on u1".into()));
        }
        let orbits = Orbits::new(spec.n)?;
        let kernel = ClosedForm::new(params, bath);
        let nodes = spec.nodes();
        let h3 = spec.cell_volume();
        let count = orbits.count();
        let r: Vec<f64> = orbits
            .rep_nodes
            .par_iter()
            .flat_map_iter(|&rep| {
                let y = nodes[rep];
                let mut row = vec![0.0; count];
                for (j, x) in nodes.iter().enumerate() {
                    if j != rep {
                        row[orbits.node_orbit[j] as usize] += h3 * kernel.eval(&y, x);
                    }
                }
                row
            })
            .collect();
        let nu_vec: Vec<f64> = orbits.rep_nodes.iter().map(|&j| nu(bath, &nodes[j])).collect();
        // Σ_{i ∈ A} G(v_i, rep_B) = |A| / |B| · R[A][B].
        let mut nu_gain = vec![0.0; count];
        for a in 0..count {
            let size_a = orbits.sizes[a] as f64;
            for (b, g) in nu_gain.iter_mut().enumerate() {
                *g += size_a / orbits.sizes[b] as f64 * r[a * count + b];
            }
        }
        Ok(Self {
            spec,
            orbits,
            r,
            nu: nu_vec,
            nu_gain,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn orbit_count(&self) -> usize {
        self.orbits.count()
    }

    /// Nodes per orbit.
    pub fn orbit_sizes(&self) -> &[usize] {
        &self.orbits.sizes
    }

    pub fn nu_vec(&self) -> &[f64] {
        &self.nu
    }

    pub fn gain_column_sums(&self) -> &[f64] {
        &self.nu_gain
    }

    /// Orbit averages of full node values.
    pub fn restrict(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.spec.len() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.len(),
                got: f.len(),
            });
        }
        let mut g = vec![0.0; self.orbit_count()];
        for (j, fj) in f.iter().enumerate() {
            g[self.orbits.orbit_of(j)] += fj;
        }
        for (gb, size) in g.iter_mut().zip(&self.orbits.sizes) {
            *gb /= *size as f64;
        }
        Ok(g)
    }

    pub fn expand(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g)?;
        Ok(self.orbits.node_orbit.iter().map(|&b| g[b as usize]).collect())
    }

    fn check_len(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.orbit_count() {
            return Err(Error::DimensionMismatch {
                expected: self.orbit_count(),
                got: g.len(),
            });
        }
        Ok(())
    }

    pub fn apply_gain(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g)?;
        let count = self.orbit_count();
        Ok(self
            .r
            .par_chunks(count)
            .map(|row| row.iter().zip(g).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `L` on orbit values.
    pub fn apply_l(&self, g: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.apply_gain(g)?;
        for (b, o) in out.iter_mut().enumerate() {
            *o -= self.nu_gain[b] * g[b];
        }
        Ok(out)
    }

    /// Discrete mass `h³ Σ_B |B| g_B`.
    pub fn mass(&self, g: &[f64]) -> f64 {
        let h3 = self.spec.cell_volume();
        g.iter().zip(&self.orbits.sizes).map(|(x, s)| x * *s as f64).sum::<f64>() * h3
    }

    /// Equilibrium by power iteration on orbit values, from `init` or the
    /// bath Maxwellian.
    pub fn steady_state(&self, init: Option<&[f64]>, max_iterations: Option<usize>) -> Result<SteadyState> {
        let start = match init {
            Some(g) => {
                self.check_len(g)?;
                g.to_vec()
            }
            None => {
                let var = (self.spec.half_width / super::DEFAULT_EXTENT).powi(2);
                self.restrict(&self.spec.maxwellian(&self.spec.center, var))?
            }
        };
        let h3 = self.spec.cell_volume();
        let weights: Vec<f64> = self.orbits.sizes.iter().map(|&s| s as f64 * h3).collect();
        let (g, iterations, residual) = power_iteration(
            |g| self.apply_gain(g).expect("length checked"),
            &self.nu_gain,
            &weights,
            start,
            max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS),
        )
        .map_err(|e| match e {
            Error::NonConvergence {
                iterations,
                residual,
                last,
            } => Error::NonConvergence {
                iterations,
                residual,
                last: self.expand(&last).unwrap_or(last),
            },
            other => other,
        })?;
        Ok(SteadyState::new(self.spec, self.expand(&g)?, iterations, residual))
    }
}
