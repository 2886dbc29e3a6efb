//! Matrix-free gain operator on the full node set.

use rayon::prelude::*;

use super::kernel::{planar_kernel, ClosedForm, PlaneRule};
use super::orbits::Orbits;
use super::{power_iteration, GridSpec, SteadyState, DEFAULT_MAX_ITERATIONS};
use crate::background::{nu, BathParams};
use crate::error::{Error, Result};
use crate::kinematics::RestitutionParams;
use crate::Vec3;

/// Grids with at most this many nodes keep the dense gain matrix in memory.
pub const DENSE_CACHE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
enum Evaluator {
    Closed(ClosedForm),
    Planar {
        params: RestitutionParams,
        bath: BathParams,
        rule: PlaneRule,
    },
}

impl Evaluator {
    fn eval(&self, v: &Vec3, w: &Vec3) -> f64 {
        match self {
            Evaluator::Closed(c) => c.eval(v, w),
            Evaluator::Planar { params, bath, rule } => {
                planar_kernel(v, w, params, bath, rule).expect("distinct finite nodes")
            }
        }
    }
}

/// Gain matrix `G_ij = h³ k(v_i, v_j)` (zero diagonal), exact collision
/// frequencies `ν_i` and gain column sums `ν̃_j`.
#[derive(Debug, Clone)]
pub struct KernelGrid {
    spec: GridSpec,
    nodes: Vec<Vec3>,
    h3: f64,
    evaluator: Evaluator,
    nu: Vec<f64>,
    nu_gain: Vec<f64>,
    cache: Option<Vec<f64>>,
}

impl KernelGrid {
    /// Assembles the grid. Maxwellian baths use the closed-form kernel,
    /// tabulated ones the planar quadrature.
    pub fn new(spec: GridSpec, params: &RestitutionParams, bath: &BathParams) -> Result<Self> {
        let evaluator = if bath.is_maxwellian() {
            Evaluator::Closed(ClosedForm::new(params, bath))
        } else {
            Evaluator::Planar {
                params: *params,
                bath: bath.clone(),
                rule: PlaneRule::tabulated(),
            }
        };
        let nodes = spec.nodes();
        let nu_vec: Vec<f64> = nodes.par_iter().map(|v| nu(bath, v)).collect();
        let mut grid = Self {
            spec,
            h3: spec.cell_volume(),
            nodes,
            evaluator,
            nu: nu_vec,
            nu_gain: Vec::new(),
            cache: None,
        };
        let len = grid.nodes.len();
        if len <= DENSE_CACHE_LIMIT {
            let dense: Vec<f64> = (0..len * len)
                .into_par_iter()
                .map(|ij| grid.compute_entry(ij / len, ij % len))
                .collect();
            grid.cache = Some(dense);
        }
        let symmetric = bath.is_maxwellian() && spec.center == bath.u1() && spec.n.is_multiple_of(2);
        grid.nu_gain = if symmetric {
            // Column sums are invariant under the cubic symmetries about u1.
            let orbits = Orbits::new(spec.n)?;
            let reps: Vec<f64> = orbits.rep_nodes().par_iter().map(|&j| grid.column_sum(j)).collect();
            (0..len).map(|j| reps[orbits.orbit_of(j)]).collect()
        } else {
            (0..len).into_par_iter().map(|j| grid.column_sum(j)).collect()
        };
        Ok(grid)
    }

    fn compute_entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.h3 * self.evaluator.eval(&self.nodes[i], &self.nodes[j])
        }
    }

    /// `G_ij = h³ k(v_i, v_j)`, zero on the diagonal.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.cache {
            Some(c) => c[i * self.nodes.len() + j],
            None => self.compute_entry(i, j),
        }
    }

    fn column_sum(&self, j: usize) -> f64 {
        (0..self.nodes.len()).map(|i| self.entry(i, j)).sum()
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    /// `ν(v_i)` at every node.
    pub fn nu_vec(&self) -> &[f64] {
        &self.nu
    }

    /// `ν̃_j = Σ_{i≠j} G_ij`.
    pub fn gain_column_sums(&self) -> &[f64] {
        &self.nu_gain
    }

    /// Diagonal of `K`, `ν_j - ν̃_j`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.nu.iter().zip(&self.nu_gain).map(|(a, b)| a - b).collect()
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// `G f`, skipping zero entries of `f`; parallel over output nodes.
    pub fn apply_gain(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let support: Vec<(usize, f64)> = f.iter().cloned().enumerate().filter(|(_, x)| *x != 0.0).collect();
        Ok((0..self.nodes.len())
            .into_par_iter()
            .map(|i| support.iter().map(|&(j, fj)| self.entry(i, j) * fj).sum())
            .collect())
    }

    /// `K f = G f + diag(ν - ν̃) f`.
    pub fn apply_k(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.apply_gain(f)?;
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += (self.nu[i] - self.nu_gain[i]) * f[i];
        }
        Ok(g)
    }

    /// `(L f)_i = (K f)_i - ν_i f_i`.
    pub fn apply_l(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.apply_gain(f)?;
        for (i, gi) in g.iter_mut().enumerate() {
            *gi -= self.nu_gain[i] * f[i];
        }
        Ok(g)
    }

    /// `h³ Σ_i (L f)_i`, zero up to round-off.
    pub fn mass_rate(&self, f: &[f64]) -> Result<f64> {
        Ok(self.apply_l(f)?.iter().sum::<f64>() * self.h3)
    }

    /// Mass defect of the uncompensated operator `G - diag(ν)`:
    /// `h³ |Σ_j (ν̃_j - ν_j) f_j|`. Shrinks as the grid is refined.
    pub fn uncompensated_mass_defect(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        let s: f64 = f.iter().enumerate().map(|(j, fj)| (self.nu_gain[j] - self.nu[j]) * fj).sum();
        Ok((s * self.h3).abs())
    }

    /// Equilibrium by power iteration from `init`, or from the bath
    /// Maxwellian sampled on the nodes.
    pub fn steady_state(&self, init: Option<&[f64]>, max_iterations: Option<usize>) -> Result<SteadyState> {
        let start = match init {
            Some(f) => {
                self.check_len(f)?;
                f.to_vec()
            }
            None => self.default_start(),
        };
        let weights = vec![self.h3; self.nodes.len()];
        let (values, iterations, residual) = power_iteration(
            |f| self.apply_gain(f).expect("length checked"),
            &self.nu_gain,
            &weights,
            start,
            max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS),
        )?;
        Ok(SteadyState::new(self.spec, values, iterations, residual))
    }

    fn default_start(&self) -> Vec<f64> {
        let var = (self.spec.half_width / super::DEFAULT_EXTENT).powi(2);
        self.spec.maxwellian(&self.spec.center, var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::equilibrium_temperature;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(e: f64, m1: f64, n: usize) -> (KernelGrid, RestitutionParams, BathParams) {
        let params = RestitutionParams::new(1.0, e, m1).unwrap();
        let bath = BathParams::maxwellian(m1, Vec3::new(0.2, -0.1, 0.0), 1.0, 1.0).unwrap();
        let spec = GridSpec::for_bath(&bath, n).unwrap();
        (KernelGrid::new(spec, &params, &bath).unwrap(), params, bath)
    }

    #[test]
    fn entries_are_nonnegative_and_rotation_symmetric() {
        let (grid, _, _) = setup(0.8, 1.0, 10);
        let n = 10;
        let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
        for (a, b) in [((1, 2, 3), (7, 4, 5)), ((0, 9, 2), (5, 5, 1))] {
            let g = grid.entry(idx(a.0, a.1, a.2), idx(b.0, b.1, b.2));
            assert!(g > 0.0);
            // Quarter turn about the z axis through the centre: (i, j) -> (n-1-j, i).
            let r = grid.entry(idx(n - 1 - a.1, a.0, a.2), idx(n - 1 - b.1, b.0, b.2));
            assert!((g - r).abs() <= 1e-12 * g);
            // Axis swap.
            let s = grid.entry(idx(a.2, a.1, a.0), idx(b.2, b.1, b.0));
            assert!((g - s).abs() <= 1e-12 * g);
        }
        assert_eq!(grid.entry(3, 3), 0.0);
    }

    #[test]
    fn symmetric_column_sums_match_direct_ones() {
        let (grid, _, _) = setup(0.9, 2.0, 8);
        for j in [0, 17, 100, 511] {
            let direct = grid.column_sum(j);
            assert!((direct - grid.gain_column_sums()[j]).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn discrete_mass_is_conserved() {
        let (grid, _, _) = setup(0.7, 0.5, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>()).collect();
        let lf = grid.apply_l(&f).unwrap();
        let scale: f64 = lf.iter().map(|x| x.abs()).sum();
        assert!(grid.mass_rate(&f).unwrap().abs() < 1e-13 * scale * grid.spec().cell_volume());
        assert!(grid.apply_l(&vec![0.0; grid.len()]).unwrap().iter().all(|&x| x == 0.0));
        assert!(matches!(grid.apply_l(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn mass_defect_shrinks_under_refinement() {
        let params = RestitutionParams::new(1.0, 1.0, 1.0).unwrap();
        let bath = BathParams::maxwellian(1.0, Vec3::zeros(), 1.0, 1.0).unwrap();
        // Same extent, halved spacing; f supported on |v| ≤ 1.5.
        let mut defects = Vec::new();
        for n in [12, 24] {
            let spec = GridSpec::new(Vec3::zeros(), 6.0, n).unwrap();
            let grid = KernelGrid::new(spec, &params, &bath).unwrap();
            let f: Vec<f64> = grid.nodes().iter().map(|v| (1.5 - v.norm()).max(0.0)).collect();
            defects.push(grid.uncompensated_mass_defect(&f).unwrap());
        }
        assert!(defects[1] * 2.0 <= defects[0], "{defects:?}");
    }

    #[test]
    fn sampled_equilibrium_is_a_fixed_point() {
        for (e, m1) in [(1.0, 1.0), (0.7, 2.0)] {
            let (grid, params, bath) = setup(e, m1, 10);
            let m = grid.spec().maxwellian(&bath.u1(), equilibrium_temperature(&params, &bath));
            let lm = grid.apply_l(&m).unwrap();
            let scale = m.iter().cloned().fold(0.0, f64::max) * grid.nu_vec()[0];
            assert!(lm.iter().all(|x| x.abs() < 1e-13 * scale));
        }
    }

    #[test]
    fn steady_state_is_unique() {
        let (grid, params, bath) = setup(0.8, 1.0, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>().powi(4)).collect();
        let sa = grid.steady_state(Some(&a), None).unwrap();
        let sb = grid.steady_state(Some(&b), None).unwrap();
        let h3 = grid.spec().cell_volume();
        let l1: f64 = sa.values.iter().zip(&sb.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * h3;
        assert!(l1 < 1e-8, "{l1}");
        let theta = equilibrium_temperature(&params, &bath);
        let m = grid.spec().maxwellian(&bath.u1(), theta);
        let dist: f64 = sa.values.iter().zip(&m).map(|(x, y)| (x - y).abs()).sum::<f64>() * h3;
        assert!(dist < 1e-8, "{dist}");
        assert!((sa.mean - bath.u1()).norm() < 1e-8);
    }
}
