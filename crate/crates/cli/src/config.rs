//! JSON run configuration.
//!
//! Every key is optional. Absent keys take these defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `tau` | `1` (cooling, full), `0` (linear) |
//! | `epsilon`, `e` | `0.8` |
//! | `m1`, `theta1`, `lambda` | `1` |
//! | `u1` | `[0, 0, 0]` |
//! | `dt` | `0.01` |
//! | `t_end` | `20` |
//! | `n_particles` | `10000` |
//! | `seed` | `0` |
//! | `record_every` | `10` |
//! | `init` | `{"u0": [0, 0, 0], "theta0": 1}` |
//! | `majorant_safety` | `1.5` |
//! | `steady_window`, `steady_tol` | `50`, `0.02` |
//! | `lp_p` | unset (no `L2`/`Lp` columns) |
//! | `sigma` | `false` |
//! | `grid` | linear mode: `{"enabled": true, "n": 48, "extent": 8}` |
//! | `f1_table` | unset (Maxwellian bath from `u1`, `theta1`) |
//!
//! Cooling mode rejects the bath keys (`e`, `m1`, `u1`, `theta1`, `lambda`,
//! `f1_table`, `grid`); `grid` is only meaningful in linear mode.

use std::path::{Path, PathBuf};

use granular_bath::background::{BathParams, TabulatedDensity};
use granular_bath::dsmc::{InitialCondition, SimConfig};
use granular_bath::{RestitutionParams, Vec3};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Free cooling: `τQ` only.
    Cooling,
    /// Bath scattering only (`τ = 0`).
    Linear,
    /// `τQ + L`.
    Full,
    /// Runs the built-in invariant checks.
    Validate,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Cooling => "cooling",
            RunMode::Linear => "linear",
            RunMode::Full => "full",
            RunMode::Validate => "validate",
        }
    }
}

pub const DEFAULT_GRID_N: usize = 48;
pub const DEFAULT_GRID_EXTENT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    /// Nodes per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Half width in bath thermal speeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
}

/// The file contents as written, before defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<RunMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_particles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub majorant_safety: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<bool>,
}

impl RawConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Bath keys present in the file.
    fn bath_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut add = |present: bool, key| {
            if present {
                keys.push(key);
            }
        };
        add(self.e.is_some(), "e");
        add(self.m1.is_some(), "m1");
        add(self.u1.is_some(), "u1");
        add(self.theta1.is_some(), "theta1");
        add(self.lambda.is_some(), "lambda");
        add(self.f1_table.is_some(), "f1_table");
        add(self.grid.is_some(), "grid");
        keys
    }
}

/// Grid solve settings after defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSettings {
    pub n: usize,
    pub extent: f64,
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: RunMode,
    pub sim: SimConfig,
    pub grid: Option<GridSettings>,
    /// The input with every default filled in.
    pub resolved: RawConfig,
}

fn key_error(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("key `{key}`: {msg}"))
}

/// Applies defaults and the mode rules. `base` anchors a relative
/// `f1_table` path.
pub fn resolve(raw: &RawConfig, mode: RunMode, base: &Path) -> Result<RunConfig, CliError> {
    if let Some(m) = raw.mode {
        if m != mode {
            return Err(key_error(
                "mode",
                format!("file says `{}` but the command line asks for `{}`", m.name(), mode.name()),
            ));
        }
    }
    let bath_keys = raw.bath_keys();
    match mode {
        RunMode::Cooling => {
            if let Some(k) = bath_keys.first() {
                return Err(key_error(k, "cooling mode has no bath"));
            }
            if raw.tau.is_some_and(|t| !(t > 0.0)) {
                return Err(key_error("tau", "cooling mode needs τ > 0"));
            }
        }
        RunMode::Linear => {
            if raw.tau.is_some_and(|t| t != 0.0) {
                return Err(key_error("tau", "linear mode needs τ = 0"));
            }
        }
        RunMode::Full => {
            if raw.tau.is_some_and(|t| !(t > 0.0)) {
                return Err(key_error("tau", "full mode needs τ > 0"));
            }
            if raw.grid.is_some() {
                return Err(key_error("grid", "the grid solve applies only to linear mode"));
            }
        }
        RunMode::Validate => {}
    }
    if raw.f1_table.is_some() {
        for k in ["u1", "theta1"] {
            if bath_keys.contains(&k) {
                return Err(key_error(k, "conflicts with `f1_table`, which fixes the bath mean and temperature"));
            }
        }
    }

    let has_bath = mode != RunMode::Cooling;
    let tau = raw.tau.unwrap_or(if mode == RunMode::Linear { 0.0 } else { 1.0 });
    let mut r = RawConfig {
        mode: Some(mode),
        tau: Some(tau),
        epsilon: Some(raw.epsilon.unwrap_or(0.8)),
        dt: Some(raw.dt.unwrap_or(0.01)),
        t_end: Some(raw.t_end.unwrap_or(20.0)),
        n_particles: Some(raw.n_particles.unwrap_or(10_000)),
        seed: Some(raw.seed.unwrap_or(0)),
        record_every: Some(raw.record_every.unwrap_or(10)),
        init: Some(InitConfig {
            u0: Some(raw.init.as_ref().and_then(|i| i.u0).unwrap_or([0.0; 3])),
            theta0: Some(raw.init.as_ref().and_then(|i| i.theta0).unwrap_or(1.0)),
        }),
        majorant_safety: Some(raw.majorant_safety.unwrap_or(1.5)),
        steady_window: Some(raw.steady_window.unwrap_or(50)),
        steady_tol: Some(raw.steady_tol.unwrap_or(0.02)),
        lp_p: raw.lp_p,
        sigma: Some(raw.sigma.unwrap_or(false)),
        ..RawConfig::default()
    };
    if has_bath {
        r.e = Some(raw.e.unwrap_or(0.8));
        r.m1 = Some(raw.m1.unwrap_or(1.0));
        r.lambda = Some(raw.lambda.unwrap_or(1.0));
        if let Some(p) = &raw.f1_table {
            r.f1_table = Some(if p.is_relative() { base.join(p) } else { p.clone() });
        } else {
            r.u1 = Some(raw.u1.unwrap_or([0.0; 3]));
            r.theta1 = Some(raw.theta1.unwrap_or(1.0));
        }
    }
    if mode == RunMode::Linear {
        let g = raw.grid.clone().unwrap_or_default();
        r.grid = Some(GridConfig {
            enabled: Some(g.enabled.unwrap_or(true)),
            n: Some(g.n.unwrap_or(DEFAULT_GRID_N)),
            extent: Some(g.extent.unwrap_or(DEFAULT_GRID_EXTENT)),
        });
    }
    build(r, mode)
}

fn build(r: RawConfig, mode: RunMode) -> Result<RunConfig, CliError> {
    let get = |x: Option<f64>| x.expect("resolved");
    let e = r.e.unwrap_or(1.0);
    let m1 = r.m1.unwrap_or(1.0);
    let restitution = RestitutionParams::new(get(r.epsilon), e, m1).map_err(|err| key_error("epsilon/e/m1", err))?;
    let bath = if mode == RunMode::Cooling {
        None
    } else if let Some(path) = &r.f1_table {
        let table = TabulatedDensity::load(path).map_err(|err| key_error("f1_table", format!("{}: {err}", path.display())))?;
        Some(BathParams::tabulated(m1, get(r.lambda), table).map_err(|err| key_error("f1_table", err))?)
    } else {
        let u1 = Vec3::from(r.u1.expect("resolved"));
        Some(BathParams::maxwellian(m1, u1, get(r.theta1), get(r.lambda)).map_err(|err| key_error("theta1/lambda", err))?)
    };
    let mut sim = SimConfig::new(get(r.tau), restitution, bath);
    sim.dt = get(r.dt);
    sim.t_end = get(r.t_end);
    sim.n_particles = r.n_particles.expect("resolved");
    sim.seed = r.seed.expect("resolved");
    sim.record_every = r.record_every.expect("resolved");
    let init = r.init.clone().expect("resolved");
    let theta0 = get(init.theta0);
    if !(theta0 > 0.0 && theta0.is_finite()) {
        return Err(key_error("init.theta0", format!("must be positive, got {theta0}")));
    }
    sim.init = InitialCondition::Maxwellian {
        u0: Vec3::from(init.u0.expect("resolved")),
        theta0,
    };
    sim.majorant_safety = get(r.majorant_safety);
    sim.steady_window = r.steady_window.expect("resolved");
    sim.steady_tol = get(r.steady_tol);
    sim.diagnostics.lp_p = r.lp_p;
    sim.diagnostics.sigma = r.sigma.expect("resolved");
    sim.validate().map_err(|err| CliError::Config(err.to_string()))?;
    if sim.steady_window < 5 {
        return Err(key_error("steady_window", "must be at least 5 records"));
    }
    if !(sim.steady_tol > 0.0) {
        return Err(key_error("steady_tol", "must be positive"));
    }

    let grid = match &r.grid {
        Some(g) if g.enabled == Some(true) => {
            let n = g.n.expect("resolved");
            let extent = g.extent.expect("resolved");
            if n < 2 {
                return Err(key_error("grid.n", format!("need at least 2 nodes per axis, got {n}")));
            }
            if !(extent > 0.0 && extent.is_finite()) {
                return Err(key_error("grid.extent", format!("must be positive, got {extent}")));
            }
            Some(GridSettings { n, extent })
        }
        _ => None,
    };
    Ok(RunConfig {
        mode,
        sim,
        grid,
        resolved: r,
    })
}

/// Overrides from the command line.
pub fn apply_overrides(cfg: &mut RunConfig, seed: Option<u64>, threads: usize) {
    if let Some(s) = seed {
        cfg.sim.seed = s;
        cfg.resolved.seed = Some(s);
    }
    cfg.sim.threads = threads.max(1);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, mode: RunMode) -> Result<RunConfig, CliError> {
        resolve(&RawConfig::from_json(text)?, mode, Path::new("."))
    }

    #[test]
    fn minimal_linear_config_takes_defaults() {
        let cfg = parse(r#"{"mode": "linear"}"#, RunMode::Linear).unwrap();
        assert_eq!(cfg.sim.tau, 0.0);
        assert_eq!(cfg.sim.n_particles, 10_000);
        assert_eq!(cfg.sim.dt, 0.01);
        let bath = cfg.sim.bath.as_ref().unwrap();
        assert_eq!(bath.theta1(), 1.0);
        assert_eq!(cfg.sim.restitution.e(), 0.8);
        assert_eq!(
            cfg.grid,
            Some(GridSettings {
                n: DEFAULT_GRID_N,
                extent: DEFAULT_GRID_EXTENT
            })
        );
    }

    #[test]
    fn cooling_rejects_bath_keys() {
        let err = parse(r#"{"mode": "cooling", "theta1": 2.0}"#, RunMode::Cooling).unwrap_err();
        assert!(err.to_string().contains("`theta1`"), "{err}");
        assert!(parse(r#"{"tau": 0.0}"#, RunMode::Cooling).unwrap_err().to_string().contains("`tau`"));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse(r#"{"mode": "full", "temperature": 1}"#, RunMode::Full).unwrap_err();
        assert!(err.to_string().contains("temperature"), "{err}");
        let err = parse(r#"{"grid": {"size": 4}}"#, RunMode::Linear).unwrap_err();
        assert!(err.to_string().contains("size"), "{err}");
    }

    #[test]
    fn mode_rules() {
        assert!(parse(r#"{"tau": 1.0}"#, RunMode::Linear).is_err());
        assert!(parse(r#"{"grid": {}}"#, RunMode::Full).is_err());
        assert!(parse(r#"{"mode": "full"}"#, RunMode::Linear).is_err());
        assert!(parse(r#"{"f1_table": "x.csv", "u1": [0, 0, 0]}"#, RunMode::Full).is_err());
        assert!(parse(r#"{"n_particles": 1}"#, RunMode::Full).is_err());
        assert!(parse(r#"{"epsilon": 1.5}"#, RunMode::Full).is_err());
        assert!(parse(r#"{"grid": {"n": 1}}"#, RunMode::Linear).is_err());
        assert!(parse(r#"{"grid": {"enabled": false}}"#, RunMode::Linear).unwrap().grid.is_none());
    }

    #[test]
    fn round_trip_is_identical() {
        let text = r#"{"mode": "full", "tau": 0.5, "epsilon": 0.9, "e": 0.7, "m1": 2.0, "u1": [0.1, 0, -0.2],
                       "dt": 0.005, "seed": 17, "init": {"theta0": 3.0}, "lp_p": 1.5}"#;
        let raw = RawConfig::from_json(text).unwrap();
        let again = RawConfig::from_json(&raw.to_json().unwrap()).unwrap();
        assert_eq!(raw, again);
        let resolved = parse(text, RunMode::Full).unwrap().resolved;
        let again = RawConfig::from_json(&resolved.to_json().unwrap()).unwrap();
        assert_eq!(resolved, again);
        // Resolving the resolved form is a fixed point.
        assert_eq!(resolve(&again, RunMode::Full, Path::new(".")).unwrap().resolved, resolved);
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = parse("{}", RunMode::Full).unwrap();
        apply_overrides(&mut cfg, Some(99), 3);
        assert_eq!(cfg.sim.seed, 99);
        assert_eq!(cfg.resolved.seed, Some(99));
        assert_eq!(cfg.sim.threads, 3);
    }
}
