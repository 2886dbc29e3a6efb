//! Kinetic solvers for a space-homogeneous gas of inelastic hard spheres
//! coupled to a fixed particle thermal bath:
//!
//! ```text
//! ∂t f = τ Q(f, f) + L(f)
//! ```
//!
//! `Q` is the inelastic grain–grain collision operator and `L` a linear
//! scattering operator against a host distribution `F1`. The crate provides
//! the collision kinematics, bath models, a DSMC particle solver, ensemble
//! diagnostics, and a deterministic velocity-grid discretization of `L`.

pub mod background;
pub mod carleman;
pub mod dsmc;
pub mod error;
pub mod kinematics;
pub mod observables;
pub mod quadrature;

pub type Vec3 = nalgebra::Vector3<f64>;

pub use background::{BathKind, BathParams, TabulatedDensity};
pub use carleman::{GridSpec, KernelGrid, OrbitGrid, SteadyState};
pub use dsmc::{Ensemble, SimConfig, Trajectory};
pub use error::{Error, Result};
pub use kinematics::{RestitutionParams, VelocityPair};
pub use observables::{BoundParams, MomentRecord};
