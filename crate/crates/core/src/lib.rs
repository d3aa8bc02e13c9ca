//! Riemannian geometry induced by families of continuous probability
//! densities.
//!
//! A family of densities `rho(x|theta)` on an open manifold induces a metric
//! `g_ij(x|theta)` through a covariant self-consistency equation relating the
//! log-density, the Levi-Civita connection, and the invariant volume element.
//! On top of that metric the library builds connection coefficients,
//! curvature, geodesics, geodesic-sphere areas, the partition function of the
//! Riemannian gaussian representation, second-order asymptotic expansions,
//! sampling-based fluctuation theorems, and thermodynamic estimates.
//!
//! Modules are layered bottom-up:
//!
//! * [`special`], [`quad`], [`rng`], [`sum`]: numerical plumbing.
//! * [`fieldexpr`]: a small expression language for scalar fields.
//! * [`charts`]: points, charts, coordinate changes, tensor transport.
//! * [`geometry`]: metric fields, connection, curvature, residuals.
//! * [`geodesics`]: shooting, boundary-value solves, sphere areas.
//! * [`gaussrep`]: invariant weight, information potential, partition.
//! * [`expansion`]: second-order spherical expansion of the density.
//! * [`theorems`]: samplers and Monte-Carlo fluctuation identities.
//! * [`thermo`]: thermodynamic estimates with curvature corrections.
//! * [`workbench`]: built-in families, reports, CSV emission, config.
//! * [`verify`]: the end-to-end check suite used by the CLI.

pub mod charts;
pub mod error;
pub mod expansion;
pub mod fieldexpr;
pub mod gaussrep;
pub mod geodesics;
pub mod geometry;
pub mod quad;
pub mod rng;
pub mod special;
pub mod sum;
pub mod theorems;
pub mod thermo;
pub mod tol;
pub mod verify;
pub mod workbench;

pub use charts::{ControlParams, CoordinateChange, DensityFamily, Point, Support, TensorValue};
pub use error::{Error, Result};
pub use geometry::{ConnectionValue, CurvatureValue, MetricField};
pub use workbench::family::FamilySpec;
