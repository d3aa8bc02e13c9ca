//! The verification workbench: configured runs over distribution families.
//!
//! This layer turns the geometry library into a reproducible measurement
//! tool.  A TOML [`config::RunConfig`] picks a family from the built-in
//! catalog (or defines a one-dimensional custom one), a grid of control
//! parameters, seeds, and tolerances; the [`reports`] runners then produce
//! [`csv::CsvTable`] artifacts -- curvature probes, partition-function
//! scans, sampled theorem suites, weight grids, entropy comparisons, and
//! surface meshes -- each stamped with the seed, library version, and
//! configuration hash that produced it, and byte-identical across runs.
//!
//! Families are wired through [`family::FamilySpec`], which carries the
//! density and metric in every declared chart, the coordinate changes
//! between them, sampling recipes, and optional closed forms.  No spec is
//! handed out before it passes the metric self-consistency gate on a probe
//! grid, so every downstream number rests on a verified density-geometry
//! pair.

pub mod config;
pub mod csv;
pub mod family;
pub mod reports;

pub use config::{CustomFamilyConfig, MetricConfig, RunConfig, Tolerances};
pub use csv::CsvTable;
pub use family::{builtin_family, ChartMember, FamilySpec, GateRecord, BUILTIN_IDS};
pub use reports::{emit_surface_mesh, run_convergence_scan, run_report, ReportKind};
