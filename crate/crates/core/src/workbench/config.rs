//! Run configuration: TOML in, reports out.
//!
//! A [`RunConfig`] names a family (catalog id or a custom one-dimensional
//! definition), a grid of control-parameter rows, sampling settings, and
//! output paths.  The printed form is canonical: `parse(print(c)) == c`,
//! and [`RunConfig::config_hash`] fingerprints that canonical form so
//! emitted tables can record exactly which configuration produced them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::charts::{ControlParams, DensityFamily, Support};
use crate::error::{Error, Result};
use crate::fieldexpr::{EvalContext, FieldExpression};
use crate::geometry::{solve_metric_1d, MetricField, MetricProvenance};
use crate::theorems::SamplingRecipe;
use crate::tol;
use crate::workbench::family::{
    builtin_family, ChartMember, DensitySource, FamilyParts, FamilySpec, MetricSource,
    BUILTIN_IDS,
};

/// Per-run tolerance overrides.  Defaults match the library-wide policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Rows with any |z| above this are flagged in theorem reports.
    pub z_flag: f64,
    /// Relative mismatch against a closed-form partition function that
    /// flags a row.
    pub partition_rel: f64,
    /// Relative mismatch against a closed-form curvature that flags a row.
    pub curvature_rel: f64,
    /// Absolute quadrature target for entropy integrals.
    pub quad_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            z_flag: tol::Z_FLAG,
            partition_rel: 1e-6,
            curvature_rel: 1e-5,
            quad_abs: 1e-9,
        }
    }
}

/// Metric source for a custom family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricConfig {
    /// Closed-form entries in the expression language, row-major,
    /// `dim * dim` of them.
    Expressions { entries: Vec<String> },
    /// Solve the one-dimensional self-consistency equation on `[lo, hi]`
    /// with the given node count.
    #[serde(rename = "solve-1d")]
    Solve1d { lo: f64, hi: f64, nodes: usize },
}

/// A user-defined family.  Only one-dimensional definitions are accepted;
/// higher dimensions are served by the built-in catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFamilyConfig {
    pub dim: usize,
    /// Chart name the definition lives in.
    pub chart: String,
    /// Log-density in the expression language (`x1`, controls `t1..`).
    pub log_density: String,
    /// Support box, one `(lo, hi)` pair per coordinate.
    pub support: Vec<(f64, f64)>,
    pub metric: MetricConfig,
}

/// One full run: family, control grid, sampling, outputs, tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog id (`gaussian-nd`, `axial-2d`, `cauchy-1d`, `xy-coupled`)
    /// or the name of the custom family defined below.
    pub family: String,
    /// Control-parameter rows; one output row per entry.
    pub theta: Vec<Vec<f64>>,
    /// Fluctuation scale.
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    /// Highest even moment checked by the theorem suite.
    #[serde(default = "default_moment_max")]
    pub moment_max: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Row count for surface meshes and grids.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomFamilyConfig>,
}

fn default_k() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    0x0BD6_A119
}
fn default_sample_size() -> usize {
    100_000
}
fn default_moment_max() -> usize {
    4
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_resolution() -> usize {
    200
}

impl RunConfig {
    /// A minimal configuration for the given family and control grid;
    /// every other field takes its default.
    pub fn new(family: impl Into<String>, theta: Vec<Vec<f64>>) -> Self {
        RunConfig {
            family: family.into(),
            theta,
            k: default_k(),
            seed: default_seed(),
            sample_size: default_sample_size(),
            moment_max: default_moment_max(),
            out_dir: default_out_dir(),
            resolution: default_resolution(),
            tolerances: Tolerances::default(),
            custom: None,
        }
    }

    /// Parses the TOML form.  Unknown keys are rejected.
    pub fn parse(src: &str) -> Result<RunConfig> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and parses a TOML file.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let src = std::fs::read_to_string(path)?;
        let cfg = Self::parse(&src)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML form; `parse(print(c)) == c`.
    pub fn print(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration serializes to TOML")
    }

    /// FNV-1a fingerprint of the canonical form, as 16 hex digits.
    pub fn config_hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.print().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Structural checks that do not need to build the family.
    pub fn validate(&self) -> Result<()> {
        if self.family.is_empty() {
            return Err(Error::Config("family id is empty".into()));
        }
        if self.theta.is_empty() {
            return Err(Error::Config("control grid is empty".into()));
        }
        for (i, row) in self.theta.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("control row {i} has a non-finite entry")));
            }
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("fluctuation scale must be positive, got {}", self.k)));
        }
        if self.sample_size < 100 {
            return Err(Error::Config(format!(
                "sample size must be at least 100, got {}",
                self.sample_size
            )));
        }
        if !(1..=8).contains(&self.moment_max) {
            return Err(Error::Config(format!(
                "moment order must lie in 1..=8, got {}",
                self.moment_max
            )));
        }
        if self.resolution < 2 {
            return Err(Error::Config(format!(
                "resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("z_flag", t.z_flag),
            ("partition_rel", t.partition_rel),
            ("curvature_rel", t.curvature_rel),
            ("quad_abs", t.quad_abs),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("output directory is empty".into()));
        }
        if self.out_dir.exists() && !self.out_dir.is_dir() {
            return Err(Error::Config(format!(
                "output path {} exists and is not a directory",
                self.out_dir.display()
            )));
        }
        if let Some(custom) = &self.custom {
            if BUILTIN_IDS.contains(&self.family.as_str()) {
                return Err(Error::Config(format!(
                    "custom family shadows the catalog id {}",
                    self.family
                )));
            }
            custom.validate(&self.theta)?;
        }
        Ok(())
    }

    /// Control parameters for one grid row, carrying the run's
    /// fluctuation scale.
    pub fn control_params(&self, row: usize) -> Result<ControlParams> {
        let values = self
            .theta
            .get(row)
            .ok_or_else(|| {
                Error::Config(format!("control row {row} out of range 0..{}", self.theta.len()))
            })?
            .clone();
        Ok(ControlParams::with_k(values, self.k))
    }

    /// Builds the family frozen at one grid row: the catalog entry named
    /// by `family`, or the custom definition when one is present.
    pub fn build_family(&self, row: usize) -> Result<FamilySpec> {
        let theta = self.control_params(row)?;
        match &self.custom {
            Some(custom) => custom.build(&self.family, &theta),
            None => builtin_family(&self.family, &theta),
        }
    }
}

impl CustomFamilyConfig {
    fn validate(&self, grid: &[Vec<f64>]) -> Result<()> {
        if self.dim != 1 {
            return Err(Error::Config(format!(
                "custom families are one-dimensional; for dimension {} use a catalog \
                 family ({})",
                self.dim,
                BUILTIN_IDS.join(", ")
            )));
        }
        if self.chart.is_empty() {
            return Err(Error::Config("custom chart name is empty".into()));
        }
        if self.support.len() != self.dim {
            return Err(Error::Config(format!(
                "custom support has {} intervals for dimension {}",
                self.support.len(),
                self.dim
            )));
        }
        for &(lo, hi) in &self.support {
            if !(lo < hi) {
                return Err(Error::Config(format!("support interval [{lo}, {hi}] is empty")));
            }
        }
        let density = FieldExpression::parse(&self.log_density)?;
        if density.coord_arity() > self.dim {
            return Err(Error::Config(format!(
                "log-density uses {} coordinates but the family has {}",
                density.coord_arity(),
                self.dim
            )));
        }
        let mut control_arity = density.control_arity();
        match &self.metric {
            MetricConfig::Expressions { entries } => {
                if entries.len() != self.dim * self.dim {
                    return Err(Error::Config(format!(
                        "metric needs {} entries for dimension {}, got {}",
                        self.dim * self.dim,
                        self.dim,
                        entries.len()
                    )));
                }
                for src in entries {
                    let e = FieldExpression::parse(src)?;
                    if e.coord_arity() > self.dim {
                        return Err(Error::Config(format!(
                            "metric entry `{src}` uses {} coordinates but the family has {}",
                            e.coord_arity(),
                            self.dim
                        )));
                    }
                    control_arity = control_arity.max(e.control_arity());
                }
            }
            MetricConfig::Solve1d { lo, hi, nodes } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Config(format!(
                        "solver window [{lo}, {hi}] must be finite and increasing"
                    )));
                }
                if *nodes < 8 {
                    return Err(Error::Config(format!(
                        "solver needs at least 8 nodes, got {nodes}"
                    )));
                }
            }
        }
        for (i, row) in grid.iter().enumerate() {
            if row.len() < control_arity {
                return Err(Error::Config(format!(
                    "control row {i} has {} entries but the expressions use {}",
                    row.len(),
                    control_arity
                )));
            }
        }
        Ok(())
    }

    /// Builds the custom family at frozen control parameters and runs it
    /// through the same self-consistency gate as the catalog entries.
    fn build(&self, id: &str, theta: &ControlParams) -> Result<FamilySpec> {
        self.validate(std::slice::from_ref(&theta.values))?;
        let density = FieldExpression::parse(&self.log_density)?;
        let frozen = theta.values.clone();
        let chart = self.chart.clone();
        let (lo, hi) = self.support[0];
        let family = DensityFamily::new(
            chart.clone(),
            1,
            Support::boxed(vec![lo], vec![hi]),
            move |x, _t| {
                density
                    .eval(&EvalContext { x, theta: &frozen })
                    .unwrap_or(f64::NAN)
            },
        );

        let (metric, metric_source, window) = match &self.metric {
            MetricConfig::Expressions { entries } => {
                let parsed = FieldExpression::parse(&entries[0])?;
                let frozen = theta.values.clone();
                let metric = MetricField::new(
                    chart.clone(),
                    1,
                    MetricProvenance::Analytic,
                    move |x, _t| {
                        nalgebra::DMatrix::from_element(
                            1,
                            1,
                            parsed
                                .eval(&EvalContext { x, theta: &frozen })
                                .unwrap_or(f64::NAN),
                        )
                    },
                );
                let window = (lo.max(-2.5), hi.min(2.5));
                (metric, MetricSource::Expressions(entries.clone()), window)
            }
            MetricConfig::Solve1d { lo: wlo, hi: whi, nodes } => {
                let solved = solve_metric_1d(&family, theta, *wlo, *whi, *nodes)?;
                (
                    solved.into_metric_field(chart.clone()),
                    MetricSource::Solve1d,
                    (*wlo, *whi),
                )
            }
        };

        // Gate probes: interior fractions of the working window, clear of
        // both the support boundary and any solver-spline edge.
        let probes: Vec<Vec<f64>> = [0.25, 0.4, 0.5, 0.6, 0.75]
            .iter()
            .map(|f| vec![window.0 + f * (window.1 - window.0)])
            .collect();

        FamilySpec::assemble(FamilyParts {
            id: id.to_string(),
            dim: 1,
            theta: theta.clone(),
            density_source: DensitySource::Expression(self.log_density.clone()),
            metric_source,
            members: vec![ChartMember { chart, family, metric }],
            links: vec![],
            recipe: SamplingRecipe::Univariate,
            closed_z: None,
            closed_scalar: None,
            closed_sep: None,
            residual_probes: probes,
            link_probes: vec![],
        })
    }
}
