//! Built-in family catalog.
//!
//! A [`FamilySpec`] bundles everything the report runners need about one
//! distribution family: the density and metric in one or more charts, the
//! coordinate changes linking those charts, a sampling recipe, optional
//! closed forms (partition function, scalar curvature, separation
//! distance), and the result of the self-consistency gate that every
//! family must pass before it is usable.
//!
//! Four families ship with the library:
//!
//! * `gaussian-nd` -- the exact n-dimensional gaussian with constant
//!   metric equal to its precision matrix; flat, partition function 1.
//! * `axial-2d` -- a two-dimensional family with axial symmetry, positive
//!   curvature `6 th^2 / (th^2 + r^2)^2` concentrated at the origin, and
//!   three charts (cartesian, polar, and a bounded visualization chart
//!   whose boundary circle sits at infinite separation).
//! * `cauchy-1d` -- the Lorentzian family realized as the image of a
//!   gaussian under a tangent-of-error-function map; heavy tails, yet the
//!   same (flat) geometry as its gaussian preimage.
//! * `xy-coupled` -- a plane gaussian with a cross term, plus the rotation
//!   that splits it into independent one-dimensional factors with
//!   variances 1/3 and 1.
//!
//! Control parameters are **frozen at construction**: the closures stored
//! in a spec capture the values passed to [`builtin_family`], and the
//! `ControlParams` handed to evaluation calls must carry those same values
//! (its fluctuation scale `k` is still read by downstream estimators).

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::charts::{ControlParams, CoordinateChange, DensityFamily, Point, Support};
use crate::error::{Error, Result};
use crate::geometry::{
    check_positive_definite, metric_residual_norm, MetricField, MetricProvenance,
};
use crate::special;
use crate::theorems::SamplingRecipe;
use crate::tol;

/// The catalog: every id accepted by [`builtin_family`].
pub const BUILTIN_IDS: [&str; 4] = ["gaussian-nd", "axial-2d", "cauchy-1d", "xy-coupled"];

/// Where a family's density came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DensitySource {
    /// One of the shipped catalog entries.
    Builtin(String),
    /// A parsed scalar-field expression (custom families).
    Expression(String),
}

/// Where a family's metric came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricSource {
    /// Closed-form entries coded in the catalog.
    Analytic(String),
    /// A matrix of scalar-field expressions (custom families).
    Expressions(Vec<String>),
    /// The one-dimensional self-consistency solver.
    Solve1d,
}

/// Density and metric for one chart of the family.
#[derive(Debug)]
pub struct ChartMember {
    pub chart: String,
    pub family: DensityFamily,
    pub metric: MetricField,
}

/// Outcome of the two-stage family gate.
///
/// Stage one checks the covariant self-consistency residual of the
/// primary chart on a probe cloud.  For curved families those probes sit
/// near the mode, where the primary chart is a normal chart and the
/// residual of an honest metric is quadratically small; flat families can
/// be probed anywhere.  Stage two walks every declared coordinate change
/// and checks that the secondary chart's metric pulls back to the source
/// chart's metric and that log-densities agree after the volume
/// correction, which extends the stage-one certificate to every chart.
#[derive(Debug, Clone, Copy)]
pub struct GateRecord {
    /// Largest residual infinity-norm over the primary-chart probes.
    pub max_residual: f64,
    /// Largest scaled cross-chart gap over all link probes (metric entries
    /// and volume-corrected log-densities); zero when there are no links.
    pub max_chart_gap: f64,
    /// Number of probe points checked across both stages.
    pub probes: usize,
    /// The residual threshold that was enforced.
    pub tolerance: f64,
}

type ClosedParam = Box<dyn Fn(&ControlParams) -> f64 + Send + Sync>;
type ClosedPoint = Box<dyn Fn(&[f64], &ControlParams) -> f64 + Send + Sync>;

/// A fully wired distribution family.
///
/// `members()[0]` is the primary chart; closed forms take coordinates in
/// that chart.  Construction runs the self-consistency gate on every chart
/// and fails with [`Error::FamilyGate`] if any probe exceeds
/// [`tol::FAMILY_RESIDUAL`].
pub struct FamilySpec {
    pub id: String,
    pub dim: usize,
    /// The control parameters the spec was frozen at.
    pub theta: ControlParams,
    pub density_source: DensitySource,
    pub metric_source: MetricSource,
    pub recipe: SamplingRecipe,
    pub gate: GateRecord,
    members: Vec<ChartMember>,
    links: Vec<CoordinateChange>,
    closed_z: Option<ClosedParam>,
    closed_scalar: Option<ClosedPoint>,
    closed_sep: Option<ClosedPoint>,
}

impl std::fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "FamilySpec({}, dim {}, charts {:?}, gate {:.2e})",
            self.id,
            self.dim,
            self.charts(),
            self.gate.max_residual
        )
    }
}

/// Everything needed to assemble and gate a [`FamilySpec`].
pub(crate) struct FamilyParts {
    pub id: String,
    pub dim: usize,
    pub theta: ControlParams,
    pub density_source: DensitySource,
    pub metric_source: MetricSource,
    pub members: Vec<ChartMember>,
    pub links: Vec<CoordinateChange>,
    pub recipe: SamplingRecipe,
    pub closed_z: Option<ClosedParam>,
    pub closed_scalar: Option<ClosedPoint>,
    pub closed_sep: Option<ClosedPoint>,
    /// Stage-one probes, in primary-chart coordinates.
    pub residual_probes: Vec<Vec<f64>>,
    /// Stage-two probes, one list per declared link, in the coordinates
    /// of that link's source chart.
    pub link_probes: Vec<Vec<Vec<f64>>>,
}

impl FamilySpec {
    /// Wires the parts together, checks internal consistency, and runs the
    /// two-stage gate (primary-chart residual, then per-link cross-chart
    /// agreement).
    pub(crate) fn assemble(parts: FamilyParts) -> Result<FamilySpec> {
        let FamilyParts {
            id,
            dim,
            theta,
            density_source,
            metric_source,
            members,
            links,
            recipe,
            closed_z,
            closed_scalar,
            closed_sep,
            residual_probes,
            link_probes,
        } = parts;
        if members.is_empty() {
            return Err(Error::Config(format!("family {id} declares no charts")));
        }
        if residual_probes.is_empty() {
            return Err(Error::Config(format!("family {id} declares no gate probes")));
        }
        if link_probes.len() != links.len() {
            return Err(Error::Config(format!(
                "family {id}: {} link probe lists for {} links",
                link_probes.len(),
                links.len()
            )));
        }
        for m in &members {
            if m.family.dim != dim || m.metric.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: m.family.dim });
            }
            if m.family.chart.as_ref() != m.chart || m.metric.chart.as_ref() != m.chart {
                return Err(Error::ChartMismatch {
                    expected: m.chart.clone(),
                    got: m.family.chart.to_string(),
                });
            }
        }
        for link in &links {
            for end in [&link.from, &link.to] {
                if !members.iter().any(|m| m.chart == end.as_ref()) {
                    return Err(Error::Config(format!(
                        "family {id}: link endpoint {end} is not a declared chart"
                    )));
                }
            }
        }

        // Stage one: covariant self-consistency of the primary chart.
        let primary = &members[0];
        let mut max_residual: f64 = 0.0;
        let mut checked = 0usize;
        for x in &residual_probes {
            let p = Point::new(primary.chart.clone(), x.clone());
            let r = metric_residual_norm(&primary.metric, &primary.family, &p, &theta)?;
            max_residual = max_residual.max(r);
            checked += 1;
        }
        if !(max_residual <= tol::FAMILY_RESIDUAL) {
            return Err(Error::FamilyGate(format!(
                "family {id}: metric residual {max_residual:.3e} exceeds {:.0e} \
                 over {checked} primary-chart probes",
                tol::FAMILY_RESIDUAL
            )));
        }

        // Stage two: every declared change must carry metric and density
        // of its source chart onto its target chart.
        let mut max_chart_gap: f64 = 0.0;
        for (link, pts) in links.iter().zip(&link_probes) {
            let from = members
                .iter()
                .find(|m| m.chart == link.from.as_ref())
                .expect("checked above");
            let to = members
                .iter()
                .find(|m| m.chart == link.to.as_ref())
                .expect("checked above");
            for x in pts {
                let y = link.apply_raw(x);
                let j = link.jacobian_at(x)?;
                let det = j.determinant().abs();
                if det <= 0.0 || !det.is_finite() {
                    return Err(Error::SingularJacobian(format!(
                        "family {id}: change {} -> {} at {x:?}",
                        link.from, link.to
                    )));
                }
                // Metric: g_from(x) must equal J^T g_to(y) J.
                let g_from = from.metric.eval_raw(x, &theta);
                let g_to = to.metric.eval_raw(&y, &theta);
                let pulled = j.transpose() * &g_to * &j;
                let scale = 1.0 + g_from.abs().max();
                let metric_gap = (&g_from - &pulled).abs().max() / scale;
                // Density: log rho_from(x) = log rho_to(y) + log |det J|.
                let ld_from = from.family.log_density_raw(x, &theta);
                let ld_to = to.family.log_density_raw(&y, &theta);
                let density_gap =
                    (ld_from - ld_to - det.ln()).abs() / (1.0 + ld_from.abs());
                let gap = metric_gap.max(density_gap);
                max_chart_gap = max_chart_gap.max(gap);
                checked += 1;
                if !(gap <= tol::CHART_AGREEMENT) {
                    return Err(Error::FamilyGate(format!(
                        "family {id}: charts {} and {} disagree by {gap:.3e} \
                         (limit {:.0e}) at {x:?}",
                        link.from,
                        link.to,
                        tol::CHART_AGREEMENT
                    )));
                }
            }
        }

        Ok(FamilySpec {
            id,
            dim,
            theta,
            density_source,
            metric_source,
            recipe,
            gate: GateRecord {
                max_residual,
                max_chart_gap,
                probes: checked,
                tolerance: tol::FAMILY_RESIDUAL,
            },
            members,
            links,
            closed_z,
            closed_scalar,
            closed_sep,
        })
    }

    /// The primary chart (density, metric); closed forms use its
    /// coordinates.
    pub fn primary(&self) -> &ChartMember {
        &self.members[0]
    }

    /// All chart members, primary first.
    pub fn members(&self) -> &[ChartMember] {
        &self.members
    }

    /// Chart names, primary first.
    pub fn charts(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.chart.as_str()).collect()
    }

    /// Member for a named chart.
    pub fn member(&self, chart: &str) -> Result<&ChartMember> {
        self.members
            .iter()
            .find(|m| m.chart == chart)
            .ok_or_else(|| Error::ChartMismatch {
                expected: self.charts().join("|"),
                got: chart.to_string(),
            })
    }

    /// The declared coordinate changes.
    pub fn links(&self) -> &[CoordinateChange] {
        &self.links
    }

    /// The declared change between two charts, in either orientation.
    pub fn link(&self, from: &str, to: &str) -> Result<&CoordinateChange> {
        self.links
            .iter()
            .find(|l| {
                (l.from.as_ref() == from && l.to.as_ref() == to)
                    || (l.from.as_ref() == to && l.to.as_ref() == from)
            })
            .ok_or_else(|| Error::Config(format!("no declared change between {from} and {to}")))
    }

    /// Transports a point of any declared chart into the primary chart,
    /// chaining links (forward or inverse) as needed.
    pub fn to_primary(&self, p: &Point) -> Result<Point> {
        self.transport(p, self.members[0].chart.as_str())
    }

    /// Transports a point of any declared chart into `target` by a
    /// breadth-first walk over the declared links.
    pub fn transport(&self, p: &Point, target: &str) -> Result<Point> {
        if p.chart.as_ref() == target {
            return Ok(p.clone());
        }
        let mut frontier = vec![p.clone()];
        let mut visited = vec![p.chart.to_string()];
        while let Some(current) = frontier.pop() {
            for link in &self.links {
                let next = if link.from == current.chart {
                    Some(link.apply(&current)?)
                } else if link.to == current.chart && link.has_inverse() {
                    Some(link.invert(&current)?)
                } else {
                    None
                };
                if let Some(q) = next {
                    if q.chart.as_ref() == target {
                        return Ok(q);
                    }
                    if !visited.iter().any(|c| c == q.chart.as_ref()) {
                        visited.push(q.chart.to_string());
                        frontier.push(q);
                    }
                }
            }
        }
        Err(Error::ChartMismatch { expected: target.to_string(), got: p.chart.to_string() })
    }

    /// Closed-form partition function at the frozen parameters, when the
    /// catalog carries one.
    pub fn closed_partition(&self) -> Option<f64> {
        self.closed_z.as_ref().map(|f| f(&self.theta))
    }

    /// Closed-form scalar curvature at primary-chart coordinates.
    pub fn closed_scalar_curvature(&self, x_primary: &[f64]) -> Option<f64> {
        self.closed_scalar.as_ref().map(|f| f(x_primary, &self.theta))
    }

    /// Closed-form separation distance from the mode at primary-chart
    /// coordinates.
    pub fn closed_separation(&self, x_primary: &[f64]) -> Option<f64> {
        self.closed_sep.as_ref().map(|f| f(x_primary, &self.theta))
    }
}

/// Builds a catalog family at the given control parameters.
///
/// Parameter encodings (`theta.values`):
///
/// * `gaussian-nd`: `[n]`, `[n, mu_1..mu_n]`, or
///   `[n, mu_1..mu_n, w_11, w_12, .., w_nn]` with the symmetric positive
///   definite weight matrix given as its upper triangle, row-major.
///   Defaults: zero mean, identity weight.
/// * `axial-2d`: `[scale]`, `scale >= 0.5`.
/// * `cauchy-1d`: `[mu, sigma, nu, gamma]` -- gaussian preimage location
///   and width, Lorentzian location and width; `sigma, gamma > 0`.
/// * `xy-coupled`: `[]` (no parameters).
///
/// Fails with [`Error::UnknownFamily`] for any other id and with
/// [`Error::Config`] for a malformed encoding.
pub fn builtin_family(id: &str, theta: &ControlParams) -> Result<FamilySpec> {
    match id {
        "gaussian-nd" => gaussian_nd(theta),
        "axial-2d" => axial_2d(theta),
        "cauchy-1d" => cauchy_1d(theta),
        "xy-coupled" => xy_coupled(theta),
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

fn ln_2pi() -> f64 {
    (2.0 * PI).ln()
}

fn require_finite(values: &[f64], id: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("family {id}: non-finite control parameter")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gaussian-nd
// ---------------------------------------------------------------------------

fn gaussian_nd(theta: &ControlParams) -> Result<FamilySpec> {
    let id = "gaussian-nd";
    let v = &theta.values;
    require_finite(v, id)?;
    let n = match v.first() {
        Some(&d) if d.fract() == 0.0 && (1.0..=8.0).contains(&d) => d as usize,
        _ => {
            return Err(Error::Config(
                "gaussian-nd: first parameter must be the dimension, an integer in 1..=8".into(),
            ))
        }
    };
    let tri = n * (n + 1) / 2;
    let (mu, weight) = match v.len() {
        1 => (vec![0.0; n], DMatrix::identity(n, n)),
        l if l == 1 + n => (v[1..1 + n].to_vec(), DMatrix::identity(n, n)),
        l if l == 1 + n + tri => {
            let mu = v[1..1 + n].to_vec();
            let mut w = DMatrix::zeros(n, n);
            let mut k = 1 + n;
            for i in 0..n {
                for j in i..n {
                    w[(i, j)] = v[k];
                    w[(j, i)] = v[k];
                    k += 1;
                }
            }
            (mu, w)
        }
        l => {
            return Err(Error::Config(format!(
                "gaussian-nd with dimension {n} takes 1, {}, or {} parameters, got {l}",
                1 + n,
                1 + n + tri
            )))
        }
    };
    check_positive_definite(&weight)?;
    let cov = nalgebra::Cholesky::new(weight.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("gaussian-nd weight matrix".into()))?
        .inverse();

    // Normalized log-density: -(x-mu)' W (x-mu)/2 + (log det W - n log 2 pi)/2.
    let log_norm = 0.5 * (weight.determinant().ln() - n as f64 * ln_2pi());
    let chart = "cartesian";
    let mu_d = mu.clone();
    let w_d = weight.clone();
    let family = DensityFamily::new(chart, n, Support::unbounded(n), move |x, _t| {
        let mut q = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                q += w_d[(i, j)] * (x[i] - mu_d[i]) * (x[j] - mu_d[j]);
            }
        }
        -0.5 * q + log_norm
    });
    let mu_g = mu.clone();
    let w_g = weight.clone();
    let family = family.with_grad(move |x, _t| {
        (0..x.len())
            .map(|i| -(0..x.len()).map(|j| w_g[(i, j)] * (x[j] - mu_g[j])).sum::<f64>())
            .collect()
    });
    let w_m = weight.clone();
    let metric = MetricField::new(chart, n, MetricProvenance::Analytic, move |_x, _t| w_m.clone());

    // Probes: a deterministic cloud within two standard spreads of the mean.
    let probes: Vec<Vec<f64>> = (0..5)
        .map(|j| {
            (0..n)
                .map(|i| mu[i] + 0.8 * (((i + 2 * j) as f64) * 0.9 + 0.3).sin())
                .collect()
        })
        .collect();

    let w_s = weight.clone();
    FamilySpec::assemble(FamilyParts {
        id: id.into(),
        dim: n,
        theta: theta.clone(),
        density_source: DensitySource::Builtin(id.into()),
        metric_source: MetricSource::Analytic("constant weight matrix".into()),
        members: vec![ChartMember { chart: chart.into(), family, metric }],
        links: vec![],
        recipe: SamplingRecipe::GaussianNd { mu: mu.clone(), cov },
        closed_z: Some(Box::new(|_t| 1.0)),
        closed_scalar: Some(Box::new(|_x, _t| 0.0)),
        closed_sep: Some(Box::new(move |x, _t| {
            let mut q = 0.0;
            for i in 0..x.len() {
                for j in 0..x.len() {
                    q += w_s[(i, j)] * (x[i] - mu[i]) * (x[j] - mu[j]);
                }
            }
            q.max(0.0).sqrt()
        })),
        residual_probes: probes,
        link_probes: vec![],
    })
}

// ---------------------------------------------------------------------------
// axial-2d
// ---------------------------------------------------------------------------

/// Normalization of the axial profile family:
/// `Z = sqrt(pi) (s/sqrt(2)) exp(s^2/2) erfc(s/sqrt(2))`, evaluated through
/// the scaled complementary error function so it stays finite at large `s`.
fn axial_partition(scale: f64) -> f64 {
    PI.sqrt() * (scale / 2f64.sqrt()) * special::erfcx(scale / 2f64.sqrt())
}

fn axial_2d(theta: &ControlParams) -> Result<FamilySpec> {
    let id = "axial-2d";
    let v = &theta.values;
    require_finite(v, id)?;
    if v.len() != 1 {
        return Err(Error::Config(format!(
            "axial-2d takes exactly one parameter (the scale), got {}",
            v.len()
        )));
    }
    let th = v[0];
    if !(th >= 0.5) {
        return Err(Error::Config(format!(
            "axial-2d scale must be at least 0.5 (bounded-chart derivatives become \
             too stiff below that), got {th}"
        )));
    }
    let th2 = th * th;
    let lnz = axial_partition(th).ln();
    let lnth = th.ln();

    // Cartesian chart: density (1/Z) exp(-r^2/2) th / (2 pi sqrt(th^2+r^2)).
    let cart = "cartesian";
    let cart_family = DensityFamily::new(cart, 2, Support::unbounded(2), move |x, _t| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        -0.5 * r2 + lnth - ln_2pi() - 0.5 * (th2 + r2).ln() - lnz
    })
    .with_grad(move |x, _t| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let c = 1.0 + 1.0 / (th2 + r2);
        vec![-x[0] * c, -x[1] * c]
    });
    let cart_metric = MetricField::new(cart, 2, MetricProvenance::Analytic, move |x, _t| {
        let (xx, yy) = (x[0], x[1]);
        let d = th2 + xx * xx + yy * yy;
        DMatrix::from_row_slice(
            2,
            2,
            &[(th2 + xx * xx) / d, xx * yy / d, xx * yy / d, (th2 + yy * yy) / d],
        )
    });

    // Polar chart: ds^2 = dr^2 + th^2 r^2/(th^2+r^2) dphi^2; the radial
    // coordinate is the separation distance itself.
    let polar = "polar";
    let polar_family = DensityFamily::new(
        polar,
        2,
        Support::boxed(vec![0.0, -PI], vec![f64::INFINITY, PI]),
        move |x, _t| {
            let r = x[0];
            -0.5 * r * r + r.ln() + lnth - ln_2pi() - 0.5 * (th2 + r * r).ln() - lnz
        },
    )
    .with_grad(move |x, _t| {
        let r = x[0];
        vec![-r + 1.0 / r - r / (th2 + r * r), 0.0]
    });
    let polar_metric = MetricField::new(polar, 2, MetricProvenance::Analytic, move |x, _t| {
        let r = x[0];
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0,
            th2 * r * r / (th2 + r * r),
        ]))
    });

    // Bounded chart: ds^2 = th^6/(th^2-t^2)^3 dt^2 + t^2 dphi^2 on t in
    // (0, th); the rim t = th lies at infinite separation.  Radial change
    // r = th t / sqrt(th^2 - t^2).
    let tchart = "tchart";
    let t_family = DensityFamily::new(
        tchart,
        2,
        Support::boxed(vec![0.0, -PI], vec![th, PI]),
        move |x, _t| {
            let t = x[0];
            let u = th2 - t * t;
            let l2 = th2 * t * t / u;
            -0.5 * l2 + 3.0 * lnth + t.ln() - ln_2pi() - 1.5 * u.ln() - lnz
        },
    )
    .with_grad(move |x, _t| {
        let t = x[0];
        let u = th2 - t * t;
        vec![-th2 * th2 * t / (u * u) + 1.0 / t + 3.0 * t / u, 0.0]
    });
    let t_metric = MetricField::new(tchart, 2, MetricProvenance::Analytic, move |x, _t| {
        let t = x[0];
        let u = th2 - t * t;
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            th2 * th2 * th2 / (u * u * u),
            t * t,
        ]))
    });

    let polar_to_cart = CoordinateChange::new(polar, cart, 2, |x| {
        vec![x[0] * x[1].cos(), x[0] * x[1].sin()]
    })
    .with_inverse(|y| vec![y[0].hypot(y[1]), y[1].atan2(y[0])])
    .with_jacobian(|x| {
        let (r, phi) = (x[0], x[1]);
        DMatrix::from_row_slice(2, 2, &[phi.cos(), -r * phi.sin(), phi.sin(), r * phi.cos()])
    });
    let t_to_polar = CoordinateChange::new(tchart, polar, 2, move |x| {
        vec![th * x[0] / (th2 - x[0] * x[0]).sqrt(), x[1]]
    })
    .with_inverse(move |y| vec![th * y[0] / (th2 + y[0] * y[0]).sqrt(), y[1]])
    .with_jacobian(move |x| {
        let u = th2 - x[0] * x[0];
        DMatrix::from_row_slice(2, 2, &[th * th2 / (u * u.sqrt()), 0.0, 0.0, 1.0])
    });

    FamilySpec::assemble(FamilyParts {
        id: id.into(),
        dim: 2,
        theta: theta.clone(),
        density_source: DensitySource::Builtin(id.into()),
        metric_source: MetricSource::Analytic("axial profile in three charts".into()),
        members: vec![
            ChartMember { chart: cart.into(), family: cart_family, metric: cart_metric },
            ChartMember { chart: polar.into(), family: polar_family, metric: polar_metric },
            ChartMember { chart: tchart.into(), family: t_family, metric: t_metric },
        ],
        links: vec![polar_to_cart, t_to_polar],
        recipe: SamplingRecipe::RadialProfile,
        closed_z: Some(Box::new(move |_t| axial_partition(th))),
        closed_scalar: Some(Box::new(move |x, _t| {
            let d = th2 + x[0] * x[0] + x[1] * x[1];
            6.0 * th2 / (d * d)
        })),
        closed_sep: Some(Box::new(move |x, _t| x[0].hypot(x[1]))),
        // Stage one probes sit near the mode, where the cartesian chart is
        // a normal chart: the pointwise identity of a curved family picks
        // up a curvature correction that grows with the squared radius
        // (about `s^2/th^2` here), so a radius of ~0.002 th keeps it near
        // 5e-6 -- inside the gate but far above derivative noise.  The
        // charts away from the mode are certified by the link probes.
        residual_probes: vec![
            vec![0.002 * th, 0.0],
            vec![0.0, 0.002 * th],
            vec![0.0015 * th, 0.0015 * th],
            vec![-0.002 * th, 0.001 * th],
            vec![0.001 * th, -0.002 * th],
            vec![-0.0014 * th, -0.0014 * th],
        ],
        link_probes: vec![
            // polar -> cartesian, in polar coordinates.
            vec![
                vec![0.5, 0.4],
                vec![1.4, -2.2],
                vec![2.3, 1.1],
                vec![0.9, 2.9],
                vec![3.0, -0.6],
            ],
            // tchart -> polar, in bounded-chart coordinates.
            vec![
                vec![0.35 * th, 0.5],
                vec![0.45 * th, -1.3],
                vec![0.55 * th, 2.1],
            ],
        ],
    })
}

// ---------------------------------------------------------------------------
// cauchy-1d
// ---------------------------------------------------------------------------

/// Forward tangent map: the strictly increasing diffeomorphism sending a
/// gaussian variate with location `mu` and width `sigma` to a Lorentzian
/// variate with location `nu` and width `gamma`.
fn tangent_forward(x: f64, mu: f64, sigma: f64, nu: f64, gamma: f64) -> f64 {
    let u = (x - mu) / (2f64.sqrt() * sigma);
    nu + gamma * (0.5 * PI * special::erf(u)).tan()
}

/// Inverse tangent map.
fn tangent_inverse(y: f64, mu: f64, sigma: f64, nu: f64, gamma: f64) -> f64 {
    let u = (2.0 / PI) * ((y - nu) / gamma).atan();
    mu + 2f64.sqrt() * sigma * special::erf_inv(u)
}

fn cauchy_1d(theta: &ControlParams) -> Result<FamilySpec> {
    let id = "cauchy-1d";
    let v = &theta.values;
    require_finite(v, id)?;
    if v.len() != 4 {
        return Err(Error::Config(format!(
            "cauchy-1d takes [mu, sigma, nu, gamma], got {} parameters",
            v.len()
        )));
    }
    let (mu, sigma, nu, gamma) = (v[0], v[1], v[2], v[3]);
    if !(sigma > 0.0) || !(gamma > 0.0) {
        return Err(Error::Config(format!(
            "cauchy-1d widths must be positive, got sigma {sigma}, gamma {gamma}"
        )));
    }

    // Primary chart: the Lorentzian variable itself.
    let cchart = "cauchy";
    let c_family = DensityFamily::new(cchart, 1, Support::unbounded(1), move |x, _t| {
        let d = x[0] - nu;
        gamma.ln() - PI.ln() - (gamma * gamma + d * d).ln()
    })
    .with_grad(move |x, _t| {
        let d = x[0] - nu;
        vec![-2.0 * d / (gamma * gamma + d * d)]
    });
    // Closed-form metric: g = 2 gamma^2 exp(2 w^2) / (pi (gamma^2+d^2)^2)
    // with w the gaussian preimage of the normalized offset.  Equal to the
    // pushforward (dx/dy)^2 / sigma^2 of the flat gaussian metric.
    let c_metric = MetricField::new(cchart, 1, MetricProvenance::Analytic, move |x, _t| {
        let d = x[0] - nu;
        let w = special::erf_inv((2.0 / PI) * (d / gamma).atan());
        let q = gamma * gamma + d * d;
        DMatrix::from_element(1, 1, 2.0 * gamma * gamma * (2.0 * w * w).exp() / (PI * q * q))
    });

    // Preimage chart: the plain gaussian.
    let gchart = "gauss";
    let s2 = sigma * sigma;
    let g_family = DensityFamily::new(gchart, 1, Support::unbounded(1), move |x, _t| {
        let d = x[0] - mu;
        -0.5 * d * d / s2 - (sigma * (2.0 * PI).sqrt()).ln()
    })
    .with_grad(move |x, _t| vec![-(x[0] - mu) / s2]);
    let g_metric = MetricField::new(gchart, 1, MetricProvenance::Analytic, move |_x, _t| {
        DMatrix::from_element(1, 1, 1.0 / s2)
    });

    let link = CoordinateChange::new(gchart, cchart, 1, move |x| {
        vec![tangent_forward(x[0], mu, sigma, nu, gamma)]
    })
    .with_inverse(move |y| vec![tangent_inverse(y[0], mu, sigma, nu, gamma)])
    .with_jacobian(move |x| {
        let u = (x[0] - mu) / (2f64.sqrt() * sigma);
        let t = (0.5 * PI * special::erf(u)).tan();
        let d = gamma * (1.0 + t * t) * PI.sqrt() * (-u * u).exp() / (2f64.sqrt() * sigma);
        DMatrix::from_element(1, 1, d)
    });

    FamilySpec::assemble(FamilyParts {
        id: id.into(),
        dim: 1,
        theta: theta.clone(),
        density_source: DensitySource::Builtin(id.into()),
        metric_source: MetricSource::Analytic("gaussian pushforward through the tangent map".into()),
        members: vec![
            ChartMember { chart: cchart.into(), family: c_family, metric: c_metric },
            ChartMember { chart: gchart.into(), family: g_family, metric: g_metric },
        ],
        links: vec![link],
        recipe: SamplingRecipe::GaussToCauchy { mu, sigma, nu, gamma },
        closed_z: Some(Box::new(|_t| 1.0)),
        closed_scalar: Some(Box::new(|_x, _t| 0.0)),
        closed_sep: Some(Box::new(move |x, _t| {
            let w = special::erf_inv((2.0 / PI) * ((x[0] - nu) / gamma).atan());
            2f64.sqrt() * w.abs()
        })),
        // One-dimensional geometries are flat, so the identity holds at
        // any offset; the preimage chart is certified through the link.
        residual_probes: vec![
            vec![nu],
            vec![nu + 0.8 * gamma],
            vec![nu - 0.8 * gamma],
            vec![nu + 2.5 * gamma],
            vec![nu - 4.0 * gamma],
        ],
        link_probes: vec![vec![
            vec![mu],
            vec![mu + sigma],
            vec![mu - sigma],
            vec![mu + 2.0 * sigma],
            vec![mu - 2.5 * sigma],
        ]],
    })
}

// ---------------------------------------------------------------------------
// xy-coupled
// ---------------------------------------------------------------------------

fn xy_coupled(theta: &ControlParams) -> Result<FamilySpec> {
    let id = "xy-coupled";
    if !theta.values.is_empty() {
        return Err(Error::Config(format!(
            "xy-coupled takes no parameters, got {}",
            theta.values.len()
        )));
    }
    // density A exp(-x^2 - y^2 - x y), A = sqrt(3)/(2 pi); weight matrix
    // [[2, 1], [1, 2]].
    let log_a = 0.5 * 3f64.ln() - ln_2pi();
    let xy = "xy";
    let xy_family = DensityFamily::new(xy, 2, Support::unbounded(2), move |p, _t| {
        -p[0] * p[0] - p[1] * p[1] - p[0] * p[1] + log_a
    })
    .with_grad(|p, _t| vec![-2.0 * p[0] - p[1], -2.0 * p[1] - p[0]]);
    let xy_metric = MetricField::new(xy, 2, MetricProvenance::Analytic, |_p, _t| {
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])
    });

    // The rotation (x+y, x-y)/sqrt(2) splits the density into independent
    // factors with variances 1/3 and 1.
    let rot = "rotated";
    let rot_family = DensityFamily::new(rot, 2, Support::unbounded(2), move |p, _t| {
        -1.5 * p[0] * p[0] - 0.5 * p[1] * p[1] + log_a
    })
    .with_grad(|p, _t| vec![-3.0 * p[0], -p[1]]);
    let rot_metric = MetricField::new(rot, 2, MetricProvenance::Analytic, |_p, _t| {
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]))
    });

    let s = 1.0 / 2f64.sqrt();
    let link = CoordinateChange::new(xy, rot, 2, move |p| {
        vec![s * (p[0] + p[1]), s * (p[0] - p[1])]
    })
    .with_inverse(move |q| vec![s * (q[0] + q[1]), s * (q[0] - q[1])])
    .with_jacobian(move |_p| DMatrix::from_row_slice(2, 2, &[s, s, s, -s]));

    FamilySpec::assemble(FamilyParts {
        id: id.into(),
        dim: 2,
        theta: theta.clone(),
        density_source: DensitySource::Builtin(id.into()),
        metric_source: MetricSource::Analytic("constant weight matrix".into()),
        members: vec![
            ChartMember { chart: xy.into(), family: xy_family, metric: xy_metric },
            ChartMember { chart: rot.into(), family: rot_family, metric: rot_metric },
        ],
        links: vec![link],
        recipe: SamplingRecipe::GaussianNd {
            mu: vec![0.0, 0.0],
            cov: DMatrix::from_row_slice(2, 2, &[2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]),
        },
        closed_z: Some(Box::new(|_t| 1.0)),
        closed_scalar: Some(Box::new(|_x, _t| 0.0)),
        closed_sep: Some(Box::new(|p, _t| {
            (2.0 * p[0] * p[0] + 2.0 * p[1] * p[1] + 2.0 * p[0] * p[1]).max(0.0).sqrt()
        })),
        residual_probes: vec![
            vec![0.4, 0.2],
            vec![-0.9, 0.5],
            vec![0.3, -1.1],
            vec![1.2, 0.8],
            vec![-0.5, -0.6],
        ],
        link_probes: vec![vec![
            vec![0.3, 0.4],
            vec![-0.6, 1.0],
            vec![0.8, -0.9],
        ]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::curvature_at;
    use crate::quad;
    use std::sync::Arc;

    fn params(values: Vec<f64>) -> ControlParams {
        ControlParams::new(values)
    }

    #[test]
    fn unknown_id_is_rejected() {
        let err = builtin_family("poisson-3d", &params(vec![])).unwrap_err();
        assert!(matches!(err, Error::UnknownFamily(_)));
    }

    #[test]
    fn gaussian_identity_is_flat_euclidean() {
        let theta = params(vec![2.0]);
        let spec = builtin_family("gaussian-nd", &theta).unwrap();
        assert_eq!(spec.dim, 2);
        assert!(spec.gate.max_residual <= tol::FAMILY_RESIDUAL);

        let m = spec.primary();
        let g = m.metric.eval_raw(&[0.3, -0.4], &theta);
        assert_eq!(g, DMatrix::identity(2, 2));

        let p = Point::new("cartesian", vec![0.5, 0.2]);
        let curv = curvature_at(&m.metric, &p, &theta).unwrap();
        assert!(curv.scalar.abs() < 1e-8, "scalar {}", curv.scalar);

        assert_eq!(spec.closed_partition(), Some(1.0));
        let sep = spec.closed_separation(&[3.0, 4.0]).unwrap();
        assert!((sep - 5.0).abs() < 1e-14);
        match &spec.recipe {
            SamplingRecipe::GaussianNd { mu, cov } => {
                assert_eq!(mu, &vec![0.0, 0.0]);
                assert_eq!(cov, &DMatrix::identity(2, 2));
            }
            other => panic!("unexpected recipe {other:?}"),
        }
    }

    #[test]
    fn gaussian_full_encoding_round_trips() {
        // [n, mu, upper triangle of the weight matrix].
        let theta = params(vec![2.0, 1.0, -2.0, 2.0, 0.5, 1.0]);
        let spec = builtin_family("gaussian-nd", &theta).unwrap();
        let m = spec.primary();

        let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(m.metric.eval_raw(&[0.0, 0.0], &theta), w);

        // At the mean the log-density is the normalization constant and
        // the gradient vanishes.
        let expected = 0.5 * (w.determinant().ln() - 2.0 * (2.0 * PI).ln());
        let at_mu = m.family.log_density_raw(&[1.0, -2.0], &theta);
        assert!((at_mu - expected).abs() < 1e-14);
        let grad = m.family.grad_log_density_raw(&[1.0, -2.0], &theta);
        assert!(grad.iter().all(|g| g.abs() < 1e-14));

        // Separation distance is the weighted offset norm.
        let d = [0.3, 0.4];
        let q = 2.0 * d[0] * d[0] + 1.0 * d[1] * d[1] + 2.0 * 0.5 * d[0] * d[1];
        let sep = spec.closed_separation(&[1.0 + d[0], -2.0 + d[1]]).unwrap();
        assert!((sep - q.sqrt()).abs() < 1e-14);

        // Covariance is the inverse weight matrix.
        match &spec.recipe {
            SamplingRecipe::GaussianNd { cov, .. } => {
                let id2 = cov * &w;
                assert!((id2 - DMatrix::identity(2, 2)).abs().max() < 1e-12);
            }
            other => panic!("unexpected recipe {other:?}"),
        }
    }

    #[test]
    fn gaussian_bad_encodings_are_rejected() {
        for bad in [
            vec![],
            vec![0.0],
            vec![2.5],
            vec![9.0],
            vec![2.0, 1.0],           // mean truncated
            vec![2.0, 0.0, 0.0, 1.0], // triangle truncated
        ] {
            assert!(
                builtin_family("gaussian-nd", &params(bad.clone())).is_err(),
                "encoding {bad:?} should be rejected"
            );
        }
        // Indefinite weight matrix.
        let err =
            builtin_family("gaussian-nd", &params(vec![2.0, 0.0, 0.0, 1.0, 5.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)), "got {err:?}");
    }

    #[test]
    fn axial_members_share_one_geometry() {
        let theta = params(vec![2.0]);
        let spec = builtin_family("axial-2d", &theta).unwrap();
        assert_eq!(spec.charts(), vec!["cartesian", "polar", "tchart"]);
        assert!(spec.gate.max_residual <= tol::FAMILY_RESIDUAL);
        assert_eq!(spec.gate.probes, 13);

        let cart = spec.member("cartesian").unwrap();
        let polar = spec.member("polar").unwrap();
        let tm = spec.member("tchart").unwrap();

        // Densities agree after the volume factors of the changes:
        // rho_cart = rho_polar / r and rho_polar(r) = rho_t(t) / (dr/dt).
        let (r, phi) = (1.3f64, 0.7f64);
        let cart_ld = cart.family.log_density_raw(&[r * phi.cos(), r * phi.sin()], &theta);
        let polar_ld = polar.family.log_density_raw(&[r, phi], &theta);
        assert!((cart_ld - (polar_ld - r.ln())).abs() < 1e-12);

        let th = 2.0;
        let t = th * r / (th * th + r * r).sqrt();
        let drdt = th * th * th / (th * th - t * t).powf(1.5);
        let t_ld = tm.family.log_density_raw(&[t, phi], &theta);
        assert!((polar_ld - (t_ld - drdt.ln())).abs() < 1e-12);

        // The polar metric pushed to cartesian coordinates matches the
        // analytic cartesian entries.
        let polar_metric = MetricField::new("polar", 2, MetricProvenance::Analytic, {
            move |x: &[f64], _t: &ControlParams| {
                let r = x[0];
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    1.0,
                    4.0 * r * r / (4.0 + r * r),
                ]))
            }
        });
        let link_pc = spec.link("polar", "cartesian").unwrap();
        let change = Arc::new(
            CoordinateChange::new("polar", "cartesian", 2, |x: &[f64]| {
                vec![x[0] * x[1].cos(), x[0] * x[1].sin()]
            })
            .with_inverse(|y: &[f64]| vec![y[0].hypot(y[1]), y[1].atan2(y[0])])
            .with_jacobian(|x: &[f64]| {
                let (r, phi) = (x[0], x[1]);
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[phi.cos(), -r * phi.sin(), phi.sin(), r * phi.cos()],
                )
            }),
        );
        let pushed = MetricField::pushforward(Arc::new(polar_metric), change).unwrap();
        for probe in [[0.6, 0.8], [-1.1, 0.4], [1.8, 0.9]] {
            let got = pushed.eval_raw(&probe, &theta);
            let want = cart.metric.eval_raw(&probe, &theta);
            assert!((got - want).abs().max() < 1e-12, "pushforward mismatch at {probe:?}");
        }

        // Link round-trips and transport into the primary chart.
        let p_t = Point::new("tchart", vec![1.1, 0.7]);
        let link_tp = spec.link("tchart", "polar").unwrap();
        let p_polar = link_tp.apply(&p_t).unwrap();
        let back = link_tp.invert(&p_polar).unwrap();
        assert!((back.coords[0] - 1.1).abs() < 1e-12);
        let p_cart = spec.to_primary(&p_t).unwrap();
        let via_link = link_pc.apply(&p_polar).unwrap();
        assert_eq!(p_cart.chart.as_ref(), "cartesian");
        assert!((p_cart.coords[0] - via_link.coords[0]).abs() < 1e-14);
        assert!((p_cart.coords[1] - via_link.coords[1]).abs() < 1e-14);
    }

    #[test]
    fn axial_closed_forms_match_measurements() {
        let theta = params(vec![2.0]);
        let spec = builtin_family("axial-2d", &theta).unwrap();

        // Scalar curvature against the closed form, in two charts.
        let cart = spec.member("cartesian").unwrap();
        let p = Point::new("cartesian", vec![0.56, 0.42]);
        let curv = curvature_at(&cart.metric, &p, &theta).unwrap();
        let want = spec.closed_scalar_curvature(&p.coords).unwrap();
        assert!(
            ((curv.scalar - want) / want).abs() < 1e-6,
            "cartesian scalar {} vs {}",
            curv.scalar,
            want
        );

        let polar = spec.member("polar").unwrap();
        let r = 0.7f64;
        let pp = Point::new("polar", vec![r, 1.2]);
        let curv_p = curvature_at(&polar.metric, &pp, &theta).unwrap();
        let want_p = 6.0 * 4.0 / ((4.0 + r * r) * (4.0 + r * r));
        assert!(
            ((curv_p.scalar - want_p) / want_p).abs() < 1e-6,
            "polar scalar {} vs {}",
            curv_p.scalar,
            want_p
        );

        // Closed-form partition function against direct radial quadrature
        // of Z = Int_0^inf th r exp(-r^2/2) / sqrt(th^2+r^2) dr.
        let th = 2.0;
        let q = quad::integrate(
            |r| th * r * (-0.5 * r * r).exp() / (th * th + r * r).sqrt(),
            0.0,
            40.0,
            1e-12,
        )
        .unwrap();
        let closed = spec.closed_partition().unwrap();
        assert!(
            ((closed - q.value) / q.value).abs() < 1e-9,
            "closed {} vs quadrature {}",
            closed,
            q.value
        );

        // Separation distance in the primary chart is the plain radius.
        assert!((spec.closed_separation(&[0.3, 0.4]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn axial_parameter_validation() {
        assert!(builtin_family("axial-2d", &params(vec![0.3])).is_err());
        assert!(builtin_family("axial-2d", &params(vec![1.0, 2.0])).is_err());
        assert!(builtin_family("axial-2d", &params(vec![f64::NAN])).is_err());
        assert!(builtin_family("axial-2d", &params(vec![0.5])).is_ok());
    }

    #[test]
    fn cauchy_metric_is_the_gaussian_pushforward() {
        let theta = params(vec![0.4, 1.3, -0.2, 0.9]);
        let spec = builtin_family("cauchy-1d", &theta).unwrap();
        assert!(spec.gate.max_residual <= tol::FAMILY_RESIDUAL);
        let (mu, sigma, nu, gamma) = (0.4, 1.3, -0.2, 0.9);

        // Pin the map: the gaussian location lands on the Lorentzian
        // location, and the median quarter-turn lands one width away.
        let link = spec.link("gauss", "cauchy").unwrap();
        assert!((link.apply_raw(&[mu])[0] - nu).abs() < 1e-14);
        let half = mu + 2f64.sqrt() * sigma * special::erf_inv(0.5);
        assert!((link.apply_raw(&[half])[0] - (nu + gamma)).abs() < 1e-12);

        // Analytic metric equals the pushforward of the flat gaussian
        // metric through the map.
        let g_metric = MetricField::new("gauss", 1, MetricProvenance::Analytic, move |_x, _t| {
            DMatrix::from_element(1, 1, 1.0 / (sigma * sigma))
        });
        let change = Arc::new(
            CoordinateChange::new("gauss", "cauchy", 1, move |x: &[f64]| {
                vec![tangent_forward(x[0], mu, sigma, nu, gamma)]
            })
            .with_inverse(move |y: &[f64]| vec![tangent_inverse(y[0], mu, sigma, nu, gamma)])
            .with_jacobian(move |x: &[f64]| {
                let u = (x[0] - mu) / (2f64.sqrt() * sigma);
                let t = (0.5 * PI * special::erf(u)).tan();
                DMatrix::from_element(
                    1,
                    1,
                    gamma * (1.0 + t * t) * PI.sqrt() * (-u * u).exp() / (2f64.sqrt() * sigma),
                )
            }),
        );
        let pushed = MetricField::pushforward(Arc::new(g_metric), change).unwrap();
        let cm = &spec.member("cauchy").unwrap().metric;
        for d in [-2.5f64, -0.8, 0.0, 0.7, 3.0] {
            let y = [nu + d * gamma];
            let got = cm.eval_raw(&y, &theta)[(0, 0)];
            let want = pushed.eval_raw(&y, &theta)[(0, 0)];
            assert!(
                ((got - want) / want).abs() < 1e-10,
                "metric mismatch at offset {d}: {got} vs {want}"
            );
        }

        // The potential of the image family is exactly minus the squared
        // gaussian preimage offset: S = -w^2, so Z = exp(0) = 1.
        let member = spec.member("cauchy").unwrap();
        for d in [-1.7f64, 0.0, 0.6, 2.2] {
            let y = [nu + d * gamma];
            let s = crate::gaussrep::potential_raw(&member.metric, &member.family, &y, &theta);
            let w = special::erf_inv((2.0 / PI) * d.atan());
            assert!((s + w * w).abs() < 1e-12, "potential {s} vs {}", -w * w);
        }
        assert_eq!(spec.closed_partition(), Some(1.0));

        // Separation: sqrt(2) |w|.
        let y = nu + 2.0 * gamma;
        let w = special::erf_inv((2.0 / PI) * 2f64.atan());
        assert!((spec.closed_separation(&[y]).unwrap() - 2f64.sqrt() * w).abs() < 1e-13);
    }

    #[test]
    fn cauchy_parameter_validation() {
        assert!(builtin_family("cauchy-1d", &params(vec![0.0, 1.0, 0.0])).is_err());
        assert!(builtin_family("cauchy-1d", &params(vec![0.0, -1.0, 0.0, 1.0])).is_err());
        assert!(builtin_family("cauchy-1d", &params(vec![0.0, 1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn xy_rotation_decouples() {
        let theta = params(vec![]);
        let spec = builtin_family("xy-coupled", &theta).unwrap();
        assert!(builtin_family("xy-coupled", &params(vec![1.0])).is_err());

        let xym = spec.member("xy").unwrap();
        let rot = spec.member("rotated").unwrap();
        let link = spec.link("xy", "rotated").unwrap();

        // The rotation has unit jacobian, so log-densities transport with
        // no volume correction.
        for p in [[0.4, 0.2], [-0.9, 0.5], [1.2, 0.8]] {
            let q = link.apply_raw(&p);
            let a = xym.family.log_density_raw(&p, &theta);
            let b = rot.family.log_density_raw(&q, &theta);
            assert!((a - b).abs() < 1e-13, "density mismatch at {p:?}");
        }

        // Rotated factors: variances 1/3 and 1 mean the rotated metric is
        // diag(3, 1); check it as the pushforward of the coupled metric.
        let g = rot.metric.eval_raw(&[0.0, 0.0], &theta);
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]));
        let s = 1.0 / 2f64.sqrt();
        let xy_metric = MetricField::new("xy", 2, MetricProvenance::Analytic, |_p, _t| {
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])
        });
        let change = Arc::new(
            CoordinateChange::new("xy", "rotated", 2, move |p: &[f64]| {
                vec![s * (p[0] + p[1]), s * (p[0] - p[1])]
            })
            .with_inverse(move |q: &[f64]| vec![s * (q[0] + q[1]), s * (q[0] - q[1])])
            .with_jacobian(move |_p: &[f64]| DMatrix::from_row_slice(2, 2, &[s, s, s, -s])),
        );
        let pushed = MetricField::pushforward(Arc::new(xy_metric), change).unwrap();
        let got = pushed.eval_raw(&[0.3, -0.7], &theta);
        assert!((got - g).abs().max() < 1e-14);

        // Flat: curvature vanishes, partition is exactly one, separation
        // is the weighted norm.
        let curv =
            curvature_at(&xym.metric, &Point::new("xy", vec![0.2, -0.3]), &theta).unwrap();
        assert!(curv.scalar.abs() < 1e-10);
        assert_eq!(spec.closed_partition(), Some(1.0));
        let sep = spec.closed_separation(&[1.0, 1.0]).unwrap();
        assert!((sep - 6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn every_builtin_passes_its_gate() {
        let cases = [
            ("gaussian-nd", vec![3.0]),
            ("axial-2d", vec![1.0]),
            ("cauchy-1d", vec![0.0, 1.0, 0.0, 1.0]),
            ("xy-coupled", vec![]),
        ];
        for (id, values) in cases {
            let spec = builtin_family(id, &params(values)).unwrap();
            assert!(
                spec.gate.max_residual <= spec.gate.tolerance,
                "{id}: residual {} over {} probes",
                spec.gate.max_residual,
                spec.gate.probes
            );
            assert!(spec.gate.probes >= 5, "{id}: too few probes");
        }
    }
}
