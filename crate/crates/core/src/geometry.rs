//! Metric fields and the objects derived from them: Levi-Civita connection
//! coefficients, the Riemann/Ricci/scalar curvature, the self-consistency
//! residual tying a metric to its density family, and a damped fixed-point
//! solver for the one-dimensional case.
//!
//! Sign conventions: the fourth-rank curvature is
//!
//! ```text
//! R_ijkl = 1/2 (g_il,jk + g_jk,il - g_jl,ik - g_ik,jl)
//!        + g_mn (G^m_il G^n_jk - G^m_jl G^n_ik)
//! ```
//!
//! (`G` the Christoffel symbols, commas partial derivatives), under which
//! the unit 2-sphere has `R_1212 = sin^2 q1 > 0`, the Ricci tensor is
//! `R_ij = g^kl R_kilj`, and the scalar `R = g^ij R_ij` is `+2` on the unit
//! sphere.
//!
//! Solving the self-consistency equation in dimension two and higher is out
//! of scope; analytic metrics are certified through [`metric_residual`]
//! instead, and [`solve_metric_1d`] covers the one-dimensional case.

use crate::charts::{ControlParams, DensityFamily, Point};
use crate::error::{Error, Result};
use crate::tol;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// How a metric field came to be; carried along for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricProvenance {
    /// Closed-form components.
    Analytic,
    /// Grid solution of the one-dimensional self-consistency equation.
    Solved1d,
    /// Transported from another chart.
    Pushforward,
}

type MetricEval = dyn Fn(&[f64], &ControlParams) -> DMatrix<f64> + Send + Sync;
type MetricGrad = dyn Fn(&[f64], &ControlParams) -> Vec<DMatrix<f64>> + Send + Sync;

/// A Riemannian metric on one named chart.
pub struct MetricField {
    pub chart: Arc<str>,
    pub dim: usize,
    pub provenance: MetricProvenance,
    eval: Box<MetricEval>,
    /// Analytic first derivatives: entry `k` holds the matrix of
    /// `d g_ij / d x^k`.
    grad: Option<Box<MetricGrad>>,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "MetricField(chart {}, dim {}, {:?}, analytic grad {})",
            self.chart,
            self.dim,
            self.provenance,
            self.grad.is_some()
        )
    }
}

impl MetricField {
    pub fn new(
        chart: impl Into<Arc<str>>,
        dim: usize,
        provenance: MetricProvenance,
        eval: impl Fn(&[f64], &ControlParams) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        MetricField {
            chart: chart.into(),
            dim,
            provenance,
            eval: Box::new(eval),
            grad: None,
        }
    }

    pub fn with_grad(
        mut self,
        grad: impl Fn(&[f64], &ControlParams) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }

    pub fn has_analytic_grad(&self) -> bool {
        self.grad.is_some()
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if p.chart != self.chart {
            return Err(Error::ChartMismatch {
                expected: self.chart.to_string(),
                got: p.chart.to_string(),
            });
        }
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.dim() });
        }
        Ok(())
    }

    /// Metric components at a point, with the chart name enforced.
    pub fn at(&self, p: &Point, theta: &ControlParams) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        let g = (self.eval)(&p.coords, theta);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!(
                "non-finite metric components at {:?}",
                p.coords
            )));
        }
        Ok(g)
    }

    /// Raw evaluation for hot loops that already validated the chart.
    #[inline]
    pub fn eval_raw(&self, x: &[f64], theta: &ControlParams) -> DMatrix<f64> {
        (self.eval)(x, theta)
    }

    /// First derivatives `d g / d x^k`, analytic when declared, otherwise
    /// second-order central differences with step `1e-5 (1 + |x_k|)`.
    pub fn grad_raw(&self, x: &[f64], theta: &ControlParams) -> Vec<DMatrix<f64>> {
        if let Some(g) = &self.grad {
            return g(x, theta);
        }
        let n = self.dim;
        let mut out = Vec::with_capacity(n);
        let mut xp = x.to_vec();
        for k in 0..n {
            let h = 1e-5 * (1.0 + x[k].abs());
            xp[k] = x[k] + h;
            let gp = (self.eval)(&xp, theta);
            xp[k] = x[k] - h;
            let gm = (self.eval)(&xp, theta);
            xp[k] = x[k];
            out.push((gp - gm) / (2.0 * h));
        }
        out
    }

    /// Pushforward to the target chart of `change`: evaluates at the
    /// preimage and transports the two covariant indices.
    pub fn pushforward(
        source: Arc<MetricField>,
        change: Arc<crate::charts::CoordinateChange>,
    ) -> Result<MetricField> {
        if source.chart != change.from {
            return Err(Error::ChartMismatch {
                expected: change.from.to_string(),
                got: source.chart.to_string(),
            });
        }
        if !change.has_inverse() {
            return Err(Error::Config(
                "metric pushforward requires an invertible coordinate change".into(),
            ));
        }
        let dim = source.dim;
        let chart = change.to.clone();
        let src = Arc::clone(&source);
        let chg = Arc::clone(&change);
        Ok(MetricField::new(
            chart,
            dim,
            MetricProvenance::Pushforward,
            move |y: &[f64], theta: &ControlParams| {
                let x = chg.invert_raw(y).expect("inverse checked at construction");
                let g_old = src.eval_raw(&x, theta);
                let j = chg
                    .jacobian_at(&x)
                    .expect("jacobian must exist on the support");
                let jinv = j.try_inverse().expect("jacobian must be invertible");
                // g_new = J^-T g_old J^-1.
                jinv.transpose() * g_old * jinv
            },
        ))
    }
}

/// Verifies symmetric positive definiteness via Cholesky.
pub fn check_positive_definite(g: &DMatrix<f64>) -> Result<()> {
    let sym_err = (g - g.transpose()).abs().max();
    if sym_err > 1e-8 * (1.0 + g.abs().max()) {
        return Err(Error::NotPositiveDefinite(format!(
            "asymmetry {sym_err:.3e}"
        )));
    }
    if g.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(
            "Cholesky factorization failed".into(),
        ));
    }
    Ok(())
}

/// Christoffel symbols of the second kind at one point; `data[k][i][j]`
/// flattened as `k n^2 + i n + j`, symmetric in `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionValue {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl ConnectionValue {
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    /// Trace `G^k_{ik}` over the upper and second lower index.
    pub fn trace(&self, i: usize) -> f64 {
        (0..self.dim).map(|k| self.get(k, i, k)).sum()
    }
}

/// Fourth-rank curvature with all indices lowered (`riemann[i][j][k][l]`),
/// the Ricci tensor, the scalar, and the metric at the same point.
#[derive(Debug, Clone)]
pub struct CurvatureValue {
    pub dim: usize,
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    pub metric: DMatrix<f64>,
}

impl CurvatureValue {
    #[inline]
    pub fn r(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.dim;
        self.riemann[((i * n + j) * n + k) * n + l]
    }
}

#[inline]
fn inverse_spd(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    g.clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::NotPositiveDefinite("metric is not invertible".into()))
}

pub(crate) fn christoffel_raw(
    metric: &MetricField,
    x: &[f64],
    theta: &ControlParams,
) -> Result<ConnectionValue> {
    let n = metric.dim;
    let g = metric.eval_raw(x, theta);
    let ginv = inverse_spd(&g)?;
    let dg = metric.grad_raw(x, theta);
    let mut data = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += ginv[(k, m)] * (dg[j][(i, m)] + dg[i][(j, m)] - dg[m][(i, j)]);
                }
                let v = 0.5 * acc;
                data[(k * n + i) * n + j] = v;
                data[(k * n + j) * n + i] = v;
            }
        }
    }
    Ok(ConnectionValue { dim: n, data })
}

/// Levi-Civita connection coefficients at a point.
pub fn christoffel_at(
    metric: &MetricField,
    p: &Point,
    theta: &ControlParams,
) -> Result<ConnectionValue> {
    metric.check_point(p)?;
    christoffel_raw(metric, &p.coords, theta)
}

/// Second derivatives `d^2 g_ij / d x^a d x^b`, returned as
/// `d2[a][b] = matrix`, symmetrized over `(a, b)`.
///
/// When the metric declares analytic first derivatives they are differenced
/// once (fourth-order central); otherwise fourth-order stencils difference
/// the metric itself twice.  The step is `1e-4 (1 + |x|)` per axis for
/// closed-form evaluators and a larger `2.5e-3 (1 + |x|)` for evaluators
/// that are themselves finite-difference products (pushforwards, solved
/// grids), whose noise floor the `1/h^2` amplification would otherwise
/// swamp the result with.
fn metric_second_derivatives(
    metric: &MetricField,
    x: &[f64],
    theta: &ControlParams,
) -> Vec<Vec<DMatrix<f64>>> {
    let n = metric.dim;
    let base = match metric.provenance {
        MetricProvenance::Analytic => tol::SECOND_DERIV_STEP,
        _ => tol::NOISY_SECOND_DERIV_STEP,
    };
    let step = |a: usize| base * (1.0 + x[a].abs());
    let mut d2 = vec![vec![DMatrix::zeros(n, n); n]; n];
    if metric.has_analytic_grad() {
        // One fourth-order central difference of the analytic gradient.
        let mut xp = x.to_vec();
        for a in 0..n {
            let h = step(a);
            let sample = |offset: f64, xp: &mut Vec<f64>| {
                xp[a] = x[a] + offset * h;
                let g = metric.grad_raw(xp, theta);
                xp[a] = x[a];
                g
            };
            let p2 = sample(2.0, &mut xp);
            let p1 = sample(1.0, &mut xp);
            let m1 = sample(-1.0, &mut xp);
            let m2 = sample(-2.0, &mut xp);
            for b in 0..n {
                d2[a][b] = (8.0 * (&p1[b] - &m1[b]) - (&p2[b] - &m2[b])) / (12.0 * h);
            }
        }
    } else {
        // Fourth-order five-point stencil on the diagonal; fourth-order
        // first-derivative stencils composed for the mixed entries.
        let eval = |y: &[f64]| metric.eval_raw(y, theta);
        let mut xp = x.to_vec();
        for a in 0..n {
            let h = step(a);
            let sample = |offset: f64, xp: &mut Vec<f64>| {
                xp[a] = x[a] + offset * h;
                let g = eval(xp);
                xp[a] = x[a];
                g
            };
            let g2p = sample(2.0, &mut xp);
            let g1p = sample(1.0, &mut xp);
            let g0 = eval(x);
            let g1m = sample(-1.0, &mut xp);
            let g2m = sample(-2.0, &mut xp);
            // Grouped so the stencil cancels exactly when the samples are
            // bitwise equal (constant metric): 16*(v+v) - (v+v) - 30*v is a
            // true zero in floating point, while the ungrouped sum leaves an
            // O(eps * |g|) residue that 1/h^2 amplifies to ~1e-9.
            d2[a][a] =
                (16.0 * (&g1p + &g1m) - (&g2p + &g2m) - 30.0 * &g0) / (12.0 * h * h);
        }
        let d1 = |y: &[f64], b: usize| -> DMatrix<f64> {
            let h = tol::SECOND_DERIV_STEP * (1.0 + y[b].abs());
            let mut yp = y.to_vec();
            let at = |o: f64, yp: &mut Vec<f64>| {
                yp[b] = y[b] + o * h;
                let g = eval(yp);
                yp[b] = y[b];
                g
            };
            let p2 = at(2.0, &mut yp);
            let p1 = at(1.0, &mut yp);
            let m1 = at(-1.0, &mut yp);
            let m2 = at(-2.0, &mut yp);
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        };
        for a in 0..n {
            for b in (a + 1)..n {
                let h = step(a);
                let mut xp = x.to_vec();
                let at = |o: f64, xp: &mut Vec<f64>| {
                    xp[a] = x[a] + o * h;
                    let g = d1(xp, b);
                    xp[a] = x[a];
                    g
                };
                let p2 = at(2.0, &mut xp);
                let p1 = at(1.0, &mut xp);
                let m1 = at(-1.0, &mut xp);
                let m2 = at(-2.0, &mut xp);
                let mixed = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
                d2[a][b] = mixed.clone();
                d2[b][a] = mixed;
            }
        }
    }
    // Enforce d2[a][b] = d2[b][a] exactly.
    for a in 0..n {
        for b in (a + 1)..n {
            let avg = (&d2[a][b] + &d2[b][a]) * 0.5;
            d2[a][b] = avg.clone();
            d2[b][a] = avg;
        }
    }
    d2
}

pub(crate) fn curvature_raw(
    metric: &MetricField,
    x: &[f64],
    theta: &ControlParams,
) -> Result<CurvatureValue> {
    let n = metric.dim;
    let g = metric.eval_raw(x, theta);
    let ginv = inverse_spd(&g)?;
    let gamma = christoffel_raw(metric, x, theta)?;
    let d2 = metric_second_derivatives(metric, x, theta);

    let mut riemann = vec![0.0; n * n * n * n];
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let second = 0.5
                        * (d2[j][k][(i, l)] + d2[i][l][(j, k)]
                            - d2[i][k][(j, l)]
                            - d2[j][l][(i, k)]);
                    let mut quad = 0.0;
                    for m in 0..n {
                        for p in 0..n {
                            quad += g[(m, p)]
                                * (gamma.get(m, i, l) * gamma.get(p, j, k)
                                    - gamma.get(m, j, l) * gamma.get(p, i, k));
                        }
                    }
                    riemann[idx(i, j, k, l)] = second + quad;
                }
            }
        }
    }

    let mut ricci = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                for l in 0..n {
                    acc += ginv[(k, l)] * riemann[idx(k, i, l, j)];
                }
            }
            ricci[(i, j)] = acc;
        }
    }
    let mut scalar = 0.0;
    for i in 0..n {
        for j in 0..n {
            scalar += ginv[(i, j)] * ricci[(i, j)];
        }
    }
    Ok(CurvatureValue { dim: n, riemann, ricci, scalar, metric: g })
}

/// Riemann, Ricci, and scalar curvature at a point.
pub fn curvature_at(
    metric: &MetricField,
    p: &Point,
    theta: &ControlParams,
) -> Result<CurvatureValue> {
    metric.check_point(p)?;
    curvature_raw(metric, &p.coords, theta)
}

/// Hessian of a scalar function by fourth-order stencils (diagonal) and
/// composed fourth-order first differences (mixed), step `1e-4 (1+|x|)`.
pub(crate) fn scalar_hessian(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
) -> DMatrix<f64> {
    let n = x.len();
    let mut h2 = DMatrix::zeros(n, n);
    let step = |a: usize| tol::SECOND_DERIV_STEP * (1.0 + x[a].abs());
    for a in 0..n {
        let h = step(a);
        let mut xp = x.to_vec();
        let at = |o: f64, xp: &mut Vec<f64>| {
            xp[a] = x[a] + o * h;
            let v = f(xp);
            xp[a] = x[a];
            v
        };
        let p2 = at(2.0, &mut xp);
        let p1 = at(1.0, &mut xp);
        let c = f(x);
        let m1 = at(-1.0, &mut xp);
        let m2 = at(-2.0, &mut xp);
        // Same exact-cancellation grouping as metric_second_derivatives.
        h2[(a, a)] = (16.0 * (p1 + m1) - (p2 + m2) - 30.0 * c) / (12.0 * h * h);
    }
    let d1 = |y: &[f64], b: usize| -> f64 {
        let h = tol::SECOND_DERIV_STEP * (1.0 + y[b].abs());
        let mut yp = y.to_vec();
        let at = |o: f64, yp: &mut Vec<f64>| {
            yp[b] = y[b] + o * h;
            let v = f(yp);
            yp[b] = y[b];
            v
        };
        let p2 = at(2.0, &mut yp);
        let p1 = at(1.0, &mut yp);
        let m1 = at(-1.0, &mut yp);
        let m2 = at(-2.0, &mut yp);
        (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
    };
    for a in 0..n {
        for b in (a + 1)..n {
            let h = step(a);
            let mut xp = x.to_vec();
            let at = |o: f64, xp: &mut Vec<f64>| {
                xp[a] = x[a] + o * h;
                let v = d1(xp, b);
                xp[a] = x[a];
                v
            };
            let p2 = at(2.0, &mut xp);
            let p1 = at(1.0, &mut xp);
            let m1 = at(-1.0, &mut xp);
            let m2 = at(-2.0, &mut xp);
            let mixed = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            h2[(a, b)] = mixed;
            h2[(b, a)] = mixed;
        }
    }
    h2
}

/// Self-consistency residual of a metric against its density family:
///
/// ```text
/// r_ij = g_ij + d^2 log rho / dx^i dx^j - G^k_ij d_k log rho
///      - 1/2 d^2 log det g / dx^i dx^j + G^k_ij G^l_kl
/// ```
///
/// which vanishes exactly when the metric solves the covariant equation
/// for `rho`.
pub fn metric_residual(
    metric: &MetricField,
    family: &DensityFamily,
    p: &Point,
    theta: &ControlParams,
) -> Result<DMatrix<f64>> {
    metric.check_point(p)?;
    if family.chart != metric.chart {
        return Err(Error::ChartMismatch {
            expected: metric.chart.to_string(),
            got: family.chart.to_string(),
        });
    }
    let n = metric.dim;
    let x = &p.coords;
    let g = metric.eval_raw(x, theta);
    let gamma = christoffel_raw(metric, x, theta)?;

    let log_rho = |y: &[f64]| family.log_density_raw(y, theta);
    let hess_rho = scalar_hessian(&log_rho, x);
    let grad_rho = family.grad_log_density_raw(x, theta);

    let log_det = |y: &[f64]| {
        let gm = metric.eval_raw(y, theta);
        gm.determinant().ln()
    };
    let hess_logdet = scalar_hessian(&log_det, x);

    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut gamma_terms = 0.0;
            for k in 0..n {
                gamma_terms += gamma.get(k, i, j) * (grad_rho[k] - gamma.trace(k));
            }
            r[(i, j)] = g[(i, j)] + hess_rho[(i, j)] - gamma_terms - 0.5 * hess_logdet[(i, j)];
        }
    }
    Ok(r)
}

/// Infinity norm of [`metric_residual`].
pub fn metric_residual_norm(
    metric: &MetricField,
    family: &DensityFamily,
    p: &Point,
    theta: &ControlParams,
) -> Result<f64> {
    Ok(metric_residual(metric, family, p, theta)?.abs().max())
}

// ---------------------------------------------------------------------------
// One-dimensional solver
// ---------------------------------------------------------------------------

/// Natural cubic spline used to interpolate solved grid metrics.
#[derive(Debug, Clone)]
pub(crate) struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 3, "spline needs at least three nodes");
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        b[0] = 1.0;
        b[n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            a[i] = h0;
            b[i] = 2.0 * (h0 + h1);
            c[i] = h1;
            d[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        // Thomas algorithm.
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = d[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
        }
        CubicSpline { x, y, m }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(j) if j >= n => n - 2,
            Err(j) => j - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Result of the one-dimensional fixed-point solve.
#[derive(Debug, Clone)]
pub struct SolvedMetric1d {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl SolvedMetric1d {
    /// Wraps the grid solution in a spline-backed [`MetricField`].
    pub fn into_metric_field(self, chart: impl Into<Arc<str>>) -> MetricField {
        let spline = CubicSpline::new(self.nodes.clone(), self.values.clone());
        MetricField::new(
            chart,
            1,
            MetricProvenance::Solved1d,
            move |x: &[f64], _theta: &ControlParams| {
                DMatrix::from_element(1, 1, spline.eval(x[0]).max(tol::SOLVER_CLIP))
            },
        )
    }
}

/// First derivative on a uniform grid: central inside, one-sided
/// second-order at the two edges.
fn grid_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    out
}

/// Solves the one-dimensional self-consistency equation
/// `g = -(log rho)'' + G (log rho)' + G' - G^2` with `G = (log g)'/2`
/// on a uniform grid.
///
/// Internally the unknown is `u = log(g)/2`, which turns the equation into
/// the second-order boundary value problem
/// `u'' - u'^2 + u' (log rho)' - (log rho)'' - exp(2u) = 0`,
/// closed at the two edge nodes by the same equation with one-sided
/// stencils.  A damped Newton iteration from the flat start `u = 0`
/// (with step halving whenever a full step fails to reduce the residual)
/// replaces a naive relaxation sweep: relaxation re-differentiates the
/// iterate every pass, so grid-frequency noise is amplified by `1/h^2`
/// per sweep and never settles.  Success means the interior residual of
/// the original g-form dropped below 1e-6; positivity is automatic since
/// `g = exp(2u)`.
pub fn solve_metric_1d(
    family: &DensityFamily,
    theta: &ControlParams,
    lo: f64,
    hi: f64,
    nodes: usize,
) -> Result<SolvedMetric1d> {
    if family.dim != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: family.dim });
    }
    assert!(nodes >= 8 && hi > lo);
    let h = (hi - lo) / (nodes - 1) as f64;
    let xs: Vec<f64> = (0..nodes).map(|i| lo + h * i as f64).collect();

    // Continuous-space derivatives of log rho at the nodes (fourth-order
    // stencils; independent of the grid spacing).
    let d1_rho: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let hh = tol::SECOND_DERIV_STEP * (1.0 + x.abs());
            let f = |y: f64| family.log_density_raw(&[y], theta);
            (8.0 * (f(x + hh) - f(x - hh)) - (f(x + 2.0 * hh) - f(x - 2.0 * hh))) / (12.0 * hh)
        })
        .collect();
    let d2_rho: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let hh = tol::SECOND_DERIV_STEP * (1.0 + x.abs());
            let f = |y: f64| family.log_density_raw(&[y], theta);
            (16.0 * (f(x + hh) + f(x - hh)) - (f(x + 2.0 * hh) + f(x - 2.0 * hh)) - 30.0 * f(x))
                / (12.0 * hh * hh)
        })
        .collect();

    let n = nodes;
    // Grid first and second derivatives of u at node i, one-sided at the
    // two edges, plus the sparsity pattern of each stencil.
    let du = |u: &[f64], i: usize| -> f64 {
        if i == 0 {
            (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h)
        } else {
            (u[i + 1] - u[i - 1]) / (2.0 * h)
        }
    };
    let d2u = |u: &[f64], i: usize| -> f64 {
        if i == 0 {
            (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (h * h)
        } else if i == n - 1 {
            (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / (h * h)
        } else {
            (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h)
        }
    };
    let resid_vec = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let up = du(u, i);
                d2u(u, i) - up * up + up * d1_rho[i] - d2_rho[i] - (2.0 * u[i]).exp()
            })
            .collect()
    };
    // Interior residual in the g-form (identical to the F-form up to sign):
    // the convergence gate the caller relies on.
    let interior_norm =
        |f: &[f64]| f[2..n - 2].iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut u = vec![0.0f64; n];
    let mut f = resid_vec(&u);
    let max_newton = 60usize;
    for iter in 0..max_newton {
        let fnorm = interior_norm(&f);
        if fnorm <= tol::SOLVER_RESIDUAL {
            let values: Vec<f64> = u.iter().map(|v| (2.0 * v).exp()).collect();
            return Ok(SolvedMetric1d {
                nodes: xs,
                values,
                residual: fnorm,
                iterations: iter,
            });
        }
        // Assemble the Jacobian dF_i/du_j.
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let up = du(&u, i);
            let dfdup = -2.0 * up + d1_rho[i];
            // d2u stencil coefficients.
            if i == 0 {
                for (j, c) in [(0usize, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)] {
                    jac[(i, j)] += c / (h * h);
                }
                for (j, c) in [(0usize, -3.0), (1, 4.0), (2, -1.0)] {
                    jac[(i, j)] += dfdup * c / (2.0 * h);
                }
            } else if i == n - 1 {
                for (j, c) in [(n - 1, 2.0), (n - 2, -5.0), (n - 3, 4.0), (n - 4, -1.0)] {
                    jac[(i, j)] += c / (h * h);
                }
                for (j, c) in [(n - 1, 3.0), (n - 2, -4.0), (n - 3, 1.0)] {
                    jac[(i, j)] += dfdup * c / (2.0 * h);
                }
            } else {
                jac[(i, i - 1)] += 1.0 / (h * h) - dfdup / (2.0 * h);
                jac[(i, i)] += -2.0 / (h * h);
                jac[(i, i + 1)] += 1.0 / (h * h) + dfdup / (2.0 * h);
            }
            jac[(i, i)] += -2.0 * (2.0 * u[i]).exp();
        }
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NoConvergence("singular 1-d solve jacobian".into()))?;
        // Damped step: halve until the residual shrinks.
        let mut scale = 1.0f64;
        let mut accepted = false;
        for _ in 0..8 {
            let trial: Vec<f64> = u
                .iter()
                .zip(delta.iter())
                .map(|(ui, di)| (ui + scale * di).clamp(0.5 * tol::SOLVER_CLIP.ln(), 40.0))
                .collect();
            let ftrial = resid_vec(&trial);
            if interior_norm(&ftrial) < fnorm {
                u = trial;
                f = ftrial;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence(format!(
        "1-d metric solve stalled at residual {:.3e}",
        interior_norm(&f)
    )))
}
