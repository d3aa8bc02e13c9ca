//! Geodesic machinery: a Dormand-Prince 5(4) integrator with dense output,
//! the exponential map, Jacobi-field rays, geodesic-sphere area profiles
//! built from ray fans, and a shooting solver for the distance between two
//! points.
//!
//! Fans integrate the geodesic and Jacobi equations together,
//!
//! ```text
//! x'' = -G(x)(x', x')
//! J'' = -(dG)(J)(x', x') - 2 G(x)(x', J')
//! ```
//!
//! from a metric-orthonormal frame at the center, accumulate the sphere
//! area divided by `l^(n-1)` on a fixed radial grid, and interpolate that
//! reduced profile with an even-reflected natural spline, so the profile
//! is smooth through the center and the `l -> 0` limit is exact.

use crate::charts::{ControlParams, Point};
use crate::error::{Error, Result};
use crate::geometry::{christoffel_raw, CubicSpline, MetricField};
use crate::tol;
use nalgebra::DMatrix;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)
// ---------------------------------------------------------------------------

/// Dense solution of an initial-value problem: states and derivatives at the
/// accepted steps, interpolated with cubic Hermite polynomials in between.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub dim: usize,
    ts: Vec<f64>,
    ys: Vec<f64>,
    fs: Vec<f64>,
}

impl OdeSolution {
    pub fn t_start(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.ts.len()
    }

    pub fn end_state(&self) -> &[f64] {
        let n = self.dim;
        &self.ys[self.ys.len() - n..]
    }

    /// Cubic-Hermite sample; `t` is clamped to the covered span.
    pub fn sample(&self, t: f64, out: &mut [f64]) {
        let n = self.dim;
        if self.ts.len() == 1 {
            out.copy_from_slice(&self.ys[..n]);
            return;
        }
        let t = t.clamp(self.ts[0], *self.ts.last().unwrap());
        let i = match self.ts.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(self.ts.len() - 2),
            Err(0) => 0,
            Err(j) if j >= self.ts.len() => self.ts.len() - 2,
            Err(j) => j - 1,
        };
        let (t0, t1) = (self.ts[i], self.ts[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let y0 = &self.ys[i * n..(i + 1) * n];
        let y1 = &self.ys[(i + 1) * n..(i + 2) * n];
        let f0 = &self.fs[i * n..(i + 1) * n];
        let f1 = &self.fs[(i + 1) * n..(i + 2) * n];
        for k in 0..n {
            out[k] = h00 * y0[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k];
        }
    }

    pub fn sample_vec(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample(t, &mut out);
        out
    }
}

const MAX_ODE_STEPS: usize = 3_000_000;

/// Integrates `y' = rhs(t, y)` from `t0` to `t1 > t0` with the
/// Dormand-Prince 5(4) pair, local error `abs_tol` (absolute and relative),
/// and accepted steps capped at `max_step`.
pub fn integrate_ode(
    mut rhs: impl FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    t0: f64,
    y0: Vec<f64>,
    t1: f64,
    abs_tol: f64,
    max_step: f64,
) -> Result<OdeSolution> {
    let n = y0.len();
    assert!(t1 >= t0 && max_step > 0.0 && n > 0);
    let mut f0 = vec![0.0; n];
    rhs(t0, &y0, &mut f0)?;
    let mut sol = OdeSolution { dim: n, ts: vec![t0], ys: y0.clone(), fs: f0.clone() };
    if t1 == t0 {
        return Ok(sol);
    }

    // Butcher tableau (c left implicit in the stage times below).
    const A2: [f64; 1] = [1.0 / 5.0];
    const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
    const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
    const A5: [f64; 4] =
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
    const A6: [f64; 5] = [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ];
    const B: [f64; 6] =
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    // Difference between the 5th- and embedded 4th-order weights.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    const C: [f64; 5] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f0;
    let mut h = max_step.min(t1 - t0);
    let mut stage = vec![0.0; n];
    let mut ks = vec![vec![0.0; n]; 7];
    let mut steps = 0usize;

    while t < t1 {
        steps += 1;
        if steps > MAX_ODE_STEPS {
            return Err(Error::NoConvergence(format!(
                "geodesic integrator exceeded {MAX_ODE_STEPS} steps"
            )));
        }
        h = h.min(t1 - t);
        ks[0].copy_from_slice(&k1);
        let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (si, row) in rows.iter().enumerate() {
            for j in 0..n {
                let mut acc = 0.0;
                for (ri, &a) in row.iter().enumerate() {
                    acc += a * ks[ri][j];
                }
                stage[j] = y[j] + h * acc;
            }
            let ts = t + C[si] * h;
            let (head, tail) = ks.split_at_mut(si + 1);
            let _ = head;
            rhs(ts, &stage, &mut tail[0])?;
        }
        // Fifth-order solution (and FSAL stage k7 at the new point).
        let mut y_new = vec![0.0; n];
        for j in 0..n {
            let mut acc = 0.0;
            for (ri, &b) in B.iter().enumerate() {
                acc += b * ks[ri][j];
            }
            y_new[j] = y[j] + h * acc;
        }
        rhs(t + h, &y_new, &mut ks[6])?;
        // Error estimate and acceptance.
        let mut err_sq = 0.0;
        for j in 0..n {
            let mut e = 0.0;
            for (ri, &c) in E.iter().enumerate() {
                e += c * ks[ri][j];
            }
            e *= h;
            let scale = abs_tol * (1.0 + y[j].abs().max(y_new[j].abs()));
            let r = e / scale;
            err_sq += r * r;
        }
        let err = (err_sq / n as f64).sqrt();
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y_new);
            k1.copy_from_slice(&ks[6]);
            sol.ts.push(t);
            sol.ys.extend_from_slice(&y);
            sol.fs.extend_from_slice(&k1);
            // Rounding can leave t a hair short of t1; the remaining sliver
            // is far below the local error tolerance.
            if t1 - t <= 1e-13 * (1.0 + t1.abs()) {
                break;
            }
        }
        let fac = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= fac.clamp(0.2, 5.0);
        h = h.min(max_step);
        if !(h > 0.0) || t + h == t {
            return Err(Error::NoConvergence(
                "geodesic integrator step size underflow".into(),
            ));
        }
    }
    Ok(sol)
}

// ---------------------------------------------------------------------------
// Geodesics and Jacobi rays
// ---------------------------------------------------------------------------

/// Squared metric norm `v^T g(x) v`.
pub fn metric_norm_sq(metric: &MetricField, theta: &ControlParams, x: &[f64], v: &[f64]) -> f64 {
    let g = metric.eval_raw(x, theta);
    let n = metric.dim;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += g[(i, j)] * v[i] * v[j];
        }
    }
    acc
}

/// Metric norm `|v|_g` at `x`.
pub fn metric_norm(metric: &MetricField, theta: &ControlParams, x: &[f64], v: &[f64]) -> f64 {
    metric_norm_sq(metric, theta, x, v).sqrt()
}

/// Rescales `dir` to unit metric length at `p`.
pub fn unit_speed(
    metric: &MetricField,
    theta: &ControlParams,
    p: &Point,
    dir: &[f64],
) -> Result<Vec<f64>> {
    let g = metric.at(p, theta)?;
    let n = metric.dim;
    let mut sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            sq += g[(i, j)] * dir[i] * dir[j];
        }
    }
    if !(sq > 0.0) {
        return Err(Error::NotPositiveDefinite(
            "direction has non-positive metric norm".into(),
        ));
    }
    let s = sq.sqrt();
    Ok(dir.iter().map(|d| d / s).collect())
}

/// Metric-orthonormal frame at `p`: columns `E_a` with `E^T g E = I`
/// (inverse transpose of the Cholesky factor).
pub fn orthonormal_frame(
    metric: &MetricField,
    theta: &ControlParams,
    p: &Point,
) -> Result<DMatrix<f64>> {
    let g = metric.at(p, theta)?;
    orthonormal_basis(&g)
}

/// Columns `E_a` with `E_a^T g E_b = delta_ab`, built from the Cholesky
/// factor of the supplied metric matrix.
pub fn orthonormal_basis(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("metric at frame point".into()))?;
    let l = chol.l();
    let n = g.nrows();
    l.transpose()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))
}

/// Geodesic right-hand side `(x, v) -> (v, -G(v, v))`.
fn geodesic_rhs(
    metric: &MetricField,
    theta: &ControlParams,
    _s: f64,
    y: &[f64],
    dy: &mut [f64],
) -> Result<()> {
    let n = metric.dim;
    let (x, v) = y.split_at(n);
    let gamma = christoffel_raw(metric, x, theta)?;
    for k in 0..n {
        dy[k] = v[k];
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += gamma.get(k, i, j) * v[i] * v[j];
            }
        }
        dy[n + k] = -acc;
    }
    Ok(())
}

/// A geodesic with dense output in its chart.
#[derive(Debug)]
pub struct GeodesicPath {
    pub chart: Arc<str>,
    pub dim: usize,
    sol: OdeSolution,
}

impl GeodesicPath {
    pub fn s_end(&self) -> f64 {
        self.sol.t_end()
    }

    pub fn position_at(&self, s: f64) -> Point {
        let full = self.sol.sample_vec(s);
        Point::new(self.chart.clone(), full[..self.dim].to_vec())
    }

    pub fn velocity_at(&self, s: f64) -> Vec<f64> {
        let full = self.sol.sample_vec(s);
        full[self.dim..2 * self.dim].to_vec()
    }
}

/// Integrates the geodesic through `from` with initial velocity `v0` over
/// the parameter span `[0, s_max]`.
pub fn shoot_geodesic(
    metric: &MetricField,
    theta: &ControlParams,
    from: &Point,
    v0: &[f64],
    s_max: f64,
) -> Result<GeodesicPath> {
    if from.chart != metric.chart {
        return Err(Error::ChartMismatch {
            expected: metric.chart.to_string(),
            got: from.chart.to_string(),
        });
    }
    let n = metric.dim;
    let mut y0 = Vec::with_capacity(2 * n);
    y0.extend_from_slice(&from.coords);
    y0.extend_from_slice(v0);
    let speed = metric_norm(metric, theta, &from.coords, v0).max(1e-12);
    let max_step = (tol::ODE_MAX_STEP / speed).min(s_max.max(1e-9));
    let sol = integrate_ode(
        |s, y, dy| geodesic_rhs(metric, theta, s, y, dy),
        0.0,
        y0,
        s_max,
        tol::ODE_ABS_TOL,
        max_step,
    )?;
    Ok(GeodesicPath { chart: metric.chart.clone(), dim: n, sol })
}

/// A unit-speed geodesic ray carrying `m = dim - 1` Jacobi fields with
/// `J(0) = 0`.  State layout: `x (n) | v (n) | { J_a (n) | J_a' (n) }_a`.
#[derive(Debug)]
pub struct JacobiRay {
    pub dim: usize,
    pub fields: usize,
    pub sol: OdeSolution,
}

/// Sampled ray state at one arc length.
#[derive(Debug, Clone)]
pub struct RayState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub jacobi: Vec<Vec<f64>>,
    pub jacobi_rate: Vec<Vec<f64>>,
}

impl JacobiRay {
    pub fn state_at(&self, l: f64) -> RayState {
        let n = self.dim;
        let full = self.sol.sample_vec(l);
        let mut jacobi = Vec::with_capacity(self.fields);
        let mut jacobi_rate = Vec::with_capacity(self.fields);
        for a in 0..self.fields {
            let base = 2 * n + 2 * a * n;
            jacobi.push(full[base..base + n].to_vec());
            jacobi_rate.push(full[base + n..base + 2 * n].to_vec());
        }
        RayState {
            x: full[..n].to_vec(),
            v: full[n..2 * n].to_vec(),
            jacobi,
            jacobi_rate,
        }
    }
}

/// Integrates one unit-speed ray with Jacobi fields seeded by the rows of
/// `jdot0` (each `J(0) = 0`, `J'(0) = jdot0[a]`).
pub fn integrate_jacobi_ray(
    metric: &MetricField,
    theta: &ControlParams,
    center: &[f64],
    v0: &[f64],
    jdot0: &[Vec<f64>],
    l_max: f64,
) -> Result<JacobiRay> {
    let n = metric.dim;
    let m = jdot0.len();
    let dim_state = 2 * n * (1 + m);
    let mut y0 = vec![0.0; dim_state];
    y0[..n].copy_from_slice(center);
    y0[n..2 * n].copy_from_slice(v0);
    for (a, jd) in jdot0.iter().enumerate() {
        let base = 2 * n + 2 * a * n;
        y0[base + n..base + 2 * n].copy_from_slice(jd);
    }

    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let x = &y[..n];
        let v = &y[n..2 * n];
        let gamma = christoffel_raw(metric, x, theta)?;
        // Geodesic part.
        for k in 0..n {
            dy[k] = v[k];
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += gamma.get(k, i, j) * v[i] * v[j];
                }
            }
            dy[n + k] = -acc;
        }
        // Jacobi fields.
        let x_scale = 1.0 + x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for a in 0..m {
            let base = 2 * n + 2 * a * n;
            let jf = &y[base..base + n];
            let jd = &y[base + n..base + 2 * n];
            for k in 0..n {
                dy[base + k] = jd[k];
            }
            let jnorm = jf.iter().fold(0.0f64, |acc, b| acc.max(b.abs()));
            // Directional derivative of G(v, v) along J by central
            // differences at x +- h J.
            let mut dgamma_term = vec![0.0; n];
            if jnorm > 1e-13 {
                let h = tol::JACOBIAN_STEP * x_scale / jnorm;
                let xp: Vec<f64> = x.iter().zip(jf).map(|(xi, ji)| xi + h * ji).collect();
                let xm: Vec<f64> = x.iter().zip(jf).map(|(xi, ji)| xi - h * ji).collect();
                let gp = christoffel_raw(metric, &xp, theta)?;
                let gm = christoffel_raw(metric, &xm, theta)?;
                for (k, term) in dgamma_term.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            acc += (gp.get(k, i, j) - gm.get(k, i, j)) * v[i] * v[j];
                        }
                    }
                    *term = acc / (2.0 * h);
                }
            }
            for k in 0..n {
                let mut conn = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        conn += gamma.get(k, i, j) * v[i] * jd[j];
                    }
                }
                dy[base + n + k] = -dgamma_term[k] - 2.0 * conn;
            }
        }
        Ok(())
    };

    let sol = integrate_ode(rhs, 0.0, y0, l_max, tol::ODE_ABS_TOL, tol::ODE_MAX_STEP)?;
    Ok(JacobiRay { dim: n, fields: m, sol })
}

// ---------------------------------------------------------------------------
// Geodesic-sphere fans
// ---------------------------------------------------------------------------

/// Direction-grid sizes for a fan.
#[derive(Debug, Clone, Copy)]
pub struct FanResolution {
    pub rays_2d: usize,
    pub polar_3d: usize,
    pub azimuth_3d: usize,
}

impl Default for FanResolution {
    fn default() -> Self {
        FanResolution {
            rays_2d: tol::FAN_2D,
            polar_3d: tol::FAN_3D_POLAR,
            azimuth_3d: tol::FAN_3D_AZIMUTH,
        }
    }
}

impl FanResolution {
    /// Coarse grid for angularly near-uniform integrands (constant-metric
    /// and rotationally symmetric cases), where the grids converge at far
    /// lower resolution.
    pub fn coarse() -> Self {
        FanResolution { rays_2d: 64, polar_3d: 8, azimuth_3d: 16 }
    }
}

/// One initial direction with its angular quadrature weight.
struct FanDirection {
    weight: f64,
    v0: Vec<f64>,
    jdot0: Vec<Vec<f64>>,
    /// sqrt det of the initial-rate Gram matrix: the exact `l -> 0` limit
    /// of `sqrt(det h) / l^(n-1)` along this ray.
    reduced_limit: f64,
}

fn fan_directions(
    frame: &DMatrix<f64>,
    g0: &DMatrix<f64>,
    dim: usize,
    res: &FanResolution,
) -> Vec<FanDirection> {
    let col = |c: usize| -> Vec<f64> { frame.column(c).iter().copied().collect() };
    let lin = |coeffs: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (c, &a) in coeffs.iter().enumerate() {
            for (o, e) in out.iter_mut().zip(frame.column(c).iter()) {
                *o += a * e;
            }
        }
        out
    };
    let gram_limit = |jdots: &[Vec<f64>]| -> f64 {
        let m = jdots.len();
        if m == 0 {
            return 1.0;
        }
        let mut h = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let mut acc = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        acc += g0[(i, j)] * jdots[a][i] * jdots[b][j];
                    }
                }
                h[(a, b)] = acc;
            }
        }
        h.determinant().max(0.0).sqrt()
    };
    let mut dirs = Vec::new();
    match dim {
        1 => {
            for sign in [1.0, -1.0] {
                let v0: Vec<f64> = col(0).iter().map(|e| sign * e).collect();
                dirs.push(FanDirection { weight: 1.0, v0, jdot0: vec![], reduced_limit: 1.0 });
            }
        }
        2 => {
            let nr = res.rays_2d;
            let w = (2.0 * std::f64::consts::PI) / nr as f64
                / (2.0 * std::f64::consts::PI).sqrt();
            for r in 0..nr {
                let q = 2.0 * std::f64::consts::PI * r as f64 / nr as f64;
                let v0 = lin(&[q.cos(), q.sin()]);
                let jd = lin(&[-q.sin(), q.cos()]);
                let limit = gram_limit(std::slice::from_ref(&jd));
                dirs.push(FanDirection { weight: w, v0, jdot0: vec![jd], reduced_limit: limit });
            }
        }
        3 => {
            let (nodes, weights) = crate::quad::gauss_legendre(res.polar_3d);
            let mphi = res.azimuth_3d;
            let wb = 2.0 * std::f64::consts::PI / mphi as f64;
            let norm = 1.0 / (2.0 * std::f64::consts::PI);
            for (t, wa) in nodes.iter().zip(&weights) {
                let a = std::f64::consts::PI * (t + 1.0) / 2.0;
                let wa = wa * std::f64::consts::PI / 2.0;
                for jb in 0..mphi {
                    let b = wb * jb as f64;
                    let (sa, ca) = a.sin_cos();
                    let (sb, cb) = b.sin_cos();
                    let v0 = lin(&[sa * cb, sa * sb, ca]);
                    let jd_a = lin(&[ca * cb, ca * sb, -sa]);
                    let jd_b = lin(&[-sa * sb, sa * cb, 0.0]);
                    let jdot0 = vec![jd_a, jd_b];
                    let limit = gram_limit(&jdot0);
                    dirs.push(FanDirection {
                        weight: wa * wb * norm,
                        v0,
                        jdot0,
                        reduced_limit: limit,
                    });
                }
            }
        }
        other => panic!("fans are implemented for dimensions 1-3, got {other}"),
    }
    dirs
}

/// Area profile of geodesic spheres around a center point, normalized so a
/// flat `n`-dimensional metric gives
/// `Sigma(l) = 2^((3-n)/2) sqrt(pi) l^(n-1) / Gamma(n/2)`
/// (2 for n=1, `sqrt(2 pi) l` for n=2, `2 l^2` for n=3), which makes the
/// gaussian radial integral of a flat profile exactly one.
///
/// Optionally accumulates a second, weighted profile with a caller-supplied
/// log-weight evaluated along the rays (used for exact partition
/// integrands).
pub struct GeodesicFan {
    pub chart: Arc<str>,
    pub dim: usize,
    pub center: Vec<f64>,
    pub l_max: f64,
    grid_step: f64,
    reduced: CubicSpline,
    reduced_weighted: Option<CubicSpline>,
}

impl std::fmt::Debug for GeodesicFan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "GeodesicFan(chart {}, dim {}, l_max {}, weighted {})",
            self.chart,
            self.dim,
            self.l_max,
            self.reduced_weighted.is_some()
        )
    }
}

impl GeodesicFan {
    /// Builds the fan.  `log_weight(x, l)` is an optional extra factor
    /// `exp(log_weight)` accumulated into the weighted profile.
    pub fn new(
        metric: &MetricField,
        theta: &ControlParams,
        center: &Point,
        l_max: f64,
        res: FanResolution,
        log_weight: Option<&(dyn Fn(&[f64], f64) -> f64 + Sync)>,
    ) -> Result<Self> {
        if center.chart != metric.chart {
            return Err(Error::ChartMismatch {
                expected: metric.chart.to_string(),
                got: center.chart.to_string(),
            });
        }
        let n = metric.dim;
        assert!(l_max >= 3.0 * tol::FAN_GRID_STEP, "fan span too small");
        let g0 = metric.at(center, theta)?;
        let frame = orthonormal_frame(metric, theta, center)?;
        let dirs = fan_directions(&frame, &g0, n, &res);

        let steps = (l_max / tol::FAN_GRID_STEP).ceil() as usize;
        let grid_step = l_max / steps as f64;
        let mut sigma = vec![0.0; steps + 1];
        let mut sigma_w = vec![0.0; steps + 1];

        // Accumulate rays one at a time; ray storage is transient.
        use rayon::prelude::*;
        let partials: Result<Vec<(Vec<f64>, Vec<f64>)>> = dirs
            .par_iter()
            .map(|dir| -> Result<(Vec<f64>, Vec<f64>)> {
                let ray =
                    integrate_jacobi_ray(metric, theta, &center.coords, &dir.v0, &dir.jdot0, l_max)?;
                let mut s = vec![0.0; steps + 1];
                let mut sw = vec![0.0; steps + 1];
                for k in 0..=steps {
                    let l = grid_step * k as f64;
                    let reduced = if k == 0 {
                        dir.reduced_limit
                    } else {
                        let st = ray.state_at(l);
                        let g = metric.eval_raw(&st.x, theta);
                        let m = st.jacobi.len();
                        let det = if m == 0 {
                            1.0
                        } else {
                            let mut h = DMatrix::zeros(m, m);
                            for a in 0..m {
                                for b in 0..m {
                                    let mut acc = 0.0;
                                    for i in 0..n {
                                        for j in 0..n {
                                            acc += g[(i, j)]
                                                * st.jacobi[a][i]
                                                * st.jacobi[b][j];
                                        }
                                    }
                                    h[(a, b)] = acc;
                                }
                            }
                            h.determinant()
                        };
                        det.max(0.0).sqrt() / l.powi(n as i32 - 1)
                    };
                    s[k] = dir.weight * reduced;
                    if let Some(lw) = log_weight {
                        let x = if k == 0 {
                            center.coords.clone()
                        } else {
                            ray.state_at(l).x
                        };
                        sw[k] = s[k] * lw(&x, l).exp();
                    }
                }
                Ok((s, sw))
            })
            .collect();
        for (s, sw) in partials? {
            for k in 0..=steps {
                sigma[k] += s[k];
                sigma_w[k] += sw[k];
            }
        }

        // Even reflection about l = 0 pushes the natural-spline boundary
        // condition out to the far end, where the gaussian weight is dead.
        let reflect = |vals: &[f64]| -> CubicSpline {
            let mut xs = Vec::with_capacity(2 * steps + 1);
            let mut ys = Vec::with_capacity(2 * steps + 1);
            for k in (1..=steps).rev() {
                xs.push(-grid_step * k as f64);
                ys.push(vals[k]);
            }
            for (k, v) in vals.iter().enumerate() {
                xs.push(grid_step * k as f64);
                ys.push(*v);
            }
            CubicSpline::new(xs, ys)
        };
        let reduced = reflect(&sigma);
        let reduced_weighted = log_weight.map(|_| reflect(&sigma_w));
        Ok(GeodesicFan {
            chart: metric.chart.clone(),
            dim: n,
            center: center.coords.clone(),
            l_max,
            grid_step,
            reduced,
            reduced_weighted,
        })
    }

    fn radial_factor(&self, l: f64) -> f64 {
        l.powi(self.dim as i32 - 1)
    }

    /// Normalized geodesic-sphere area at radius `l`.
    pub fn area(&self, l: f64) -> f64 {
        let l = l.clamp(0.0, self.l_max);
        self.reduced.eval(l) * self.radial_factor(l)
    }

    /// Weighted profile (only if a log-weight was supplied at build time).
    pub fn weighted_area(&self, l: f64) -> Option<f64> {
        let l = l.clamp(0.0, self.l_max);
        self.reduced_weighted
            .as_ref()
            .map(|sp| sp.eval(l) * self.radial_factor(l))
    }

    /// Reduced profile `area(l) / l^(n-1)`, smooth through `l = 0`.
    pub fn reduced_area(&self, l: f64) -> f64 {
        self.reduced.eval(l.clamp(0.0, self.l_max))
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }
}

// ---------------------------------------------------------------------------
// Two-point boundary problem
// ---------------------------------------------------------------------------

/// A solved two-point geodesic problem.
#[derive(Debug)]
pub struct GeodesicConnection {
    pub distance: f64,
    pub initial_velocity: Vec<f64>,
    pub path: GeodesicPath,
}

fn endpoint(
    metric: &MetricField,
    theta: &ControlParams,
    from: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let n = metric.dim;
    let mut y0 = Vec::with_capacity(2 * n);
    y0.extend_from_slice(from);
    y0.extend_from_slice(w);
    let speed = metric_norm(metric, theta, from, w).max(1e-12);
    let max_step = (tol::ODE_MAX_STEP * 5.0 / speed).min(0.25);
    let sol = integrate_ode(
        |s, y, dy| geodesic_rhs(metric, theta, s, y, dy),
        0.0,
        y0,
        1.0,
        tol::ODE_ABS_TOL,
        max_step,
    )?;
    Ok(sol.end_state()[..n].to_vec())
}

/// Connects `from` to `to` by a geodesic via damped-Newton shooting on the
/// initial velocity; the distance is the metric norm of that velocity.
///
/// Dimension one integrates the length element directly instead (exact and
/// unconditionally stable).
pub fn connect_points(
    metric: &MetricField,
    theta: &ControlParams,
    from: &Point,
    to: &Point,
) -> Result<GeodesicConnection> {
    if from.chart != metric.chart || to.chart != metric.chart {
        return Err(Error::ChartMismatch {
            expected: metric.chart.to_string(),
            got: if from.chart != metric.chart {
                from.chart.to_string()
            } else {
                to.chart.to_string()
            },
        });
    }
    let n = metric.dim;
    if n == 1 {
        let (a, b) = (from.coords[0], to.coords[0]);
        let q = crate::quad::integrate(
            |x| metric.eval_raw(&[x], theta)[(0, 0)].sqrt(),
            a.min(b),
            a.max(b),
            1e-12,
        )?;
        let distance = q.value;
        let g0 = metric.eval_raw(&[a], theta)[(0, 0)];
        let v0 = vec![(b - a).signum() * distance / g0.sqrt()];
        let path = shoot_geodesic(metric, theta, from, &v0, 1.0)?;
        return Ok(GeodesicConnection { distance, initial_velocity: v0, path });
    }

    let target = &to.coords;
    let scale = 1.0 + target.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let base: Vec<f64> = target
        .iter()
        .zip(&from.coords)
        .map(|(t, f)| t - f)
        .collect();

    // Multi-start seeds: the coordinate difference first, then rotated and
    // rescaled variants for charts with strong distortion.
    let mut seeds = vec![base.clone()];
    if n == 2 {
        for ang in [0.45f64, -0.45, 0.9, -0.9, 1.57, -1.57, 3.14] {
            let (s, c) = ang.sin_cos();
            seeds.push(vec![c * base[0] - s * base[1], s * base[0] + c * base[1]]);
        }
    } else {
        for i in 0..n {
            let mut up = base.clone();
            up[i] *= 1.5;
            seeds.push(up);
            let mut dn = base.clone();
            dn[i] *= 0.5;
            seeds.push(dn);
        }
    }

    let mut last_residual = f64::INFINITY;
    for seed in seeds {
        let mut w = seed;
        let mut f = match endpoint(metric, theta, &from.coords, &w) {
            Ok(e) => e.iter().zip(target).map(|(a, b)| a - b).collect::<Vec<f64>>(),
            Err(_) => continue,
        };
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut ok = true;
        for _iter in 0..40 {
            let fnorm = norm(&f);
            if fnorm <= tol::BVP_TOL * scale {
                break;
            }
            // Forward-difference Jacobian of the endpoint map.
            let mut jac = DMatrix::zeros(n, n);
            let mut broke = false;
            for j in 0..n {
                let h = tol::JACOBIAN_STEP * (1.0 + w[j].abs());
                let mut wp = w.clone();
                wp[j] += h;
                match endpoint(metric, theta, &from.coords, &wp) {
                    Ok(ep) => {
                        for i in 0..n {
                            jac[(i, j)] = (ep[i] - (f[i] + target[i])) / h;
                        }
                    }
                    Err(_) => {
                        broke = true;
                        break;
                    }
                }
            }
            if broke {
                ok = false;
                break;
            }
            let rhs = nalgebra::DVector::from_column_slice(&f);
            let delta = match jac.clone().lu().solve(&rhs) {
                Some(d) => d,
                None => {
                    ok = false;
                    break;
                }
            };
            // Backtracking line search on the endpoint mismatch.
            let mut lambda = 1.0;
            let mut advanced = false;
            for _bt in 0..10 {
                let cand: Vec<f64> =
                    w.iter().zip(delta.iter()).map(|(wi, di)| wi - lambda * di).collect();
                if let Ok(ep) = endpoint(metric, theta, &from.coords, &cand) {
                    let fc: Vec<f64> =
                        ep.iter().zip(target).map(|(a, b)| a - b).collect();
                    if norm(&fc) < fnorm * (1.0 - 1e-4 * lambda) {
                        w = cand;
                        f = fc;
                        advanced = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !advanced {
                ok = false;
                break;
            }
        }
        let fnorm = norm(&f);
        last_residual = last_residual.min(fnorm);
        if ok && fnorm <= tol::BVP_TOL * scale {
            let distance = metric_norm(metric, theta, &from.coords, &w);
            let path = shoot_geodesic(metric, theta, from, &w, 1.0)?;
            return Ok(GeodesicConnection { distance, initial_velocity: w, path });
        }
    }
    Err(Error::BvpDiverged { residual: last_residual })
}
