//! The gaussian representation of a density family on its fluctuation
//! geometry: the information potential
//!
//! ```text
//! S(x) = log rho(x) - 1/2 log det( g(x) / 2 pi )
//! ```
//!
//! its gradient and metric norm, mode search, partition functions computed
//! by radial quadrature over geodesic-sphere profiles, curvature-scale
//! classification, and entropy functionals.
//!
//! Two partition values are produced: the *gaussian* one integrates the
//! pure area profile against `exp(-l^2/2)`, and the *exact* one additionally
//! carries the measured weight `exp(S - S_mode + l^2/2)` along each ray, so
//! it equals the true normalization integral whenever the exponential map
//! covers the support.  Families whose potential is exactly quadratic in
//! the distance make the two coincide.

use crate::charts::{ControlParams, DensityFamily, Point};
use crate::error::{Error, Result};
use crate::geodesics::{FanResolution, GeodesicFan};
use crate::geometry::{christoffel_raw, curvature_raw, CurvatureValue, MetricField};
use crate::quad;
use crate::tol;
use nalgebra::DMatrix;

fn check_pair(metric: &MetricField, family: &DensityFamily) -> Result<()> {
    if metric.chart != family.chart {
        return Err(Error::ChartMismatch {
            expected: metric.chart.to_string(),
            got: family.chart.to_string(),
        });
    }
    if metric.dim != family.dim {
        return Err(Error::DimensionMismatch { expected: metric.dim, got: family.dim });
    }
    Ok(())
}

/// Information potential without chart checks.
pub fn potential_raw(
    metric: &MetricField,
    family: &DensityFamily,
    x: &[f64],
    theta: &ControlParams,
) -> f64 {
    let n = metric.dim as f64;
    let g = metric.eval_raw(x, theta);
    let log_det = g.determinant().ln();
    family.log_density_raw(x, theta)
        - 0.5 * (log_det - n * (2.0 * std::f64::consts::PI).ln())
}

/// Information potential `S` at a point.
pub fn information_potential(
    metric: &MetricField,
    family: &DensityFamily,
    p: &Point,
    theta: &ControlParams,
) -> Result<f64> {
    check_pair(metric, family)?;
    if p.chart != metric.chart {
        return Err(Error::ChartMismatch {
            expected: metric.chart.to_string(),
            got: p.chart.to_string(),
        });
    }
    Ok(potential_raw(metric, family, &p.coords, theta))
}

/// Probability weight `omega = exp(S)`; `rho = omega sqrt(det(g/2pi))`.
pub fn probability_weight(
    metric: &MetricField,
    family: &DensityFamily,
    p: &Point,
    theta: &ControlParams,
) -> Result<f64> {
    Ok(information_potential(metric, family, p, theta)?.exp())
}

/// Gradient of the potential, using the connection trace for the metric
/// part: `dS_i = d_i log rho - G^k_{ik}`.
pub fn potential_gradient_raw(
    metric: &MetricField,
    family: &DensityFamily,
    x: &[f64],
    theta: &ControlParams,
) -> Result<Vec<f64>> {
    let gamma = christoffel_raw(metric, x, theta)?;
    let grad_rho = family.grad_log_density_raw(x, theta);
    Ok((0..metric.dim).map(|i| grad_rho[i] - gamma.trace(i)).collect())
}

/// Gradient of `S` at a point.
pub fn potential_gradient(
    metric: &MetricField,
    family: &DensityFamily,
    p: &Point,
    theta: &ControlParams,
) -> Result<Vec<f64>> {
    check_pair(metric, family)?;
    if p.chart != metric.chart {
        return Err(Error::ChartMismatch {
            expected: metric.chart.to_string(),
            got: p.chart.to_string(),
        });
    }
    potential_gradient_raw(metric, family, &p.coords, theta)
}

/// Metric norm of the potential gradient,
/// `psi = sqrt( g^ij dS_i dS_j )`, the local fluctuation intensity.
pub fn potential_gradient_norm(
    metric: &MetricField,
    family: &DensityFamily,
    p: &Point,
    theta: &ControlParams,
) -> Result<f64> {
    let ds = potential_gradient(metric, family, p, theta)?;
    let g = metric.at(p, theta)?;
    let ginv = g
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("metric not invertible".into()))?;
    let n = metric.dim;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += ginv[(i, j)] * ds[i] * ds[j];
        }
    }
    Ok(acc.max(0.0).sqrt())
}

// ---------------------------------------------------------------------------
// Mode search
// ---------------------------------------------------------------------------

fn gradient_hessian(
    metric: &MetricField,
    family: &DensityFamily,
    x: &[f64],
    theta: &ControlParams,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = metric.dim;
    let grad = potential_gradient_raw(metric, family, x, theta)?;
    let mut hess = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-5 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let gp = potential_gradient_raw(metric, family, &xp, theta)?;
        xp[j] = x[j] - h;
        let gm = potential_gradient_raw(metric, family, &xp, theta)?;
        xp[j] = x[j];
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let sym = (hess.clone() + hess.transpose()) * 0.5;
    Ok((grad, sym))
}

fn ascend_from(
    metric: &MetricField,
    family: &DensityFamily,
    theta: &ControlParams,
    start: &[f64],
) -> Option<Vec<f64>> {
    let mut x = start.to_vec();
    if !family.support.contains(&x) {
        return None;
    }
    let s_of = |y: &[f64]| potential_raw(metric, family, y, theta);
    for _iter in 0..120 {
        let (grad, hess) = gradient_hessian(metric, family, &x, theta).ok()?;
        let gnorm = grad.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if gnorm <= tol::MODE_GRAD_TOL {
            return Some(x);
        }
        // Newton direction when the Hessian is usable, otherwise ascent.
        let rhs = nalgebra::DVector::from_column_slice(&grad);
        let newton = hess.clone().lu().solve(&rhs).map(|d| -d);
        let mut dir: Vec<f64> = match &newton {
            Some(d) if d.iter().all(|v| v.is_finite()) => d.iter().copied().collect(),
            _ => grad.iter().map(|g| g * 0.5).collect(),
        };
        // A Newton step pointing downhill (positive-curvature saddle) is
        // replaced by plain ascent.
        let uphill: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if uphill <= 0.0 {
            dir = grad.iter().map(|g| g * 0.5).collect();
        }
        let s0 = s_of(&x);
        let mut lambda = 1.0;
        let mut advanced = false;
        for _bt in 0..30 {
            let cand: Vec<f64> =
                x.iter().zip(&dir).map(|(xi, di)| xi + lambda * di).collect();
            if family.support.contains(&cand) {
                let sc = s_of(&cand);
                if sc.is_finite() && sc > s0 {
                    x = cand;
                    advanced = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !advanced {
            // No uphill progress: accept if the gradient is already small
            // at a looser threshold, else give up on this start.
            return if gnorm <= 1e3 * tol::MODE_GRAD_TOL { Some(x) } else { None };
        }
    }
    None
}

/// Finds the interior maximum of the information potential by damped
/// Newton ascent from the support center plus any caller-supplied starts.
/// Distinct converged candidates are resolved by potential value; returns
/// an error when no start converges.
pub fn find_mode(
    metric: &MetricField,
    family: &DensityFamily,
    theta: &ControlParams,
    extra_starts: &[Vec<f64>],
) -> Result<Point> {
    check_pair(metric, family)?;
    let mut starts: Vec<Vec<f64>> = vec![family.support.center()];
    starts.extend_from_slice(extra_starts);
    // Nudged variants of the center widen the basin coverage.
    let center = family.support.center();
    for i in 0..metric.dim {
        for off in [0.5, -0.5] {
            let mut s = center.clone();
            s[i] += off;
            starts.push(s);
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for st in &starts {
        if let Some(x) = ascend_from(metric, family, theta, st) {
            let s = potential_raw(metric, family, &x, theta);
            match &best {
                Some((sb, xb)) => {
                    let same = x
                        .iter()
                        .zip(xb)
                        .all(|(a, b)| (a - b).abs() <= tol::MODE_AGREE_TOL * (1.0 + b.abs()));
                    if !same && s > *sb {
                        best = Some((s, x));
                    }
                }
                None => best = Some((s, x)),
            }
        }
    }
    match best {
        Some((_, x)) => Ok(Point::new(metric.chart.clone(), x)),
        None => Err(Error::ModeSearch(format!(
            "no start out of {} converged",
            starts.len()
        ))),
    }
}

// ---------------------------------------------------------------------------
// Partition function
// ---------------------------------------------------------------------------

/// Result of the radial partition quadrature.
#[derive(Debug, Clone, Copy)]
pub struct PartitionComputation {
    /// Pure-geometry value: the area profile against the gaussian weight.
    pub gaussian: f64,
    /// Weighted value carrying the measured potential along each ray.
    pub exact: f64,
    pub gaussian_error: f64,
    pub exact_error: f64,
    pub l_max: f64,
}

impl PartitionComputation {
    /// Relative spread between the exact and gaussian values: a direct
    /// measure of how non-quadratic the potential is in the distance.
    pub fn gaussianity_defect(&self) -> f64 {
        (self.exact - self.gaussian).abs() / self.exact.abs().max(f64::MIN_POSITIVE)
    }
}

/// Computes the partition function by radial quadrature around `mode`:
///
/// ```text
/// Z = (2 pi)^(-1/2) Int_0^L exp(-l^2/2) Sigma(l) dl
/// ```
///
/// with `Sigma` either the plain area profile (`gaussian`) or the
/// potential-weighted profile (`exact`).
pub fn partition_function(
    metric: &MetricField,
    family: &DensityFamily,
    theta: &ControlParams,
    mode: &Point,
    res: FanResolution,
    l_max: Option<f64>,
) -> Result<PartitionComputation> {
    check_pair(metric, family)?;
    let l_max = l_max.unwrap_or_else(|| tol::partition_l_max(metric.dim));
    let s_bar = potential_raw(metric, family, &mode.coords, theta);
    let log_weight = move |x: &[f64], l: f64| {
        potential_raw(metric, family, x, theta) - s_bar + 0.5 * l * l
    };
    let fan = GeodesicFan::new(metric, theta, mode, l_max, res, Some(&log_weight))?;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let qg = quad::integrate_best_effort(
        |l| norm * (-0.5 * l * l).exp() * fan.area(l),
        0.0,
        l_max,
        tol::PARTITION_RADIAL_TOL,
    );
    let qe = quad::integrate_best_effort(
        |l| norm * (-0.5 * l * l).exp() * fan.weighted_area(l).unwrap_or(0.0),
        0.0,
        l_max,
        tol::PARTITION_RADIAL_TOL,
    );
    Ok(PartitionComputation {
        gaussian: qg.value,
        exact: qe.value,
        gaussian_error: qg.error,
        exact_error: qe.error,
        l_max,
    })
}

// ---------------------------------------------------------------------------
// Curvature regime
// ---------------------------------------------------------------------------

/// How safely the gaussian representation applies at a point, judged by the
/// curvature length scale against the fluctuation scale `sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianRegime {
    /// Curvature scale at least ten fluctuation lengths: corrections are
    /// far below leading order.
    Strict,
    /// Between one and ten fluctuation lengths: usable with visible
    /// corrections.
    Marginal,
    /// Below one fluctuation length: the quadratic picture is unreliable.
    Outside,
}

/// Curvature length scale `|R|^(-1/2)` (infinite for flat geometry).
pub fn curvature_scale(curv: &CurvatureValue) -> f64 {
    let r = curv.scalar.abs();
    if r == 0.0 {
        f64::INFINITY
    } else {
        1.0 / r.sqrt()
    }
}

/// Classifies the regime for an `n`-dimensional family.
pub fn classify_regime(scale: f64, dim: usize) -> GaussianRegime {
    let fluct = (dim as f64).sqrt();
    if scale >= tol::CURVATURE_RADIUS_STRICT * fluct {
        GaussianRegime::Strict
    } else if scale >= tol::CURVATURE_RADIUS_MARGINAL * fluct {
        GaussianRegime::Marginal
    } else {
        GaussianRegime::Outside
    }
}

/// Curvature regime of a family at a point.
pub fn regime_at(
    metric: &MetricField,
    p: &Point,
    theta: &ControlParams,
) -> Result<(f64, GaussianRegime)> {
    let curv = curvature_raw(metric, &p.coords, theta)?;
    let scale = curvature_scale(&curv);
    Ok((scale, classify_regime(scale, metric.dim)))
}

// ---------------------------------------------------------------------------
// Entropies
// ---------------------------------------------------------------------------

/// Differential entropy `-Int rho log rho` over the box `[lo, hi]`
/// (iterated quadrature; dimensions one and two).
pub fn differential_entropy(
    family: &DensityFamily,
    theta: &ControlParams,
    lo: &[f64],
    hi: &[f64],
    tol_abs: f64,
) -> Result<f64> {
    match family.dim {
        1 => {
            let q = quad::integrate(
                |x| {
                    let lr = family.log_density_raw(&[x], theta);
                    let r = lr.exp();
                    if r > 0.0 { -r * lr } else { 0.0 }
                },
                lo[0],
                hi[0],
                tol_abs,
            )?;
            Ok(q.value)
        }
        2 => {
            let q = quad::integrate2d(
                |x, y| {
                    let lr = family.log_density_raw(&[x, y], theta);
                    let r = lr.exp();
                    if r > 0.0 { -r * lr } else { 0.0 }
                },
                quad::Range::Finite(lo[0], hi[0]),
                quad::Range::Finite(lo[1], hi[1]),
                tol_abs,
            )?;
            Ok(q.value)
        }
        d => Err(Error::Config(format!(
            "differential entropy quadrature covers dimensions 1-2, got {d}"
        ))),
    }
}

/// Invariant entropy `< S_mode - S > = -Int rho (S - S_mode)`: the mean
/// potential deficit, which equals `n/2` whenever the potential is exactly
/// quadratic in the distance.
pub fn invariant_entropy(
    metric: &MetricField,
    family: &DensityFamily,
    theta: &ControlParams,
    mode: &Point,
    lo: &[f64],
    hi: &[f64],
    tol_abs: f64,
) -> Result<f64> {
    check_pair(metric, family)?;
    let s_bar = potential_raw(metric, family, &mode.coords, theta);
    match family.dim {
        1 => {
            let q = quad::integrate(
                |x| {
                    let lr = family.log_density_raw(&[x], theta);
                    let r = lr.exp();
                    if r > 0.0 {
                        r * (s_bar - potential_raw(metric, family, &[x], theta))
                    } else {
                        0.0
                    }
                },
                lo[0],
                hi[0],
                tol_abs,
            )?;
            Ok(q.value)
        }
        2 => {
            let q = quad::integrate2d(
                |x, y| {
                    let lr = family.log_density_raw(&[x, y], theta);
                    let r = lr.exp();
                    if r > 0.0 {
                        r * (s_bar - potential_raw(metric, family, &[x, y], theta))
                    } else {
                        0.0
                    }
                },
                quad::Range::Finite(lo[0], hi[0]),
                quad::Range::Finite(lo[1], hi[1]),
                tol_abs,
            )?;
            Ok(q.value)
        }
        d => Err(Error::Config(format!(
            "invariant entropy quadrature covers dimensions 1-2, got {d}"
        ))),
    }
}
