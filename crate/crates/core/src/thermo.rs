//! Fluctuation thermodynamics at an explicit scale `k`: equilibrium
//! states, the curvature-corrected Legendre transformation, open-system
//! entropy, and applicability verdicts for the quadratic approximation.
//!
//! Unit convention: the geometric layers of this crate work at unit scale
//! (`k = 1`). A general scale enters by exact rescaling -- the entropy is
//! `k` times the unit potential and the thermodynamic metric is `k` times
//! the unit metric -- which leaves the sampling distribution untouched,
//! multiplies the lowered curvature components by `k`, and divides the
//! curvature scalar by `k`. The operations below do only the explicit `k`
//! bookkeeping their formulas state; the caller chooses the scale of the
//! curvature input consistently.

use crate::charts::{ControlParams, DensityFamily, Point, Support};
use crate::error::{Error, Result};
use crate::gaussrep::{find_mode, potential_raw};
use crate::geometry::{CurvatureValue, MetricField};
use crate::tol;
use nalgebra::DMatrix;

// ---------------------------------------------------------------------------
// Equilibrium state

/// Equilibrium description of a closed system: the entropy maximizer, the
/// entropy there, and the Planck potential (they coincide -- the potential
/// is the maximum entropy value).
#[derive(Debug, Clone)]
pub struct ThermoState {
    pub x_bar: Point,
    /// Entropy at the equilibrium state, in units of `k`.
    pub s_eq: f64,
    /// Planck potential `-k log Z`, equal to `s_eq`.
    pub p_planck: f64,
    pub theta: ControlParams,
    pub k: f64,
}

/// Locates the equilibrium state of a closed system described by a
/// unit-scale (metric, family) pair and scales the entropy by `theta.k`.
pub fn equilibrium_state(
    metric: &MetricField,
    family: &DensityFamily,
    theta: &ControlParams,
) -> Result<ThermoState> {
    let x_bar = find_mode(metric, family, theta, &[])?;
    let s_unit = potential_raw(metric, family, &x_bar.coords, theta);
    let k = theta.k;
    Ok(ThermoState {
        x_bar,
        s_eq: k * s_unit,
        p_planck: k * s_unit,
        theta: theta.clone(),
        k,
    })
}

// ---------------------------------------------------------------------------
// Curvature-corrected estimates

/// Second-order estimate of the equilibrium entropy of a closed system:
/// `S(x-bar) ~ k^2 R(x-bar) / 6`, valid when the curvature scalar is small.
/// Flat geometry gives exactly zero.
pub fn closed_system_entropy_estimate(curv: &CurvatureValue, k: f64) -> f64 {
    k * k * curv.scalar / 6.0
}

fn closed_membership(support: &Support, x: &[f64]) -> bool {
    x.len() == support.dim()
        && x.iter()
            .zip(support.lower.iter().zip(&support.upper))
            .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi && xi.is_finite())
}

/// Legendre transformation of an open-system entropy with its second-order
/// curvature correction.
///
/// Given the linear parameters `theta_lin`, the maximizer `x_bar` of
/// `-theta_i x^i + s(x)` over `support`, and the curvature at `x_bar`,
/// returns `(P0, P2)` with `P0 = theta_i x_bar^i - s(x_bar)` and
/// `P2 = P0 + k^2 R(x_bar) / 6`.
///
/// The first-order condition is verified before transforming: along
/// interior axes the derivative of `-theta_i x^i + s(x)` must vanish, and
/// along axes pinned at a support bound the one-sided derivative into the
/// feasible side must not ascend.
pub fn legendre_with_correction(
    theta_lin: &[f64],
    x_bar: &Point,
    s_open: &(dyn Fn(&[f64]) -> f64 + Sync),
    support: &Support,
    curv: &CurvatureValue,
    k: f64,
) -> Result<(f64, f64)> {
    let x = &x_bar.coords;
    let n = x.len();
    if theta_lin.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: theta_lin.len() });
    }
    if support.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: support.dim() });
    }
    if !closed_membership(support, x) {
        return Err(Error::Stationarity(
            "the proposed maximizer lies outside the feasible region".into(),
        ));
    }
    let objective = |y: &[f64]| -> f64 {
        let linear: f64 = theta_lin.iter().zip(y).map(|(t, yi)| t * yi).sum();
        -linear + s_open(y)
    };
    let scale = 1.0 + theta_lin.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let tol_grad = 1e-6 * scale;
    for i in 0..n {
        let h = 1e-5 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let plus_ok = closed_membership(support, &xp);
        let minus_ok = closed_membership(support, &xm);
        let d = match (plus_ok, minus_ok) {
            (true, true) => {
                let d = (objective(&xp) - objective(&xm)) / (2.0 * h);
                if d.abs() > tol_grad {
                    return Err(Error::Stationarity(format!(
                        "axis {i}: derivative {d:.3e} of the transform objective does not vanish"
                    )));
                }
                continue;
            }
            (true, false) => (objective(&xp) - objective(x)) / h,
            (false, true) => -((objective(x) - objective(&xm)) / h),
            (false, false) => continue,
        };
        // One-sided case: `d` is the derivative into the feasible side,
        // which must not ascend at a boundary maximizer.
        if d > tol_grad {
            return Err(Error::Stationarity(format!(
                "axis {i}: the objective still ascends into the feasible side (rate {d:.3e})"
            )));
        }
    }
    let linear: f64 = theta_lin.iter().zip(x).map(|(t, xi)| t * xi).sum();
    let p0 = linear - s_open(x);
    let p2 = p0 + closed_system_entropy_estimate(curv, k);
    Ok((p0, p2))
}

// ---------------------------------------------------------------------------
// Open-system entropy

/// Entropy of an open system from its density of states:
/// `s = k log(Omega) - (k/2) log| g_ij / (2 pi k) |`. The metric must be
/// supplied in the same scale convention as `k`.
pub fn open_system_entropy(
    omega: &(dyn Fn(&[f64]) -> f64 + Sync),
    metric: &MetricField,
    p: &Point,
    theta: &ControlParams,
    k: f64,
) -> Result<f64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Config(format!("scale k must be positive and finite, got {k}")));
    }
    let g = metric.at(p, theta)?;
    let om = omega(&p.coords);
    if !(om > 0.0) || !om.is_finite() {
        return Err(Error::EvalDomain {
            expr: "density of states".into(),
            msg: format!("value {om} is not a positive number"),
        });
    }
    let det = g.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::NotPositiveDefinite(format!(
            "metric determinant {det} in the open-system entropy"
        )));
    }
    let n = metric.dim as f64;
    Ok(k * om.ln() - 0.5 * k * (det.ln() - n * (2.0 * std::f64::consts::PI * k).ln()))
}

// ---------------------------------------------------------------------------
// Applicability of the quadratic picture

/// Verdict of the curvature criterion for the quadratic (gaussian)
/// approximation at the equilibrium state.
#[derive(Debug, Clone, Copy)]
pub struct ApplicabilityVerdict {
    /// The dimensionless product `n k R(x-bar)`.
    pub product: f64,
    /// Strict criterion: `n k R < 1`.
    pub applicable: bool,
    /// Criterion met but within a decade of its edge
    /// (`0.1 <= product < 1`): corrections are already visible.
    pub marginal: bool,
}

/// Evaluates the quadratic-approximation criterion `n k R(x-bar) < 1`.
/// The inequality is strict: the boundary itself is reported inapplicable.
pub fn gaussian_applicability(curv: &CurvatureValue, n: usize, k: f64) -> ApplicabilityVerdict {
    let product = n as f64 * k * curv.scalar;
    ApplicabilityVerdict {
        product,
        applicable: product < 1.0,
        marginal: (0.1..1.0).contains(&product),
    }
}

// ---------------------------------------------------------------------------
// Quadratic approximation at the equilibrium state

/// Thermodynamic second-derivative tensor at the equilibrium state: minus
/// the coordinate Hessian of the entropy `k S` at its maximum, where (and
/// only where) those second partials transform as a tensor. Equals `k`
/// times the metric at the mode for admissible pairs.
pub fn ruppeiner_tensor(
    metric: &MetricField,
    family: &DensityFamily,
    x_bar: &Point,
    theta: &ControlParams,
) -> Result<DMatrix<f64>> {
    if x_bar.chart != metric.chart {
        return Err(Error::ChartMismatch {
            expected: metric.chart.to_string(),
            got: x_bar.chart.to_string(),
        });
    }
    let n = metric.dim;
    let x = &x_bar.coords;
    let s = |y: &[f64]| potential_raw(metric, family, y, theta);
    let s0 = s(x);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = tol::SECOND_DERIV_STEP * (1.0 + x[i].abs());
        let mut xp = x.clone();
        xp[i] += hi;
        let mut xm = x.clone();
        xm[i] -= hi;
        hess[(i, i)] = (s(&xp) + s(&xm) - 2.0 * s0) / (hi * hi);
        for j in (i + 1)..n {
            let hj = tol::SECOND_DERIV_STEP * (1.0 + x[j].abs());
            let mut pp = x.clone();
            pp[i] += hi;
            pp[j] += hj;
            let mut pm = x.clone();
            pm[i] += hi;
            pm[j] -= hj;
            let mut mp = x.clone();
            mp[i] -= hi;
            mp[j] += hj;
            let mut mm = x.clone();
            mm[i] -= hi;
            mm[j] -= hj;
            let v = (s(&pp) + s(&mm) - s(&pm) - s(&mp)) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(-theta.k * hess)
}

/// Density of the quadratic approximation in coordinates:
/// `exp[ -g^R_ij dx^i dx^j / (2k) ] sqrt( det( g^R / (2 pi k) ) )` with
/// `dx = x - x_bar`.
pub fn gaussian_approximation_density(
    g_r: &DMatrix<f64>,
    x_bar: &[f64],
    x: &[f64],
    k: f64,
) -> Result<f64> {
    let n = x_bar.len();
    if x.len() != n || g_r.nrows() != n || g_r.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Config(format!("scale k must be positive and finite, got {k}")));
    }
    let det = g_r.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::NotPositiveDefinite(
            "second-derivative tensor in the quadratic density".into(),
        ));
    }
    let mut form = 0.0;
    for i in 0..n {
        for j in 0..n {
            form += g_r[(i, j)] * (x[i] - x_bar[i]) * (x[j] - x_bar[j]);
        }
    }
    let norm = (det / (2.0 * std::f64::consts::PI * k).powi(n as i32)).sqrt();
    Ok((-form / (2.0 * k)).exp() * norm)
}

// ---------------------------------------------------------------------------
