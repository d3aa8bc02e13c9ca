//! Direction frames on the sphere of initial velocities and the
//! second-order anisotropy they measure.
//!
//! Around the most probable point of a family the squared statistical
//! distance fluctuates like a chi-square variable, and at leading order the
//! radius decouples from the direction. The first correction is quadratic in
//! the radius and direction-dependent: it is obtained by contracting the
//! curvature at the center with the bivectors spanned by a unit direction
//! `e(q)` and its angular derivatives `xi_a = de/dq^a`. This module supplies
//!
//! * [`SphericalFrame`]: the direction data `e`, `xi_a`, the round metric
//!   `kappa_ab = xi_a . xi_b`, and the bivectors
//!   `S^ij_a = e^i xi^j_a - e^j xi^i_a`, all in an orthonormal basis;
//! * [`spherical_function`]: the anisotropy scalar
//!   `F(q) = R_ijkl kappa^ab S^ij_a S^kl_b` at the center, plus the
//!   closed-form six-term route for three dimensions;
//! * [`asymptotic_ratio`]: the predicted density ratio
//!   `(1 - l^2 F / 24) / Z` against the ratio measured from exact densities
//!   along geodesics, with a fit helper for the quadratic coefficient;
//! * [`spherical_curvature_scalar`]: the radial-tangential curvature scalar
//!   measured on distance spheres of finite radius, which reduces to `F` as
//!   the radius shrinks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::charts::{ControlParams, DensityFamily, Point};
use crate::error::{Error, Result};
use crate::gaussrep::potential_raw;
use crate::geodesics::{integrate_jacobi_ray, orthonormal_basis};
use crate::geometry::{curvature_at, CurvatureValue, MetricField};
use crate::sum;

// ---------------------------------------------------------------------------
// Spherical frames
// ---------------------------------------------------------------------------

/// Frame attached to one point `q` of the unit direction sphere, expressed
/// in an orthonormal basis at the expansion center.
///
/// Supported dimensions are two (`q = [q1]`, `q1` in `[0, 2pi)`) and three
/// (`q = [q1, q2]` with latitude `q1` in `[-pi/2, pi/2)` and azimuth `q2` in
/// `[-pi, pi)`).
#[derive(Debug, Clone)]
pub struct SphericalFrame {
    /// Spherical coordinates of the direction (`n - 1` angles).
    pub q: Vec<f64>,
    /// Unit direction `e(q)`.
    pub e: DVector<f64>,
    /// Angular derivatives `xi_a = de/dq^a`.
    pub xi: Vec<DVector<f64>>,
    /// Round metric `kappa_ab = xi_a . xi_b`.
    pub kappa: DMatrix<f64>,
    /// Antisymmetric bivectors `S^ij_a = e^i xi^j_a - e^j xi^i_a`.
    pub bivectors: Vec<DMatrix<f64>>,
    dim: usize,
}

impl SphericalFrame {
    /// Builds the frame for an `dim`-dimensional manifold at the direction
    /// angles `q` (`dim - 1` of them).
    pub fn new(dim: usize, q: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::DimensionMismatch { expected: if dim < 2 { 2 } else { 3 }, got: dim });
        }
        if q.len() != dim - 1 {
            return Err(Error::DimensionMismatch { expected: dim - 1, got: q.len() });
        }
        let (e, xi) = match dim {
            2 => {
                let (s1, c1) = q[0].sin_cos();
                (
                    DVector::from_vec(vec![c1, s1]),
                    vec![DVector::from_vec(vec![-s1, c1])],
                )
            }
            _ => {
                let (s1, c1) = q[0].sin_cos();
                let (s2, c2) = q[1].sin_cos();
                (
                    DVector::from_vec(vec![c1 * c2, c1 * s2, s1]),
                    vec![
                        DVector::from_vec(vec![-s1 * c2, -s1 * s2, c1]),
                        DVector::from_vec(vec![-c1 * s2, c1 * c2, 0.0]),
                    ],
                )
            }
        };
        let m = dim - 1;
        let mut kappa = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                kappa[(a, b)] = xi[a].dot(&xi[b]);
            }
        }
        let mut bivectors = Vec::with_capacity(m);
        for xa in &xi {
            let mut s = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    s[(i, j)] = e[i] * xa[j] - e[j] * xa[i];
                }
            }
            bivectors.push(s);
        }
        Ok(SphericalFrame { q: q.to_vec(), e, xi, kappa, bivectors, dim })
    }

    /// Manifold dimension the frame belongs to.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Inverse of the round metric; fails where the angle chart degenerates
    /// (for example at the latitude poles in three dimensions).
    pub fn kappa_inverse(&self) -> Result<DMatrix<f64>> {
        self.kappa
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| {
                Error::NotPositiveDefinite("round metric of the direction chart".into())
            })
    }
}

// ---------------------------------------------------------------------------
// The anisotropy scalar
// ---------------------------------------------------------------------------

/// Curvature components re-expressed in the orthonormal columns of `basis`:
/// `R'_abcd = R_ijkl E^i_a E^j_b E^k_c E^l_d`.
fn frame_riemann(curv: &CurvatureValue, basis: &DMatrix<f64>) -> Vec<f64> {
    let n = curv.dim;
    let mut out = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut acc = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                for l in 0..n {
                                    acc += curv.r(i, j, k, l)
                                        * basis[(i, a)]
                                        * basis[(j, b)]
                                        * basis[(k, c)]
                                        * basis[(l, d)];
                                }
                            }
                        }
                    }
                    out[((a * n + b) * n + c) * n + d] = acc;
                }
            }
        }
    }
    out
}

/// Full contraction `kappa^ab R'_ijkl S^ij_a S^kl_b` with orthonormal-frame
/// curvature components `r`.
fn contract_frame(r: &[f64], n: usize, frame: &SphericalFrame) -> Result<f64> {
    let kinv = frame.kappa_inverse()?;
    let m = n - 1;
    let mut total = 0.0;
    for a in 0..m {
        for b in 0..m {
            let sa = &frame.bivectors[a];
            let sb = &frame.bivectors[b];
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            acc += r[((i * n + j) * n + k) * n + l] * sa[(i, j)] * sb[(k, l)];
                        }
                    }
                }
            }
            total += kinv[(a, b)] * acc;
        }
    }
    Ok(total)
}

/// Direction anisotropy of the quadratic density correction at the center:
/// `F(q) = R_ijkl kappa^ab S^ij_a S^kl_b`, with the curvature transported
/// into an orthonormal basis of `curv.metric`.
///
/// In two dimensions this is the constant `2 R`; on a flat manifold it
/// vanishes identically.
pub fn spherical_function(curv: &CurvatureValue, frame: &SphericalFrame) -> Result<f64> {
    if curv.dim != frame.dim() {
        return Err(Error::DimensionMismatch { expected: frame.dim(), got: curv.dim });
    }
    let basis = orthonormal_basis(&curv.metric)?;
    let r = frame_riemann(curv, &basis);
    contract_frame(&r, curv.dim, frame)
}

/// The six closed-form direction functions that multiply the independent
/// curvature components of a three-dimensional manifold in the expansion of
/// the anisotropy scalar.
#[derive(Debug, Clone, Copy)]
pub struct AnisotropyTable {
    pub g1212: f64,
    pub g2323: f64,
    pub g3131: f64,
    pub g1223: f64,
    pub g2331: f64,
    pub g3112: f64,
}

/// Evaluates the closed-form direction functions at angles `q = [q1, q2]`.
///
/// Each function equals `kappa^ab S^ij_a S^kl_b` for the index pair named in
/// its field (1-based indices).
pub fn anisotropy_table(q: &[f64]) -> AnisotropyTable {
    assert_eq!(q.len(), 2, "the anisotropy table is specific to three dimensions");
    let (s1, c1) = q[0].sin_cos();
    let (s2, c2) = q[1].sin_cos();
    AnisotropyTable {
        g1212: c1 * c1,
        g2323: s2 * s2 + s1 * s1 * c2 * c2,
        g3131: c2 * c2 + s1 * s1 * s2 * s2,
        g1223: -s1 * c1 * c2,
        g2331: -c2 * s2 + s1 * s1 * c2 * s2,
        g3112: -s1 * c1 * s2,
    }
}

/// Six-term closed-form route for `F(q)` on a three-dimensional manifold:
/// `4 [R'_1212 g1212 + R'_2323 g2323 + R'_3131 g3131 + R'_1223 g1223 +
/// R'_2331 g2331 + R'_3112 g3112]` with orthonormal-frame curvature
/// components `R'`.
fn contract_table(r: &[f64], q: &[f64]) -> f64 {
    let t = anisotropy_table(q);
    let rr = |i: usize, j: usize, k: usize, l: usize| r[((i * 3 + j) * 3 + k) * 3 + l];
    4.0 * (rr(0, 1, 0, 1) * t.g1212
        + rr(1, 2, 1, 2) * t.g2323
        + rr(2, 0, 2, 0) * t.g3131
        + rr(0, 1, 1, 2) * t.g1223
        + rr(1, 2, 2, 0) * t.g2331
        + rr(2, 0, 0, 1) * t.g3112)
}

/// The anisotropy scalar computed from the closed-form six-term expansion
/// (three dimensions only).
///
/// The expansion lists each independent curvature component once, while the
/// full contraction of [`spherical_function`] picks up mixed components once
/// per index-pair ordering; the two routes therefore agree pointwise when
/// the mixed components vanish and always agree on direction-grid averages
/// over full angular periods, where the mixed terms integrate to zero.
pub fn spherical_function_from_table(curv: &CurvatureValue, q: &[f64]) -> Result<f64> {
    if curv.dim != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: curv.dim });
    }
    if q.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: q.len() });
    }
    let basis = orthonormal_basis(&curv.metric)?;
    let r = frame_riemann(curv, &basis);
    Ok(contract_table(&r, q))
}

/// Averages the anisotropy scalar over a regular midpoint grid of the
/// direction sphere two ways: the generic frame contraction and the
/// closed-form table expansion. Returns `(generic, table)`; the two must
/// agree for any curvature tensor because the mixed-component terms carry
/// pure sinusoids of the azimuth.
pub fn anisotropy_grid_average(
    curv: &CurvatureValue,
    lat: usize,
    az: usize,
) -> Result<(f64, f64)> {
    if curv.dim != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: curv.dim });
    }
    if lat == 0 || az == 0 {
        return Err(Error::Config("direction grid sizes must be positive".into()));
    }
    let basis = orthonormal_basis(&curv.metric)?;
    let r = frame_riemann(curv, &basis);
    let cells: Vec<(usize, usize)> =
        (0..lat).flat_map(|i| (0..az).map(move |j| (i, j))).collect();
    let pairs: Result<Vec<(f64, f64)>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let q1 = -0.5 * PI + (i as f64 + 0.5) * PI / lat as f64;
            let q2 = -PI + (j as f64 + 0.5) * 2.0 * PI / az as f64;
            let q = [q1, q2];
            let frame = SphericalFrame::new(3, &q)?;
            Ok((contract_frame(&r, 3, &frame)?, contract_table(&r, &q)))
        })
        .collect();
    let pairs = pairs?;
    let generic: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let table: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok((sum::stable_mean(&generic), sum::stable_mean(&table)))
}

// ---------------------------------------------------------------------------
// Measured versus predicted density ratio
// ---------------------------------------------------------------------------

/// One radius sample of the density-ratio comparison.
#[derive(Debug, Clone, Copy)]
pub struct RatioSample {
    /// Arc-length radius.
    pub ell: f64,
    /// Predicted ratio `(1 - ell^2 F / 24) / Z`.
    pub predicted: f64,
    /// Ratio measured from exact densities along the geodesic:
    /// `exp(S + ell^2/2) sqrt(det h) / (ell^(n-1) sqrt(det kappa))` with `h`
    /// the projected metric spanned by the transported tangents.
    pub measured: f64,
}

/// Result of comparing the quadratic small-radius prediction against exact
/// densities along one geodesic direction.
#[derive(Debug, Clone)]
pub struct AsymptoticComparison {
    /// Anisotropy scalar `F(q)` at the center for the chosen direction.
    pub spherical_function: f64,
    /// Normalization used by the prediction.
    pub partition: f64,
    /// Per-radius samples, in the order requested (radii beyond a truncated
    /// horizon are dropped).
    pub samples: Vec<RatioSample>,
    /// Largest arc length the geodesic integration actually covered.
    pub horizon: f64,
    /// True when the geodesic could not be integrated to the largest
    /// requested radius and the result is partial.
    pub truncated: bool,
}

/// Compares the quadratic small-radius density prediction with the exact
/// density along the geodesic leaving `center` in the direction with angles
/// `q`, at each requested radius.
///
/// `partition` is the normalization entering the predicted prefactor `1/Z`;
/// shape comparisons that fit in log space are insensitive to it. If the
/// geodesic cannot be integrated out to the largest radius the comparison is
/// truncated to the reachable horizon and flagged.
pub fn asymptotic_ratio(
    metric: &MetricField,
    family: &DensityFamily,
    center: &Point,
    theta: &ControlParams,
    q: &[f64],
    ells: &[f64],
    partition: f64,
) -> Result<AsymptoticComparison> {
    if family.chart != metric.chart {
        return Err(Error::ChartMismatch {
            expected: metric.chart.to_string(),
            got: family.chart.to_string(),
        });
    }
    if family.dim != metric.dim {
        return Err(Error::DimensionMismatch { expected: metric.dim, got: family.dim });
    }
    if !(partition > 0.0 && partition.is_finite()) {
        return Err(Error::Config("the partition normalization must be positive".into()));
    }
    if ells.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Config("radii must be finite and non-negative".into()));
    }
    let n = metric.dim;
    let frame = SphericalFrame::new(n, q)?;
    let g0 = metric.at(center, theta)?;
    let basis = orthonormal_basis(&g0)?;
    let curv = curvature_at(metric, center, theta)?;
    let f_value = spherical_function(&curv, &frame)?;
    let sbar = potential_raw(metric, family, &center.coords, theta);
    let det_kappa = frame.kappa.determinant();

    let v0: Vec<f64> = (&basis * &frame.e).iter().copied().collect();
    let jdot: Vec<Vec<f64>> =
        frame.xi.iter().map(|x| (&basis * x).iter().copied().collect()).collect();

    let l_max = ells.iter().copied().fold(0.0f64, f64::max);
    let mut ray = None;
    let mut horizon = 0.0;
    let mut truncated = false;
    if l_max > 0.0 {
        let mut last_err = None;
        for (attempt, frac) in [1.0, 0.75, 0.5, 0.375, 0.25, 0.125].iter().enumerate() {
            let reach = l_max * frac;
            match integrate_jacobi_ray(metric, theta, &center.coords, &v0, &jdot, reach) {
                Ok(r) => {
                    ray = Some(r);
                    horizon = reach;
                    truncated = attempt > 0;
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if ray.is_none() {
            return Err(last_err.expect("at least one integration attempt runs"));
        }
    }

    let m = n - 1;
    let mut samples = Vec::with_capacity(ells.len());
    for &l in ells {
        let predicted = (1.0 - l * l * f_value / 24.0) / partition;
        if l == 0.0 {
            samples.push(RatioSample { ell: l, predicted, measured: sbar.exp() });
            continue;
        }
        if l > horizon * (1.0 + 1e-12) {
            continue;
        }
        let ray = ray.as_ref().expect("positive radii imply an integrated ray");
        let st = ray.state_at(l);
        let s_val = potential_raw(metric, family, &st.x, theta);
        let g = metric.eval_raw(&st.x, theta);
        let mut h = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += g[(i, j)] * st.jacobi[a][i] * st.jacobi[b][j];
                    }
                }
                h[(a, b)] = acc;
            }
        }
        let det_h = h.determinant();
        if !(det_h > 0.0) {
            return Err(Error::NotPositiveDefinite(
                "projected metric along the comparison geodesic".into(),
            ));
        }
        let measured = (s_val + 0.5 * l * l).exp() * det_h.sqrt()
            / (l.powi(m as i32) * det_kappa.sqrt());
        samples.push(RatioSample { ell: l, predicted, measured });
    }

    Ok(AsymptoticComparison {
        spherical_function: f_value,
        partition,
        samples,
        horizon,
        truncated,
    })
}

/// Least-squares coefficient of `ell^2` in a fit of `log(measured)` to
/// `c0 + c2 ell^2 + c4 ell^4` over the positive-radius samples.
///
/// The constant term absorbs the normalization, so the returned coefficient
/// isolates the quadratic curvature response of the measured ratio.
pub fn log_ratio_quadratic_coefficient(samples: &[RatioSample]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.ell > 0.0 && s.measured > 0.0)
        .map(|s| (s.ell * s.ell, s.measured.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::Config(
            "the quadratic fit needs at least four samples with positive radius and ratio".into(),
        ));
    }
    // Scale the abscissa to its maximum for conditioning.
    let u_max = pts.iter().map(|p| p.0).fold(0.0f64, f64::max);
    let mut ata = DMatrix::zeros(3, 3);
    let mut aty = DVector::zeros(3);
    for &(u, y) in &pts {
        let w = u / u_max;
        let row = [1.0, w, w * w];
        for i in 0..3 {
            for j in 0..3 {
                ata[(i, j)] += row[i] * row[j];
            }
            aty[i] += row[i] * y;
        }
    }
    let sol = ata
        .lu()
        .solve(&aty)
        .filter(|c| c.iter().all(|v: &f64| v.is_finite()))
        .ok_or_else(|| Error::Config("the quadratic fit is degenerate".into()))?;
    Ok(sol[1] / u_max)
}

// ---------------------------------------------------------------------------
// Radial curvature scalar at finite radius
// ---------------------------------------------------------------------------

/// Radial-tangential data on a distance sphere: the point reached at arc
/// length `ell` along a geodesic, its unit radial velocity, and the
/// transported tangents spanning the sphere there.
#[derive(Debug, Clone)]
pub struct RadialFrame {
    pub chart: Arc<str>,
    pub position: Vec<f64>,
    /// Unit radial vector (the geodesic velocity).
    pub velocity: Vec<f64>,
    /// Tangents of the distance sphere (transported direction derivatives).
    pub tangents: Vec<Vec<f64>>,
    pub ell: f64,
}

/// Shoots one geodesic from `center` in the direction with angles `q` and
/// returns the radial-tangential frame at arc length `ell > 0`.
pub fn radial_frame(
    metric: &MetricField,
    theta: &ControlParams,
    center: &Point,
    q: &[f64],
    ell: f64,
) -> Result<RadialFrame> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::Config("the sphere radius must be positive".into()));
    }
    let frame = SphericalFrame::new(metric.dim, q)?;
    let g0 = metric.at(center, theta)?;
    let basis = orthonormal_basis(&g0)?;
    let v0: Vec<f64> = (&basis * &frame.e).iter().copied().collect();
    let jdot: Vec<Vec<f64>> =
        frame.xi.iter().map(|x| (&basis * x).iter().copied().collect()).collect();
    let ray = integrate_jacobi_ray(metric, theta, &center.coords, &v0, &jdot, ell)?;
    let st = ray.state_at(ell);
    Ok(RadialFrame {
        chart: metric.chart.clone(),
        position: st.x,
        velocity: st.v,
        tangents: st.jacobi,
        ell,
    })
}

/// Radial-tangential curvature scalar on a distance sphere:
/// `Pi = h^ab R_ijkl X^ij_a X^kl_b` with `X^ij_a = v^i t^j_a - v^j t^i_a`,
/// `v` the unit radial vector, `t_a` the sphere tangents, and `h_ab` the
/// metric they span. `curv` must be evaluated at the frame's position.
///
/// In two dimensions this equals twice the scalar curvature at the point; as
/// the radius shrinks it approaches the center's anisotropy scalar `F(q)`.
pub fn spherical_curvature_scalar(curv: &CurvatureValue, frame: &RadialFrame) -> Result<f64> {
    let n = curv.dim;
    if frame.velocity.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: frame.velocity.len() });
    }
    if frame.tangents.len() != n - 1 {
        return Err(Error::DimensionMismatch { expected: n - 1, got: frame.tangents.len() });
    }
    let g = &curv.metric;
    let m = n - 1;
    let mut h = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += g[(i, j)] * frame.tangents[a][i] * frame.tangents[b][j];
                }
            }
            h[(a, b)] = acc;
        }
    }
    let hinv = h
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotPositiveDefinite("projected metric on the distance sphere".into()))?;
    let mut total = 0.0;
    for a in 0..m {
        for b in 0..m {
            let ta = &frame.tangents[a];
            let tb = &frame.tangents[b];
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let xa = frame.velocity[i] * ta[j] - frame.velocity[j] * ta[i];
                            let xb = frame.velocity[k] * tb[l] - frame.velocity[l] * tb[k];
                            acc += curv.r(i, j, k, l) * xa * xb;
                        }
                    }
                }
            }
            total += hinv[(a, b)] * acc;
        }
    }
    Ok(total)
}

/// Convenience route: builds the radial frame at `(q, ell)` from `center`,
/// evaluates the curvature at the reached point, and contracts.
pub fn spherical_curvature_scalar_at(
    metric: &MetricField,
    theta: &ControlParams,
    center: &Point,
    q: &[f64],
    ell: f64,
) -> Result<f64> {
    let frame = radial_frame(metric, theta, center, q, ell)?;
    let p = Point::new(metric.chart.clone(), frame.position.clone());
    let curv = curvature_at(metric, &p, theta)?;
    spherical_curvature_scalar(&curv, &frame)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::Support;
    use crate::geometry::MetricProvenance;
    use crate::special;

    fn params(values: &[f64]) -> ControlParams {
        ControlParams::new(values.to_vec())
    }

    fn sphere_metric() -> MetricField {
        MetricField::new("sphere", 2, MetricProvenance::Analytic, |q, _| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, q[0].sin().powi(2)]))
        })
    }

    /// Smooth positive-definite three-dimensional metric with no special
    /// structure (nontrivial curvature in every component).
    fn lumpy_metric_3d() -> MetricField {
        MetricField::new("cart", 3, MetricProvenance::Analytic, |x, _| {
            let mut g = DMatrix::identity(3, 3);
            g[(0, 0)] = 1.0 + 0.3 * (x[0] + 0.5 * x[1]).sin().powi(2);
            g[(1, 1)] = 1.5 + 0.2 * (x[1] * x[2]).cos();
            g[(2, 2)] = 1.2 + 0.1 * (x[0] - x[2]).tanh();
            g[(0, 1)] = 0.2 * (x[2]).sin();
            g[(1, 0)] = g[(0, 1)];
            g[(1, 2)] = 0.1 * (x[0]).cos();
            g[(2, 1)] = g[(1, 2)];
            g
        })
    }

    fn constant_metric_3d() -> MetricField {
        MetricField::new("cart", 3, MetricProvenance::Analytic, |_, _| {
            DMatrix::from_row_slice(
                3,
                3,
                &[2.0, 0.5, 0.0, 0.5, 1.5, 0.2, 0.0, 0.2, 1.0],
            )
        })
    }

    /// Rotationally symmetric profile metric in cartesian coordinates.
    fn profile_metric_cart() -> MetricField {
        MetricField::new("cart", 2, MetricProvenance::Analytic, |p, th| {
            let (x, y, t) = (p[0], p[1], th.values[0]);
            let denom = t * t + x * x + y * y;
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    (x * x + t * t) / denom,
                    x * y / denom,
                    x * y / denom,
                    (y * y + t * t) / denom,
                ],
            )
        })
    }

    /// Matching density, normalized with the closed-form partition value.
    fn profile_family_cart() -> DensityFamily {
        DensityFamily::new("cart", 2, Support::unbounded(2), |p, th| {
            let (x, y, t) = (p[0], p[1], th.values[0]);
            let r2 = x * x + y * y;
            let z = PI.sqrt()
                * (t * t / 2.0).exp()
                * (t / 2.0f64.sqrt())
                * special::erfc(t / 2.0f64.sqrt());
            -0.5 * r2 - 0.5 * (t * t + r2).ln() + t.ln() - (2.0 * PI * z).ln()
        })
    }

    fn profile_partition(t: f64) -> f64 {
        PI.sqrt() * (t * t / 2.0).exp() * (t / 2.0f64.sqrt()) * special::erfc(t / 2.0f64.sqrt())
    }

    fn std_gaussian_2d() -> (MetricField, DensityFamily) {
        let m = MetricField::new("cart", 2, MetricProvenance::Analytic, |_, _| {
            DMatrix::identity(2, 2)
        });
        let fam = DensityFamily::new("cart", 2, Support::unbounded(2), |x, _| {
            -0.5 * (x[0] * x[0] + x[1] * x[1]) - (2.0 * PI).ln()
        });
        (m, fam)
    }

    /// Synthetic curvature value on a flat orthonormal background with a
    /// single independent component `r_entry` at the given 0-based pair.
    fn synthetic_curvature(n: usize, pair: (usize, usize, usize, usize), value: f64) -> CurvatureValue {
        let mut riemann = vec![0.0; n * n * n * n];
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
        let (i, j, k, l) = pair;
        for &(a, b, c, d, sign) in &[
            (i, j, k, l, 1.0),
            (j, i, k, l, -1.0),
            (i, j, l, k, -1.0),
            (j, i, l, k, 1.0),
            (k, l, i, j, 1.0),
            (l, k, i, j, -1.0),
            (k, l, j, i, -1.0),
            (l, k, j, i, 1.0),
        ] {
            riemann[idx(a, b, c, d)] = sign * value;
        }
        CurvatureValue {
            dim: n,
            riemann,
            ricci: DMatrix::zeros(n, n),
            scalar: 0.0,
            metric: DMatrix::identity(n, n),
        }
    }

    #[test]
    fn frames_match_unit_circle_and_sphere() {
        for &q1 in &[0.0, 0.7, 2.5, 5.9] {
            let f = SphericalFrame::new(2, &[q1]).unwrap();
            assert!((f.e.norm() - 1.0).abs() < 1e-14);
            assert!(f.e.dot(&f.xi[0]).abs() < 1e-14);
            assert!((f.kappa[(0, 0)] - 1.0).abs() < 1e-14);
            assert!((f.bivectors[0][(0, 1)] - 1.0).abs() < 1e-14);
            assert!((f.bivectors[0][(1, 0)] + 1.0).abs() < 1e-14);
        }
        for &(q1, q2) in &[(0.3, -1.2), (-0.9, 2.4), (0.0, 0.0), (1.2, -3.0)] {
            let f = SphericalFrame::new(3, &[q1, q2]).unwrap();
            let (s1, c1) = q1.sin_cos();
            let (s2, c2) = q2.sin_cos();
            assert!((f.e.norm() - 1.0).abs() < 1e-14);
            for xi in &f.xi {
                assert!(f.e.dot(xi).abs() < 1e-14);
            }
            assert!((f.kappa[(0, 0)] - 1.0).abs() < 1e-14);
            assert!((f.kappa[(1, 1)] - c1 * c1).abs() < 1e-14);
            assert!(f.kappa[(0, 1)].abs() < 1e-14);
            // Closed-form bivector components (0-based pairs).
            assert!(f.bivectors[0][(0, 1)].abs() < 1e-14);
            assert!((f.bivectors[1][(0, 1)] - c1 * c1).abs() < 1e-14);
            assert!((f.bivectors[0][(1, 2)] - s2).abs() < 1e-14);
            assert!((f.bivectors[1][(1, 2)] + s1 * c1 * c2).abs() < 1e-14);
            assert!((f.bivectors[0][(2, 0)] + c2).abs() < 1e-14);
            assert!((f.bivectors[1][(2, 0)] + s1 * c1 * s2).abs() < 1e-14);
            for s in &f.bivectors {
                assert!((s.transpose() + s).abs().max() < 1e-14);
            }
        }
    }

    #[test]
    fn unsupported_dimensions_are_rejected() {
        assert!(SphericalFrame::new(1, &[]).is_err());
        assert!(SphericalFrame::new(4, &[0.1, 0.2, 0.3]).is_err());
        assert!(SphericalFrame::new(2, &[0.1, 0.2]).is_err());
        assert!(SphericalFrame::new(3, &[0.1]).is_err());
    }

    #[test]
    fn two_dimensional_anisotropy_is_twice_scalar_curvature() {
        let m = sphere_metric();
        let th = params(&[]);
        let p = Point::new("sphere", vec![0.8, 0.3]);
        let curv = curvature_at(&m, &p, &th).unwrap();
        for &q1 in &[0.0, 1.1, 4.4] {
            let frame = SphericalFrame::new(2, &[q1]).unwrap();
            let f = spherical_function(&curv, &frame).unwrap();
            assert!(
                (f - 2.0 * curv.scalar).abs() < 1e-8 * (1.0 + curv.scalar.abs()),
                "q1 = {q1}: F = {f}, 2R = {}",
                2.0 * curv.scalar
            );
        }

        // Profile metric at its center: scalar curvature 6/t^2.
        let m = profile_metric_cart();
        let th = params(&[2.0]);
        let p = Point::new("cart", vec![0.0, 0.0]);
        let curv = curvature_at(&m, &p, &th).unwrap();
        let frame = SphericalFrame::new(2, &[0.6]).unwrap();
        let f = spherical_function(&curv, &frame).unwrap();
        assert!((f - 12.0 / 4.0).abs() < 1e-5, "F = {f}");
    }

    #[test]
    fn flat_directions_have_zero_anisotropy() {
        let m = constant_metric_3d();
        let th = params(&[]);
        let p = Point::new("cart", vec![0.4, -0.2, 1.1]);
        let curv = curvature_at(&m, &p, &th).unwrap();
        for &(q1, q2) in &[(0.0, 0.0), (0.5, -2.0), (-1.2, 2.8)] {
            let frame = SphericalFrame::new(3, &[q1, q2]).unwrap();
            let f = spherical_function(&curv, &frame).unwrap();
            assert!(f.abs() < 1e-10, "F = {f}");
        }
    }

    #[test]
    fn single_curvature_component_follows_the_table() {
        let c = 0.7;
        let curv = synthetic_curvature(3, (0, 1, 0, 1), c);
        for &(q1, q2) in &[(0.0, 0.0), (0.4, 1.3), (-1.1, -2.2), (1.0, 3.0)] {
            let frame = SphericalFrame::new(3, &[q1, q2]).unwrap();
            let expected = 4.0 * c * q1.cos().powi(2);
            let generic = spherical_function(&curv, &frame).unwrap();
            let table = spherical_function_from_table(&curv, &[q1, q2]).unwrap();
            assert!((generic - expected).abs() < 1e-12, "generic {generic} vs {expected}");
            assert!((table - expected).abs() < 1e-12, "table {table} vs {expected}");
        }
    }

    #[test]
    fn table_matches_frame_contraction_pairwise() {
        // Each closed-form entry equals kappa^ab S^(pair)_a S^(pair)_b built
        // from the frame vectors directly.
        for &(q1, q2) in &[(0.3, 0.9), (-0.7, -2.4), (1.1, 2.9)] {
            let frame = SphericalFrame::new(3, &[q1, q2]).unwrap();
            let kinv = frame.kappa_inverse().unwrap();
            let pair = |p: (usize, usize), r: (usize, usize)| -> f64 {
                let mut acc = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        acc += kinv[(a, b)]
                            * frame.bivectors[a][(p.0, p.1)]
                            * frame.bivectors[b][(r.0, r.1)];
                    }
                }
                acc
            };
            let t = anisotropy_table(&[q1, q2]);
            assert!((t.g1212 - pair((0, 1), (0, 1))).abs() < 1e-12);
            assert!((t.g2323 - pair((1, 2), (1, 2))).abs() < 1e-12);
            assert!((t.g3131 - pair((2, 0), (2, 0))).abs() < 1e-12);
            assert!((t.g1223 - pair((0, 1), (1, 2))).abs() < 1e-12);
            assert!((t.g2331 - pair((1, 2), (2, 0))).abs() < 1e-12);
            assert!((t.g3112 - pair((2, 0), (0, 1))).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_average_matches_anisotropy_table() {
        let m = lumpy_metric_3d();
        let th = params(&[]);
        let p = Point::new("cart", vec![0.3, -0.4, 0.9]);
        let curv = curvature_at(&m, &p, &th).unwrap();
        let (generic, table) = anisotropy_grid_average(&curv, 24, 48).unwrap();
        assert!(generic.abs() > 1e-4, "test metric should be curved, got {generic}");
        assert!(
            (generic - table).abs() < 1e-10 * (1.0 + generic.abs()),
            "generic {generic} vs table {table}"
        );
    }

    #[test]
    fn frame_kappa_matches_ray_projected_metric() {
        // Constant anisotropic metric: straight rays, exact h = l^2 kappa.
        let m = constant_metric_3d();
        let th = params(&[]);
        let center = Point::new("cart", vec![0.0, 0.0, 0.0]);
        let check = |metric: &MetricField,
                     th: &ControlParams,
                     center: &Point,
                     q: &[f64],
                     l: f64,
                     tol: f64| {
            let frame = SphericalFrame::new(metric.dim, q).unwrap();
            let rf = radial_frame(metric, th, center, q, l).unwrap();
            let g = metric.eval_raw(&rf.position, th);
            let mm = metric.dim - 1;
            for a in 0..mm {
                for b in 0..mm {
                    let mut acc = 0.0;
                    for i in 0..metric.dim {
                        for j in 0..metric.dim {
                            acc += g[(i, j)] * rf.tangents[a][i] * rf.tangents[b][j];
                        }
                    }
                    assert!(
                        (acc / (l * l) - frame.kappa[(a, b)]).abs() < tol,
                        "h/l^2 {} vs kappa {}",
                        acc / (l * l),
                        frame.kappa[(a, b)]
                    );
                }
            }
        };
        check(&m, &th, &center, &[0.4, -1.0], 0.7, 1e-9);
        check(&m, &th, &center, &[-0.8, 2.1], 0.7, 1e-9);

        // Curved cases at small radius.
        let m = sphere_metric();
        let center = Point::new("sphere", vec![1.1, 0.5]);
        check(&m, &th, &center, &[0.3], 0.01, 1e-4);
        check(&m, &th, &center, &[2.0], 0.01, 1e-4);

        let m = lumpy_metric_3d();
        let center = Point::new("cart", vec![0.3, -0.4, 0.9]);
        check(&m, &th, &center, &[0.5, 1.0], 0.02, 1e-4);
    }

    #[test]
    fn radial_scalar_is_twice_scalar_curvature_in_two_dimensions() {
        // Unit sphere: R = 2 everywhere, so Pi = 4 at any radius.
        let m = sphere_metric();
        let th = params(&[]);
        let center = Point::new("sphere", vec![1.2, 0.3]);
        let pi_val = spherical_curvature_scalar_at(&m, &th, &center, &[0.7], 0.4).unwrap();
        assert!((pi_val - 4.0).abs() < 1e-6, "Pi = {pi_val}");

        // Profile metric from its center: Pi(l) = 12 t^2 / (t^2 + l^2)^2.
        let m = profile_metric_cart();
        let th = params(&[2.0]);
        let center = Point::new("cart", vec![0.0, 0.0]);
        for &l in &[0.5f64, 1.5] {
            let expected = 12.0 * 4.0 / (4.0 + l * l).powi(2);
            let pi_val = spherical_curvature_scalar_at(&m, &th, &center, &[1.0], l).unwrap();
            assert!(
                (pi_val - expected).abs() < 1e-6 * expected,
                "l = {l}: Pi = {pi_val}, expected {expected}"
            );
        }
    }

    #[test]
    fn radial_scalar_limits_to_central_anisotropy() {
        let m = lumpy_metric_3d();
        let th = params(&[]);
        let center = Point::new("cart", vec![0.3, -0.4, 0.9]);
        let curv = curvature_at(&m, &center, &th).unwrap();
        for &(q1, q2) in &[(0.2, 0.9), (-0.6, -1.8)] {
            let frame = SphericalFrame::new(3, &[q1, q2]).unwrap();
            let f = spherical_function(&curv, &frame).unwrap();
            let pi_val =
                spherical_curvature_scalar_at(&m, &th, &center, &[q1, q2], 0.02).unwrap();
            assert!(
                (pi_val - f).abs() < 1e-3 * (1.0 + f.abs()),
                "Pi = {pi_val}, F = {f}"
            );
        }

        // Flat manifold: identically zero.
        let m = constant_metric_3d();
        let center = Point::new("cart", vec![0.1, 0.2, -0.3]);
        let pi_val = spherical_curvature_scalar_at(&m, &th, &center, &[0.4, 1.0], 0.5).unwrap();
        assert!(pi_val.abs() < 1e-12, "Pi = {pi_val}");
    }

    #[test]
    fn flat_family_ratio_is_unity() {
        let (m, fam) = std_gaussian_2d();
        let th = params(&[]);
        let center = Point::new("cart", vec![0.0, 0.0]);
        let cmp = asymptotic_ratio(&m, &fam, &center, &th, &[0.35], &[0.0, 0.2, 0.5], 1.0)
            .unwrap();
        assert!(!cmp.truncated);
        assert_eq!(cmp.samples.len(), 3);
        for s in &cmp.samples {
            assert!((s.predicted - 1.0).abs() < 1e-12, "predicted {}", s.predicted);
            assert!((s.measured - 1.0).abs() < 1e-8, "measured {}", s.measured);
        }
    }

    #[test]
    fn profile_ratio_prefactor_and_quadratic_fit() {
        let t = 4.0;
        let m = profile_metric_cart();
        let fam = profile_family_cart();
        let th = params(&[t]);
        let center = Point::new("cart", vec![0.0, 0.0]);
        let z = profile_partition(t);
        let mut ells = vec![0.0];
        let steps = 36;
        for i in 0..steps {
            ells.push(0.05 + (0.4 - 0.05) * i as f64 / (steps - 1) as f64);
        }
        let cmp = asymptotic_ratio(&m, &fam, &center, &th, &[1.3], &ells, z).unwrap();
        assert!(!cmp.truncated);

        // Prefactor at the origin: predicted and measured both equal 1/Z.
        let origin = cmp.samples[0];
        assert!((origin.predicted - 1.0 / z).abs() < 1e-12 / z);
        assert!((origin.measured - 1.0 / z).abs() < 1e-9 / z);

        // The anisotropy scalar is twice the central scalar curvature.
        assert!((cmp.spherical_function - 12.0 / (t * t)).abs() < 1e-5);

        // Measured ratio tracks the prediction through quadratic order.
        for s in &cmp.samples {
            assert!(
                (s.measured * z - (1.0 - s.ell * s.ell * cmp.spherical_function / 24.0)).abs()
                    < 1e-4,
                "l = {}: measured*Z = {}",
                s.ell,
                s.measured * z
            );
        }

        // Quadratic coefficient of the log ratio recovers -F/24 within 10%.
        let coeff = log_ratio_quadratic_coefficient(&cmp.samples).unwrap();
        let expected = -cmp.spherical_function / 24.0;
        assert!(
            (coeff - expected).abs() < 0.1 * expected.abs(),
            "coeff = {coeff}, expected {expected}"
        );
    }

    #[test]
    fn truncated_geodesics_are_flagged() {
        // Flat metric that turns non-finite outside a box of half-width 0.9.
        let m = MetricField::new("cart", 2, MetricProvenance::Analytic, |x, _| {
            let bad = x.iter().any(|v| v.abs() > 0.9);
            let v = if bad { f64::NAN } else { 1.0 };
            DMatrix::from_diagonal(&DVector::from_vec(vec![v, v]))
        });
        let fam = DensityFamily::new("cart", 2, Support::unbounded(2), |x, _| {
            -0.5 * (x[0] * x[0] + x[1] * x[1]) - (2.0 * PI).ln()
        });
        let th = params(&[]);
        let center = Point::new("cart", vec![0.0, 0.0]);
        let cmp =
            asymptotic_ratio(&m, &fam, &center, &th, &[0.0], &[0.2, 0.8, 1.6], 1.0).unwrap();
        assert!(cmp.truncated);
        assert!((cmp.horizon - 0.8).abs() < 1e-12);
        assert_eq!(cmp.samples.len(), 2);
        assert!((cmp.samples[1].measured - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quadratic_fit_requires_enough_samples() {
        let samples = vec![
            RatioSample { ell: 0.1, predicted: 1.0, measured: 1.0 },
            RatioSample { ell: 0.2, predicted: 1.0, measured: 0.9 },
        ];
        assert!(log_ratio_quadratic_coefficient(&samples).is_err());
    }
}
