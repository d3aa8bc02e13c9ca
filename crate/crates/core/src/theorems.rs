//! Sampling pipelines and Monte Carlo certification of the exact
//! expectation identities obeyed by admissible families.
//!
//! Every admissible family satisfies a small set of distribution-level
//! identities: the expected squared force equals `n k`, the expected squared
//! geodesic distance equals `n k`, the expected potential deficit equals
//! `-n k / 2`, the higher moments of the squared force follow the
//! chi-square ladder `<(eta^2)^s> = (2k)^s Gamma(s + n/2) / Gamma(n/2)`,
//! and `<k D_i w^i + eta_i w^i> = 0` for any decaying test field `w`.
//! This module draws reproducible samples from the built-in families
//! (Box-Muller, linear-transform, inverse-transform and tangent-map
//! pipelines), estimates each identity with standard errors, and reports a
//! z-score per identity. All randomness is counter-based: the draw for
//! sample `i` depends only on `(seed, i)`, so parallel and serial runs are
//! bit-for-bit identical.

use crate::charts::{ControlParams, DensityFamily, Point};
use crate::error::{Error, Result};
use crate::gaussrep::{find_mode, potential_gradient_raw, potential_raw};
use crate::geometry::{christoffel_at, MetricField};
use crate::quad;
use crate::rng::Rng;
use crate::special;
use crate::sum;
use crate::tol;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

// ---------------------------------------------------------------------------
// Batches and reports

/// A reproducible batch of draws from one family. The batch remembers the
/// seed and parameters that produced it, so any estimate computed from it
/// can be replayed exactly.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub points: Vec<Point>,
    pub seed: u64,
    pub family: String,
    pub theta: ControlParams,
}

/// Monte Carlo verdict for one expectation identity.
#[derive(Debug, Clone)]
pub struct TheoremReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub theoretical: f64,
    pub z_score: f64,
    pub sample_size: usize,
}

fn z_score(estimate: f64, theoretical: f64, std_error: f64) -> f64 {
    if std_error > 0.0 {
        (estimate - theoretical) / std_error
    } else if (estimate - theoretical).abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

// ---------------------------------------------------------------------------
// Gaussian samplers

/// The Box-Muller map itself: `x = mu + sigma sqrt(-2 ln z1) cos(2 pi z2)`
/// for `z1 in (0, 1]`, `z2 in [0, 1)`.
#[inline]
pub fn box_muller_map(mu: f64, sigma: f64, z1: f64, z2: f64) -> f64 {
    mu + sigma * (-2.0 * z1.ln()).sqrt() * (2.0 * std::f64::consts::PI * z2).cos()
}

#[inline]
fn standard_normal(rng: &mut Rng) -> f64 {
    let z1 = rng.uniform_oc();
    let z2 = rng.uniform_co();
    box_muller_map(0.0, 1.0, z1, z2)
}

/// One-dimensional gaussian batch via Box-Muller. Sample `i` uses stream
/// `i` of the seed, so the batch is order-stable under parallel generation.
pub fn box_muller_sample(
    chart: &str,
    mu: f64,
    sigma: f64,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::Config(format!(
            "gaussian sampler needs finite mu and positive sigma, got mu={mu}, sigma={sigma}"
        )));
    }
    let chart_owned: std::sync::Arc<str> = chart.into();
    let points: Vec<Point> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::stream(seed, i as u64);
            Point::new(chart_owned.clone(), vec![mu + sigma * standard_normal(&mut rng)])
        })
        .collect();
    Ok(SampleBatch {
        points,
        seed,
        family: "box-muller".into(),
        theta: ControlParams::new(vec![mu, sigma]),
    })
}

/// Multivariate gaussian batch: `x = mu + L z` with `L` the Cholesky factor
/// of the covariance and `z` a vector of independent standard normals.
pub fn gaussian_nd_sample(
    chart: &str,
    mu: &[f64],
    cov: &DMatrix<f64>,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let n = mu.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cov.nrows() });
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("sampling covariance".into()))?;
    let l = chol.l();
    let mu_v = DVector::from_column_slice(mu);
    let chart_owned: std::sync::Arc<str> = chart.into();
    let points: Vec<Point> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::stream(seed, i as u64);
            let z = DVector::from_iterator(n, (0..n).map(|_| standard_normal(&mut rng)));
            let x = &mu_v + &l * z;
            Point::new(chart_owned.clone(), x.iter().copied().collect())
        })
        .collect();
    Ok(SampleBatch {
        points,
        seed,
        family: "gaussian-nd".into(),
        theta: ControlParams::new(mu.to_vec()),
    })
}

// ---------------------------------------------------------------------------
// Inverse-transform sampling for one-dimensional densities

/// How far (in log-density units below the maximum) the working interval
/// extends. `e^-80` leaves tail mass far below the resolution of a uniform
/// double in (0, 1) for any sub-polynomial tail.
const LOG_DROP_FAR: f64 = 80.0;
/// Log drop bounding the finely gridded core of the working interval.
const LOG_DROP_CORE: f64 = 12.0;
const CORE_CELLS: usize = 1024;
const TAIL_CELLS: usize = 64;
const QUANTILE_MAX_ITER: usize = 200;

/// Tabulated cumulative distribution of a one-dimensional density with
/// Newton-refined quantile inversion. The density need not be normalized.
pub struct CdfSampler<'a> {
    density: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
    nodes: Vec<f64>,
    cdf: Vec<f64>,
    mass: f64,
}

impl<'a> CdfSampler<'a> {
    /// Builds the cumulative table for `density` (nonnegative, integrable)
    /// on the interval `(lo, hi)`; either end may be infinite. The mass is
    /// localized automatically: an anchor near the maximum is found by a
    /// coarse probe scan, and the interval is clipped where the log density
    /// falls `80` below the anchor value.
    pub fn new(density: impl Fn(f64) -> f64 + Sync + 'a, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Config(format!(
                "density interval is empty: ({lo}, {hi})"
            )));
        }
        let density: Box<dyn Fn(f64) -> f64 + Sync + 'a> = Box::new(density);
        let log_f = |x: f64| -> f64 {
            let v = (density)(x);
            if v > 0.0 && v.is_finite() {
                v.ln()
            } else {
                f64::NEG_INFINITY
            }
        };

        // Probe scan for an anchor near the maximum.
        let mut probes: Vec<f64> = Vec::new();
        if lo.is_finite() && hi.is_finite() {
            let width = hi - lo;
            for i in 0..128 {
                probes.push(lo + width * (i as f64 + 0.5) / 128.0);
            }
        } else {
            let center = if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                0.0
            };
            for j in -20..=40 {
                let d = (2.0f64).powi(j);
                for sign in [1.0, -1.0] {
                    let x = center + sign * d;
                    if x > lo && x < hi {
                        probes.push(x);
                    }
                }
            }
            if center > lo && center < hi {
                probes.push(center);
            }
        }
        let mut anchor = f64::NAN;
        let mut lf_anchor = f64::NEG_INFINITY;
        for &x in &probes {
            let lf = log_f(x);
            if lf > lf_anchor {
                lf_anchor = lf;
                anchor = x;
            }
        }
        if !lf_anchor.is_finite() {
            return Err(Error::Quadrature(
                "density is zero at every probe point; cannot localize its mass".into(),
            ));
        }

        // Walk outward from the anchor until the log density has dropped by
        // `drop`, doubling the step; finite bounds clip the walk.
        let walk = |sign: f64, drop: f64| -> Result<f64> {
            let bound = if sign < 0.0 { lo } else { hi };
            let mut h = 2.0f64.powi(-10) * (1.0 + anchor.abs());
            for _ in 0..120 {
                let x = anchor + sign * h;
                let clipped = if sign < 0.0 { x.max(bound) } else { x.min(bound) };
                if clipped == bound && bound.is_finite() {
                    return Ok(bound);
                }
                if log_f(clipped) <= lf_anchor - drop {
                    return Ok(clipped);
                }
                h *= 2.0;
            }
            Err(Error::Quadrature(
                "density does not decay away from its maximum; mass cannot be localized".into(),
            ))
        };
        let core_lo = walk(-1.0, LOG_DROP_CORE)?;
        let core_hi = walk(1.0, LOG_DROP_CORE)?;
        let far_lo = walk(-1.0, LOG_DROP_FAR)?.min(core_lo);
        let far_hi = walk(1.0, LOG_DROP_FAR)?.max(core_hi);

        // Node layout: geometric approach from each far edge to the core,
        // uniform inside the core.
        let mut nodes: Vec<f64> = Vec::with_capacity(CORE_CELLS + 2 * TAIL_CELLS + 3);
        if far_lo < core_lo {
            let d_far = anchor - far_lo;
            let d_core = (anchor - core_lo).max(d_far * 1e-12);
            let ratio = d_core / d_far;
            for j in 0..TAIL_CELLS {
                nodes.push(anchor - d_far * ratio.powf(j as f64 / TAIL_CELLS as f64));
            }
        }
        for i in 0..=CORE_CELLS {
            nodes.push(core_lo + (core_hi - core_lo) * i as f64 / CORE_CELLS as f64);
        }
        if far_hi > core_hi {
            let d_far = far_hi - anchor;
            let d_core = (core_hi - anchor).max(d_far * 1e-12);
            let ratio = d_core / d_far;
            for j in (0..TAIL_CELLS).rev() {
                nodes.push(anchor + d_far * ratio.powf(j as f64 / TAIL_CELLS as f64));
            }
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup();
        if nodes.len() < 2 {
            return Err(Error::Quadrature(
                "degenerate node layout for the cumulative table".into(),
            ));
        }

        // First pass: single-panel estimates set the absolute tolerance
        // scale; second pass integrates each cell adaptively.
        let rough: f64 = nodes
            .windows(2)
            .map(|w| {
                quad::integrate(&density, w[0], w[1], f64::INFINITY)
                    .map(|q| q.value)
                    .unwrap_or(0.0)
            })
            .sum();
        if !(rough > 0.0) || !rough.is_finite() {
            return Err(Error::Quadrature(format!(
                "density integrates to {rough} on the working interval"
            )));
        }
        let cell_tol = 1e-14 * rough / nodes.len() as f64;
        let mut masses: Vec<f64> = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let q = quad::integrate(&density, w[0], w[1], cell_tol)?;
            masses.push(q.value.max(0.0));
        }
        let mass = sum::stable_sum(&masses);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Quadrature(format!(
                "density integrates to {mass} on the working interval"
            )));
        }
        let mut cdf: Vec<f64> = Vec::with_capacity(nodes.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for m in &masses {
            acc += m;
            cdf.push((acc / mass).min(1.0));
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(CdfSampler { density, nodes, cdf, mass })
    }

    /// Builds the table from a one-dimensional family at fixed parameters.
    pub fn from_family(family: &'a DensityFamily, theta: &'a ControlParams) -> Result<Self> {
        if family.dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: family.dim });
        }
        let lo = family.support.lower[0];
        let hi = family.support.upper[0];
        CdfSampler::new(move |x| family.log_density_raw(&[x], theta).exp(), lo, hi)
    }

    /// Interval actually tabulated (mass outside is treated as zero).
    pub fn effective_bounds(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    /// Normalized cumulative distribution at `x`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Config(format!("cdf argument must be finite, got {x}")));
        }
        if x <= self.nodes[0] {
            return Ok(0.0);
        }
        if x >= *self.nodes.last().unwrap() {
            return Ok(1.0);
        }
        let i = self.nodes.partition_point(|&n| n <= x) - 1;
        let local = quad::integrate(&self.density, self.nodes[i], x, 1e-13 * self.mass)?;
        Ok((self.cdf[i] + local.value.max(0.0) / self.mass).clamp(0.0, 1.0))
    }

    /// Quantile `F^{-1}(u)` for `u` strictly inside `(0, 1)`: the bracketing
    /// cell comes from the table, the position inside the cell from Newton
    /// iteration (with bisection fallback) on the local integral.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Config(format!(
                "quantile argument must lie strictly inside (0, 1), got {u}"
            )));
        }
        let i = self.cdf.partition_point(|&c| c <= u).saturating_sub(1);
        let i = i.min(self.nodes.len() - 2);
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let cell_mass = (self.cdf[i + 1] - self.cdf[i]) * self.mass;
        if cell_mass <= 0.0 {
            return Ok(a);
        }
        let target = (u - self.cdf[i]) * self.mass;
        let atol = 1e-12 * self.mass;
        let itol = 1e-13 * self.mass;
        let mut lo_b = a;
        let mut hi_b = b;
        let mut x = a + (b - a) * (target / cell_mass).clamp(0.0, 1.0);
        for _ in 0..QUANTILE_MAX_ITER {
            let local = quad::integrate(&self.density, a, x, itol)?;
            let err = local.value - target;
            if err.abs() <= atol {
                return Ok(x);
            }
            if err > 0.0 {
                hi_b = x;
            } else {
                lo_b = x;
            }
            let fx = (self.density)(x);
            let newton = if fx.is_finite() && fx > 1e-300 { x - err / fx } else { f64::NAN };
            let next = if newton.is_finite() && newton > lo_b && newton < hi_b {
                newton
            } else {
                0.5 * (lo_b + hi_b)
            };
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::NoConvergence(format!(
            "quantile inversion did not converge at u = {u}"
        )))
    }
}

/// Inverse-transform batch for a one-dimensional family: build the
/// cumulative table once, then map one open-interval uniform per sample
/// through the quantile function.
pub fn inverse_transform_sample(
    family: &DensityFamily,
    theta: &ControlParams,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let sampler = CdfSampler::from_family(family, theta)?;
    let points: Vec<Point> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::stream(seed, i as u64);
            let u = rng.uniform_oo();
            Ok(Point::new(family.chart.clone(), vec![sampler.quantile(u)?]))
        })
        .collect::<Result<_>>()?;
    Ok(SampleBatch {
        points,
        seed,
        family: "inverse-transform".into(),
        theta: theta.clone(),
    })
}

// ---------------------------------------------------------------------------
// Tangent pushforward and the radial-profile sampler

/// Monotone map sending a gaussian variate to a heavy-tailed one:
/// `y = nu + gamma tan( (pi/2) erf( (x - mu) / (sqrt(2) sigma) ) )`.
/// If `x` is gaussian with mean `mu` and deviation `sigma`, `y` follows the
/// width-`gamma` Lorentzian centered at `nu`.
#[inline]
pub fn gauss_to_cauchy(x: f64, mu: f64, sigma: f64, nu: f64, gamma: f64) -> f64 {
    let t = special::erf((x - mu) / (std::f64::consts::SQRT_2 * sigma));
    nu + gamma * (std::f64::consts::FRAC_PI_2 * t).tan()
}

/// Planar batch for the axially symmetric profile family: the radius
/// follows `f(r) oc r e^{-r^2/2} / sqrt(t^2 + r^2)` by inverse transform
/// and the angle is uniform. Sample `i` draws both from stream `i`.
pub fn radial_profile_sample(
    chart: &str,
    t: f64,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Config(format!(
            "profile scale must be positive and finite, got {t}"
        )));
    }
    let radial = move |r: f64| {
        if r > 0.0 {
            r * (-0.5 * r * r).exp() / (t * t + r * r).sqrt()
        } else {
            0.0
        }
    };
    let sampler = CdfSampler::new(radial, 0.0, f64::INFINITY)?;
    let chart_owned: std::sync::Arc<str> = chart.into();
    let points: Vec<Point> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::stream(seed, i as u64);
            let r = sampler.quantile(rng.uniform_oo())?;
            let phi = rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI);
            Ok(Point::new(chart_owned.clone(), vec![r * phi.cos(), r * phi.sin()]))
        })
        .collect::<Result<_>>()?;
    Ok(SampleBatch {
        points,
        seed,
        family: "radial-profile".into(),
        theta: ControlParams::new(vec![t]),
    })
}

// ---------------------------------------------------------------------------
// Family-level sampling

/// Recipe attaching a concrete sampling pipeline to a family.
#[derive(Debug, Clone)]
pub enum SamplingRecipe {
    /// Box-Muller plus linear transform; exact for gaussian families.
    GaussianNd { mu: Vec<f64>, cov: DMatrix<f64> },
    /// Radius by inverse transform, angle uniform; the profile scale is
    /// read from the first control parameter.
    RadialProfile,
    /// Inverse transform directly on the family's one-dimensional density.
    Univariate,
    /// Standard gaussian pushed through the tangent map; exact for the
    /// width-`gamma` Lorentzian centered at `nu`.
    GaussToCauchy { mu: f64, sigma: f64, nu: f64, gamma: f64 },
}

/// Draws `count` reproducible samples from `family` with the given recipe
/// and stamps the batch with `family_id`. Every sample is checked against
/// the family support.
pub fn sample_family(
    family: &DensityFamily,
    family_id: &str,
    recipe: &SamplingRecipe,
    theta: &ControlParams,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let mut batch = match recipe {
        SamplingRecipe::GaussianNd { mu, cov } => {
            if mu.len() != family.dim {
                return Err(Error::DimensionMismatch { expected: family.dim, got: mu.len() });
            }
            gaussian_nd_sample(&family.chart, mu, cov, count, seed)?
        }
        SamplingRecipe::RadialProfile => {
            if family.dim != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: family.dim });
            }
            let t = *theta.values.first().ok_or_else(|| {
                Error::Config("radial profile recipe needs a scale parameter".into())
            })?;
            radial_profile_sample(&family.chart, t, count, seed)?
        }
        SamplingRecipe::Univariate => inverse_transform_sample(family, theta, count, seed)?,
        SamplingRecipe::GaussToCauchy { mu, sigma, nu, gamma } => {
            if family.dim != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: family.dim });
            }
            let gaussian = box_muller_sample(&family.chart, *mu, *sigma, count, seed)?;
            let points = gaussian
                .points
                .into_iter()
                .map(|p| {
                    Point::new(
                        family.chart.clone(),
                        vec![gauss_to_cauchy(p.coords[0], *mu, *sigma, *nu, *gamma)],
                    )
                })
                .collect();
            SampleBatch { points, ..gaussian }
        }
    };
    for (i, p) in batch.points.iter().enumerate() {
        if !family.support.contains(&p.coords) {
            return Err(Error::OutsideSupport(format!(
                "sample {i} at {:?} left the family support",
                p.coords
            )));
        }
    }
    batch.family = family_id.to_string();
    batch.theta = theta.clone();
    Ok(batch)
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = sum::stable_mean(values);
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = sum::stable_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Standard error of the mean from overlapping batch means with batch
/// length `ceil(sqrt(n))`. For heavy-tailed observables (high moments) the
/// naive error estimate is itself noisy; batching is more conservative.
fn overlapping_batch_se(values: &[f64], mean: f64) -> f64 {
    let n = values.len();
    let l = (n as f64).sqrt().ceil() as usize;
    if l < 2 || n < 2 * l {
        return 0.0;
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        prefix.push(acc);
    }
    let nb = n - l + 1;
    let mut sq = 0.0;
    for i in 0..nb {
        let bm = (prefix[i + l] - prefix[i]) / l as f64;
        sq += (bm - mean) * (bm - mean);
    }
    let var_mean = l as f64 / ((n - l) as f64 * (n - l + 1) as f64) * sq;
    var_mean.max(0.0).sqrt()
}

/// Monte Carlo expectation of `f` over the batch: `(mean, standard error)`.
/// A non-finite observable value aborts with the offending sample index.
pub fn mc_expectation<F>(batch: &SampleBatch, f: F) -> Result<(f64, f64)>
where
    F: Fn(&Point) -> Result<f64> + Sync,
{
    if batch.points.is_empty() {
        return Err(Error::Config("cannot average over an empty batch".into()));
    }
    let values: Vec<f64> = batch
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let v = f(p)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::EvalDomain {
                    expr: format!("observable at sample {i}"),
                    msg: format!("non-finite value {v}"),
                })
            }
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_se(&values))
}

// ---------------------------------------------------------------------------
// Covariant divergence

/// Covariant divergence `D_i w^i` of a vector field at a point, computed
/// two ways: the connection route `d_i w^i + G^k_{ik} w^i` and the density
/// route `|g|^{-1/2} d_i ( |g|^{1/2} w^i )`. The routes must agree within
/// `1e-5`; the connection route is returned.
pub fn covariant_divergence<W>(
    metric: &MetricField,
    w: W,
    p: &Point,
    theta: &ControlParams,
) -> Result<f64>
where
    W: Fn(&[f64]) -> Vec<f64>,
{
    let conn = christoffel_at(metric, p, theta)?;
    let n = metric.dim;
    let x = &p.coords;
    let probe = |y: &[f64]| -> Result<Vec<f64>> {
        let v = w(y);
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        Ok(v)
    };
    let sqrt_det = |y: &[f64]| -> Result<f64> {
        let d = metric.eval_raw(y, theta).determinant();
        if d > 0.0 && d.is_finite() {
            Ok(d.sqrt())
        } else {
            Err(Error::NotPositiveDefinite(format!(
                "metric determinant {d} while differencing the divergence"
            )))
        }
    };

    let w0 = probe(x)?;
    let mut div_conn = 0.0;
    let mut div_dens = 0.0;
    for i in 0..n {
        let h = tol::JACOBIAN_STEP * (1.0 + x[i].abs());
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let wp = probe(&xp)?;
        let wm = probe(&xm)?;
        div_conn += (wp[i] - wm[i]) / (2.0 * h);
        div_dens += (sqrt_det(&xp)? * wp[i] - sqrt_det(&xm)? * wm[i]) / (2.0 * h);
    }
    for k in 0..n {
        div_conn += conn.trace(k) * w0[k];
    }
    div_dens /= sqrt_det(x)?;
    if (div_conn - div_dens).abs()
        > tol::DIVERGENCE_CONSISTENCY * (1.0 + div_conn.abs().max(div_dens.abs()))
    {
        return Err(Error::DivergenceMismatch { left: div_conn, right: div_dens });
    }
    Ok(div_conn)
}

// ---------------------------------------------------------------------------
// Goodness of fit

/// Kolmogorov-Smirnov verdict against a reference distribution.
#[derive(Debug, Clone, Copy)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
}

/// Tail probability `Q(t) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 t^2)` of the
/// Kolmogorov distribution.
fn kolmogorov_q(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mut q = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * t * t).exp();
        q += sign * term;
        sign = -sign;
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * q).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test of `samples` against the continuous
/// reference CDF. The p-value uses the finite-sample scaling
/// `t = (sqrt(n) + 0.12 + 0.11/sqrt(n)) D`.
pub fn ks_test<F>(samples: &[f64], cdf: F) -> Result<GoodnessOfFit>
where
    F: Fn(f64) -> f64,
{
    let n = samples.len();
    if n == 0 {
        return Err(Error::Config("Kolmogorov-Smirnov test needs samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        if !f.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&f) {
            return Err(Error::EvalDomain {
                expr: format!("reference CDF at {x}"),
                msg: format!("value {f} is not a probability"),
            });
        }
        let f = f.clamp(0.0, 1.0);
        d = d.max(f - i as f64 / nf).max((i as f64 + 1.0) / nf - f);
    }
    let t = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    Ok(GoodnessOfFit { statistic: d, p_value: kolmogorov_q(t), sample_size: n })
}

// ---------------------------------------------------------------------------
// The fluctuation suite

/// Configuration of the identity-certification run.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub sample_size: usize,
    pub seed: u64,
    /// Highest squared-force moment checked (`s = 1..=moment_max`).
    pub moment_max: usize,
    /// |z| beyond which the suite fails.
    pub z_fail: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            sample_size: 100_000,
            seed: 0x0BD6_A119,
            moment_max: 4,
            z_fail: tol::Z_FAIL,
        }
    }
}

/// Runs the full set of expectation identities on one family at scale
/// `k = theta.k` and returns one report per identity.
///
/// Estimators (with `S` the unit-scale potential, `psi` its gradient norm,
/// `S-bar` the modal value, `n` the dimension):
/// - squared force `eta^2 = k psi^2`, expected `n k`;
/// - squared distance `-2 k (S - S-bar)`, expected `n k` (a deliberately
///   different numerical route than the squared force);
/// - potential deficit `k (S - S-bar)`, expected `-n k / 2`;
/// - moments `(k psi^2)^s`, expected `(2k)^s Gamma(s + n/2) / Gamma(n/2)`,
///   with the standard error widened by overlapping batch means for
///   `s >= 3`;
/// - the divergence identity `k D_i w^i + k dS_i w^i`, expected `0`, with
///   `w(x) = x - mode` unless a test field is supplied.
///
/// Fails with `SuiteFailure` listing every identity whose |z| exceeds
/// `config.z_fail`.
pub fn fluctuation_suite(
    metric: &MetricField,
    family: &DensityFamily,
    family_id: &str,
    recipe: &SamplingRecipe,
    theta: &ControlParams,
    config: &SuiteConfig,
    test_field: Option<&(dyn Fn(&[f64]) -> Vec<f64> + Sync)>,
) -> Result<Vec<TheoremReport>> {
    if config.sample_size < 100 {
        return Err(Error::Config(format!(
            "suite needs at least 100 samples, got {}",
            config.sample_size
        )));
    }
    if config.moment_max < 1 || config.moment_max > 8 {
        return Err(Error::Config(format!(
            "moment ladder must stop between 1 and 8, got {}",
            config.moment_max
        )));
    }
    let n = metric.dim;
    let nf = n as f64;
    let k = theta.k;

    let batch = sample_family(family, family_id, recipe, theta, config.sample_size, config.seed)?;
    let mode = find_mode(metric, family, theta, &[])?;
    let s_bar = potential_raw(metric, family, &mode.coords, theta);
    let mode_coords = mode.coords.clone();
    let default_field = move |x: &[f64]| -> Vec<f64> {
        x.iter().zip(&mode_coords).map(|(xi, mi)| xi - mi).collect()
    };
    let field: &(dyn Fn(&[f64]) -> Vec<f64> + Sync) = match test_field {
        Some(f) => f,
        None => &default_field,
    };

    // Per-sample scalars: unit squared force, unit potential deficit, and
    // the divergence-identity integrand.
    let rows: Vec<[f64; 3]> = batch
        .points
        .par_iter()
        .map(|p| -> Result<[f64; 3]> {
            let x = &p.coords;
            let grad = potential_gradient_raw(metric, family, x, theta)?;
            let g = metric.eval_raw(x, theta);
            let ginv = g.try_inverse().ok_or_else(|| {
                Error::NotPositiveDefinite("metric not invertible at a sample".into())
            })?;
            let mut psi2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    psi2 += ginv[(i, j)] * grad[i] * grad[j];
                }
            }
            let deficit = potential_raw(metric, family, x, theta) - s_bar;
            let div = covariant_divergence(metric, field, p, theta)?;
            let w0 = field(x);
            let mut grad_dot_w = 0.0;
            for i in 0..n {
                grad_dot_w += grad[i] * w0[i];
            }
            Ok([psi2.max(0.0), deficit, k * div + k * grad_dot_w])
        })
        .collect::<Result<_>>()?;

    let count = rows.len();
    let mut reports: Vec<TheoremReport> = Vec::new();
    let mut push = |name: &str, values: &[f64], theoretical: f64, widen: bool| {
        let (mean, naive_se) = mean_and_se(values);
        let se = if widen {
            naive_se.max(overlapping_batch_se(values, mean))
        } else {
            naive_se
        };
        reports.push(TheoremReport {
            name: name.into(),
            estimate: mean,
            std_error: se,
            theoretical,
            z_score: z_score(mean, theoretical, se),
            sample_size: count,
        });
    };

    let eta2: Vec<f64> = rows.iter().map(|r| k * r[0]).collect();
    push("expected-squared-force", &eta2, nf * k, false);

    let dist2: Vec<f64> = rows.iter().map(|r| -2.0 * k * r[1]).collect();
    push("expected-squared-distance", &dist2, nf * k, false);

    let deficit: Vec<f64> = rows.iter().map(|r| k * r[1]).collect();
    push("expected-entropy-deficit", &deficit, -nf * k / 2.0, false);

    for s in 1..=config.moment_max {
        let vals: Vec<f64> = eta2.iter().map(|v| v.powi(s as i32)).collect();
        let theoretical = (2.0 * k).powi(s as i32)
            * (special::ln_gamma(s as f64 + nf / 2.0) - special::ln_gamma(nf / 2.0)).exp();
        push(&format!("squared-force-moment-{s}"), &vals, theoretical, s >= 3);
    }

    let ident: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    push("divergence-identity", &ident, 0.0, false);

    let failing: Vec<String> = reports
        .iter()
        .filter(|r| !(r.z_score.abs() <= config.z_fail))
        .map(|r| {
            format!(
                "{} (estimate {:.6e}, expected {:.6e}, z = {:.2})",
                r.name, r.estimate, r.theoretical, r.z_score
            )
        })
        .collect();
    if !failing.is_empty() {
        return Err(Error::SuiteFailure(format!(
            "{} of {} identities outside |z| <= {}: {}",
            failing.len(),
            reports.len(),
            config.z_fail,
            failing.join("; ")
        )));
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::Support;
    use crate::geometry::MetricProvenance;
    use std::f64::consts::PI;

    // Standard normal CDF.
    fn phi(z: f64) -> f64 {
        0.5 * (1.0 + special::erf(z / std::f64::consts::SQRT_2))
    }

    fn std_gaussian_family(dim: usize, chart: &str) -> DensityFamily {
        DensityFamily::new(chart, dim, Support::unbounded(dim), move |x, _| {
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
                - 0.5 * dim as f64 * (2.0 * PI).ln()
        })
    }

    fn euclidean_metric(dim: usize, chart: &str) -> MetricField {
        MetricField::new(chart, dim, MetricProvenance::Analytic, move |_, _| {
            DMatrix::identity(dim, dim)
        })
    }

    // Axially symmetric profile family in the plane, normalized, with its
    // exact metric; theta.values[0] is the profile scale.
    fn profile_metric_cart() -> MetricField {
        MetricField::new("cart", 2, MetricProvenance::Analytic, |x, th| {
            let t2 = th.values[0] * th.values[0];
            let (a, b) = (x[0], x[1]);
            let d = t2 + a * a + b * b;
            DMatrix::from_row_slice(
                2,
                2,
                &[(a * a + t2) / d, a * b / d, a * b / d, (b * b + t2) / d],
            )
        })
    }

    fn profile_partition(t: f64) -> f64 {
        PI.sqrt()
            * (0.5 * t * t).exp()
            * (t / std::f64::consts::SQRT_2)
            * special::erfc(t / std::f64::consts::SQRT_2)
    }

    fn profile_family_cart() -> DensityFamily {
        DensityFamily::new("cart", 2, Support::unbounded(2), |x, th| {
            let t = th.values[0];
            let r2 = x[0] * x[0] + x[1] * x[1];
            -0.5 * r2 - 0.5 * (t * t + r2).ln() + t.ln()
                - (2.0 * PI * profile_partition(t)).ln()
        })
    }

    #[test]
    fn box_muller_map_pins_reference_points() {
        // z1 = 1 collapses the radius to zero.
        assert_eq!(box_muller_map(0.7, 2.0, 1.0, 0.37), 0.7);
        // z1 = e^-2, z2 = 0 gives exactly mu + 2 sigma.
        let x = box_muller_map(1.0, 0.5, (-2.0f64).exp(), 0.0);
        assert!((x - 2.0).abs() < 1e-12, "{x}");
    }

    #[test]
    fn box_muller_batch_matches_moments() {
        let n = 100_000;
        let (mu, sigma) = (1.5, 2.0);
        let batch = box_muller_sample("line", mu, sigma, n, 41).unwrap();
        let xs: Vec<f64> = batch.points.iter().map(|p| p.coords[0]).collect();
        let mean = sum::stable_mean(&xs);
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se_mean = sigma / (n as f64).sqrt();
        let se_var = sigma * sigma * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((mean - mu).abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var - sigma * sigma).abs() < 3.0 * se_var, "var {var}");
    }

    #[test]
    fn samplers_are_seed_deterministic() {
        let a = box_muller_sample("line", 0.0, 1.0, 500, 7).unwrap();
        let b = box_muller_sample("line", 0.0, 1.0, 500, 7).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(p.coords[0].to_bits(), q.coords[0].to_bits());
        }
        let c = radial_profile_sample("cart", 2.0, 300, 11).unwrap();
        let d = radial_profile_sample("cart", 2.0, 300, 11).unwrap();
        for (p, q) in c.points.iter().zip(&d.points) {
            assert_eq!(p.coords[0].to_bits(), q.coords[0].to_bits());
            assert_eq!(p.coords[1].to_bits(), q.coords[1].to_bits());
        }
        let e = box_muller_sample("line", 0.0, 1.0, 500, 8).unwrap();
        assert_ne!(
            a.points[0].coords[0].to_bits(),
            e.points[0].coords[0].to_bits()
        );
    }

    #[test]
    fn quantiles_invert_reference_densities() {
        // Uniform on (0, 1): F(x) = x.
        let uniform = CdfSampler::new(|_| 1.0, 0.0, 1.0).unwrap();
        for u in [0.1, 0.25, 0.5, 0.75, 0.9] {
            assert!((uniform.quantile(u).unwrap() - u).abs() < 1e-9, "u = {u}");
        }
        // Gaussian(mu = 0.7, sigma = 1.3) on the whole line.
        let (mu, sigma) = (0.7, 1.3);
        let gauss = CdfSampler::new(
            move |x| (-0.5 * ((x - mu) / sigma).powi(2)).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
        )
        .unwrap();
        assert!((gauss.quantile(0.5).unwrap() - mu).abs() < 1e-8);
        let q1 = gauss.quantile(phi(1.0)).unwrap();
        assert!((q1 - (mu + sigma)).abs() < 1e-7, "{q1}");
        let qm2 = gauss.quantile(phi(-2.0)).unwrap();
        assert!((qm2 - (mu - 2.0 * sigma)).abs() < 1e-7, "{qm2}");
        // Round trip through the tabulated CDF.
        for u in [0.05, 0.3, 0.8, 0.99] {
            let x = gauss.quantile(u).unwrap();
            assert!((gauss.cdf(x).unwrap() - u).abs() < 1e-9, "u = {u}");
        }
    }

    #[test]
    fn quantile_rejects_bad_arguments() {
        let uniform = CdfSampler::new(|_| 1.0, 0.0, 1.0).unwrap();
        for bad in [0.0, 1.0, -0.2, 1.7, f64::NAN] {
            assert!(matches!(uniform.quantile(bad), Err(Error::Config(_))), "u = {bad}");
        }
    }

    #[test]
    fn inverse_transform_gaussian_passes_ks() {
        let (mu, sigma) = (0.4, 0.9);
        let family = DensityFamily::new("line", 1, Support::unbounded(1), move |x, _| {
            -0.5 * ((x[0] - mu) / sigma).powi(2) - (sigma * (2.0 * PI).sqrt()).ln()
        });
        let theta = ControlParams::new(vec![]);
        let batch = inverse_transform_sample(&family, &theta, 10_000, 23).unwrap();
        let xs: Vec<f64> = batch.points.iter().map(|p| p.coords[0]).collect();
        let fit = ks_test(&xs, |x| phi((x - mu) / sigma)).unwrap();
        assert!(fit.p_value >= 0.01, "D = {}, p = {}", fit.statistic, fit.p_value);
    }

    #[test]
    fn tangent_map_reaches_the_lorentzian() {
        let (nu, gamma) = (0.3, 0.8);
        // The gaussian mean maps to the center, the median offset to nu + gamma.
        assert!((gauss_to_cauchy(0.0, 0.0, 1.0, nu, gamma) - nu).abs() < 1e-14);
        let x_half = std::f64::consts::SQRT_2 * special::erf_inv(0.5);
        let y = gauss_to_cauchy(x_half, 0.0, 1.0, nu, gamma);
        assert!((y - (nu + gamma)).abs() < 1e-12, "{y}");

        let gaussian = box_muller_sample("line", 0.0, 1.0, 10_000, 19).unwrap();
        let ys: Vec<f64> = gaussian
            .points
            .iter()
            .map(|p| gauss_to_cauchy(p.coords[0], 0.0, 1.0, nu, gamma))
            .collect();
        let fit = ks_test(&ys, |y| 0.5 + ((y - nu) / gamma).atan() / PI).unwrap();
        assert!(fit.p_value >= 0.01, "D = {}, p = {}", fit.statistic, fit.p_value);
    }

    #[test]
    fn gaussian_nd_sample_matches_covariance() {
        let n = 40_000;
        let mu = [0.3, -0.7];
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let batch = gaussian_nd_sample("plane", &mu, &cov, n, 57).unwrap();
        let nf = n as f64;
        let mut mean = [0.0; 2];
        for p in &batch.points {
            mean[0] += p.coords[0];
            mean[1] += p.coords[1];
        }
        mean[0] /= nf;
        mean[1] /= nf;
        for i in 0..2 {
            let se = (cov[(i, i)] / nf).sqrt();
            assert!((mean[i] - mu[i]).abs() < 3.0 * se, "mean[{i}] = {}", mean[i]);
        }
        let mut s = [[0.0; 2]; 2];
        for p in &batch.points {
            let d = [p.coords[0] - mean[0], p.coords[1] - mean[1]];
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += d[i] * d[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let est = s[i][j] / (nf - 1.0);
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)] * cov[(i, j)]) / nf).sqrt();
                assert!(
                    (est - cov[(i, j)]).abs() < 3.0 * se,
                    "cov[{i}][{j}] = {est}, want {}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn radial_profile_angles_are_uniform() {
        let n = 32_000;
        let batch = radial_profile_sample("cart", 4.0, n, 101).unwrap();
        let mut bins = [0usize; 16];
        for p in &batch.points {
            let (x, y) = (p.coords[0], p.coords[1]);
            assert!(x.hypot(y) > 0.0);
            let phi = y.atan2(x); // (-pi, pi]
            let idx = (((phi + PI) / (2.0 * PI) * 16.0) as usize).min(15);
            bins[idx] += 1;
        }
        let expect = n as f64 / 16.0;
        let chi2: f64 = bins
            .iter()
            .map(|&c| {
                let d = c as f64 - expect;
                d * d / expect
            })
            .sum();
        // 99th percentile of chi-square with 15 degrees of freedom.
        assert!(chi2 < 30.578, "chi2 = {chi2}, bins {bins:?}");
    }

    #[test]
    fn radial_profile_radius_passes_ks() {
        let t = 3.0f64;
        let n = 10_000;
        let batch = radial_profile_sample("cart", t, n, 77).unwrap();
        let rs: Vec<f64> = batch
            .points
            .iter()
            .map(|p| p.coords[0].hypot(p.coords[1]))
            .collect();
        // Closed-form radial CDF: substitute v = sqrt(t^2 + r^2) in
        // f(r) oc r e^{-r^2/2} / sqrt(t^2 + r^2).
        let s2 = std::f64::consts::SQRT_2;
        let denom = special::erfc(t / s2);
        let cdf = move |r: f64| {
            if r <= 0.0 {
                return 0.0;
            }
            let v = (t * t + r * r).sqrt();
            ((special::erf(v / s2) - special::erf(t / s2)) / denom).clamp(0.0, 1.0)
        };
        let fit = ks_test(&rs, cdf).unwrap();
        assert!(fit.p_value >= 0.01, "D = {}, p = {}", fit.statistic, fit.p_value);
    }

    #[test]
    fn mc_expectation_means_and_errors() {
        let cov = DMatrix::identity(2, 2);
        let batch = gaussian_nd_sample("plane", &[0.0, 0.0], &cov, 20_000, 3).unwrap();
        // Constant observable: zero standard error.
        let (c, se) = mc_expectation(&batch, |_| Ok(2.5)).unwrap();
        assert_eq!(c, 2.5);
        assert_eq!(se, 0.0);
        // Squared radius of a standard 2-D gaussian is chi-square with two
        // degrees of freedom: mean 2, variance 4.
        let (m, se) = mc_expectation(&batch, |p| {
            Ok(p.coords[0] * p.coords[0] + p.coords[1] * p.coords[1])
        })
        .unwrap();
        assert!((m - 2.0).abs() < 3.0 * se, "m = {m}, se = {se}");
        let se_expect = (4.0f64 / 20_000.0).sqrt();
        assert!((se - se_expect).abs() < 0.3 * se_expect, "se = {se}");
        // Non-finite observables abort with the sample index.
        let err = mc_expectation(&batch, |p| Ok((-p.coords[0].abs()).ln() * 0.0 + f64::NAN))
            .unwrap_err();
        assert!(matches!(err, Error::EvalDomain { .. }));
    }

    #[test]
    fn covariant_divergence_routes_agree() {
        let flat = euclidean_metric(2, "plane");
        let theta = ControlParams::new(vec![]);
        let p = Point::new("plane", vec![0.4, -0.7]);
        // Identity field: divergence equals the dimension.
        let d = covariant_divergence(&flat, |x| x.to_vec(), &p, &theta).unwrap();
        assert!((d - 2.0).abs() < 1e-8, "{d}");
        // Constant field: divergence vanishes.
        let d0 = covariant_divergence(&flat, |_| vec![0.3, 0.9], &p, &theta).unwrap();
        assert!(d0.abs() < 1e-8, "{d0}");
        // Round sphere, unit radial field: D_i w^i = cot(q1).
        let sphere = MetricField::new("sphere", 2, MetricProvenance::Analytic, |x, _| {
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, x[0].sin().powi(2)])
        });
        let q = Point::new("sphere", vec![0.7, 0.3]);
        let d = covariant_divergence(&sphere, |_| vec![1.0, 0.0], &q, &theta).unwrap();
        assert!((d - 1.0 / 0.7f64.tan()).abs() < 1e-6, "{d}");
    }

    #[test]
    fn flat_force_field_divergence_is_minus_dimension() {
        // For the standard gaussian with the euclidean metric the potential
        // is S = const - |x|^2/2, so D_i (grad S)^i = -n everywhere.
        let metric = euclidean_metric(2, "plane");
        let family = std_gaussian_family(2, "plane");
        let theta = ControlParams::new(vec![]);
        for coords in [[0.0, 0.0], [0.8, -0.3], [-1.5, 2.2]] {
            let p = Point::new("plane", coords.to_vec());
            let d = covariant_divergence(
                &metric,
                |x| potential_gradient_raw(&metric, &family, x, &theta).unwrap(),
                &p,
                &theta,
            )
            .unwrap();
            assert!((d + 2.0).abs() < 1e-4, "{d}");
        }
    }

    #[test]
    fn ks_helpers_behave() {
        // A perfect grid against its own CDF: tiny statistic, p near 1.
        let n = 1000;
        let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let fit = ks_test(&grid, |x| x).unwrap();
        assert!(fit.statistic <= 0.5 / n as f64 + 1e-12);
        assert!(fit.p_value > 0.999999);
        // A gross mismatch is rejected hard.
        let batch = box_muller_sample("line", 0.5, 1.0, 10_000, 5).unwrap();
        let xs: Vec<f64> = batch.points.iter().map(|p| p.coords[0]).collect();
        let bad = ks_test(&xs, phi).unwrap();
        assert!(bad.p_value < 1e-6, "p = {}", bad.p_value);
        // The tail function is monotone.
        assert!(kolmogorov_q(0.4) > kolmogorov_q(0.8));
        assert!(kolmogorov_q(0.8) > kolmogorov_q(1.6));
    }

    fn gaussian_recipe(dim: usize) -> SamplingRecipe {
        SamplingRecipe::GaussianNd {
            mu: vec![0.0; dim],
            cov: DMatrix::identity(dim, dim),
        }
    }

    #[test]
    fn suite_certifies_the_flat_gaussian() {
        let metric = euclidean_metric(2, "plane");
        let family = std_gaussian_family(2, "plane");
        let theta = ControlParams::new(vec![]);
        let config = SuiteConfig { sample_size: 20_000, seed: 13, ..SuiteConfig::default() };
        let reports = fluctuation_suite(
            &metric,
            &family,
            "gaussian-nd",
            &gaussian_recipe(2),
            &theta,
            &config,
            None,
        )
        .unwrap();
        assert_eq!(reports.len(), 3 + 4 + 1);
        for r in &reports {
            assert!(r.z_score.abs() <= 3.0, "{}: z = {}", r.name, r.z_score);
            assert_eq!(r.sample_size, 20_000);
            assert!(r.std_error >= 0.0);
        }
        // Exact targets for n = 2, k = 1: nk = 2, moments (2)^s s!, deficit -1.
        assert_eq!(reports[0].theoretical, 2.0);
        assert_eq!(reports[1].theoretical, 2.0);
        assert_eq!(reports[2].theoretical, -1.0);
        let m2 = reports.iter().find(|r| r.name == "squared-force-moment-2").unwrap();
        assert!((m2.theoretical - 8.0).abs() < 1e-12);
        let ident = reports.iter().find(|r| r.name == "divergence-identity").unwrap();
        assert_eq!(ident.theoretical, 0.0);
    }

    #[test]
    fn suite_scales_exactly_with_the_fluctuation_parameter() {
        let metric = euclidean_metric(2, "plane");
        let family = std_gaussian_family(2, "plane");
        let config = SuiteConfig { sample_size: 5_000, seed: 29, ..SuiteConfig::default() };
        let unit = fluctuation_suite(
            &metric,
            &family,
            "gaussian-nd",
            &gaussian_recipe(2),
            &ControlParams::new(vec![]),
            &config,
            None,
        )
        .unwrap();
        let half = fluctuation_suite(
            &metric,
            &family,
            "gaussian-nd",
            &gaussian_recipe(2),
            &ControlParams::with_k(vec![], 0.5),
            &config,
            None,
        )
        .unwrap();
        // The sampling distribution ignores k, so the squared-force
        // estimate scales exactly by k (and its theoretical value with it).
        let (u, h) = (&unit[0], &half[0]);
        assert!((h.estimate - 0.5 * u.estimate).abs() < 1e-12);
        assert_eq!(h.theoretical, 1.0);
        assert!(h.z_score.abs() <= 3.0);
    }

    #[test]
    fn suite_reports_are_bit_reproducible() {
        let metric = euclidean_metric(2, "plane");
        let family = std_gaussian_family(2, "plane");
        let theta = ControlParams::new(vec![]);
        let config = SuiteConfig { sample_size: 2_000, seed: 99, ..SuiteConfig::default() };
        let run = || {
            fluctuation_suite(
                &metric,
                &family,
                "gaussian-nd",
                &gaussian_recipe(2),
                &theta,
                &config,
                None,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.estimate.to_bits(), y.estimate.to_bits(), "{}", x.name);
            assert_eq!(x.std_error.to_bits(), y.std_error.to_bits(), "{}", x.name);
            assert_eq!(x.z_score.to_bits(), y.z_score.to_bits(), "{}", x.name);
        }
    }

    #[test]
    fn suite_rejects_an_inadmissible_pairing() {
        // A scaled gaussian paired with the identity metric is not an
        // admissible (family, metric) pair: the squared-force identity
        // breaks by a factor ~1.6 and the suite must fail loudly.
        let metric = euclidean_metric(2, "plane");
        let family = DensityFamily::new("plane", 2, Support::unbounded(2), |x, _| {
            -0.5 * (x[0] * x[0] / 4.0 + x[1] * x[1]) - (2.0 * PI * 2.0f64).ln()
        });
        let recipe = SamplingRecipe::GaussianNd {
            mu: vec![0.0, 0.0],
            cov: DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
        };
        let config = SuiteConfig { sample_size: 5_000, seed: 3, ..SuiteConfig::default() };
        let err = fluctuation_suite(
            &metric,
            &family,
            "scaled-gaussian",
            &recipe,
            &ControlParams::new(vec![]),
            &config,
            None,
        )
        .unwrap_err();
        match err {
            Error::SuiteFailure(msg) => {
                assert!(msg.contains("expected-squared-force"), "{msg}");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn moment_ladder_satisfies_the_recurrence() {
        let metric = euclidean_metric(2, "plane");
        let family = std_gaussian_family(2, "plane");
        let theta = ControlParams::new(vec![]);
        let config = SuiteConfig { sample_size: 50_000, seed: 8, ..SuiteConfig::default() };
        let reports = fluctuation_suite(
            &metric,
            &family,
            "gaussian-nd",
            &gaussian_recipe(2),
            &theta,
            &config,
            None,
        )
        .unwrap();
        let moment = |s: usize| {
            reports
                .iter()
                .find(|r| r.name == format!("squared-force-moment-{s}"))
                .unwrap()
        };
        let (n, k) = (2.0, 1.0);
        for s in 2..=4 {
            let (hi, lo) = (moment(s), moment(s - 1));
            let ratio = hi.estimate / lo.estimate;
            let expect = 2.0 * k * (s as f64 - 1.0 + n / 2.0);
            let se_ratio = ratio
                * ((hi.std_error / hi.estimate).powi(2) + (lo.std_error / lo.estimate).powi(2))
                    .sqrt();
            assert!(
                (ratio - expect).abs() <= 3.0 * se_ratio,
                "s = {s}: ratio {ratio}, expect {expect}, se {se_ratio}"
            );
        }
    }

    #[test]
    fn suite_certifies_the_radial_profile_family() {
        let metric = profile_metric_cart();
        let family = profile_family_cart();
        let theta = ControlParams::new(vec![3.0]);
        let config = SuiteConfig { sample_size: 20_000, seed: 17, ..SuiteConfig::default() };
        let reports = fluctuation_suite(
            &metric,
            &family,
            "axial-2d",
            &SamplingRecipe::RadialProfile,
            &theta,
            &config,
            None,
        )
        .unwrap();
        for r in &reports {
            assert!(r.z_score.abs() <= 3.0, "{}: z = {}", r.name, r.z_score);
        }
        // The force field itself is an admissible test field; its identity
        // pins <D_i eta^i> = -n.
        let field = |x: &[f64]| potential_gradient_field(&metric, &family, x, &theta);
        let reports = fluctuation_suite(
            &metric,
            &family,
            "axial-2d",
            &SamplingRecipe::RadialProfile,
            &theta,
            &SuiteConfig { sample_size: 5_000, seed: 21, ..SuiteConfig::default() },
            Some(&field),
        )
        .unwrap();
        let ident = reports.iter().find(|r| r.name == "divergence-identity").unwrap();
        assert!(ident.z_score.abs() <= 3.0, "z = {}", ident.z_score);
    }

    // Raised-index potential gradient, used as a test field.
    fn potential_gradient_field(
        metric: &MetricField,
        family: &DensityFamily,
        x: &[f64],
        theta: &ControlParams,
    ) -> Vec<f64> {
        let grad = potential_gradient_raw(metric, family, x, theta).unwrap();
        let g = metric.eval_raw(x, theta);
        let ginv = g.try_inverse().unwrap();
        (0..x.len())
            .map(|i| (0..x.len()).map(|j| ginv[(i, j)] * grad[j]).sum())
            .collect()
    }

    #[test]
    fn sample_family_enforces_support_and_dimensions() {
        let family = std_gaussian_family(2, "plane");
        let theta = ControlParams::new(vec![]);
        // Dimension mismatch in the recipe.
        let bad = SamplingRecipe::GaussianNd { mu: vec![0.0], cov: DMatrix::identity(1, 1) };
        assert!(matches!(
            sample_family(&family, "gaussian-nd", &bad, &theta, 10, 1),
            Err(Error::DimensionMismatch { .. })
        ));
        // A family whose support excludes part of the sampler's range.
        let clipped = DensityFamily::new(
            "plane",
            2,
            Support::boxed(vec![0.0, 0.0], vec![1.0, 1.0]),
            |_, _| 0.0,
        );
        let err = sample_family(
            &clipped,
            "clipped",
            &gaussian_recipe(2),
            &theta,
            200,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OutsideSupport(_)));
    }
}
