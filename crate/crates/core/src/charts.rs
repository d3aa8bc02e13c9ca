//! Points, charts, coordinate changes, and tensor transport.
//!
//! Charts are named. Every [`Point`] carries its chart name and every
//! operation that mixes two geometric objects checks the names, so
//! accidental cross-chart arithmetic surfaces as [`Error::ChartMismatch`]
//! instead of silent nonsense.

use crate::error::{Error, Result};
use crate::tol;
use nalgebra::DMatrix;
use std::sync::Arc;

/// A point of the manifold expressed in a named chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub chart: Arc<str>,
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(chart: impl Into<Arc<str>>, coords: Vec<f64>) -> Self {
        Point { chart: chart.into(), coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Control parameters of a density family plus the fluctuation scale `k`
/// (unity unless a thermodynamic layer rescales it).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub values: Vec<f64>,
    pub k: f64,
}

impl ControlParams {
    pub fn new(values: Vec<f64>) -> Self {
        ControlParams { values, k: 1.0 }
    }

    pub fn with_k(values: Vec<f64>, k: f64) -> Self {
        assert!(k > 0.0, "fluctuation scale k must be positive");
        ControlParams { values, k }
    }
}

/// Axis-aligned support box with an optional extra predicate. Infinite
/// bounds are expressed with `f64::INFINITY`.
pub struct Support {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub predicate: Option<Box<dyn Fn(&[f64]) -> bool + Send + Sync>>,
}

impl std::fmt::Debug for Support {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Support")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("predicate", &self.predicate.is_some())
            .finish()
    }
}

impl Support {
    pub fn unbounded(dim: usize) -> Self {
        Support {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            predicate: None,
        }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Support { lower, upper, predicate: None }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Open-box membership: boundary points are outside, NaN is outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.lower.len() {
            return false;
        }
        for i in 0..x.len() {
            if !(x[i] > self.lower[i] && x[i] < self.upper[i]) {
                return false;
            }
        }
        match &self.predicate {
            Some(p) => p(x),
            None => true,
        }
    }

    /// A representative interior point: box midpoint, clamped toward zero
    /// along unbounded axes. Used to seed mode searches.
    pub fn center(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (true, false) => lo + 1.0,
                    (false, true) => hi - 1.0,
                    (false, false) => 0.0,
                }
            })
            .collect()
    }
}

/// A smooth invertible coordinate change between two named charts.
pub struct CoordinateChange {
    pub from: Arc<str>,
    pub to: Arc<str>,
    pub dim: usize,
    forward: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    inverse: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
    /// Analytic jacobian of the forward map, d(new)/d(old).
    jacobian: Option<Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>>,
}

impl std::fmt::Debug for CoordinateChange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CoordinateChange({} -> {}, dim {})", self.from, self.to, self.dim)
    }
}

impl CoordinateChange {
    pub fn new(
        from: impl Into<Arc<str>>,
        to: impl Into<Arc<str>>,
        dim: usize,
        forward: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        CoordinateChange {
            from: from.into(),
            to: to.into(),
            dim,
            forward: Box::new(forward),
            inverse: None,
            jacobian: None,
        }
    }

    pub fn with_inverse(
        mut self,
        inverse: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.inverse = Some(Box::new(inverse));
        self
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Box::new(jacobian));
        self
    }

    fn check_chart(&self, p: &Point) -> Result<()> {
        if p.chart != self.from {
            return Err(Error::ChartMismatch {
                expected: self.from.to_string(),
                got: p.chart.to_string(),
            });
        }
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.dim() });
        }
        Ok(())
    }

    /// Maps a point of the source chart into the target chart.
    pub fn apply(&self, p: &Point) -> Result<Point> {
        self.check_chart(p)?;
        Ok(Point::new(self.to.clone(), (self.forward)(&p.coords)))
    }

    pub fn apply_raw(&self, x: &[f64]) -> Vec<f64> {
        (self.forward)(x)
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    /// Maps a point of the target chart back to the source chart.
    pub fn invert(&self, p: &Point) -> Result<Point> {
        if p.chart != self.to {
            return Err(Error::ChartMismatch {
                expected: self.to.to_string(),
                got: p.chart.to_string(),
            });
        }
        let inv = self
            .inverse
            .as_ref()
            .ok_or_else(|| Error::Config(format!("change {} -> {} has no inverse", self.from, self.to)))?;
        Ok(Point::new(self.from.clone(), inv(&p.coords)))
    }

    pub fn invert_raw(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.inverse.as_ref().map(|f| f(x))
    }

    /// Jacobian d(new)/d(old) at `x` (old-chart coordinates): analytic when
    /// declared, second-order central differences otherwise.
    pub fn jacobian_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let j = match &self.jacobian {
            Some(jac) => jac(x),
            None => numeric_jacobian(|y| (self.forward)(y), x),
        };
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        Ok(j)
    }

    /// Determinant of the forward jacobian; errors when singular.
    pub fn jacobian_det(&self, x: &[f64]) -> Result<f64> {
        let det = self.jacobian_at(x)?.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularJacobian);
        }
        Ok(det)
    }
}

/// Fourth-order central-difference jacobian of an arbitrary vector map,
/// step `h_i = 1e-3 (1 + |x_i|)`.  The grouped stencil keeps truncation and
/// rounding both near 1e-13, so downstream second differences of
/// jacobian-built quantities stay quiet.
pub fn numeric_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let probe = f(x);
    let m = probe.len();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        let h = tol::JACOBIAN_STEP * (1.0 + x[c].abs());
        let mut at = |o: f64| {
            xp[c] = x[c] + o * h;
            let v = f(&xp);
            xp[c] = x[c];
            v
        };
        let p2 = at(2.0);
        let p1 = at(1.0);
        let m1 = at(-1.0);
        let m2 = at(-2.0);
        for r in 0..m {
            j[(r, c)] = (8.0 * (p1[r] - m1[r]) - (p2[r] - m2[r])) / (12.0 * h);
        }
    }
    j
}

/// Dense tensor with `con` upper indices, `cov` lower indices, and a
/// density weight `w`: under `x -> y` the components pick up
/// `|det dy/dx|^w`, one forward jacobian per upper index, and one inverse
/// jacobian per lower index. Components are stored row-major, upper
/// indices first.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    pub dim: usize,
    pub con: usize,
    pub cov: usize,
    pub weight: i32,
    pub data: Vec<f64>,
}

impl TensorValue {
    pub fn new(dim: usize, con: usize, cov: usize, weight: i32, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim.pow((con + cov) as u32), "component count");
        TensorValue { dim, con, cov, weight, data }
    }

    pub fn scalar(value: f64, dim: usize, weight: i32) -> Self {
        TensorValue { dim, con: 0, cov: 0, weight, data: vec![value] }
    }

    pub fn rank(&self) -> usize {
        self.con + self.cov
    }

    fn offset(&self, idx: &[usize]) -> usize {
        let mut o = 0;
        for &i in idx {
            o = o * self.dim + i;
        }
        o
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.rank());
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        assert_eq!(idx.len(), self.rank());
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Builds a rank-2 covariant tensor (for example a metric value).
    pub fn from_matrix_cov2(m: &DMatrix<f64>, weight: i32) -> Self {
        let dim = m.nrows();
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(m[(i, j)]);
            }
        }
        TensorValue { dim, con: 0, cov: 2, weight, data }
    }

    pub fn to_matrix_cov2(&self) -> DMatrix<f64> {
        assert!(self.con == 0 && self.cov == 2);
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(&[i, j]))
    }
}

/// Transports `t` (given at old-chart coordinates `x`) through `change`,
/// returning its components in the new chart.
pub fn transform_tensor(t: &TensorValue, change: &CoordinateChange, x: &[f64]) -> Result<TensorValue> {
    if t.dim != change.dim {
        return Err(Error::DimensionMismatch { expected: change.dim, got: t.dim });
    }
    let j = change.jacobian_at(x)?;
    let det = j.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularJacobian);
    }
    let jinv = j.clone().try_inverse().ok_or(Error::SingularJacobian)?;
    let n = t.dim;
    let rank = t.rank();
    let scale = det.abs().powi(t.weight);
    let mut out = TensorValue {
        dim: n,
        con: t.con,
        cov: t.cov,
        weight: t.weight,
        data: vec![0.0; t.data.len()],
    };
    // Iterate over all (new index, old index) pairs; rank <= 4 and dim <= 3
    // keep this tiny.
    let count = n.pow(rank as u32);
    let mut new_idx = vec![0usize; rank];
    let mut old_idx = vec![0usize; rank];
    for flat_new in 0..count {
        let mut rem = flat_new;
        for slot in (0..rank).rev() {
            new_idx[slot] = rem % n;
            rem /= n;
        }
        let mut acc = 0.0;
        for flat_old in 0..count {
            let mut rem = flat_old;
            for slot in (0..rank).rev() {
                old_idx[slot] = rem % n;
                rem /= n;
            }
            let mut factor = 1.0;
            for slot in 0..rank {
                factor *= if slot < t.con {
                    // Upper index: new^i = J^i_a old^a.
                    j[(new_idx[slot], old_idx[slot])]
                } else {
                    // Lower index: new_j = old_b (J^-1)^b_j.
                    jinv[(old_idx[slot], new_idx[slot])]
                };
                if factor == 0.0 {
                    break;
                }
            }
            if factor != 0.0 {
                acc += factor * t.data[t.offset(&old_idx)];
            }
        }
        let o = out.offset(&new_idx);
        out.data[o] = scale * acc;
    }
    Ok(out)
}

/// A family of probability densities over one chart.
pub struct DensityFamily {
    pub chart: Arc<str>,
    pub dim: usize,
    pub support: Support,
    log_density: Box<dyn Fn(&[f64], &ControlParams) -> f64 + Send + Sync>,
    grad_log_density: Option<Box<dyn Fn(&[f64], &ControlParams) -> Vec<f64> + Send + Sync>>,
}

impl std::fmt::Debug for DensityFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DensityFamily(chart {}, dim {})", self.chart, self.dim)
    }
}

impl DensityFamily {
    pub fn new(
        chart: impl Into<Arc<str>>,
        dim: usize,
        support: Support,
        log_density: impl Fn(&[f64], &ControlParams) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert_eq!(support.dim(), dim);
        DensityFamily {
            chart: chart.into(),
            dim,
            support,
            log_density: Box::new(log_density),
            grad_log_density: None,
        }
    }

    pub fn with_grad(
        mut self,
        grad: impl Fn(&[f64], &ControlParams) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad_log_density = Some(Box::new(grad));
        self
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

    /// Log-density at a point of this chart; errors outside the support.
    pub fn log_density_at(&self, p: &Point, theta: &ControlParams) -> Result<f64> {
        self.check_point(p)?;
        if !self.support.contains(&p.coords) {
            return Err(Error::OutsideSupport(format!("{:?} in chart {}", p.coords, self.chart)));
        }
        Ok((self.log_density)(&p.coords, theta))
    }

    /// Unchecked raw access for hot loops that already validated the chart.
    pub fn log_density_raw(&self, x: &[f64], theta: &ControlParams) -> f64 {
        (self.log_density)(x, theta)
    }

    /// Gradient of the log-density: analytic when declared, otherwise
    /// fourth-order central differences with the jacobian step policy.
    pub fn grad_log_density_raw(&self, x: &[f64], theta: &ControlParams) -> Vec<f64> {
        if let Some(g) = &self.grad_log_density {
            return g(x, theta);
        }
        let mut out = vec![0.0; self.dim];
        let mut xp = x.to_vec();
        for i in 0..self.dim {
            let h = tol::JACOBIAN_STEP * (1.0 + x[i].abs());
            let mut at = |o: f64| {
                xp[i] = x[i] + o * h;
                let v = (self.log_density)(&xp, theta);
                xp[i] = x[i];
                v
            };
            out[i] = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h);
        }
        out
    }
}

/// Density value transported to the chart of `change.to`: evaluates the
/// family at the preimage and divides by the jacobian determinant,
/// `rho_new(y) = rho_old(x(y)) |det dy/dx|^{-1}`.
pub fn transform_density(
    family: &DensityFamily,
    change: &CoordinateChange,
    p_new: &Point,
    theta: &ControlParams,
) -> Result<f64> {
    Ok(transform_log_density(family, change, p_new, theta)?.exp())
}

/// Log-space version of [`transform_density`].
pub fn transform_log_density(
    family: &DensityFamily,
    change: &CoordinateChange,
    p_new: &Point,
    theta: &ControlParams,
) -> Result<f64> {
    if family.chart != change.from {
        return Err(Error::ChartMismatch {
            expected: change.from.to_string(),
            got: family.chart.to_string(),
        });
    }
    let p_old = change.invert(p_new)?;
    let log_rho = family.log_density_at(&p_old, theta)?;
    let det = change.jacobian_det(&p_old.coords)?;
    Ok(log_rho - det.abs().ln())
}
