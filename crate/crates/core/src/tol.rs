//! Centralized numerical tolerances and step sizes.
//!
//! Every tolerance that couples two modules, or that a check suite asserts
//! against, lives here with a one-line justification, so the accuracy budget
//! can be audited in one place.

/// Relative step for fourth-order first-derivative stencils of coordinate
/// changes: `h_i = 1e-3 (1 + |x_i|)`.  At fourth order the truncation term
/// is ~1e-13 while the rounding term `eps |f| / h` stays near 1e-13 too,
/// which matters because jacobian noise is re-differentiated by curvature.
pub const JACOBIAN_STEP: f64 = 1e-3;

/// Step scale for second derivatives entering curvature and residuals,
/// `h = 1e-4 (1 + |x|)`; larger than earlier-generation jacobian steps to
/// keep the rounding amplification of second differences near 1e-8.
pub const SECOND_DERIV_STEP: f64 = 1e-4;

/// Second-derivative step for evaluators that are themselves
/// finite-difference products (metric pushforwards, solved grids).  Their
/// outputs carry a ~1e-12 noise floor, so the `1/h^2` amplification needs
/// `h ~ 2.5e-3` to keep curvature noise below 1e-6.
pub const NOISY_SECOND_DERIV_STEP: f64 = 2.5e-3;

/// Metric self-consistency: every built-in family must reproduce its own
/// log-density through the covariant equation to this residual.
pub const FAMILY_RESIDUAL: f64 = 1e-5;

/// Cross-chart agreement: along every declared coordinate change, the
/// pulled-back metric and the volume-corrected log-density of the two
/// charts must agree to this scaled gap.  Declared jacobians are exact
/// and numeric ones are fourth-order, so honest charts sit far below it.
pub const CHART_AGREEMENT: f64 = 1e-8;

/// One-dimensional metric solver: damping, floor, residual target,
/// iteration cap.
pub const SOLVER_RELAXATION: f64 = 0.5;
pub const SOLVER_CLIP: f64 = 1e-12;
pub const SOLVER_RESIDUAL: f64 = 1e-6;
pub const SOLVER_MAX_ITER: usize = 500;

/// Geodesic integrator: absolute local-error control and the hard cap on
/// step size.  The cap keeps cubic-Hermite dense-output error near
/// `h^4/384 = 4e-10` per unit fourth derivative, well under the 1e-6
/// relative partition-function target even for sharply curved profiles.
pub const ODE_ABS_TOL: f64 = 1e-10;
pub const ODE_MAX_STEP: f64 = 0.02;

/// Boundary-value (separation distance) solves: endpoint mismatch target in
/// chart coordinates.
pub const BVP_TOL: f64 = 1e-9;

/// Mode search: gradient-norm and multi-start agreement targets.
pub const MODE_GRAD_TOL: f64 = 1e-8;
pub const MODE_AGREE_TOL: f64 = 1e-8;

/// Partition-function quadrature: radial truncation `l_max = max(12, 6
/// sqrt(n))` keeps the discarded gaussian tail below 1e-30; the radial
/// tolerance leaves headroom under the 1e-6 relative acceptance target.
pub const PARTITION_RADIAL_TOL: f64 = 1e-9;
pub fn partition_l_max(dim: usize) -> f64 {
    (6.0 * (dim as f64).sqrt()).max(12.0)
}

/// Direction-grid sizes for geodesic fans.  The two-dimensional grid is a
/// uniform periodic trapezoid rule (spectrally accurate); three dimensions
/// pair Gauss-Legendre in the polar angle with a uniform azimuth.
pub const FAN_2D: usize = 256;
pub const FAN_3D_POLAR: usize = 32;
pub const FAN_3D_AZIMUTH: usize = 64;

/// Radial sampling step for the accumulated geodesic-sphere area profile;
/// natural-spline interpolation on this grid stays below `(5/384) h^4 =
/// 1.3e-9` per unit fourth derivative of the reduced profile.
pub const FAN_GRID_STEP: f64 = 0.01;

/// Two independent covariant-divergence routes must agree to this.
pub const DIVERGENCE_CONSISTENCY: f64 = 1e-5;

/// Monte-Carlo suite: reports are flagged above |z| = 3 and the suite
/// errors above |z| = 4.
pub const Z_FLAG: f64 = 3.0;
pub const Z_FAIL: f64 = 4.0;

/// Gaussian-regime classification of the curvature radius at the mode.
pub const CURVATURE_RADIUS_STRICT: f64 = 10.0;
pub const CURVATURE_RADIUS_MARGINAL: f64 = 1.0;

/// Default tolerance for entropy and expectation quadratures.
pub const ENTROPY_QUAD_TOL: f64 = 1e-9;
