//! Flat periodic grids and the closed-form geometric data living on them.
//!
//! Everything here is evaluated on demand from closed forms: the metric family
//! g(tau), its time derivative b, the fiber metric gamma with its connection A,
//! and the elliptic coefficient Lambda. No tables are stored, so refining the
//! grid never changes the continuum objects being sampled.

use crate::error::{Error, Result};

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Uniform grid on a flat torus, one or two axes with a common period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    length: f64,
}

impl TorusGrid {
    /// `n` points per axis on `[0, length)` in `dim` (1 or 2) dimensions.
    /// `n` must be even and at least 8 so the Nyquist mode can be zeroed
    /// without touching the resolved band.
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n must be even and >= 8, got {n}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        Ok(TorusGrid { dim, n, length })
    }

    /// Standard `[0, 2 pi)` torus.
    pub fn standard(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, TWO_PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn npoints(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Row-major point index for (ix, iy); iy is ignored in one dimension.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        match self.dim {
            1 => ix,
            _ => iy * self.n + ix,
        }
    }

    /// Coordinates of point `p`; the second entry is 0 in one dimension.
    pub fn coords(&self, p: usize) -> [f64; 2] {
        let h = self.spacing();
        match self.dim {
            1 => [p as f64 * h, 0.0],
            _ => [(p % self.n) as f64 * h, (p / self.n) as f64 * h],
        }
    }

    /// 2 pi / L, the spacing of the wavenumber lattice.
    pub fn wavenumber_unit(&self) -> f64 {
        TWO_PI / self.length
    }

    /// Periodic distance between two coordinates along one axis.
    pub fn axis_distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(self.length);
        d.min(self.length - d)
    }

    /// Flat torus distance from point `p` to `center`.
    pub fn distance(&self, p: usize, center: [f64; 2]) -> f64 {
        let x = self.coords(p);
        let mut s = 0.0;
        for axis in 0..self.dim {
            let d = self.axis_distance(x[axis], center[axis]);
            s += d * d;
        }
        s.sqrt()
    }
}

/// Symmetric d x d matrix for d <= 2, stored dense.
#[derive(Clone, Copy, Debug)]
pub struct SymMat {
    dim: usize,
    m: [[f64; 2]; 2],
}

impl SymMat {
    pub fn zero(dim: usize) -> Self {
        SymMat { dim, m: [[0.0; 2]; 2] }
    }

    pub fn diag(dim: usize, c: f64) -> Self {
        let mut s = Self::zero(dim);
        for i in 0..dim {
            s.m[i][i] = c;
        }
        s
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(dim, 1.0)
    }

    pub fn from_entries(dim: usize, a11: f64, a12: f64, a22: f64) -> Self {
        let mut s = Self::zero(dim);
        s.m[0][0] = a11;
        if dim == 2 {
            s.m[0][1] = a12;
            s.m[1][0] = a12;
            s.m[1][1] = a22;
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.m[0][0],
            _ => self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0],
        }
    }

    pub fn inverse(&self) -> Result<SymMat> {
        let det = self.det();
        if det.abs() < f64::MIN_POSITIVE {
            return Err(Error::InvariantViolation("singular symmetric matrix".into()));
        }
        Ok(match self.dim {
            1 => SymMat::from_entries(1, 1.0 / self.m[0][0], 0.0, 0.0),
            _ => SymMat::from_entries(
                2,
                self.m[1][1] / det,
                -self.m[0][1] / det,
                self.m[0][0] / det,
            ),
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self.dim {
            1 => self.m[0][0],
            _ => {
                let tr = self.m[0][0] + self.m[1][1];
                let det = self.det();
                let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
                tr / 2.0 - disc
            }
        }
    }

    pub fn scale(&self, c: f64) -> SymMat {
        let mut s = *self;
        for i in 0..2 {
            for j in 0..2 {
                s.m[i][j] *= c;
            }
        }
        s
    }

    pub fn sub(&self, o: &SymMat) -> SymMat {
        let mut s = *self;
        for i in 0..2 {
            for j in 0..2 {
                s.m[i][j] -= o.m[i][j];
            }
        }
        s
    }

    /// Sum_ij A_ij B_ij.
    pub fn dot(&self, o: &SymMat) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * o.m[i][j];
            }
        }
        s
    }

    /// u^T A v over the leading `dim` components.
    pub fn quad(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += u[i] * self.m[i][j] * v[j];
            }
        }
        s
    }

    pub fn frob_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Closed-form families of base metrics g(x, tau).
///
/// Both shipped families are spatially homogeneous, so their Christoffel
/// symbols vanish identically; the accessor is kept general anyway.
#[derive(Clone, Copy, Debug)]
pub enum MetricKind {
    /// g = delta for all times.
    FlatStatic,
    /// g = exp(2 a sin tau) delta, a conformal breathing mode.
    ConformalBreathing { amplitude: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct MetricFamily {
    dim: usize,
    kind: MetricKind,
}

impl MetricFamily {
    pub fn flat(dim: usize) -> Self {
        MetricFamily { dim, kind: MetricKind::FlatStatic }
    }

    pub fn breathing(dim: usize, amplitude: f64) -> Self {
        MetricFamily { dim, kind: MetricKind::ConformalBreathing { amplitude } }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    fn conformal_factor(&self, tau: f64) -> f64 {
        match self.kind {
            MetricKind::FlatStatic => 1.0,
            MetricKind::ConformalBreathing { amplitude } => (2.0 * amplitude * tau.sin()).exp(),
        }
    }

    pub fn g(&self, _x: [f64; 2], tau: f64) -> SymMat {
        SymMat::diag(self.dim, self.conformal_factor(tau))
    }

    pub fn g_inv(&self, _x: [f64; 2], tau: f64) -> SymMat {
        SymMat::diag(self.dim, 1.0 / self.conformal_factor(tau))
    }

    /// b = d g / d tau, evaluated in closed form.
    pub fn b(&self, _x: [f64; 2], tau: f64) -> SymMat {
        match self.kind {
            MetricKind::FlatStatic => SymMat::zero(self.dim),
            MetricKind::ConformalBreathing { amplitude } => SymMat::diag(
                self.dim,
                2.0 * amplitude * tau.cos() * self.conformal_factor(tau),
            ),
        }
    }

    /// B = g^{ij} b_ij, the trace entering the volume evolution.
    pub fn trace_b(&self, x: [f64; 2], tau: f64) -> f64 {
        self.g_inv(x, tau).dot(&self.b(x, tau))
    }

    pub fn sqrt_det_g(&self, x: [f64; 2], tau: f64) -> f64 {
        self.g(x, tau).det().sqrt()
    }

    /// Christoffel symbols Gamma^k_ij; identically zero for the shipped
    /// spatially homogeneous families.
    pub fn christoffel(&self, _x: [f64; 2], _tau: f64) -> [[[f64; 2]; 2]; 2] {
        [[[0.0; 2]; 2]; 2]
    }

    /// Smallest eigenvalue the family can reach over all (x, tau), used as the
    /// SPD floor in validity checks.
    pub fn eig_floor(&self) -> f64 {
        match self.kind {
            MetricKind::FlatStatic => 1.0,
            MetricKind::ConformalBreathing { amplitude } => (-2.0 * amplitude.abs()).exp(),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self.kind, MetricKind::FlatStatic)
    }

    /// Gauss curvature of the shipped families; they are all flat, so zero in
    /// two dimensions and not applicable in one.
    pub fn gauss_curvature_max(&self) -> Option<f64> {
        if self.dim == 2 {
            Some(0.0)
        } else {
            None
        }
    }
}

/// Action of one fiber matrix, specialized to the closed forms the bundle
/// families produce: zero, a multiple of the identity, or a multiple of the
/// 2 x 2 rotation generator J = [[0, -1], [1, 0]].
#[derive(Clone, Copy, Debug)]
pub enum FiberOp {
    Zero,
    ScaledIdentity(f64),
    SkewJ(f64),
}

impl FiberOp {
    pub fn is_zero(&self) -> bool {
        match self {
            FiberOp::Zero => true,
            FiberOp::ScaledIdentity(c) | FiberOp::SkewJ(c) => *c == 0.0,
        }
    }

    /// out += op(v)
    pub fn apply_add(&self, v: &[f64], out: &mut [f64]) {
        match self {
            FiberOp::Zero => {}
            FiberOp::ScaledIdentity(c) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += c * x;
                }
            }
            FiberOp::SkewJ(c) => {
                debug_assert!(v.len() == 2);
                out[0] += -c * v[1];
                out[1] += c * v[0];
            }
        }
    }

    /// out += op^T(v)
    pub fn apply_transpose_add(&self, v: &[f64], out: &mut [f64]) {
        match self {
            FiberOp::Zero => {}
            FiberOp::ScaledIdentity(c) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += c * x;
                }
            }
            FiberOp::SkewJ(c) => {
                out[0] += c * v[1];
                out[1] += -c * v[0];
            }
        }
    }

    pub fn op_norm(&self) -> f64 {
        match self {
            FiberOp::Zero => 0.0,
            FiberOp::ScaledIdentity(c) | FiberOp::SkewJ(c) => c.abs(),
        }
    }

    /// Composition self * other, again one of the closed forms.
    pub fn compose(&self, other: &FiberOp) -> FiberOp {
        match (self, other) {
            (FiberOp::Zero, _) | (_, FiberOp::Zero) => FiberOp::Zero,
            (FiberOp::ScaledIdentity(a), FiberOp::ScaledIdentity(b)) => {
                FiberOp::ScaledIdentity(a * b)
            }
            (FiberOp::ScaledIdentity(a), FiberOp::SkewJ(b)) => FiberOp::SkewJ(a * b),
            (FiberOp::SkewJ(a), FiberOp::ScaledIdentity(b)) => FiberOp::SkewJ(a * b),
            // J * J = -I
            (FiberOp::SkewJ(a), FiberOp::SkewJ(b)) => FiberOp::ScaledIdentity(-a * b),
        }
    }
}

/// Closed-form bundle families: fiber metric gamma(tau), its derivative beta,
/// and the connection coefficients A_i(x, tau).
///
/// Every family keeps gamma a scalar multiple of the identity and A_i either
/// zero or skew, so metric compatibility d_i gamma = gamma A_i + A_i^T gamma
/// holds identically.
#[derive(Clone, Copy, Debug)]
pub enum BundleKind {
    /// gamma = I, A = 0.
    Trivial,
    /// m = 2, gamma = I, A_1 = a (1 + sin(tau)/2) J. The only shipped family
    /// with a nonzero commutator [d_tau, nabla-hat].
    TwistedSkew { strength: f64 },
    /// gamma = exp(rate tau) I, A = 0, so beta = rate gamma.
    ScaledExp { rate: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct BundleStructure {
    fiber_dim: usize,
    kind: BundleKind,
}

impl BundleStructure {
    pub fn trivial(fiber_dim: usize) -> Result<Self> {
        if fiber_dim == 0 {
            return Err(Error::OutOfRange("fiber dimension must be >= 1".into()));
        }
        Ok(BundleStructure { fiber_dim, kind: BundleKind::Trivial })
    }

    pub fn twisted(strength: f64) -> Self {
        BundleStructure { fiber_dim: 2, kind: BundleKind::TwistedSkew { strength } }
    }

    pub fn scaled_exp(fiber_dim: usize, rate: f64) -> Result<Self> {
        if fiber_dim == 0 {
            return Err(Error::OutOfRange("fiber dimension must be >= 1".into()));
        }
        Ok(BundleStructure { fiber_dim, kind: BundleKind::ScaledExp { rate } })
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn kind(&self) -> BundleKind {
        self.kind
    }

    /// gamma = gamma_scale(tau) * I.
    pub fn gamma_scale(&self, tau: f64) -> f64 {
        match self.kind {
            BundleKind::Trivial | BundleKind::TwistedSkew { .. } => 1.0,
            BundleKind::ScaledExp { rate } => (rate * tau).exp(),
        }
    }

    /// beta = d gamma / d tau = beta_scale(tau) * I.
    pub fn beta_scale(&self, tau: f64) -> f64 {
        match self.kind {
            BundleKind::Trivial | BundleKind::TwistedSkew { .. } => 0.0,
            BundleKind::ScaledExp { rate } => rate * (rate * tau).exp(),
        }
    }

    /// Connection coefficient A_axis(x, tau).
    pub fn conn(&self, axis: usize, _x: [f64; 2], tau: f64) -> FiberOp {
        match self.kind {
            BundleKind::TwistedSkew { strength } if axis == 0 => {
                FiberOp::SkewJ(strength * (1.0 + 0.5 * tau.sin()))
            }
            _ => FiberOp::Zero,
        }
    }

    /// d A_axis / d tau, the commutator field [d_tau, nabla-hat]_axis.
    pub fn conn_dtau(&self, axis: usize, _x: [f64; 2], tau: f64) -> FiberOp {
        match self.kind {
            BundleKind::TwistedSkew { strength } if axis == 0 => {
                FiberOp::SkewJ(strength * 0.5 * tau.cos())
            }
            _ => FiberOp::Zero,
        }
    }

    /// d A_axis / d x_deriv_axis; zero for all shipped families, kept so the
    /// Hessian assembly states the full formula.
    pub fn conn_dx(&self, _axis: usize, _deriv_axis: usize, _x: [f64; 2], _tau: f64) -> FiberOp {
        FiberOp::Zero
    }

    pub fn has_connection(&self) -> bool {
        matches!(self.kind, BundleKind::TwistedSkew { .. })
    }

    /// True when neither the fiber metric nor the connection depends on tau.
    pub fn is_static(&self) -> bool {
        matches!(self.kind, BundleKind::Trivial)
    }

    /// gamma(u, v) pointwise.
    pub fn gamma_quad(&self, tau: f64, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for (a, b) in u.iter().zip(v) {
            s += a * b;
        }
        self.gamma_scale(tau) * s
    }
}

/// Closed-form elliptic coefficient families Lambda^{ij}(x, tau).
#[derive(Clone, Copy, Debug)]
pub enum EllipticKind {
    /// Lambda = c delta.
    Scaled { c: f64 },
    /// Lambda = (2 + cos x_1) delta; div Lambda = (-sin x_1, 0).
    CosBump,
    /// Lambda = (base + amp sin tau) delta, exercising the d_tau Lambda term.
    ScaledTime { base: f64, amp: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct EllipticCoefficient {
    dim: usize,
    kind: EllipticKind,
}

impl EllipticCoefficient {
    pub fn identity(dim: usize) -> Self {
        EllipticCoefficient { dim, kind: EllipticKind::Scaled { c: 1.0 } }
    }

    pub fn scaled(dim: usize, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::OutOfRange(format!("elliptic scale must be positive, got {c}")));
        }
        Ok(EllipticCoefficient { dim, kind: EllipticKind::Scaled { c } })
    }

    pub fn cos_bump(dim: usize) -> Self {
        EllipticCoefficient { dim, kind: EllipticKind::CosBump }
    }

    pub fn scaled_time(dim: usize, base: f64, amp: f64) -> Result<Self> {
        if !(base - amp.abs() > 0.0) {
            return Err(Error::OutOfRange(
                "time-scaled coefficient must stay positive".into(),
            ));
        }
        Ok(EllipticCoefficient { dim, kind: EllipticKind::ScaledTime { base, amp } })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> EllipticKind {
        self.kind
    }

    pub fn lambda(&self, x: [f64; 2], tau: f64) -> SymMat {
        match self.kind {
            EllipticKind::Scaled { c } => SymMat::diag(self.dim, c),
            EllipticKind::CosBump => SymMat::diag(self.dim, 2.0 + x[0].cos()),
            EllipticKind::ScaledTime { base, amp } => {
                SymMat::diag(self.dim, base + amp * tau.sin())
            }
        }
    }

    pub fn dtau_lambda(&self, _x: [f64; 2], tau: f64) -> SymMat {
        match self.kind {
            EllipticKind::Scaled { .. } | EllipticKind::CosBump => SymMat::zero(self.dim),
            EllipticKind::ScaledTime { amp, .. } => SymMat::diag(self.dim, amp * tau.cos()),
        }
    }

    /// Divergence (nabla_i Lambda)^j in closed form; the shipped metric
    /// families are spatially homogeneous so no Christoffel terms enter.
    pub fn div_lambda(&self, x: [f64; 2], _tau: f64) -> [f64; 2] {
        match self.kind {
            EllipticKind::Scaled { .. } | EllipticKind::ScaledTime { .. } => [0.0, 0.0],
            EllipticKind::CosBump => [-x[0].sin(), 0.0],
        }
    }

    /// Uniform ellipticity floor: largest lambda with lambda g^{-1} <= Lambda
    /// against the flat reference; family-specific closed form.
    pub fn floor(&self) -> f64 {
        match self.kind {
            EllipticKind::Scaled { c } => c,
            EllipticKind::CosBump => 1.0,
            EllipticKind::ScaledTime { base, amp } => base - amp.abs(),
        }
    }

    pub fn is_static(&self) -> bool {
        !matches!(self.kind, EllipticKind::ScaledTime { .. })
    }

    pub fn is_spatially_uniform(&self) -> bool {
        !matches!(self.kind, EllipticKind::CosBump)
    }

    /// Mean of the scalar coefficient over space, used as the multiplier part
    /// split off by the time integrator.
    pub fn mean_coeff(&self, tau: f64) -> f64 {
        match self.kind {
            EllipticKind::Scaled { c } => c,
            EllipticKind::CosBump => 2.0,
            EllipticKind::ScaledTime { base, amp } => base + amp * tau.sin(),
        }
    }

    /// Largest value of the scalar coefficient over all (x, tau).
    pub fn max_coeff(&self) -> f64 {
        match self.kind {
            EllipticKind::Scaled { c } => c,
            EllipticKind::CosBump => 3.0,
            EllipticKind::ScaledTime { base, amp } => base + amp.abs(),
        }
    }
}

/// Everything a run needs to know about the background geometry: the grid,
/// the base metric, one bundle for the PDE block and one for the ODE block,
/// and the elliptic coefficient.
#[derive(Clone, Copy, Debug)]
pub struct Background {
    pub grid: TorusGrid,
    pub metric: MetricFamily,
    pub bundle: BundleStructure,
    pub bundle_y: BundleStructure,
    pub elliptic: EllipticCoefficient,
}

pub const PRESET_NAMES: [&str; 4] = [
    "flat-static",
    "conformal-breathing",
    "anisotropic-lambda",
    "twisted-bundle",
];

pub const BREATHING_AMPLITUDE: f64 = 0.1;
pub const TWIST_STRENGTH: f64 = 0.05;

/// Named geometry presets as (metric, bundle, elliptic coefficient) triples.
pub fn build_preset(
    name: &str,
    grid: TorusGrid,
) -> Result<(MetricFamily, BundleStructure, EllipticCoefficient)> {
    let d = grid.dim();
    match name {
        "flat-static" => Ok((
            MetricFamily::flat(d),
            BundleStructure::trivial(1)?,
            EllipticCoefficient::identity(d),
        )),
        "conformal-breathing" => Ok((
            MetricFamily::breathing(d, BREATHING_AMPLITUDE),
            BundleStructure::trivial(1)?,
            EllipticCoefficient::identity(d),
        )),
        "anisotropic-lambda" => Ok((
            MetricFamily::flat(d),
            BundleStructure::trivial(1)?,
            EllipticCoefficient::cos_bump(d),
        )),
        "twisted-bundle" => Ok((
            MetricFamily::flat(d),
            BundleStructure::twisted(TWIST_STRENGTH),
            EllipticCoefficient::identity(d),
        )),
        _ => Err(Error::UnknownPreset {
            name: name.to_string(),
            valid: PRESET_NAMES.join(", "),
        }),
    }
}

impl Background {
    pub fn preset(name: &str, grid: TorusGrid) -> Result<Self> {
        let (metric, bundle, elliptic) = build_preset(name, grid)?;
        Ok(Background {
            grid,
            metric,
            bundle,
            bundle_y: BundleStructure::trivial(1)?,
            elliptic,
        })
    }

    pub fn flat(grid: TorusGrid) -> Result<Self> {
        Self::preset("flat-static", grid)
    }

    pub fn with_y_bundle(mut self, bundle_y: BundleStructure) -> Self {
        self.bundle_y = bundle_y;
        self
    }

    /// Structural constant L0: grid-and-sample max of the coefficient data
    /// magnitudes |b|, |Lambda|, |d_tau Lambda|, |div Lambda|, |A|, |d_tau A|.
    pub fn estimate_l0(&self, taus: &[f64]) -> f64 {
        let mut l0: f64 = 0.0;
        for &tau in taus {
            for p in 0..self.grid.npoints() {
                let x = self.grid.coords(p);
                let mut s = self.metric.b(x, tau).frob_norm();
                s = s.max(self.elliptic.lambda(x, tau).frob_norm());
                s = s.max(self.elliptic.dtau_lambda(x, tau).frob_norm());
                let dl = self.elliptic.div_lambda(x, tau);
                s = s.max((dl[0] * dl[0] + dl[1] * dl[1]).sqrt());
                for axis in 0..self.grid.dim() {
                    s = s.max(self.bundle.conn(axis, x, tau).op_norm());
                    s = s.max(self.bundle.conn_dtau(axis, x, tau).op_norm());
                }
                l0 = l0.max(s);
            }
        }
        l0
    }
}

/// sqrt(det g) sampled at every grid point; errors on a non-SPD sample.
pub fn volume_density(metric: &MetricFamily, grid: TorusGrid, tau: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.npoints());
    for p in 0..grid.npoints() {
        let g = metric.g(grid.coords(p), tau);
        if g.min_eigenvalue() <= 0.0 {
            return Err(Error::InvariantViolation(format!(
                "metric sample at point {p} is not positive definite"
            )));
        }
        out.push(g.det().sqrt());
    }
    Ok(out)
}

/// Trapezoid quadrature of a scalar sample field against d mu = sqrt(det g) dx.
/// On a periodic uniform grid this is spectrally accurate.
pub fn quadrature(f: &[f64], metric: &MetricFamily, grid: TorusGrid, tau: f64) -> Result<f64> {
    if f.len() != grid.npoints() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} samples, grid has {} points",
            f.len(),
            grid.npoints()
        )));
    }
    let density = volume_density(metric, grid, tau)?;
    Ok(quadrature_weighted(f, &density, grid))
}

/// Same rule with a precomputed density, for hot paths.
pub fn quadrature_weighted(f: &[f64], density: &[f64], grid: TorusGrid) -> f64 {
    let hd = grid.spacing().powi(grid.dim() as i32);
    let mut s = 0.0;
    for (v, w) in f.iter().zip(density) {
        s += v * w;
    }
    hd * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(TorusGrid::new(3, 16, TWO_PI).is_err());
        assert!(TorusGrid::new(1, 7, TWO_PI).is_err());
        assert!(TorusGrid::new(1, 6, TWO_PI).is_err());
        assert!(TorusGrid::new(1, 16, -1.0).is_err());
        assert!(TorusGrid::new(2, 16, 1.0).is_ok());
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = TorusGrid::new(2, 8, TWO_PI).unwrap();
        for iy in 0..8 {
            for ix in 0..8 {
                let p = g.index(ix, iy);
                let c = g.coords(p);
                assert_relative_eq!(c[0], ix as f64 * g.spacing());
                assert_relative_eq!(c[1], iy as f64 * g.spacing());
            }
        }
    }

    #[test]
    fn symmat_eigen_floor_2d() {
        let m = SymMat::from_entries(2, 2.0, 1.0, 2.0);
        assert_relative_eq!(m.min_eigenvalue(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(m.det(), 3.0, epsilon = 1e-14);
        let inv = m.inverse().unwrap();
        assert_relative_eq!(inv.quad([1.0, 0.0], [1.0, 0.0]), 2.0 / 3.0, epsilon = 1e-14);
    }

    /// b must match a centered difference of g in tau at second order.
    #[test]
    fn breathing_b_matches_centered_difference() {
        let m = MetricFamily::breathing(1, 0.1);
        let x = [0.3, 0.0];
        for &tau in &[0.0, 0.4, 1.3] {
            for &dt in &[1e-3, 5e-4] {
                let fd = (m.g(x, tau + dt).get(0, 0) - m.g(x, tau - dt).get(0, 0)) / (2.0 * dt);
                let b = m.b(x, tau).get(0, 0);
                assert!((fd - b).abs() < 2.0 * dt * dt, "fd {fd} vs b {b} at dt {dt}");
            }
        }
        // closed form at tau = 0: b = 2 a cos(0) e^0 = 0.2
        assert_relative_eq!(m.b(x, 0.0).get(0, 0), 0.2, epsilon = 1e-15);
        assert_relative_eq!(m.trace_b(x, 0.0), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn breathing_floor_is_reached() {
        let m = MetricFamily::breathing(2, 0.1);
        let floor = m.eig_floor();
        let mut seen = f64::INFINITY;
        let mut tau = -7.0;
        while tau < 7.0 {
            seen = seen.min(m.g([0.0, 0.0], tau).min_eigenvalue());
            tau += 1e-3;
        }
        assert!(seen >= floor - 1e-12);
        assert!(seen < floor * 1.0001, "floor should be nearly attained");
    }

    #[test]
    fn twisted_bundle_is_metric_compatible() {
        // gamma constant and A skew: gamma A + A^T gamma = 0 = d_i gamma.
        let b = BundleStructure::twisted(0.05);
        let x = [0.7, 0.0];
        for &tau in &[0.0, 0.9] {
            let a = b.conn(0, x, tau);
            let u = [0.3, -1.2];
            let v = [0.8, 0.45];
            let mut au = [0.0; 2];
            let mut av = [0.0; 2];
            a.apply_add(&u, &mut au);
            a.apply_add(&v, &mut av);
            let s = b.gamma_quad(tau, &au, &v) + b.gamma_quad(tau, &u, &av);
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn twisted_commutator_is_time_derivative_of_connection() {
        let b = BundleStructure::twisted(0.05);
        let x = [0.0, 0.0];
        let tau = 0.6;
        let dt = 1e-4;
        let ap = b.conn(0, x, tau + dt);
        let am = b.conn(0, x, tau - dt);
        let v = [1.0, 0.0];
        let mut fp = [0.0; 2];
        let mut fm = [0.0; 2];
        ap.apply_add(&v, &mut fp);
        am.apply_add(&v, &mut fm);
        let fd = [(fp[0] - fm[0]) / (2.0 * dt), (fp[1] - fm[1]) / (2.0 * dt)];
        let mut cv = [0.0; 2];
        b.conn_dtau(0, x, tau).apply_add(&v, &mut cv);
        assert!((fd[0] - cv[0]).abs() < 1e-7);
        assert!((fd[1] - cv[1]).abs() < 1e-7);
    }

    #[test]
    fn cos_bump_divergence_closed_form() {
        let e = EllipticCoefficient::cos_bump(1);
        for &x in &[0.0, 0.5, 2.0, 4.4] {
            assert_relative_eq!(e.div_lambda([x, 0.0], 0.0)[0], -x.sin(), epsilon = 1e-15);
        }
        assert_relative_eq!(e.floor(), 1.0);
        assert_relative_eq!(e.max_coeff(), 3.0);
    }

    #[test]
    fn elliptic_floor_is_psd_against_metric() {
        // Lambda - floor * g^{-1} must stay PSD for the breathing preset pair.
        let m = MetricFamily::breathing(1, 0.1);
        let e = EllipticCoefficient::identity(1);
        let floor = m.eig_floor(); // e^{-2a}: admissible lambda for Lambda = I
        let mut tau = 0.0;
        while tau < 7.0 {
            let gap = e.lambda([0.0, 0.0], tau).sub(&m.g_inv([0.0, 0.0], tau).scale(floor));
            assert!(gap.min_eigenvalue() >= -1e-12, "tau {tau}");
            tau += 1e-2;
        }
    }

    #[test]
    fn preset_names_resolve_and_unknown_errors() {
        let grid = TorusGrid::standard(1, 16).unwrap();
        for name in PRESET_NAMES {
            assert!(build_preset(name, grid).is_ok(), "{name}");
        }
        match build_preset("no-such", grid) {
            Err(Error::UnknownPreset { valid, .. }) => {
                for name in PRESET_NAMES {
                    assert!(valid.contains(name));
                }
            }
            other => panic!("expected UnknownPreset, got {other:?}"),
        }
    }

    #[test]
    fn quadrature_of_sin_squared_is_pi() {
        let grid = TorusGrid::standard(1, 64).unwrap();
        let m = MetricFamily::flat(1);
        let f: Vec<f64> = (0..grid.npoints())
            .map(|p| grid.coords(p)[0].sin().powi(2))
            .collect();
        let q = quadrature(&f, &m, grid, 0.0).unwrap();
        assert_relative_eq!(q, std::f64::consts::PI, max_relative = 1e-14);
    }

    #[test]
    fn quadrature_sees_volume_density() {
        // f = 1 against sqrt(det g) = 2 in d = 1: integral is 2 L.
        let grid = TorusGrid::standard(1, 32).unwrap();
        let f = vec![1.0; grid.npoints()];
        let density = vec![2.0; grid.npoints()];
        let q = quadrature_weighted(&f, &density, grid);
        assert_relative_eq!(q, 2.0 * TWO_PI, max_relative = 1e-14);
    }

    #[test]
    fn quadrature_is_exact_for_band_limited_fields() {
        // trapezoid rule integrates e^{i k x} exactly for 0 < |k| < n
        let grid = TorusGrid::standard(1, 16).unwrap();
        let m = MetricFamily::flat(1);
        for k in 1..15usize {
            let f: Vec<f64> = (0..grid.npoints())
                .map(|p| (k as f64 * grid.coords(p)[0]).cos())
                .collect();
            let q = quadrature(&f, &m, grid, 0.0).unwrap();
            assert!(q.abs() < 1e-12, "mode {k} leaked {q}");
        }
    }

    #[test]
    fn volume_density_matches_closed_form_2d() {
        let grid = TorusGrid::standard(2, 8).unwrap();
        let m = MetricFamily::breathing(2, 0.1);
        let tau = 0.8;
        let d = volume_density(&m, grid, tau).unwrap();
        let expect = (2.0 * 0.1 * tau.sin()).exp(); // det = s^2, sqrt = s
        for v in d {
            assert_relative_eq!(v, expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn l0_estimate_covers_coefficient_magnitudes() {
        let grid = TorusGrid::standard(1, 32).unwrap();
        let bg = Background::preset("anisotropic-lambda", grid).unwrap();
        let l0 = bg.estimate_l0(&[0.0, 0.5, 1.0]);
        // |Lambda| reaches 3 at x = 0
        assert!(l0 >= 3.0 - 1e-12);
        assert!(l0 < 4.0);
    }
}
