//! Discrete sections and the differential operators acting on them.
//!
//! Differentiation is trigonometric: forward FFT, multiply by the wavenumber,
//! inverse FFT. The Nyquist mode is zeroed on the (even) grids we allow, which
//! makes the first-derivative matrix exactly skew-symmetric under the plain
//! grid sum; summation by parts on flat backgrounds then holds to round-off.
//! A second-order centered stencil backend exists only to cross-check
//! convergence rates.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::{Background, BundleStructure, MetricFamily, TorusGrid};

/// FFT plans and wavenumber tables for one grid.
pub struct SpectralKit {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// k-tilde per mode index: 2 pi m / L with the Nyquist entry set to zero.
    k: Vec<f64>,
    /// |signed mode index| per mode index, Nyquist mapped to n/2.
    mode_abs: Vec<usize>,
}

impl SpectralKit {
    pub fn new(grid: TorusGrid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let unit = grid.wavenumber_unit();
        let mut k = Vec::with_capacity(n);
        let mut mode_abs = Vec::with_capacity(n);
        for m in 0..n {
            let signed: i64 = if m < n / 2 {
                m as i64
            } else if m == n / 2 {
                0
            } else {
                m as i64 - n as i64
            };
            k.push(unit * signed as f64);
            mode_abs.push(if m <= n / 2 { m } else { n - m });
        }
        SpectralKit { grid, fwd, inv, k, mode_abs }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    fn check_plane(&self, plane: &[f64]) -> Result<()> {
        if plane.len() != self.grid.npoints() {
            return Err(Error::ShapeMismatch(format!(
                "plane has {} samples, grid has {} points",
                plane.len(),
                self.grid.npoints()
            )));
        }
        Ok(())
    }

    /// Unnormalized Fourier coefficients of a scalar plane.
    pub fn to_modes(&self, plane: &[f64]) -> Result<Vec<Complex<f64>>> {
        self.check_plane(plane)?;
        let n = self.grid.n();
        let mut buf: Vec<Complex<f64>> =
            plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
        for row in buf.chunks_exact_mut(n) {
            self.fwd.process(row);
        }
        if self.grid.dim() == 2 {
            let mut col = vec![Complex::new(0.0, 0.0); n];
            for x in 0..n {
                for y in 0..n {
                    col[y] = buf[y * n + x];
                }
                self.fwd.process(&mut col);
                for y in 0..n {
                    buf[y * n + x] = col[y];
                }
            }
        }
        Ok(buf)
    }

    /// Inverse of `to_modes`; the imaginary part is dropped.
    pub fn from_modes(&self, mut modes: Vec<Complex<f64>>) -> Result<Vec<f64>> {
        if modes.len() != self.grid.npoints() {
            return Err(Error::ShapeMismatch("mode buffer has wrong length".into()));
        }
        let n = self.grid.n();
        for row in modes.chunks_exact_mut(n) {
            self.inv.process(row);
        }
        if self.grid.dim() == 2 {
            let mut col = vec![Complex::new(0.0, 0.0); n];
            for x in 0..n {
                for y in 0..n {
                    col[y] = modes[y * n + x];
                }
                self.inv.process(&mut col);
                for y in 0..n {
                    modes[y * n + x] = col[y];
                }
            }
        }
        let scale = 1.0 / self.grid.npoints() as f64;
        Ok(modes.iter().map(|c| c.re * scale).collect())
    }

    fn axis_mode(&self, p: usize, axis: usize) -> usize {
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            p
        } else if axis == 0 {
            p % n
        } else {
            p / n
        }
    }

    /// d/dx_axis of a scalar plane.
    pub fn deriv_plane(&self, plane: &[f64], axis: usize) -> Result<Vec<f64>> {
        if axis >= self.grid.dim() {
            return Err(Error::OutOfRange(format!("axis {axis} out of range")));
        }
        let mut modes = self.to_modes(plane)?;
        for (p, c) in modes.iter_mut().enumerate() {
            let k = self.k[self.axis_mode(p, axis)];
            *c = Complex::new(-k * c.im, k * c.re);
        }
        self.from_modes(modes)
    }

    /// Apply a real Fourier multiplier given as a function of |k|^2.
    pub fn apply_mode_scale(&self, plane: &[f64], f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        let mut modes = self.to_modes(plane)?;
        for (p, c) in modes.iter_mut().enumerate() {
            let kx = self.k[self.axis_mode(p, 0)];
            let ky = if self.grid.dim() == 2 {
                self.k[self.axis_mode(p, 1)]
            } else {
                0.0
            };
            let s = f(kx * kx + ky * ky);
            *c = Complex::new(s * c.re, s * c.im);
        }
        self.from_modes(modes)
    }

    /// Laplacian through the single multiplier -|k|^2; identical in exact
    /// arithmetic to composing first derivatives.
    pub fn laplacian_plane(&self, plane: &[f64]) -> Result<Vec<f64>> {
        self.apply_mode_scale(plane, |kk| -kk)
    }

    /// Squared Sobolev seminorm of order l, sum over modes of |k|^{2 l} |c|^2
    /// with the Parseval weight for the trapezoid inner product.
    pub fn sobolev_seminorm_sq(&self, plane: &[f64], l: usize) -> Result<f64> {
        let modes = self.to_modes(plane)?;
        let weight = self.grid.spacing().powi(self.grid.dim() as i32)
            / self.grid.npoints() as f64;
        let mut s = 0.0;
        for (p, c) in modes.iter().enumerate() {
            let kx = self.k[self.axis_mode(p, 0)];
            let ky = if self.grid.dim() == 2 {
                self.k[self.axis_mode(p, 1)]
            } else {
                0.0
            };
            let kk = kx * kx + ky * ky;
            s += kk.powi(l as i32) * c.norm_sqr();
        }
        Ok(weight * s)
    }

    /// Fraction of spectral mass carried by modes with index >= cutoff on any
    /// axis; 0 for the zero plane.
    pub fn tail_energy_ratio(&self, plane: &[f64], cutoff: usize) -> Result<f64> {
        let modes = self.to_modes(plane)?;
        let mut total = 0.0;
        let mut tail = 0.0;
        for (p, c) in modes.iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            let mut in_tail = self.mode_abs[self.axis_mode(p, 0)] >= cutoff;
            if self.grid.dim() == 2 {
                in_tail = in_tail || self.mode_abs[self.axis_mode(p, 1)] >= cutoff;
            }
            if in_tail {
                tail += e;
            }
        }
        if total == 0.0 {
            Ok(0.0)
        } else {
            Ok(tail / total)
        }
    }

    /// Zero every mode with index >= cutoff on any axis.
    pub fn truncate_plane(&self, plane: &[f64], cutoff: usize) -> Result<Vec<f64>> {
        let mut modes = self.to_modes(plane)?;
        for p in 0..modes.len() {
            let mut in_tail = self.mode_abs[self.axis_mode(p, 0)] >= cutoff;
            if self.grid.dim() == 2 {
                in_tail = in_tail || self.mode_abs[self.axis_mode(p, 1)] >= cutoff;
            }
            if in_tail {
                modes[p] = Complex::new(0.0, 0.0);
            }
        }
        self.from_modes(modes)
    }
}

/// A discrete section: `fiber_dim` components per grid point, with
/// `rank` extra covariant indices. Values are stored as contiguous scalar
/// planes, one per (tensor index, fiber component) pair.
#[derive(Clone, Debug)]
pub struct Section {
    grid: TorusGrid,
    fiber_dim: usize,
    rank: usize,
    values: Vec<f64>,
}

impl Section {
    pub fn ncomp_for(grid: TorusGrid, fiber_dim: usize, rank: usize) -> usize {
        fiber_dim * grid.dim().pow(rank as u32)
    }

    pub fn zeros(grid: TorusGrid, fiber_dim: usize, rank: usize) -> Self {
        let ncomp = Self::ncomp_for(grid, fiber_dim, rank);
        Section {
            grid,
            fiber_dim,
            rank,
            values: vec![0.0; ncomp * grid.npoints()],
        }
    }

    /// Validating constructor: shape and finiteness.
    pub fn new(grid: TorusGrid, fiber_dim: usize, rank: usize, values: Vec<f64>) -> Result<Self> {
        if fiber_dim == 0 {
            return Err(Error::OutOfRange("fiber dimension must be >= 1".into()));
        }
        let ncomp = Self::ncomp_for(grid, fiber_dim, rank);
        if values.len() != ncomp * grid.npoints() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                ncomp * grid.npoints(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation("section contains non-finite values".into()));
        }
        Ok(Section { grid, fiber_dim, rank, values })
    }

    /// Scalar (rank 0, fiber 1) section from a coordinate function.
    pub fn scalar(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.npoints()).map(|p| f(grid.coords(p))).collect();
        Section { grid, fiber_dim: 1, rank: 0, values }
    }

    /// Rank 0 section with `fiber_dim` components from a coordinate function.
    pub fn fiber_field(
        grid: TorusGrid,
        fiber_dim: usize,
        f: impl Fn([f64; 2], usize) -> f64,
    ) -> Self {
        let np = grid.npoints();
        let mut values = vec![0.0; fiber_dim * np];
        for c in 0..fiber_dim {
            for p in 0..np {
                values[c * np + p] = f(grid.coords(p), c);
            }
        }
        Section { grid, fiber_dim, rank: 0, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncomp(&self) -> usize {
        Self::ncomp_for(self.grid, self.fiber_dim, self.rank)
    }

    /// Component plane index for tensor indices and a fiber component.
    /// Layout: ((i_1 d + i_2) ...) m + c.
    pub fn comp(&self, tensor: &[usize], fiber: usize) -> usize {
        debug_assert_eq!(tensor.len(), self.rank);
        let d = self.grid.dim();
        let mut t = 0;
        for &i in tensor {
            t = t * d + i;
        }
        t * self.fiber_dim + fiber
    }

    pub fn plane(&self, comp: usize) -> &[f64] {
        let np = self.grid.npoints();
        &self.values[comp * np..(comp + 1) * np]
    }

    pub fn plane_mut(&mut self, comp: usize) -> &mut [f64] {
        let np = self.grid.npoints();
        &mut self.values[comp * np..(comp + 1) * np]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fiber vector at a point (rank 0 sections).
    pub fn fiber_at(&self, p: usize, out: &mut [f64]) {
        let np = self.grid.npoints();
        for c in 0..self.fiber_dim {
            out[c] = self.values[c * np + p];
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> Section {
        let mut s = self.clone();
        s.scale(c);
        s
    }

    /// self += c * other
    pub fn axpy(&mut self, c: f64, other: &Section) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn add(&self, other: &Section) -> Section {
        let mut s = self.clone();
        s.axpy(1.0, other);
        s
    }

    pub fn sub(&self, other: &Section) -> Section {
        let mut s = self.clone();
        s.axpy(-1.0, other);
        s
    }

    /// Pointwise multiply every component plane by a scalar weight plane.
    pub fn scale_by_plane(&self, w: &[f64]) -> Result<Section> {
        if w.len() != self.grid.npoints() {
            return Err(Error::ShapeMismatch("weight plane has wrong length".into()));
        }
        let mut out = self.clone();
        let np = self.grid.npoints();
        for comp in 0..self.ncomp() {
            let plane = &mut out.values[comp * np..(comp + 1) * np];
            for (v, s) in plane.iter_mut().zip(w) {
                *v *= s;
            }
        }
        Ok(out)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Spectral mass fraction above the mode cutoff, max over components.
    pub fn tail_energy_ratio(&self, kit: &SpectralKit, cutoff: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for comp in 0..self.ncomp() {
            worst = worst.max(kit.tail_energy_ratio(self.plane(comp), cutoff)?);
        }
        Ok(worst)
    }

    /// Zero all modes with index >= cutoff in every component.
    pub fn truncated(&self, kit: &SpectralKit, cutoff: usize) -> Result<Section> {
        let mut out = self.clone();
        for comp in 0..self.ncomp() {
            let t = kit.truncate_plane(self.plane(comp), cutoff)?;
            out.plane_mut(comp).copy_from_slice(&t);
        }
        Ok(out)
    }
}

/// The PDE block X and ODE block Y of one state.
#[derive(Clone, Debug)]
pub struct SectionPair {
    pub x: Section,
    pub y: Section,
}

fn require_rank(section: &Section, rank: usize, op: &'static str) -> Result<()> {
    if section.rank() != rank {
        return Err(Error::UnsupportedRank { rank: section.rank(), op });
    }
    Ok(())
}

fn require_bundle(section: &Section, bundle: &BundleStructure) -> Result<()> {
    if section.fiber_dim() != bundle.fiber_dim() {
        return Err(Error::ShapeMismatch(format!(
            "section fiber dim {} does not match bundle fiber dim {}",
            section.fiber_dim(),
            bundle.fiber_dim()
        )));
    }
    Ok(())
}

/// Covariant derivative nabla-hat = d + A, raising the rank by one.
/// Rank 1 inputs also receive the base Christoffel correction.
pub fn grad_hat(
    x: &Section,
    bundle: &BundleStructure,
    metric: &MetricFamily,
    tau: f64,
    kit: &SpectralKit,
) -> Result<Section> {
    require_bundle(x, bundle)?;
    if x.rank() > 1 {
        return Err(Error::UnsupportedRank { rank: x.rank(), op: "grad_hat" });
    }
    let grid = x.grid();
    let d = grid.dim();
    let m = x.fiber_dim();
    let np = grid.npoints();
    let mut out = Section::zeros(grid, m, x.rank() + 1);

    // plain partial derivatives of every component plane
    let mut partials: Vec<Vec<f64>> = Vec::with_capacity(d * x.ncomp());
    for axis in 0..d {
        for comp in 0..x.ncomp() {
            partials.push(kit.deriv_plane(x.plane(comp), axis)?);
        }
    }

    let mut vin = vec![0.0; m];
    let mut vout = vec![0.0; m];
    match x.rank() {
        0 => {
            for axis in 0..d {
                for c in 0..m {
                    let oc = out.comp(&[axis], c);
                    out.plane_mut(oc).copy_from_slice(&partials[axis * m + c]);
                }
            }
            for p in 0..np {
                let coords = grid.coords(p);
                x.fiber_at(p, &mut vin);
                for axis in 0..d {
                    let a = bundle.conn(axis, coords, tau);
                    if a.is_zero() {
                        continue;
                    }
                    vout.iter_mut().for_each(|v| *v = 0.0);
                    a.apply_add(&vin, &mut vout);
                    for c in 0..m {
                        let oc = (axis * m + c) * np + p;
                        out.values[oc] += vout[c];
                    }
                }
            }
        }
        _ => {
            // (nabla-hat W)_{i j} = d_i W_j + A_i W_j - Gamma^k_{i j} W_k
            for i in 0..d {
                for j in 0..d {
                    for c in 0..m {
                        let src = i * x.ncomp() + j * m + c;
                        let oc = out.comp(&[i, j], c);
                        out.plane_mut(oc).copy_from_slice(&partials[src]);
                    }
                }
            }
            let mut wj = vec![0.0; m];
            for p in 0..np {
                let coords = grid.coords(p);
                let gamma = metric.christoffel(coords, tau);
                for i in 0..d {
                    let a = bundle.conn(i, coords, tau);
                    for j in 0..d {
                        if !a.is_zero() {
                            for c in 0..m {
                                wj[c] = x.values[(j * m + c) * np + p];
                            }
                            vout.iter_mut().for_each(|v| *v = 0.0);
                            a.apply_add(&wj, &mut vout);
                            for c in 0..m {
                                out.values[((i * d + j) * m + c) * np + p] += vout[c];
                            }
                        }
                        for k in 0..d {
                            let gk = gamma[k][i][j];
                            if gk != 0.0 {
                                for c in 0..m {
                                    out.values[((i * d + j) * m + c) * np + p] -=
                                        gk * x.values[(k * m + c) * np + p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Divergence-form elliptic operator
/// Ell X = Lambda^{ij} (nabla-hat^2 X)_{ij} + (div Lambda)^j (nabla-hat X)_j.
pub fn elliptic_apply(
    x: &Section,
    bg: &Background,
    tau: f64,
    kit: &SpectralKit,
) -> Result<Section> {
    require_rank(x, 0, "elliptic_apply")?;
    require_bundle(x, &bg.bundle)?;
    let grid = x.grid();
    let d = grid.dim();
    let m = x.fiber_dim();
    let np = grid.npoints();

    // plain first and second partials per fiber component
    let mut dx: Vec<Vec<f64>> = Vec::with_capacity(d * m);
    for axis in 0..d {
        for c in 0..m {
            dx.push(kit.deriv_plane(x.plane(c), axis)?);
        }
    }
    // ddx[(i * d + j) * m + c] for i <= j, stored for all i, j by symmetry
    let mut ddx: Vec<Vec<f64>> = vec![Vec::new(); d * d * m];
    for i in 0..d {
        for j in i..d {
            for c in 0..m {
                let plane = if i == j {
                    second_axis_deriv(kit, x.plane(c), i)?
                } else {
                    kit.deriv_plane(&dx[j * m + c], i)?
                };
                ddx[(i * d + j) * m + c] = plane.clone();
                ddx[(j * d + i) * m + c] = plane;
            }
        }
    }

    let mut out = Section::zeros(grid, m, 0);
    let mut xv = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    let mut hess = vec![0.0; m];
    let mut dxi = vec![0.0; m];
    let mut dxj = vec![0.0; m];
    for p in 0..np {
        let coords = grid.coords(p);
        let lam = bg.elliptic.lambda(coords, tau);
        let divl = bg.elliptic.div_lambda(coords, tau);
        let gamma_sym = bg.metric.christoffel(coords, tau);
        x.fiber_at(p, &mut xv);
        let mut acc = vec![0.0; m];
        for i in 0..d {
            let ai = bg.bundle.conn(i, coords, tau);
            for j in 0..d {
                let lij = lam.get(i, j);
                if lij == 0.0 {
                    continue;
                }
                let aj = bg.bundle.conn(j, coords, tau);
                let daij = bg.bundle.conn_dx(j, i, coords, tau);
                for c in 0..m {
                    hess[c] = ddx[(i * d + j) * m + c][p];
                    dxi[c] = dx[i * m + c][p];
                    dxj[c] = dx[j * m + c][p];
                }
                // (d_i A_j) X
                if !daij.is_zero() {
                    tmp.iter_mut().for_each(|v| *v = 0.0);
                    daij.apply_add(&xv, &mut tmp);
                    for c in 0..m {
                        hess[c] += tmp[c];
                    }
                }
                // A_j d_i X + A_i d_j X
                if !aj.is_zero() {
                    tmp.iter_mut().for_each(|v| *v = 0.0);
                    aj.apply_add(&dxi, &mut tmp);
                    for c in 0..m {
                        hess[c] += tmp[c];
                    }
                }
                if !ai.is_zero() {
                    tmp.iter_mut().for_each(|v| *v = 0.0);
                    ai.apply_add(&dxj, &mut tmp);
                    for c in 0..m {
                        hess[c] += tmp[c];
                    }
                    // A_i A_j X
                    let comp = ai.compose(&aj);
                    if !comp.is_zero() {
                        tmp.iter_mut().for_each(|v| *v = 0.0);
                        comp.apply_add(&xv, &mut tmp);
                        for c in 0..m {
                            hess[c] += tmp[c];
                        }
                    }
                }
                // - Gamma^k_{ij} (nabla-hat X)_k
                for k in 0..d {
                    let gk = gamma_sym[k][i][j];
                    if gk != 0.0 {
                        let ak = bg.bundle.conn(k, coords, tau);
                        for c in 0..m {
                            tmp[c] = dx[k * m + c][p];
                        }
                        if !ak.is_zero() {
                            let mut av = vec![0.0; m];
                            ak.apply_add(&xv, &mut av);
                            for c in 0..m {
                                tmp[c] += av[c];
                            }
                        }
                        for c in 0..m {
                            hess[c] -= gk * tmp[c];
                        }
                    }
                }
                for c in 0..m {
                    acc[c] += lij * hess[c];
                }
            }
        }
        // divergence correction (div Lambda)^j (nabla-hat X)_j
        for j in 0..d {
            let dj = divl[j];
            if dj == 0.0 {
                continue;
            }
            let aj = bg.bundle.conn(j, coords, tau);
            for c in 0..m {
                tmp[c] = dx[j * m + c][p];
            }
            if !aj.is_zero() {
                let mut av = vec![0.0; m];
                aj.apply_add(&xv, &mut av);
                for c in 0..m {
                    tmp[c] += av[c];
                }
            }
            for c in 0..m {
                acc[c] += dj * tmp[c];
            }
        }
        for c in 0..m {
            out.values[c * np + p] = acc[c];
        }
    }
    Ok(out)
}

fn second_axis_deriv(kit: &SpectralKit, plane: &[f64], axis: usize) -> Result<Vec<f64>> {
    // -k_axis^2 multiplier, consistent with composing first derivatives
    let d1 = kit.deriv_plane(plane, axis)?;
    kit.deriv_plane(&d1, axis)
}

/// Signed principal part P with L_backward = d_tau + P. Order 2 uses the
/// divergence-form elliptic operator; order 2k + 2 uses (-1)^k Laplacian^{k+1}
/// on flat backgrounds, whose Fourier multiplier is -|k|^{2(k+1)}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrincipalPart {
    Elliptic,
    LaplacePower { k: usize },
}

impl PrincipalPart {
    pub fn apply(&self, x: &Section, bg: &Background, tau: f64, kit: &SpectralKit) -> Result<Section> {
        match self {
            PrincipalPart::Elliptic => elliptic_apply(x, bg, tau, kit),
            PrincipalPart::LaplacePower { k } => {
                require_rank(x, 0, "laplace power principal part")?;
                let power = (*k + 1) as i32;
                let mut out = x.clone();
                for comp in 0..x.ncomp() {
                    let plane = kit.apply_mode_scale(x.plane(comp), |kk| -kk.powi(power))?;
                    out.plane_mut(comp).copy_from_slice(&plane);
                }
                Ok(out)
            }
        }
    }

    /// Per-mode growth rate of d_tau X = -P X as a function of |k|^2,
    /// with the spatial mean of the coefficient split off for order 2.
    pub fn growth_rate(&self, bg: &Background, tau: f64) -> impl Fn(f64) -> f64 {
        let (coeff, power) = match self {
            PrincipalPart::Elliptic => (bg.elliptic.mean_coeff(tau), 1),
            PrincipalPart::LaplacePower { k } => (1.0, (*k + 1) as i32),
        };
        move |kk: f64| coeff * kk.powi(power)
    }
}

/// L_B X = d_tau X + Ell X (second order).
pub fn l_backward(
    x: &Section,
    dtau_x: &Section,
    bg: &Background,
    tau: f64,
    kit: &SpectralKit,
) -> Result<Section> {
    Ok(dtau_x.add(&elliptic_apply(x, bg, tau, kit)?))
}

/// L_F X = d_tau X - Ell X (second order).
pub fn l_forward(
    x: &Section,
    dtau_x: &Section,
    bg: &Background,
    tau: f64,
    kit: &SpectralKit,
) -> Result<Section> {
    Ok(dtau_x.sub(&elliptic_apply(x, bg, tau, kit)?))
}

pub const LAPLACE_POWER_MAX: usize = 3;

/// Laplacian iterated k times, exact per mode: multiplier (-|k|^2)^k.
pub fn laplace_power(x: &Section, k: usize, kit: &SpectralKit) -> Result<Section> {
    require_rank(x, 0, "laplace_power")?;
    if k == 0 || k > LAPLACE_POWER_MAX {
        return Err(Error::OutOfRange(format!(
            "laplace power must be in 1..={LAPLACE_POWER_MAX}, got {k}"
        )));
    }
    let mut out = x.clone();
    for comp in 0..x.ncomp() {
        let plane = kit.apply_mode_scale(x.plane(comp), |kk| (-kk).powi(k as i32))?;
        out.plane_mut(comp).copy_from_slice(&plane);
    }
    Ok(out)
}

/// L2(gamma, d mu) inner product of two rank 0 sections over one bundle.
pub fn inner_product(
    a: &Section,
    b: &Section,
    bundle: &BundleStructure,
    metric: &MetricFamily,
    tau: f64,
) -> Result<f64> {
    require_rank(a, 0, "inner_product")?;
    require_rank(b, 0, "inner_product")?;
    require_bundle(a, bundle)?;
    require_bundle(b, bundle)?;
    let grid = a.grid();
    if b.grid() != grid {
        return Err(Error::ShapeMismatch("sections live on different grids".into()));
    }
    let np = grid.npoints();
    let hd = grid.spacing().powi(grid.dim() as i32);
    let gscale = bundle.gamma_scale(tau);
    let mut s = 0.0;
    for p in 0..np {
        let sqrtg = metric.sqrt_det_g(grid.coords(p), tau);
        let mut dot = 0.0;
        for c in 0..a.fiber_dim() {
            dot += a.values[c * np + p] * b.values[c * np + p];
        }
        s += sqrtg * gscale * dot;
    }
    Ok(hd * s)
}

pub fn norm_sq(
    a: &Section,
    bundle: &BundleStructure,
    metric: &MetricFamily,
    tau: f64,
) -> Result<f64> {
    inner_product(a, a, bundle, metric, tau)
}

/// The Dirichlet-type quantity
/// F(X) = integral of Lambda^{ij} gamma(nabla-hat_i X, nabla-hat_j X) d mu.
pub fn lambda_gradient_energy(
    x: &Section,
    bg: &Background,
    tau: f64,
    kit: &SpectralKit,
) -> Result<f64> {
    require_rank(x, 0, "lambda_gradient_energy")?;
    let g1 = grad_hat(x, &bg.bundle, &bg.metric, tau, kit)?;
    let grid = x.grid();
    let d = grid.dim();
    let m = x.fiber_dim();
    let np = grid.npoints();
    let hd = grid.spacing().powi(d as i32);
    let gscale = bg.bundle.gamma_scale(tau);
    let mut s = 0.0;
    for p in 0..np {
        let coords = grid.coords(p);
        let sqrtg = bg.metric.sqrt_det_g(coords, tau);
        let lam = bg.elliptic.lambda(coords, tau);
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                let lij = lam.get(i, j);
                if lij == 0.0 {
                    continue;
                }
                let mut dot = 0.0;
                for c in 0..m {
                    dot += g1.values[((i * m) + c) * np + p] * g1.values[((j * m) + c) * np + p];
                }
                q += lij * dot;
            }
        }
        s += sqrtg * gscale * q;
    }
    Ok(hd * s)
}

/// Summation-by-parts residual |(Ell X, X) + F(X)| / max(F(X), eps).
pub fn ibp_residual(x: &Section, bg: &Background, tau: f64, kit: &SpectralKit) -> Result<f64> {
    let ell = elliptic_apply(x, bg, tau, kit)?;
    let a = inner_product(&ell, x, &bg.bundle, &bg.metric, tau)?;
    let f = lambda_gradient_energy(x, bg, tau, kit)?;
    Ok((a + f).abs() / f.max(f64::EPSILON))
}

/// Band-limited random section: independent coefficients on every Fourier
/// mode with index below `max_mode` on each axis.
pub fn random_section(
    grid: TorusGrid,
    fiber_dim: usize,
    max_mode: usize,
    rng: &mut impl rand::Rng,
) -> Section {
    random_decay_section(grid, fiber_dim, max_mode, 0.0, rng)
}

/// Random section with amplitude exp(-decay * |mode|) per mode, filling all
/// modes with index below `max_mode` per axis.
pub fn random_decay_section(
    grid: TorusGrid,
    fiber_dim: usize,
    max_mode: usize,
    decay: f64,
    rng: &mut impl rand::Rng,
) -> Section {
    let np = grid.npoints();
    let mut values = vec![0.0; fiber_dim * np];
    let unit = grid.wavenumber_unit();
    let d = grid.dim();
    for c in 0..fiber_dim {
        let mut modes: Vec<(f64, f64, f64, f64)> = Vec::new();
        let mrange = |_axis: usize| -> Vec<i64> {
            let mm = max_mode as i64;
            if d == 1 {
                (0..=mm).collect()
            } else {
                (-mm..=mm).collect()
            }
        };
        for mx in mrange(0) {
            let my_list: Vec<i64> = if d == 2 { mrange(1) } else { vec![0] };
            for &my in &my_list {
                if mx == 0 && my < 0 {
                    continue; // avoid double-counting conjugate pairs
                }
                let kmag = ((mx * mx + my * my) as f64).sqrt();
                if kmag == 0.0 || kmag > max_mode as f64 {
                    continue;
                }
                let amp = (-decay * kmag).exp();
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                modes.push((mx as f64 * unit, my as f64 * unit, amp * a, amp * b));
            }
        }
        for p in 0..np {
            let xy = grid.coords(p);
            let mut v = 0.0;
            for &(kx, ky, ca, cb) in &modes {
                let phase = kx * xy[0] + ky * xy[1];
                v += ca * phase.cos() + cb * phase.sin();
            }
            values[c * np + p] = v;
        }
    }
    Section { grid, fiber_dim, rank: 0, values }
}

/// Second-order centered finite differences, used only to cross-check the
/// spectral backend's convergence behaviour.
pub mod stencil {
    use super::*;

    pub fn deriv_plane(grid: TorusGrid, plane: &[f64], axis: usize) -> Vec<f64> {
        let n = grid.n();
        let h = grid.spacing();
        let np = grid.npoints();
        let mut out = vec![0.0; np];
        for p in 0..np {
            let (ix, iy) = match grid.dim() {
                1 => (p, 0),
                _ => (p % n, p / n),
            };
            let (pp, pm) = match axis {
                0 => (grid.index((ix + 1) % n, iy), grid.index((ix + n - 1) % n, iy)),
                _ => (grid.index(ix, (iy + 1) % n), grid.index(ix, (iy + n - 1) % n)),
            };
            out[p] = (plane[pp] - plane[pm]) / (2.0 * h);
        }
        out
    }

    pub fn second_deriv_plane(grid: TorusGrid, plane: &[f64], axis: usize) -> Vec<f64> {
        let n = grid.n();
        let h = grid.spacing();
        let np = grid.npoints();
        let mut out = vec![0.0; np];
        for p in 0..np {
            let (ix, iy) = match grid.dim() {
                1 => (p, 0),
                _ => (p % n, p / n),
            };
            let (pp, pm) = match axis {
                0 => (grid.index((ix + 1) % n, iy), grid.index((ix + n - 1) % n, iy)),
                _ => (grid.index(ix, (iy + 1) % n), grid.index(ix, (iy + n - 1) % n)),
            };
            out[p] = (plane[pp] - 2.0 * plane[p] + plane[pm]) / (h * h);
        }
        out
    }
}
