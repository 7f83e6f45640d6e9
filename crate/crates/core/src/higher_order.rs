//! Higher-order functionals: interpolation constants between derivative
//! levels, the flat Hessian identity behind coercivity, and frequency traces
//! for poly-Laplacian energies.
//!
//! The quotient machinery in `energetics` is order-agnostic; what changes at
//! higher order is the bookkeeping that absorbs intermediate derivatives.
//! Per Fourier mode the absorption is Young's inequality
//!
//!   m^{2l} <= eps m^{2k} + C(eps, k, l),  C = eps^{-l / (k - l)},
//!
//! which sums against |c_m|^2 into the seminorm statement. The sharp
//! constant (k-l)/k (l/(k eps))^{l/(k-l)} is attained by the mode sitting at
//! the balance point, and one test pins a configuration within five percent
//! of equality so the constant cannot silently be loose.

use serde::Serialize;

use crate::energetics::{energy_threshold, EnergyFunctional, FrequencyTrace};
use crate::error::{Error, Result};
use crate::evolution::{evolve, gronwall_certificate, CoupledSystem, Coupling, GronwallCertificate, Trajectory};
use crate::geometry::Background;
use crate::operators::{grad_hat, norm_sq, Section, SpectralKit, LAPLACE_POWER_MAX};

/// Highest seminorm order the interpolation helpers accept: two derivative
/// levels per shipped poly-Laplacian functional.
pub const MAX_SEMINORM_ORDER: usize = 2 * (LAPLACE_POWER_MAX + 1);

fn check_orders(k: usize, l: usize) -> Result<()> {
    if l == 0 || l >= k {
        return Err(Error::OutOfRange(format!(
            "interpolation needs 0 < l < k, got l = {l}, k = {k}"
        )));
    }
    if k > MAX_SEMINORM_ORDER {
        return Err(Error::OutOfRange(format!(
            "seminorm order {k} above the supported maximum {MAX_SEMINORM_ORDER}"
        )));
    }
    Ok(())
}

/// The workhorse constant eps^{-l/(k-l)}.
pub fn interpolation_constant(eps: f64, k: usize, l: usize) -> Result<f64> {
    check_orders(k, l)?;
    if !(eps > 0.0) {
        return Err(Error::OutOfRange("eps must be positive".into()));
    }
    Ok(eps.powf(-(l as f64) / (k - l) as f64))
}

/// The sharp constant (k-l)/k (l/(k eps))^{l/(k-l)}, the actual max of
/// y^l - eps y^k over y >= 0.
pub fn interpolation_constant_sharp(eps: f64, k: usize, l: usize) -> Result<f64> {
    check_orders(k, l)?;
    if !(eps > 0.0) {
        return Err(Error::OutOfRange("eps must be positive".into()));
    }
    let (kf, lf) = (k as f64, l as f64);
    Ok((kf - lf) / kf * (lf / (kf * eps)).powf(lf / (kf - lf)))
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationCheck {
    pub eps: f64,
    pub k: usize,
    pub l: usize,
    pub constant: f64,
    /// Seminorm of order l, the side being absorbed.
    pub lhs: f64,
    /// eps * seminorm of order k + constant * L2 norm.
    pub rhs: f64,
    /// rhs / lhs - 1; nonnegative when the inequality holds.
    pub slack: f64,
    pub pass: bool,
}

/// Verify the seminorm interpolation on concrete data.
pub fn interpolation_check(
    plane: &[f64],
    eps: f64,
    k: usize,
    l: usize,
    sharp: bool,
    kit: &SpectralKit,
) -> Result<InterpolationCheck> {
    let constant = if sharp {
        interpolation_constant_sharp(eps, k, l)?
    } else {
        interpolation_constant(eps, k, l)?
    };
    let lhs = kit.sobolev_seminorm_sq(plane, l)?;
    let high = kit.sobolev_seminorm_sq(plane, k)?;
    let low = kit.sobolev_seminorm_sq(plane, 0)?;
    let rhs = eps * high + constant * low;
    let slack = if lhs > 0.0 { rhs / lhs - 1.0 } else { f64::INFINITY };
    // round-off allowance: equality cases land within a few ulps
    let pass = rhs >= lhs * (1.0 - 1e-12);
    Ok(InterpolationCheck { eps, k, l, constant, lhs, rhs, slack, pass })
}

#[derive(Clone, Debug, Serialize)]
pub struct GardingCheck {
    pub lap_sq: f64,
    pub hess_sq: f64,
    pub gap: f64,
    /// Curvature-commutator budget the gap must fit inside.
    pub bound: f64,
    pub pass: bool,
}

/// Compare the poly-Laplacian energy against the full Hessian energy.
///
/// On a flat metric with a curvature-free connection the two agree exactly
/// after integration by parts; any gap must fit inside the commutator budget
/// built from the connection's curvature.
pub fn garding_check(
    x: &Section,
    bg: &Background,
    tau: f64,
    kit: &SpectralKit,
) -> Result<GardingCheck> {
    if x.rank() != 0 {
        return Err(Error::UnsupportedRank { rank: x.rank(), op: "garding_check" });
    }
    if !bg.metric.is_static() {
        return Err(Error::OutOfRange(
            "the Hessian identity audit assumes a static flat metric".into(),
        ));
    }
    let grid = x.grid();
    let d = grid.dim();
    let m = x.fiber_dim();
    let np = grid.npoints();
    let hd = grid.spacing().powi(d as i32);

    let g1 = grad_hat(x, &bg.bundle, &bg.metric, tau, kit)?;
    let h = grad_hat(&g1, &bg.bundle, &bg.metric, tau, kit)?;

    let mut hess_sq = 0.0;
    for comp in 0..h.ncomp() {
        hess_sq += hd * h.plane(comp).iter().map(|v| v * v).sum::<f64>();
    }
    let mut lap_sq = 0.0;
    let mut lap = vec![0.0; np];
    for c in 0..m {
        lap.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            let plane = h.plane(h.comp(&[i, i], c));
            for p in 0..np {
                lap[p] += plane[p];
            }
        }
        lap_sq += hd * lap.iter().map(|v| v * v).sum::<f64>();
    }

    // curvature of the connection: F_ij = d_i A_j - d_j A_i + [A_i, A_j],
    // evaluated through operator norms; shipped connections are spatially
    // uniform so one sample point suffices, but cover the axes pairs anyway
    let mut f_max = 0.0f64;
    let origin = grid.coords(0);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let ai = bg.bundle.conn(i, origin, tau);
            let aj = bg.bundle.conn(j, origin, tau);
            let df = bg.bundle.conn_dx(j, i, origin, tau).op_norm()
                + bg.bundle.conn_dx(i, j, origin, tau).op_norm();
            let comm = ai.compose(&aj).op_norm() + aj.compose(&ai).op_norm();
            f_max = f_max.max(df + comm);
        }
    }
    let x_l2 = norm_sq(x, &bg.bundle, &bg.metric, tau)?.sqrt();
    let mut g1_sq = 0.0;
    for comp in 0..g1.ncomp() {
        g1_sq += hd * g1.plane(comp).iter().map(|v| v * v).sum::<f64>();
    }
    let floor = 1e-12 * (lap_sq + hess_sq + 1.0);
    let bound = 2.0 * f_max * g1_sq.sqrt() * x_l2 + f_max * f_max * x_l2 * x_l2 + floor;

    let gap = (lap_sq - hess_sq).abs();
    Ok(GardingCheck { lap_sq, hess_sq, gap, bound, pass: gap <= bound })
}

/// Dirichlet energy of the order-k poly-Laplacian family: the seminorm of
/// order k + 1 summed over fiber components.
pub fn kcf_dirichlet(x: &Section, k: usize, kit: &SpectralKit) -> Result<f64> {
    if k == 0 || k > LAPLACE_POWER_MAX {
        return Err(Error::OutOfRange(format!(
            "poly-Laplacian index must lie in 1..={LAPLACE_POWER_MAX}, got {k}"
        )));
    }
    let mut s = 0.0;
    for c in 0..x.ncomp() {
        s += kit.sobolev_seminorm_sq(x.plane(c), k + 1)?;
    }
    Ok(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct SimplifiedEnergyRow {
    pub tau: f64,
    pub e: f64,
    pub fk: f64,
    pub ey: f64,
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimplifiedEnergyCertificate {
    pub rows: Vec<SimplifiedEnergyRow>,
    /// Measured envelope rate max |dH/dtau| / H over interior samples.
    pub c_tilde: f64,
    /// Worst integrated-inequality violation, relative.
    pub max_violation: f64,
    pub pass: bool,
}

/// Certify the blended energy H = |X|^2 + |D^{order} X|^2 + |Y|^2 against
/// its own measured envelope rate: H may move no faster than e^{c_tilde dtau}
/// between any two samples.
pub fn simplified_energy_certificate(
    traj: &Trajectory,
    kit: &SpectralKit,
) -> Result<SimplifiedEnergyCertificate> {
    // seminorm order k + 1: half the differential order of the operator
    let order = traj.system.functional.order() / 2;
    let bg = &traj.system.bg;
    let n = traj.times.len();
    if n < 3 {
        return Err(Error::TimeSamplingTooCoarse(
            "the blended-energy certificate needs at least 3 samples".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    for (i, state) in traj.states.iter().enumerate() {
        let tau = traj.times[i];
        let e = norm_sq(&state.x, &bg.bundle, &bg.metric, tau)?;
        let mut fk = 0.0;
        for c in 0..state.x.ncomp() {
            fk += kit.sobolev_seminorm_sq(state.x.plane(c), order)?;
        }
        let ey = norm_sq(&state.y, &bg.bundle_y, &bg.metric, tau)?;
        let h = e + fk + ey;
        if h <= energy_threshold(kit.grid()) {
            return Err(Error::UndefinedFrequency {
                energy: h,
                threshold: energy_threshold(kit.grid()),
            });
        }
        rows.push(SimplifiedEnergyRow { tau, e, fk, ey, h });
    }

    let mut c_tilde = 0.0f64;
    for i in 1..n - 1 {
        let dt = rows[i + 1].tau - rows[i - 1].tau;
        let rate = (rows[i + 1].h - rows[i - 1].h) / (dt * rows[i].h);
        c_tilde = c_tilde.max(rate.abs());
    }

    // discretization slop: the envelope was measured at sample midpoints
    let tol = 1e-4;
    let mut max_violation = 0.0f64;
    let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    pairs.push((0, n - 1));
    for (i, j) in pairs {
        let growth = (c_tilde * (rows[j].tau - rows[i].tau)).exp();
        let up = rows[j].h / (rows[i].h * growth) - 1.0;
        let down = rows[i].h / (rows[j].h * growth) - 1.0;
        max_violation = max_violation.max(up).max(down);
    }
    Ok(SimplifiedEnergyCertificate {
        rows,
        c_tilde,
        max_violation,
        pass: max_violation <= tol,
    })
}

/// Everything a higher-order frequency run produces.
pub struct HigherOrderRun {
    pub k: usize,
    pub trajectory: Trajectory,
    pub trace: FrequencyTrace,
    pub certificate: GronwallCertificate,
    pub simplified: SimplifiedEnergyCertificate,
}

/// Horizon per poly-Laplacian index: the fastest retained mode grows like
/// e^{9^{k+1} tau}, so the horizon shrinks with k to keep round-off seeded
/// at that mode from outgrowing the data.
pub fn higher_order_horizon(k: usize) -> f64 {
    match k {
        1 => 0.05,
        2 => 0.01,
        _ => 0.002,
    }
}

/// Two-mode trace and certificates for the order-k functional on the flat
/// line.
pub fn higher_order_run(k: usize, steps: usize, kit: &SpectralKit) -> Result<HigherOrderRun> {
    if k == 0 || k > LAPLACE_POWER_MAX {
        return Err(Error::OutOfRange(format!(
            "poly-Laplacian index must lie in 1..={LAPLACE_POWER_MAX}, got {k}"
        )));
    }
    let grid = kit.grid();
    let bg = Background::flat(grid)?;
    let system = CoupledSystem::new(bg, EnergyFunctional::Power { k }, Coupling::None);
    let x0 = Section::scalar(grid, |c| c[0].sin() + 0.5 * (2.0 * c[0]).sin());
    let y0 = Section::zeros(grid, 1, 0);
    let omega = higher_order_horizon(k);
    let trajectory = evolve(&system, &x0, &y0, omega, steps, kit)?;
    let trace = trajectory.trace(1, kit)?;
    let c = 2.0 * (1.0 + trajectory.system.bg.estimate_l0(&trajectory.times));
    let certificate = gronwall_certificate(&trace, c, 1e-3)?;
    let simplified = simplified_energy_certificate(&trajectory, kit)?;
    Ok(HigherOrderRun { k, trajectory, trace, certificate, simplified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TorusGrid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn kit1(n: usize) -> SpectralKit {
        SpectralKit::new(TorusGrid::standard(1, n).unwrap())
    }

    #[test]
    fn interpolation_constants_and_domains() {
        assert_relative_eq!(interpolation_constant(0.1, 2, 1).unwrap(), 10.0);
        assert_relative_eq!(interpolation_constant(0.01, 4, 1).unwrap(), 0.01f64.powf(-1.0 / 3.0));
        // sharp is never larger than crude
        for (eps, k, l) in [(0.1, 2, 1), (0.3, 4, 2), (0.05, 8, 3)] {
            let sharp = interpolation_constant_sharp(eps, k, l).unwrap();
            let crude = interpolation_constant(eps, k, l).unwrap();
            assert!(sharp <= crude * (1.0 + 1e-12), "{sharp} > {crude}");
        }
        assert!(interpolation_constant(0.1, 2, 2).is_err());
        assert!(interpolation_constant(0.1, 2, 0).is_err());
        assert!(interpolation_constant(0.1, 9, 1).is_err());
        assert!(interpolation_constant(-0.1, 2, 1).is_err());
    }

    #[test]
    fn interpolation_holds_on_mixed_data() {
        let kit = kit1(32);
        let grid = kit.grid();
        let x = Section::scalar(grid, |c| c[0].sin() + (3.0 * c[0]).sin());
        let chk = interpolation_check(x.plane(0), 0.1, 2, 1, false, &kit).unwrap();
        assert!(chk.pass, "slack {}", chk.slack);
        // lhs = pi (1 + 9), rhs = 0.1 pi (1 + 81) + 10 * 2 pi
        assert_relative_eq!(chk.lhs, 10.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(chk.rhs, 8.2 * PI + 20.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn sharp_constant_is_tight_at_the_balance_mode() {
        let kit = kit1(32);
        let grid = kit.grid();
        // mode 2, k = 2, l = 1: balance at y = kk = 4 needs eps = 1/(2 * 4)
        let x = Section::scalar(grid, |c| (2.0 * c[0]).sin());
        let chk = interpolation_check(x.plane(0), 0.125, 2, 1, true, &kit).unwrap();
        assert!(chk.pass);
        assert!(
            chk.slack.abs() < 0.05,
            "sharp constant should be near equality, slack {}",
            chk.slack
        );
        // the crude constant on the same data is visibly slack
        let crude = interpolation_check(x.plane(0), 0.125, 2, 1, false, &kit).unwrap();
        assert!(crude.slack > 0.5, "crude slack {}", crude.slack);
    }

    #[test]
    fn flat_hessian_identity_is_exact() {
        let kit = kit1(32);
        let grid = kit.grid();
        let bg = Background::flat(grid).unwrap();
        let x = Section::scalar(grid, |c| c[0].sin() + (3.0 * c[0]).sin());
        let chk = garding_check(&x, &bg, 0.0, &kit).unwrap();
        assert!(chk.pass);
        assert_relative_eq!(chk.lap_sq, 82.0 * PI, max_relative = 1e-10);
        assert_relative_eq!(chk.hess_sq, 82.0 * PI, max_relative = 1e-10);

        let x2 = Section::scalar(grid, |c| (2.0 * c[0]).sin());
        let chk2 = garding_check(&x2, &bg, 0.0, &kit).unwrap();
        assert_relative_eq!(chk2.lap_sq, 16.0 * PI, max_relative = 1e-10);
    }

    #[test]
    fn hessian_identity_survives_a_flat_connection() {
        let kit2 = SpectralKit::new(TorusGrid::standard(2, 16).unwrap());
        let grid = kit2.grid();
        let bg = Background::preset("twisted-bundle", grid).unwrap();
        let x = Section::new(
            grid,
            2,
            0,
            {
                let np = grid.npoints();
                let mut v = vec![0.0; 2 * np];
                for p in 0..np {
                    let c = grid.coords(p);
                    v[p] = c[0].sin() * c[1].cos();
                    v[np + p] = 0.5 * (2.0 * c[1]).sin();
                }
                v
            },
        )
        .unwrap();
        let chk = garding_check(&x, &bg, 0.3, &kit2).unwrap();
        assert!(chk.pass, "gap {} bound {}", chk.gap, chk.bound);
    }

    #[test]
    fn kcf_dirichlet_hits_the_mode_two_oracle() {
        let kit = kit1(32);
        let grid = kit.grid();
        let x = Section::scalar(grid, |c| (2.0 * c[0]).sin());
        let f = kcf_dirichlet(&x, 2, &kit).unwrap();
        assert_relative_eq!(f, 64.0 * PI, max_relative = 1e-12);
        assert!(kcf_dirichlet(&x, 0, &kit).is_err());
        assert!(kcf_dirichlet(&x, 4, &kit).is_err());
    }

    #[test]
    fn fourth_order_run_matches_the_closed_form() {
        let kit = kit1(16);
        let run = higher_order_run(1, 500, &kit).unwrap();
        assert!(run.certificate.pass);
        let r0 = &run.trace.reports[0];
        assert_relative_eq!(r0.n.unwrap(), 4.0, max_relative = 1e-10);
        let omega = higher_order_horizon(1);
        let (e2t, e32t) = ((2.0 * omega).exp(), (32.0 * omega).exp());
        let n_closed = (e2t + 4.0 * e32t) / (e2t + 0.25 * e32t);
        let n_end = run.trace.reports.last().unwrap().n.unwrap();
        assert_relative_eq!(n_end, n_closed, max_relative = 1e-9);
        let (r1, r2, r3) = run.trace.max_residuals();
        assert!(r1 < 1e-3 && r2 < 1e-10 && r3 < 1e-3, "{r1} {r2} {r3}");
    }

    #[test]
    fn simplified_energy_envelope_certifies() {
        let kit = kit1(16);
        let run = higher_order_run(1, 500, &kit).unwrap();
        let cert = &run.simplified;
        assert!(cert.pass, "violation {}", cert.max_violation);
        assert!(cert.c_tilde > 0.0 && cert.c_tilde < 40.0, "c_tilde {}", cert.c_tilde);
        // H is dominated by the order-2 seminorm of the fast mode, whose
        // log-derivative tends to 32
        assert!(cert.c_tilde > 20.0);
    }

    #[test]
    fn highest_order_run_certifies_on_its_short_horizon() {
        let kit = kit1(16);
        for k in [2usize, 3] {
            let run = higher_order_run(k, 400, &kit).unwrap();
            assert!(run.certificate.pass, "k = {k}");
            assert!(run.simplified.pass, "k = {k}");
        }
        assert!(higher_order_run(0, 100, &kit).is_err());
        assert!(higher_order_run(4, 100, &kit).is_err());
    }
}
