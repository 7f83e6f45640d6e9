//! Energies, the frequency quotient, and the discrete form of the integral
//! identities that drive it.
//!
//! With Z = X + Y, u = (L_F X, X) + (d_tau Y, Y) and v = (L_B X, X) +
//! (d_tau Y, Y), the identities read
//!
//!   2 F     = u - v
//!   dE/dtau = u + v + I1
//!   dF/dtau = (|L_F X|^2 - |L_B X|^2) / 2 + I2
//!
//! and Cauchy-Schwarz on each half gives the two-sided bound
//!
//!   -(|L_B X|^2 + |d_tau Y|^2) / 2E + Ic / E^2
//!       <= dN/dtau <=
//!    (|L_F X|^2 + |d_tau Y|^2) / 2E + Ic / E^2,       Ic = I2 E - I1 F.
//!
//! Everything here is evaluated on sampled states; how well the discrete
//! quantities satisfy the identities is recorded as residuals, never assumed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Background, TorusGrid};
use crate::operators::{
    grad_hat, inner_product, lambda_gradient_energy, norm_sq, PrincipalPart, Section, SpectralKit,
};

/// Below this total energy the quotient N = F / E is reported as undefined.
pub fn energy_threshold(grid: TorusGrid) -> f64 {
    1e-30 * grid.npoints() as f64
}

/// Which Dirichlet-type numerator pairs with the L2 energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyFunctional {
    /// F = integral of Lambda^{ij} gamma(nabla-hat_i X, nabla-hat_j X) d mu,
    /// paired with the order 2 operator.
    Lambda,
    /// F = sum over modes of |k|^{2(k+1)} |X^|^2, paired with the order
    /// 2k + 2 constant-coefficient operator on a static flat background.
    Power { k: usize },
}

impl EnergyFunctional {
    pub fn principal(&self) -> PrincipalPart {
        match self {
            EnergyFunctional::Lambda => PrincipalPart::Elliptic,
            EnergyFunctional::Power { k } => PrincipalPart::LaplacePower { k: *k },
        }
    }

    /// Differential order of the paired operator.
    pub fn order(&self) -> usize {
        match self {
            EnergyFunctional::Lambda => 2,
            EnergyFunctional::Power { k } => 2 * k + 2,
        }
    }

    fn requires_static(&self) -> bool {
        matches!(self, EnergyFunctional::Power { .. })
    }

    pub fn dirichlet(
        &self,
        x: &Section,
        bg: &Background,
        tau: f64,
        kit: &SpectralKit,
    ) -> Result<f64> {
        match self {
            EnergyFunctional::Lambda => lambda_gradient_energy(x, bg, tau, kit),
            EnergyFunctional::Power { k } => {
                let gscale = bg.bundle.gamma_scale(tau);
                let mut s = 0.0;
                for comp in 0..x.ncomp() {
                    s += kit.sobolev_seminorm_sq(x.plane(comp), k + 1)?;
                }
                Ok(gscale * s)
            }
        }
    }
}

/// One state together with its time derivatives, as recomputed from the
/// right-hand side of whatever produced it.
#[derive(Clone, Debug)]
pub struct SampledState {
    pub tau: f64,
    pub x: Section,
    pub y: Section,
    pub dx: Section,
    pub dy: Section,
}

/// Scalar observables of one sampled state.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub tau: f64,
    pub e: f64,
    pub e_x: f64,
    pub e_y: f64,
    pub f: f64,
    /// None when the energy sits below the representability threshold.
    pub n: Option<f64>,
    pub i1: f64,
    pub i2: f64,
    pub ic: f64,
    pub norm_lb2: f64,
    pub norm_lf2: f64,
    pub norm_dy2: f64,
}

fn static_background_for_power(bg: &Background) -> Result<()> {
    let ok = bg.metric.is_static()
        && bg.elliptic.is_static()
        && bg.bundle.is_static()
        && bg.bundle_y.is_static();
    if ok {
        Ok(())
    } else {
        Err(Error::InvariantViolation(
            "higher-order functionals require a static flat background".into(),
        ))
    }
}

/// The L2-level and gradient-level error integrals (I1, I2).
pub fn error_terms(
    x: &Section,
    y: &Section,
    bg: &Background,
    functional: EnergyFunctional,
    tau: f64,
    kit: &SpectralKit,
) -> Result<(f64, f64)> {
    if functional.requires_static() {
        static_background_for_power(bg)?;
        return Ok((0.0, 0.0));
    }
    let grid = x.grid();
    let d = grid.dim();
    let np = grid.npoints();
    let hd = grid.spacing().powi(d as i32);
    let mx = x.fiber_dim();
    let my = y.fiber_dim();
    let gx = bg.bundle.gamma_scale(tau);
    let gy = bg.bundle_y.gamma_scale(tau);
    let bx = bg.bundle.beta_scale(tau);
    let by = bg.bundle_y.beta_scale(tau);

    let mut i1 = 0.0;
    for p in 0..np {
        let coords = grid.coords(p);
        let sqrtg = bg.metric.sqrt_det_g(coords, tau);
        let b_half = 0.5 * bg.metric.trace_b(coords, tau);
        let mut xx = 0.0;
        for c in 0..mx {
            let v = x.plane(c)[p];
            xx += v * v;
        }
        let mut yy = 0.0;
        for c in 0..my {
            let v = y.plane(c)[p];
            yy += v * v;
        }
        i1 += sqrtg * ((bx + gx * b_half) * xx + (by + gy * b_half) * yy);
    }
    i1 *= hd;

    let g1 = grad_hat(x, &bg.bundle, &bg.metric, tau, kit)?;
    let mut i2 = 0.0;
    let mut xv = vec![0.0; mx];
    let mut av = vec![0.0; mx];
    for p in 0..np {
        let coords = grid.coords(p);
        let sqrtg = bg.metric.sqrt_det_g(coords, tau);
        let b_half = 0.5 * bg.metric.trace_b(coords, tau);
        let lam = bg.elliptic.lambda(coords, tau);
        let dlam = bg.elliptic.dtau_lambda(coords, tau);
        x.fiber_at(p, &mut xv);
        let mut acc = 0.0;
        for i in 0..d {
            let da_i = bg.bundle.conn_dtau(i, coords, tau);
            for j in 0..d {
                let mut dot = 0.0;
                for c in 0..mx {
                    dot += g1.values()[(i * mx + c) * np + p] * g1.values()[(j * mx + c) * np + p];
                }
                let lij = lam.get(i, j);
                acc += dlam.get(i, j) * gx * dot;
                acc += lij * (bx + gx * b_half) * dot;
                if !da_i.is_zero() && lij != 0.0 {
                    av.iter_mut().for_each(|v| *v = 0.0);
                    da_i.apply_add(&xv, &mut av);
                    let mut cross = 0.0;
                    for c in 0..mx {
                        cross += av[c] * g1.values()[(j * mx + c) * np + p];
                    }
                    acc += 2.0 * lij * gx * cross;
                }
            }
        }
        i2 += sqrtg * acc;
    }
    i2 *= hd;
    Ok((i1, i2))
}

/// Full scalar report of one sampled state.
pub fn report(
    state: &SampledState,
    bg: &Background,
    functional: EnergyFunctional,
    kit: &SpectralKit,
) -> Result<EnergyReport> {
    let tau = state.tau;
    let e_x = norm_sq(&state.x, &bg.bundle, &bg.metric, tau)?;
    let e_y = norm_sq(&state.y, &bg.bundle_y, &bg.metric, tau)?;
    let e = e_x + e_y;
    let f = functional.dirichlet(&state.x, bg, tau, kit)?;
    let n = if e > energy_threshold(state.x.grid()) {
        Some(f / e)
    } else {
        None
    };
    let (i1, i2) = error_terms(&state.x, &state.y, bg, functional, tau, kit)?;
    let ic = i2 * e - i1 * f;

    let px = functional.principal().apply(&state.x, bg, tau, kit)?;
    let lb = state.dx.add(&px);
    let lf = state.dx.sub(&px);
    let norm_lb2 = norm_sq(&lb, &bg.bundle, &bg.metric, tau)?;
    let norm_lf2 = norm_sq(&lf, &bg.bundle, &bg.metric, tau)?;
    let norm_dy2 = norm_sq(&state.dy, &bg.bundle_y, &bg.metric, tau)?;

    Ok(EnergyReport {
        tau,
        e,
        e_x,
        e_y,
        f,
        n,
        i1,
        i2,
        ic,
        norm_lb2,
        norm_lf2,
        norm_dy2,
    })
}

/// Two-sided bound on dN/dtau from one report; None when N is undefined.
pub fn frequency_sandwich(r: &EnergyReport) -> Option<(f64, f64)> {
    r.n?;
    let lower = -(r.norm_lb2 + r.norm_dy2) / (2.0 * r.e) + r.ic / (r.e * r.e);
    let upper = (r.norm_lf2 + r.norm_dy2) / (2.0 * r.e) + r.ic / (r.e * r.e);
    Some((lower, upper))
}

const RESIDUAL_FLOOR: f64 = 1e-300;

fn relative_gap(num: f64, rhs: f64) -> f64 {
    (num - rhs).abs() / num.abs().max(rhs.abs()).max(RESIDUAL_FLOOR)
}

/// A time-sampled trace of the frequency machinery: per-sample reports,
/// centered difference quotients, identity residuals, and the dN sandwich.
#[derive(Clone, Debug)]
pub struct FrequencyTrace {
    pub reports: Vec<EnergyReport>,
    /// Centered dN/dtau; one-sided at the ends, None where N is undefined.
    pub dn_numeric: Vec<Option<f64>>,
    pub de_numeric: Vec<f64>,
    pub df_numeric: Vec<f64>,
    /// True at the two endpoint samples, whose difference quotients are
    /// first-order one-sided and excluded from certificates.
    pub one_sided: Vec<bool>,
    pub sandwich_lower: Vec<Option<f64>>,
    pub sandwich_upper: Vec<Option<f64>>,
    /// Relative gap in dE/dtau = u + v + I1.
    pub res_l2ev: Vec<f64>,
    /// Relative gap in the summation-by-parts form 2F = u - v.
    pub res_h1arr1: Vec<f64>,
    /// Relative gap in dF/dtau = (|L_F X|^2 - |L_B X|^2)/2 + I2.
    pub res_h1ev: Vec<f64>,
}

impl FrequencyTrace {
    pub fn build(
        samples: &[SampledState],
        bg: &Background,
        functional: EnergyFunctional,
        kit: &SpectralKit,
    ) -> Result<FrequencyTrace> {
        if samples.len() < 3 {
            return Err(Error::TimeSamplingTooCoarse(format!(
                "need at least 3 samples for centered differences, got {}",
                samples.len()
            )));
        }
        for w in samples.windows(2) {
            if w[1].tau <= w[0].tau {
                return Err(Error::InvariantViolation(
                    "sample times must be strictly increasing".into(),
                ));
            }
        }
        let m = samples.len();
        let mut reports = Vec::with_capacity(m);
        for s in samples {
            reports.push(report(s, bg, functional, kit)?);
        }

        let diff = |get: &dyn Fn(usize) -> f64, i: usize| -> f64 {
            if i == 0 {
                (get(1) - get(0)) / (samples[1].tau - samples[0].tau)
            } else if i == m - 1 {
                (get(m - 1) - get(m - 2)) / (samples[m - 1].tau - samples[m - 2].tau)
            } else {
                (get(i + 1) - get(i - 1)) / (samples[i + 1].tau - samples[i - 1].tau)
            }
        };

        let mut dn_numeric = Vec::with_capacity(m);
        let mut de_numeric = Vec::with_capacity(m);
        let mut df_numeric = Vec::with_capacity(m);
        let mut one_sided = Vec::with_capacity(m);
        let mut sandwich_lower = Vec::with_capacity(m);
        let mut sandwich_upper = Vec::with_capacity(m);
        let mut res_l2ev = Vec::with_capacity(m);
        let mut res_h1arr1 = Vec::with_capacity(m);
        let mut res_h1ev = Vec::with_capacity(m);

        for i in 0..m {
            let r = &reports[i];
            one_sided.push(i == 0 || i == m - 1);
            de_numeric.push(diff(&|j| reports[j].e, i));
            df_numeric.push(diff(&|j| reports[j].f, i));
            let n_defined_around = if i == 0 || i == m - 1 {
                r.n.is_some()
                    && reports[if i == 0 { 1 } else { m - 2 }].n.is_some()
            } else {
                reports[i - 1].n.is_some() && reports[i + 1].n.is_some()
            };
            if n_defined_around {
                dn_numeric.push(Some(diff(&|j| reports[j].n.unwrap_or(0.0), i)));
            } else {
                dn_numeric.push(None);
            }
            match frequency_sandwich(r) {
                Some((lo, up)) => {
                    sandwich_lower.push(Some(lo));
                    sandwich_upper.push(Some(up));
                }
                None => {
                    sandwich_lower.push(None);
                    sandwich_upper.push(None);
                }
            }

            // u + v and u - v through inner products against the state
            let s = &samples[i];
            let px = functional.principal().apply(&s.x, bg, s.tau, kit)?;
            let lb = s.dx.add(&px);
            let lf = s.dx.sub(&px);
            let w = inner_product(&s.dy, &s.y, &bg.bundle_y, &bg.metric, s.tau)?;
            let u = inner_product(&lf, &s.x, &bg.bundle, &bg.metric, s.tau)? + w;
            let v = inner_product(&lb, &s.x, &bg.bundle, &bg.metric, s.tau)? + w;

            res_l2ev.push(relative_gap(de_numeric[i], u + v + r.i1));
            res_h1arr1.push((u - v - 2.0 * r.f).abs() / (2.0 * r.f).abs().max(f64::EPSILON));
            let df_rhs = 0.5 * (r.norm_lf2 - r.norm_lb2) + r.i2;
            res_h1ev.push(relative_gap(df_numeric[i], df_rhs));
        }

        Ok(FrequencyTrace {
            reports,
            dn_numeric,
            de_numeric,
            df_numeric,
            one_sided,
            sandwich_lower,
            sandwich_upper,
            res_l2ev,
            res_h1arr1,
            res_h1ev,
        })
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    /// Worst violation of dn in [lower - slack, upper + slack] over interior
    /// samples; (max excess, index of worst sample). Zero excess means pass.
    pub fn worst_sandwich_violation(&self, slack: f64) -> (f64, usize) {
        let mut worst = 0.0f64;
        let mut at = 0;
        for i in 0..self.len() {
            if self.one_sided[i] {
                continue;
            }
            if let (Some(dn), Some(lo), Some(up)) = (
                self.dn_numeric[i],
                self.sandwich_lower[i],
                self.sandwich_upper[i],
            ) {
                let excess = (lo - slack - dn).max(dn - up - slack).max(0.0);
                if excess > worst {
                    worst = excess;
                    at = i;
                }
            }
        }
        (worst, at)
    }

    /// Max identity residuals over interior samples: (l2ev, h1arr1, h1ev).
    pub fn max_residuals(&self) -> (f64, f64, f64) {
        let mut r = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..self.len() {
            if self.one_sided[i] {
                continue;
            }
            r.0 = r.0.max(self.res_l2ev[i]);
            r.1 = r.1.max(self.res_h1arr1[i]);
            r.2 = r.2.max(self.res_h1ev[i]);
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BundleStructure, TorusGrid};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::standard(1, n).unwrap()
    }

    fn zero_state(grid: TorusGrid, tau: f64, x: Section) -> SampledState {
        SampledState {
            tau,
            dx: Section::zeros(grid, x.fiber_dim(), 0),
            x,
            y: Section::zeros(grid, 1, 0),
            dy: Section::zeros(grid, 1, 0),
        }
    }

    #[test]
    fn i1_on_breathing_background_matches_quadrature_oracle() {
        // d = 1, amplitude 0.1: at tau = 0 the volume term is
        // (B/2) |X|^2 = 0.1 sin^2 x, integrating to 0.1 pi
        let grid = grid1(64);
        let kit = SpectralKit::new(grid);
        let bg = Background::preset("conformal-breathing", grid).unwrap();
        let x = Section::scalar(grid, |c| c[0].sin());
        let y = Section::zeros(grid, 1, 0);
        let (i1, i2) = error_terms(&x, &y, &bg, EnergyFunctional::Lambda, 0.0, &kit).unwrap();
        assert_relative_eq!(i1, 0.1 * PI, max_relative = 1e-12);
        // nabla X = cos x, same volume factor: I2 = 0.1 pi as well at tau = 0
        assert_relative_eq!(i2, 0.1 * PI, max_relative = 1e-11);
    }

    #[test]
    fn scaled_fiber_metric_feeds_i1() {
        // gamma_y = e^{0.3 tau}: E_y(tau) = e^{0.3 tau} |Y|^2 and with frozen
        // Y the whole of dE/dtau must be I1 = 0.3 E_y
        let grid = grid1(32);
        let kit = SpectralKit::new(grid);
        let bg = Background::flat(grid)
            .unwrap()
            .with_y_bundle(BundleStructure::scaled_exp(1, 0.3).unwrap());
        let x = Section::zeros(grid, 1, 0);
        let y = Section::scalar(grid, |c| c[0].cos());
        let tau = 0.4;
        let (i1, _) = error_terms(&x, &y, &bg, EnergyFunctional::Lambda, tau, &kit).unwrap();
        let e_y = norm_sq(&y, &bg.bundle_y, &bg.metric, tau).unwrap();
        assert_relative_eq!(i1, 0.3 * e_y, max_relative = 1e-12);

        // centered difference of the energy in tau confirms the identity
        let delta = 1e-5;
        let ep = norm_sq(&y, &bg.bundle_y, &bg.metric, tau + delta).unwrap();
        let em = norm_sq(&y, &bg.bundle_y, &bg.metric, tau - delta).unwrap();
        assert_relative_eq!((ep - em) / (2.0 * delta), i1, max_relative = 1e-8);
    }

    #[test]
    fn single_mode_frequency_is_eigenvalue() {
        let grid = grid1(64);
        let kit = SpectralKit::new(grid);
        let bg = Background::flat(grid).unwrap();
        let x = Section::scalar(grid, |c| (3.0 * c[0]).sin());
        let state = zero_state(grid, 0.0, x);
        let r = report(&state, &bg, EnergyFunctional::Lambda, &kit).unwrap();
        assert_relative_eq!(r.n.unwrap(), 9.0, max_relative = 1e-12);
        assert_relative_eq!(r.e, PI, max_relative = 1e-12);
        assert_relative_eq!(r.f, 9.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn frequency_undefined_below_threshold() {
        let grid = grid1(32);
        let kit = SpectralKit::new(grid);
        let bg = Background::flat(grid).unwrap();
        let x = Section::zeros(grid, 1, 0);
        let state = zero_state(grid, 0.0, x);
        let r = report(&state, &bg, EnergyFunctional::Lambda, &kit).unwrap();
        assert!(r.n.is_none());
        assert!(frequency_sandwich(&r).is_none());
    }

    #[test]
    fn power_functional_counts_modes_quartically() {
        // order 4 functional on sin x + sin 3x: F = pi (1 + 81) = 82 pi, E = 2 pi
        let grid = grid1(64);
        let kit = SpectralKit::new(grid);
        let bg = Background::flat(grid).unwrap();
        let x = Section::scalar(grid, |c| c[0].sin() + (3.0 * c[0]).sin());
        let f = EnergyFunctional::Power { k: 1 }
            .dirichlet(&x, &bg, 0.0, &kit)
            .unwrap();
        assert_relative_eq!(f, 82.0 * PI, max_relative = 1e-12);
        let state = zero_state(grid, 0.0, x);
        let r = report(&state, &bg, EnergyFunctional::Power { k: 1 }, &kit).unwrap();
        assert_relative_eq!(r.n.unwrap(), 41.0, max_relative = 1e-12);
    }

    #[test]
    fn power_functional_rejects_time_dependent_background() {
        let grid = grid1(32);
        let kit = SpectralKit::new(grid);
        let bg = Background::preset("conformal-breathing", grid).unwrap();
        let x = Section::scalar(grid, |c| c[0].sin());
        let y = Section::zeros(grid, 1, 0);
        assert!(matches!(
            error_terms(&x, &y, &bg, EnergyFunctional::Power { k: 1 }, 0.0, &kit),
            Err(Error::InvariantViolation(_))
        ));
    }

    /// Closed-form two-mode trajectory of the backward flat equation:
    /// X = a e^{tau} sin x + b e^{9 tau} sin 3x, dX/dtau recomputed exactly.
    fn two_mode_state(grid: TorusGrid, tau: f64) -> SampledState {
        let (a, b) = (1.0, 1.0);
        let x = Section::scalar(grid, |c| {
            a * tau.exp() * c[0].sin() + b * (9.0 * tau).exp() * (3.0 * c[0]).sin()
        });
        let dx = Section::scalar(grid, |c| {
            a * tau.exp() * c[0].sin() + 9.0 * b * (9.0 * tau).exp() * (3.0 * c[0]).sin()
        });
        SampledState {
            tau,
            x,
            dx,
            y: Section::zeros(grid, 1, 0),
            dy: Section::zeros(grid, 1, 0),
        }
    }

    #[test]
    fn trace_identities_hold_on_closed_form_samples() {
        let grid = grid1(64);
        let kit = SpectralKit::new(grid);
        let bg = Background::flat(grid).unwrap();
        let dt = 1e-4;
        let samples: Vec<SampledState> =
            (0..7).map(|i| two_mode_state(grid, i as f64 * dt)).collect();
        let trace = FrequencyTrace::build(&samples, &bg, EnergyFunctional::Lambda, &kit).unwrap();

        assert_relative_eq!(trace.reports[0].n.unwrap(), 5.0, max_relative = 1e-12);
        let (l2ev, h1arr1, h1ev) = trace.max_residuals();
        // centered differences are second order; the growth rate 18 gives
        // a relative defect near (18 dt)^2 / 6
        assert!(l2ev < 1e-6, "l2ev {l2ev}");
        assert!(h1arr1 < 1e-13, "h1arr1 {h1arr1}");
        assert!(h1ev < 1e-6, "h1ev {h1ev}");
        let (viol, _) = trace.worst_sandwich_violation(1e-5);
        assert_eq!(viol, 0.0);
    }

    #[test]
    fn trace_rejects_too_few_or_unsorted_samples() {
        let grid = grid1(32);
        let kit = SpectralKit::new(grid);
        let bg = Background::flat(grid).unwrap();
        let s0 = two_mode_state(grid, 0.0);
        let s1 = two_mode_state(grid, 1e-3);
        assert!(matches!(
            FrequencyTrace::build(&[s0.clone(), s1.clone()], &bg, EnergyFunctional::Lambda, &kit),
            Err(Error::TimeSamplingTooCoarse(_))
        ));
        assert!(FrequencyTrace::build(
            &[s1.clone(), s0.clone(), s1.clone()],
            &bg,
            EnergyFunctional::Lambda,
            &kit
        )
        .is_err());
    }

    #[test]
    fn sandwich_is_tight_for_single_mode() {
        // single backward mode: L_B X = 0, N constant, so the lower bound
        // is exactly zero and dN sits on it
        let grid = grid1(64);
        let kit = SpectralKit::new(grid);
        let bg = Background::flat(grid).unwrap();
        let mk = |tau: f64| {
            let amp = (9.0 * tau).exp();
            let x = Section::scalar(grid, |c| amp * (3.0 * c[0]).sin());
            let dx = x.scaled(9.0);
            SampledState {
                tau,
                x,
                dx,
                y: Section::zeros(grid, 1, 0),
                dy: Section::zeros(grid, 1, 0),
            }
        };
        let samples: Vec<SampledState> = (0..5).map(|i| mk(i as f64 * 1e-3)).collect();
        let trace = FrequencyTrace::build(&samples, &bg, EnergyFunctional::Lambda, &kit).unwrap();
        for i in 1..4 {
            let lo = trace.sandwich_lower[i].unwrap();
            let dn = trace.dn_numeric[i].unwrap();
            assert!(lo.abs() < 1e-10, "lower bound {lo}");
            assert!(dn.abs() < 1e-7, "dn {dn}");
        }
    }
}
