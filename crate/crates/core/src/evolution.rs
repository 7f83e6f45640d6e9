//! Backward-in-time integration of the coupled PDE/ODE system
//!
//!   d_tau X = -P X + S_X,      d_tau Y = S_Y,
//!
//! where P is the signed principal part (so the X block grows in tau) and
//! the source terms obey pointwise structural bounds with a small constant.
//!
//! The stepper is an integrating-factor RK4: the stiff multiplier of the
//! frozen principal part is applied exactly per Fourier mode and only the
//! remainder is treated explicitly. When the remainder vanishes (uniform
//! static coefficients, no coupling) each retained mode is propagated by the
//! exact exponential. The ODE block rides along as plain RK4 stages.
//!
//! States are dealiased to modes strictly below n/4 so that coefficient
//! products stay resolved; the discarded spectral mass is tracked, never
//! silently dropped.

use serde::Serialize;

use crate::energetics::{energy_threshold, EnergyFunctional, FrequencyTrace, SampledState};
use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::operators::{grad_hat, norm_sq, Section, SectionPair, SpectralKit};

/// Zeroth-order source terms tying the two blocks together.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    None,
    /// S_X = c Y, S_Y = c (X + sum_i (nabla-hat X)_i). Requires equal fiber
    /// dimensions; the structural constant of both bounds is c.
    Exchange { c: f64 },
}

impl Coupling {
    /// Declared structural constant of the source bounds.
    pub fn structural_constant(&self) -> f64 {
        match self {
            Coupling::None => 0.0,
            Coupling::Exchange { c } => c.abs(),
        }
    }
}

/// The full system: background coefficients, energy functional (which fixes
/// the principal part), and the coupling sources.
#[derive(Clone, Copy, Debug)]
pub struct CoupledSystem {
    pub bg: Background,
    pub functional: EnergyFunctional,
    pub coupling: Coupling,
}

impl CoupledSystem {
    pub fn new(bg: Background, functional: EnergyFunctional, coupling: Coupling) -> Self {
        CoupledSystem { bg, functional, coupling }
    }

    /// Right-hand side (d_tau X, d_tau Y) at one state. This is the single
    /// code path used both by the stepper stages and by the identity layer,
    /// so recomputed derivatives match the integrated trajectory exactly.
    pub fn rhs(&self, x: &Section, y: &Section, tau: f64, kit: &SpectralKit) -> Result<(Section, Section)> {
        let px = self.functional.principal().apply(x, &self.bg, tau, kit)?;
        let mut dx = px.scaled(-1.0);
        let mut dy = Section::zeros(y.grid(), y.fiber_dim(), 0);
        match self.coupling {
            Coupling::None => {}
            Coupling::Exchange { c } => {
                if x.fiber_dim() != y.fiber_dim() {
                    return Err(Error::ShapeMismatch(
                        "exchange coupling needs equal fiber dimensions".into(),
                    ));
                }
                dx.axpy(c, y);
                let g1 = grad_hat(x, &self.bg.bundle, &self.bg.metric, tau, kit)?;
                let np = x.grid().npoints();
                let d = x.grid().dim();
                let m = x.fiber_dim();
                for comp in 0..m {
                    let plane = dy.plane_mut(comp);
                    let xp = x.plane(comp);
                    for p in 0..np {
                        let mut s = xp[p];
                        for i in 0..d {
                            s += g1.values()[(i * m + comp) * np + p];
                        }
                        plane[p] += c * s;
                    }
                }
            }
        }
        Ok((dx, dy))
    }

    /// True when the X equation is exactly a Fourier multiplier and Y is
    /// frozen, so the integrating factor alone is the exact propagator.
    pub fn is_pure_multiplier(&self) -> bool {
        if !matches!(self.coupling, Coupling::None) {
            return false;
        }
        match self.functional {
            EnergyFunctional::Power { .. } => true,
            EnergyFunctional::Lambda => {
                self.bg.elliptic.is_spatially_uniform()
                    && self.bg.elliptic.is_static()
                    && !self.bg.bundle.has_connection()
            }
        }
    }

    fn power_background_ok(&self) -> Result<()> {
        if matches!(self.functional, EnergyFunctional::Power { .. }) {
            let ok = self.bg.metric.is_static()
                && self.bg.elliptic.is_static()
                && self.bg.bundle.is_static()
                && self.bg.bundle_y.is_static();
            if !ok {
                return Err(Error::InvariantViolation(
                    "higher-order principal parts require a static flat background".into(),
                ));
            }
        }
        Ok(())
    }

    /// Measured structural constant: the worst pointwise ratio
    /// |S_X| / (|X| + |Y|) or |S_Y| / (|X| + |sum nabla-hat X| + |Y|)
    /// over the given states, ignoring points below a round-off floor.
    pub fn measured_structural_constant(
        &self,
        states: &[SampledState],
        kit: &SpectralKit,
    ) -> Result<f64> {
        let mut worst = 0.0f64;
        for s in states {
            let px = self.functional.principal().apply(&s.x, &self.bg, s.tau, kit)?;
            let sx = s.dx.add(&px); // S_X = d_tau X + P X
            let g1 = grad_hat(&s.x, &self.bg.bundle, &self.bg.metric, s.tau, kit)?;
            let np = s.x.grid().npoints();
            let d = s.x.grid().dim();
            let mx = s.x.fiber_dim();
            let my = s.y.fiber_dim();
            let scale = s.x.linf() + s.y.linf() + g1.linf();
            let floor = 1e-14 * scale.max(1e-300);
            for p in 0..np {
                let mut ax = 0.0;
                let mut axs = 0.0;
                let mut gx = 0.0;
                for c in 0..mx {
                    ax += s.x.plane(c)[p].abs();
                    axs += sx.plane(c)[p].abs();
                    for i in 0..d {
                        gx += g1.values()[(i * mx + c) * np + p].abs();
                    }
                }
                let mut ay = 0.0;
                let mut ays = 0.0;
                for c in 0..my {
                    ay += s.y.plane(c)[p].abs();
                    ays += s.dy.plane(c)[p].abs();
                }
                let den_x = ax + ay;
                if den_x > floor {
                    worst = worst.max(axs / den_x);
                }
                let den_y = ax + gx + ay;
                if den_y > floor {
                    worst = worst.max(ays / den_y);
                }
            }
        }
        Ok(worst)
    }
}

/// What the stepper did, for reports and reproducibility.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepperMeta {
    pub method: &'static str,
    pub dtau: f64,
    pub steps: usize,
    /// exp(a_max * omega) for the fastest retained mode: how much backward
    /// growth the run asks of the fastest scale.
    pub amplification: f64,
    /// Worst pre-dealiasing spectral mass fraction at or above the cutoff.
    pub max_tail_ratio: f64,
    pub dealias_cutoff: usize,
}

/// An integrated trajectory: states at every step plus stepper metadata.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub system: CoupledSystem,
    pub times: Vec<f64>,
    pub states: Vec<SectionPair>,
    pub meta: StepperMeta,
}

impl Trajectory {
    /// States with derivatives recomputed from the right-hand side, so that
    /// d_tau X + P X equals S_X identically on the stored trajectory.
    pub fn sampled(&self, stride: usize, kit: &SpectralKit) -> Result<Vec<SampledState>> {
        if stride == 0 {
            return Err(Error::OutOfRange("stride must be positive".into()));
        }
        let last = self.states.len() - 1;
        let mut idx: Vec<usize> = (0..self.states.len()).step_by(stride).collect();
        if *idx.last().unwrap() != last {
            idx.push(last);
        }
        let mut out = Vec::with_capacity(idx.len());
        for i in idx {
            let tau = self.times[i];
            let (dx, dy) = self
                .system
                .rhs(&self.states[i].x, &self.states[i].y, tau, kit)?;
            out.push(SampledState {
                tau,
                x: self.states[i].x.clone(),
                y: self.states[i].y.clone(),
                dx,
                dy,
            });
        }
        Ok(out)
    }

    pub fn trace(&self, stride: usize, kit: &SpectralKit) -> Result<FrequencyTrace> {
        let samples = self.sampled(stride, kit)?;
        FrequencyTrace::build(&samples, &self.system.bg, self.system.functional, kit)
    }

    pub fn final_state(&self) -> &SectionPair {
        self.states.last().unwrap()
    }
}

fn scale_modes(x: &Section, kit: &SpectralKit, f: &impl Fn(f64) -> f64) -> Result<Section> {
    let mut out = x.clone();
    for comp in 0..x.ncomp() {
        let plane = kit.apply_mode_scale(x.plane(comp), f)?;
        out.plane_mut(comp).copy_from_slice(&plane);
    }
    Ok(out)
}

/// Integrate the system from tau = 0 to tau = omega in `steps` steps.
pub fn evolve(
    system: &CoupledSystem,
    x0: &Section,
    y0: &Section,
    omega: f64,
    steps: usize,
    kit: &SpectralKit,
) -> Result<Trajectory> {
    let grid = system.bg.grid;
    if x0.grid() != grid || y0.grid() != grid || kit.grid() != grid {
        return Err(Error::ShapeMismatch(
            "initial data and kit must live on the system grid".into(),
        ));
    }
    if x0.fiber_dim() != system.bg.bundle.fiber_dim()
        || y0.fiber_dim() != system.bg.bundle_y.fiber_dim()
    {
        return Err(Error::ShapeMismatch(
            "initial data fiber dimensions must match the bundles".into(),
        ));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::OutOfRange("horizon omega must be positive and finite".into()));
    }
    if steps == 0 {
        return Err(Error::OutOfRange("need at least one step".into()));
    }
    system.power_background_ok()?;

    let cutoff = grid.n() / 4;
    for (name, s) in [("X", x0), ("Y", y0)] {
        let tail = s.tail_energy_ratio(kit, cutoff)?;
        if tail > 1e-12 {
            return Err(Error::OutOfRange(format!(
                "initial {name} data carries spectral mass fraction {tail:.2e} at or above \
                 the dealiasing cutoff {cutoff}"
            )));
        }
    }
    let mut x = x0.truncated(kit, cutoff)?;
    let mut y = y0.clone();

    let h = omega / steps as f64;
    let unit = grid.wavenumber_unit();
    let kk_cut = grid.dim() as f64 * (unit * (cutoff.max(1) - 1) as f64).powi(2);
    let kk_keep = kk_cut * (1.0 + 1e-12);
    let pure = system.is_pure_multiplier();

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(SectionPair { x: x.clone(), y: y.clone() });

    let mut max_tail = 0.0f64;
    let mut amp_total = 1.0f64;

    for step in 0..steps {
        let tau = step as f64 * h;
        let rate = system.functional.principal().growth_rate(&system.bg, tau);
        let a_max = rate(kk_cut);
        if a_max * h > 200.0 {
            return Err(Error::StepperFailure {
                message: "per-step amplification of the fastest retained mode overflows".into(),
                diagnostics: format!(
                    "step {step}, a_max = {a_max:.3e}, h = {h:.3e}, a_max * h = {:.3e}",
                    a_max * h
                ),
            });
        }
        amp_total *= (a_max * h).exp();
        let e_full = |kk: f64| if kk > kk_keep { 0.0 } else { (rate(kk) * h).exp() };
        let e_half = |kk: f64| if kk > kk_keep { 0.0 } else { (rate(kk) * 0.5 * h).exp() };

        let (xn, yn);
        if pure {
            xn = scale_modes(&x, kit, &e_full)?;
            yn = y.clone();
        } else {
            // remainder of the right-hand side after subtracting the frozen
            // multiplier part
            let rem = |xs: &Section, ys: &Section, ts: f64| -> Result<(Section, Section)> {
                let (mut rx, ry) = system.rhs(xs, ys, ts, kit)?;
                let lx = scale_modes(xs, kit, &|kk| rate(kk))?;
                rx.axpy(-1.0, &lx);
                Ok((rx, ry))
            };

            let (ax, ay) = rem(&x, &y, tau)?;
            let mut xb = x.clone();
            xb.axpy(0.5 * h, &ax);
            let xb = scale_modes(&xb, kit, &e_half)?;
            let mut yb = y.clone();
            yb.axpy(0.5 * h, &ay);
            let (bx, by) = rem(&xb, &yb, tau + 0.5 * h)?;

            let mut xc = scale_modes(&x, kit, &e_half)?;
            xc.axpy(0.5 * h, &bx);
            let mut yc = y.clone();
            yc.axpy(0.5 * h, &by);
            let (cx, cy) = rem(&xc, &yc, tau + 0.5 * h)?;

            let mut xd = scale_modes(&x, kit, &e_full)?;
            xd.axpy(h, &scale_modes(&cx, kit, &e_half)?);
            let mut yd = y.clone();
            yd.axpy(h, &cy);
            let (dx_s, dy_s) = rem(&xd, &yd, tau + h)?;

            let mut xacc = scale_modes(&x, kit, &e_full)?;
            xacc.axpy(h / 6.0, &scale_modes(&ax, kit, &e_full)?);
            xacc.axpy(h / 3.0, &scale_modes(&bx, kit, &e_half)?);
            xacc.axpy(h / 3.0, &scale_modes(&cx, kit, &e_half)?);
            xacc.axpy(h / 6.0, &dx_s);
            let mut yacc = y.clone();
            yacc.axpy(h / 6.0, &ay);
            yacc.axpy(h / 3.0, &by);
            yacc.axpy(h / 3.0, &cy);
            yacc.axpy(h / 6.0, &dy_s);
            xn = xacc;
            yn = yacc;
        }

        if !xn.is_finite() || !yn.is_finite() {
            return Err(Error::StepperFailure {
                message: "state left the representable range".into(),
                diagnostics: format!("step {step}, tau = {:.6e}", tau + h),
            });
        }
        max_tail = max_tail.max(xn.tail_energy_ratio(kit, cutoff)?);
        x = xn.truncated(kit, cutoff)?;
        y = yn;
        times.push((step + 1) as f64 * h);
        states.push(SectionPair { x: x.clone(), y: y.clone() });
    }
    // quantize the recorded final time to the exact horizon
    *times.last_mut().unwrap() = omega;

    Ok(Trajectory {
        system: *system,
        times,
        states,
        meta: StepperMeta {
            method: "lawson-rk4",
            dtau: h,
            steps,
            amplification: amp_total,
            max_tail_ratio: max_tail,
            dealias_cutoff: cutoff,
        },
    })
}

/// Integrated certificate of the frequency bound and the energy growth bound:
///
///   dN/dtau >= -c (N + 1)        =>  N(tau) <= e^{c omega} (N(omega) + 1)
///   d log E / dtau <= c (N + 1)  =>  E(omega) <= E(tau) e^{c (N0 + 1)(omega - tau)}
///
/// Both differential inequalities are checked sample by sample and both
/// integrated conclusions are checked directly.
#[derive(Clone, Debug, Serialize)]
pub struct GronwallCertificate {
    pub c: f64,
    pub omega: f64,
    pub n_end: f64,
    /// e^{c omega} (N(omega) + 1), the a priori frequency cap.
    pub n0: f64,
    pub max_n: f64,
    /// min over interior samples of dN + c (N + 1); passing means >= -tol.
    pub diff_freq_margin: f64,
    /// min over interior samples of c (N + 1) - d log E.
    pub diff_energy_margin: f64,
    /// min over samples of log E(tau) + c (N0 + 1)(omega - tau) - log E(omega).
    pub integrated_energy_margin: f64,
    pub integrated_freq_ok: bool,
    pub tol: f64,
    pub pass: bool,
    /// Sample index of the worst differential margin.
    pub worst_index: usize,
}

pub fn gronwall_certificate(
    trace: &FrequencyTrace,
    c: f64,
    tol: f64,
) -> Result<GronwallCertificate> {
    let m = trace.len();
    let threshold = 0.0;
    for r in &trace.reports {
        if r.n.is_none() {
            return Err(Error::UndefinedFrequency { energy: r.e, threshold });
        }
    }
    let omega = trace.reports[m - 1].tau;
    let n_end = trace.reports[m - 1].n.unwrap();
    let n0 = (c * omega).exp() * (n_end + 1.0);
    let max_n = trace
        .reports
        .iter()
        .map(|r| r.n.unwrap())
        .fold(f64::NEG_INFINITY, f64::max);

    let mut diff_freq_margin = f64::INFINITY;
    let mut diff_energy_margin = f64::INFINITY;
    let mut worst_index = 0;
    for i in 0..m {
        if trace.one_sided[i] {
            continue;
        }
        let n = trace.reports[i].n.unwrap();
        let e = trace.reports[i].e;
        if let Some(dn) = trace.dn_numeric[i] {
            let mf = dn + c * (n + 1.0);
            if mf < diff_freq_margin {
                diff_freq_margin = mf;
                worst_index = i;
            }
        }
        let dlog_e = trace.de_numeric[i] / e;
        let me = c * (n + 1.0) - dlog_e;
        if me < diff_energy_margin {
            diff_energy_margin = me;
            worst_index = i;
        }
    }

    let log_e_end = trace.reports[m - 1].e.ln();
    let mut integrated_energy_margin = f64::INFINITY;
    for r in &trace.reports {
        let margin = r.e.ln() + c * (n0 + 1.0) * (omega - r.tau) - log_e_end;
        integrated_energy_margin = integrated_energy_margin.min(margin);
    }
    let integrated_freq_ok = max_n <= n0 + tol;

    let pass = diff_freq_margin >= -tol
        && diff_energy_margin >= -tol
        && integrated_energy_margin >= -tol
        && integrated_freq_ok;

    Ok(GronwallCertificate {
        c,
        omega,
        n_end,
        n0,
        max_n,
        diff_freq_margin,
        diff_energy_margin,
        integrated_energy_margin,
        integrated_freq_ok,
        tol,
        pass,
        worst_index,
    })
}

/// Second difference of log E at interior samples (None at the ends);
/// nonnegative values witness log-convexity of the energy.
pub fn log_energy_second_difference(trace: &FrequencyTrace) -> Vec<Option<f64>> {
    let m = trace.len();
    let mut out = vec![None; m];
    for i in 1..m.saturating_sub(1) {
        let (t0, t1, t2) = (
            trace.reports[i - 1].tau,
            trace.reports[i].tau,
            trace.reports[i + 1].tau,
        );
        let (e0, e1, e2) = (
            trace.reports[i - 1].e,
            trace.reports[i].e,
            trace.reports[i + 1].e,
        );
        if e0 <= 0.0 || e1 <= 0.0 || e2 <= 0.0 {
            continue;
        }
        let s1 = (e2.ln() - e1.ln()) / (t2 - t1);
        let s0 = (e1.ln() - e0.ln()) / (t1 - t0);
        out[i] = Some(2.0 * (s1 - s0) / (t2 - t0));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub e_start: f64,
    pub e_end: f64,
    /// E(omega) / E(0); equal across eps for a linear system.
    pub ratio: f64,
}

/// Scaling sweep: integrate the same system from eps-scaled data and record
/// how the terminal energy tracks the initial one. The zero-data row is run
/// literally, not assumed.
#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// max over rows of |ratio / ratio_1 - 1|.
    pub max_ratio_spread: f64,
    pub zero_end_energy: f64,
}

pub fn backward_uniqueness_sweep(
    system: &CoupledSystem,
    x0: &Section,
    y0: &Section,
    omega: f64,
    steps: usize,
    kit: &SpectralKit,
    epsilons: &[f64],
) -> Result<SweepReport> {
    if epsilons.is_empty() {
        return Err(Error::OutOfRange("need at least one scaling factor".into()));
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps > 0.0) {
            return Err(Error::OutOfRange("scaling factors must be positive".into()));
        }
        let traj = evolve(system, &x0.scaled(eps), &y0.scaled(eps), omega, steps, kit)?;
        let first = &traj.states[0];
        let last = traj.final_state();
        let e_start = norm_sq(&first.x, &system.bg.bundle, &system.bg.metric, 0.0)?
            + norm_sq(&first.y, &system.bg.bundle_y, &system.bg.metric, 0.0)?;
        let e_end = norm_sq(&last.x, &system.bg.bundle, &system.bg.metric, omega)?
            + norm_sq(&last.y, &system.bg.bundle_y, &system.bg.metric, omega)?;
        if e_start <= energy_threshold(x0.grid()) {
            return Err(Error::UndefinedFrequency {
                energy: e_start,
                threshold: energy_threshold(x0.grid()),
            });
        }
        rows.push(SweepRow { eps, e_start, e_end, ratio: e_end / e_start });
    }
    let r0 = rows[0].ratio;
    let max_ratio_spread = rows
        .iter()
        .map(|r| (r.ratio / r0 - 1.0).abs())
        .fold(0.0f64, f64::max);

    let zx = Section::zeros(x0.grid(), x0.fiber_dim(), 0);
    let zy = Section::zeros(y0.grid(), y0.fiber_dim(), 0);
    let ztraj = evolve(system, &zx, &zy, omega, steps, kit)?;
    let zlast = ztraj.final_state();
    let zero_end_energy = norm_sq(&zlast.x, &system.bg.bundle, &system.bg.metric, omega)?
        + norm_sq(&zlast.y, &system.bg.bundle_y, &system.bg.metric, omega)?;

    Ok(SweepReport { rows, max_ratio_spread, zero_end_energy })
}

/// Per-preset accuracy declarations. Each number is a budgeted bound for the
/// shipped horizon and step count, an order of magnitude above the expected
/// centered-difference and dealiasing defects, never tuned to a failing run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PresetTolerances {
    pub res_l2ev: f64,
    pub res_h1arr1: f64,
    pub res_h1ev: f64,
    /// Absolute slack around the dN sandwich.
    pub sandwich_slack: f64,
    /// Tolerance handed to the integrated certificates.
    pub cert_tol: f64,
}

/// The shipped trajectory presets.
///
/// Grid sizes are part of the regularization: backward integration amplifies
/// the fastest retained mode by exp(a_max * omega), and round-off seeded into
/// that mode rides the same exponential. Each preset keeps
/// exp(a_max * omega) * 1e-16 far below its signal, so the long horizons run
/// on deliberately small grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryPreset {
    /// Single backward heat mode sin 3x on the flat background.
    HeatSingleMode,
    /// Modes sin x + sin 2x: N(0) = 5/2 in closed form.
    HeatTwoMode,
    /// Exchange coupling c = 0.3 between the blocks.
    CoupledExchange,
    /// Conformally breathing metric; Ic vanishes identically.
    BreathingMode,
    /// Rank 2 fiber with the time-dependent skew connection.
    TwistedPair,
    /// Variable Lambda = (2 + cos x) delta on a short horizon; the run is
    /// deliberately close to the ill-posed regime, hence the small steps.
    AnisotropicShort,
    /// Exponentially weighted Y metric: I1 and Ic stay nonzero while Y is
    /// frozen.
    ScaledFiber,
}

pub const TRAJECTORY_PRESETS: [TrajectoryPreset; 7] = [
    TrajectoryPreset::HeatSingleMode,
    TrajectoryPreset::HeatTwoMode,
    TrajectoryPreset::CoupledExchange,
    TrajectoryPreset::BreathingMode,
    TrajectoryPreset::TwistedPair,
    TrajectoryPreset::AnisotropicShort,
    TrajectoryPreset::ScaledFiber,
];

/// A ready-to-run instance: system, data, horizon, and declared tolerances.
pub struct PresetInstance {
    pub name: &'static str,
    pub system: CoupledSystem,
    pub x0: Section,
    pub y0: Section,
    pub omega: f64,
    pub steps: usize,
    pub tol: PresetTolerances,
}

impl TrajectoryPreset {
    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryPreset::HeatSingleMode => "heat-single-mode",
            TrajectoryPreset::HeatTwoMode => "heat-two-mode",
            TrajectoryPreset::CoupledExchange => "coupled-exchange",
            TrajectoryPreset::BreathingMode => "breathing-mode",
            TrajectoryPreset::TwistedPair => "twisted-pair",
            TrajectoryPreset::AnisotropicShort => "anisotropic-short",
            TrajectoryPreset::ScaledFiber => "scaled-fiber",
        }
    }

    pub fn by_name(name: &str) -> Result<TrajectoryPreset> {
        TRAJECTORY_PRESETS
            .iter()
            .copied()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::UnknownPreset {
                name: name.to_string(),
                valid: TRAJECTORY_PRESETS
                    .iter()
                    .map(|p| p.name())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    pub fn build(&self) -> Result<PresetInstance> {
        use crate::geometry::{BundleStructure, TorusGrid};
        let name = self.name();
        match self {
            TrajectoryPreset::HeatSingleMode => {
                let grid = TorusGrid::standard(1, 16)?;
                let bg = Background::preset("flat-static", grid)?;
                let system = CoupledSystem::new(bg, EnergyFunctional::Lambda, Coupling::None);
                let x0 = Section::scalar(grid, |c| (3.0 * c[0]).sin());
                let y0 = Section::zeros(grid, 1, 0);
                Ok(PresetInstance {
                    name,
                    system,
                    x0,
                    y0,
                    omega: 0.5,
                    steps: 500,
                    // rate 18 at dtau 1e-3: centered defects near (18 dtau)^2/6
                    tol: PresetTolerances {
                        res_l2ev: 2e-4,
                        res_h1arr1: 1e-12,
                        res_h1ev: 2e-4,
                        sandwich_slack: 5e-3,
                        cert_tol: 5e-3,
                    },
                })
            }
            TrajectoryPreset::HeatTwoMode => {
                let grid = TorusGrid::standard(1, 16)?;
                let bg = Background::preset("flat-static", grid)?;
                let system = CoupledSystem::new(bg, EnergyFunctional::Lambda, Coupling::None);
                let x0 = Section::scalar(grid, |c| c[0].sin() + (2.0 * c[0]).sin());
                let y0 = Section::zeros(grid, 1, 0);
                Ok(PresetInstance {
                    name,
                    system,
                    x0,
                    y0,
                    omega: 1.0,
                    steps: 2000,
                    tol: PresetTolerances {
                        res_l2ev: 5e-5,
                        res_h1arr1: 1e-12,
                        res_h1ev: 5e-5,
                        sandwich_slack: 1e-3,
                        cert_tol: 1e-3,
                    },
                })
            }
            TrajectoryPreset::CoupledExchange => {
                let grid = TorusGrid::standard(1, 16)?;
                let bg = Background::preset("flat-static", grid)?;
                let system = CoupledSystem::new(
                    bg,
                    EnergyFunctional::Lambda,
                    Coupling::Exchange { c: 0.3 },
                );
                let x0 = Section::scalar(grid, |c| c[0].sin() + 0.5 * (2.0 * c[0]).cos());
                let y0 = Section::scalar(grid, |c| 0.2 * c[0].sin());
                Ok(PresetInstance {
                    name,
                    system,
                    x0,
                    y0,
                    omega: 0.5,
                    steps: 1000,
                    tol: PresetTolerances {
                        res_l2ev: 5e-5,
                        res_h1arr1: 1e-11,
                        res_h1ev: 5e-5,
                        sandwich_slack: 1e-3,
                        cert_tol: 1e-3,
                    },
                })
            }
            TrajectoryPreset::BreathingMode => {
                let grid = TorusGrid::standard(1, 16)?;
                let bg = Background::preset("conformal-breathing", grid)?;
                let system = CoupledSystem::new(bg, EnergyFunctional::Lambda, Coupling::None);
                let x0 = Section::scalar(grid, |c| c[0].sin() + (2.0 * c[0]).sin());
                let y0 = Section::zeros(grid, 1, 0);
                Ok(PresetInstance {
                    name,
                    system,
                    x0,
                    y0,
                    omega: 1.0,
                    steps: 2000,
                    tol: PresetTolerances {
                        res_l2ev: 5e-5,
                        res_h1arr1: 1e-12,
                        res_h1ev: 5e-5,
                        sandwich_slack: 1e-3,
                        cert_tol: 1e-3,
                    },
                })
            }
            TrajectoryPreset::TwistedPair => {
                let grid = TorusGrid::standard(1, 16)?;
                let bg = Background::preset("twisted-bundle", grid)?;
                let system = CoupledSystem::new(bg, EnergyFunctional::Lambda, Coupling::None);
                let x0 = Section::fiber_field(grid, 2, |c, comp| {
                    if comp == 0 {
                        c[0].sin()
                    } else {
                        0.5 * (2.0 * c[0]).cos()
                    }
                });
                let y0 = Section::zeros(grid, 1, 0);
                Ok(PresetInstance {
                    name,
                    system,
                    x0,
                    y0,
                    omega: 0.5,
                    steps: 1000,
                    tol: PresetTolerances {
                        res_l2ev: 5e-5,
                        res_h1arr1: 1e-11,
                        res_h1ev: 5e-5,
                        sandwich_slack: 1e-3,
                        cert_tol: 1e-3,
                    },
                })
            }
            TrajectoryPreset::AnisotropicShort => {
                let grid = TorusGrid::standard(1, 32)?;
                let bg = Background::preset("anisotropic-lambda", grid)?;
                let system = CoupledSystem::new(bg, EnergyFunctional::Lambda, Coupling::None);
                let x0 = Section::scalar(grid, |c| {
                    c[0].sin() + 0.3 * (2.0 * c[0]).cos() + 0.1 * (3.0 * c[0]).sin()
                });
                let y0 = Section::zeros(grid, 1, 0);
                Ok(PresetInstance {
                    name,
                    system,
                    x0,
                    y0,
                    omega: 0.008,
                    steps: 400,
                    // variable coefficients alias near the cutoff; budgets
                    // include that defect on top of the tiny step errors
                    tol: PresetTolerances {
                        res_l2ev: 1e-6,
                        res_h1arr1: 1e-6,
                        res_h1ev: 1e-5,
                        sandwich_slack: 1e-4,
                        cert_tol: 1e-4,
                    },
                })
            }
            TrajectoryPreset::ScaledFiber => {
                let grid = TorusGrid::standard(1, 16)?;
                let bg = Background::preset("flat-static", grid)?
                    .with_y_bundle(BundleStructure::scaled_exp(1, 0.3)?);
                let system = CoupledSystem::new(bg, EnergyFunctional::Lambda, Coupling::None);
                let x0 = Section::scalar(grid, |c| (2.0 * c[0]).sin());
                let y0 = Section::scalar(grid, |c| c[0].cos());
                Ok(PresetInstance {
                    name,
                    system,
                    x0,
                    y0,
                    omega: 0.5,
                    steps: 1000,
                    tol: PresetTolerances {
                        res_l2ev: 5e-5,
                        res_h1arr1: 1e-12,
                        res_h1ev: 5e-5,
                        sandwich_slack: 1e-3,
                        cert_tol: 1e-3,
                    },
                })
            }
        }
    }
}
