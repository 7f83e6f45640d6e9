//! Prolongation of a conformal curvature flow into the parabolic-system
//! framework.
//!
//! The flow is du/dt = e^{-2u} lap u on the square torus, the conformal
//! gauge of the two-dimensional normalized-free Ricci flow with metric
//! g = e^{2u} (dx^2 + dy^2) and curvature K = -e^{-2u} lap u. Given two
//! nearby flows, the difference of curvatures and its gradient form the
//! principal block X = (X0, X1), while the metric, Christoffel, and
//! Christoffel-gradient differences form the transport block Y = (Y0, Y1,
//! Y2). The audit measures the constants in
//!
//!   |dX/dtau + lap_g X| <= C (|X| + |Y|),
//!   |dY/dtau|           <= C (|X| + |grad X| + |Y|),
//!
//! pointwise over the trace, with tau = horizon - t, all norms conformal.
//! The measured constants must be stable as the pair separation shrinks;
//! that stability is what makes the prolonged system a legitimate member of
//! the frequency-function family rather than a numerical accident.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::SpectralKit;

/// Right-hand side e^{-2u} lap u, truncated back to the dealiased band.
pub fn flow_rhs(u: &[f64], kit: &SpectralKit) -> Result<Vec<f64>> {
    let lap = kit.laplacian_plane(u)?;
    let mut out: Vec<f64> = u
        .iter()
        .zip(&lap)
        .map(|(&ui, &li)| (-2.0 * ui).exp() * li)
        .collect();
    out = kit.truncate_plane(&out, kit.grid().n() / 4)?;
    Ok(out)
}

/// Gauss curvature K = -e^{-2u} lap u of the conformal metric.
pub fn gauss_curvature(u: &[f64], kit: &SpectralKit) -> Result<Vec<f64>> {
    let lap = kit.laplacian_plane(u)?;
    Ok(u.iter()
        .zip(&lap)
        .map(|(&ui, &li)| -(-2.0 * ui).exp() * li)
        .collect())
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    /// Conformal exponent planes, one per time sample.
    pub states: Vec<Vec<f64>>,
    /// Largest stability number dt * max(e^{-2u}) * 2 ktilde_max^2 seen.
    pub max_cfl: f64,
}

impl FlowTrajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Classical RK4 on the conformal flow with a per-step stability guard.
pub fn evolve_flow(
    u0: &[f64],
    t_end: f64,
    steps: usize,
    kit: &SpectralKit,
) -> Result<FlowTrajectory> {
    let grid = kit.grid();
    if grid.dim() != 2 {
        return Err(Error::InvalidGrid("the conformal flow lives on T^2".into()));
    }
    if u0.len() != grid.npoints() {
        return Err(Error::ShapeMismatch(format!(
            "initial exponent has {} values, grid has {}",
            u0.len(),
            grid.npoints()
        )));
    }
    if !(t_end > 0.0) || steps == 0 {
        return Err(Error::OutOfRange("need t_end > 0 and steps > 0".into()));
    }
    let h = t_end / steps as f64;
    let kmax = grid.wavenumber_unit() * (grid.n() / 4 - 1) as f64;
    let lam_spatial = 2.0 * kmax * kmax;

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(u0.to_vec());
    let mut u = u0.to_vec();
    let mut max_cfl = 0.0f64;

    for s in 0..steps {
        let stiff = u
            .iter()
            .fold(0.0f64, |m, &v| m.max((-2.0 * v).exp()));
        let cfl = h * stiff * lam_spatial;
        max_cfl = max_cfl.max(cfl);
        if cfl > 2.5 {
            return Err(Error::StepperFailure {
                message: "conformal flow step exceeds the RK4 stability envelope".into(),
                diagnostics: format!("step {s}, dt * max(e^(-2u)) * 2 kmax^2 = {cfl:.3}"),
            });
        }
        let k1 = flow_rhs(&u, kit)?;
        let u2: Vec<f64> = u.iter().zip(&k1).map(|(&a, &b)| a + 0.5 * h * b).collect();
        let k2 = flow_rhs(&u2, kit)?;
        let u3: Vec<f64> = u.iter().zip(&k2).map(|(&a, &b)| a + 0.5 * h * b).collect();
        let k3 = flow_rhs(&u3, kit)?;
        let u4: Vec<f64> = u.iter().zip(&k3).map(|(&a, &b)| a + h * b).collect();
        let k4 = flow_rhs(&u4, kit)?;
        for p in 0..u.len() {
            u[p] += h / 6.0 * (k1[p] + 2.0 * (k2[p] + k3[p]) + k4[p]);
            if !u[p].is_finite() {
                return Err(Error::StepperFailure {
                    message: "conformal exponent left the finite range".into(),
                    diagnostics: format!("step {s}, point {p}"),
                });
            }
        }
        times.push(h * (s + 1) as f64);
        states.push(u.clone());
    }
    Ok(FlowTrajectory { times, states, max_cfl })
}

/// Christoffel symbols of e^{2u} delta from the gradient of u, as 8 stacked
/// planes indexed (k, i, j) -> ((k * 2 + i) * 2 + j).
pub fn christoffel_from_gradient(du: [&[f64]; 2], npoints: usize) -> Vec<f64> {
    let mut out = vec![0.0; 8 * npoints];
    for p in 0..npoints {
        let d0 = du[0][p];
        let d1 = du[1][p];
        out[p] = d0; // ^0_00
        out[npoints + p] = d1; // ^0_01
        out[2 * npoints + p] = d1; // ^0_10
        out[3 * npoints + p] = -d0; // ^0_11
        out[4 * npoints + p] = -d1; // ^1_00
        out[5 * npoints + p] = d0; // ^1_01
        out[6 * npoints + p] = d0; // ^1_10
        out[7 * npoints + p] = d1; // ^1_11
    }
    out
}

/// Max gap between the componentwise difference of two Christoffel fields
/// and the Christoffel field of the exponent difference. The formula is
/// linear in grad u, so the gap is pure round-off.
pub fn christoffel_cross_check(ua: &[f64], ub: &[f64], kit: &SpectralKit) -> Result<f64> {
    let np = kit.grid().npoints();
    let da = [kit.deriv_plane(ua, 0)?, kit.deriv_plane(ua, 1)?];
    let db = [kit.deriv_plane(ub, 0)?, kit.deriv_plane(ub, 1)?];
    let ga = christoffel_from_gradient([&da[0], &da[1]], np);
    let gb = christoffel_from_gradient([&db[0], &db[1]], np);
    let w: Vec<f64> = ua.iter().zip(ub).map(|(&a, &b)| a - b).collect();
    let dw = [kit.deriv_plane(&w, 0)?, kit.deriv_plane(&w, 1)?];
    let gw = christoffel_from_gradient([&dw[0], &dw[1]], np);
    let mut gap = 0.0f64;
    for c in 0..8 * np {
        gap = gap.max(((ga[c] - gb[c]) - gw[c]).abs());
    }
    Ok(gap)
}

/// One parabolic-time sample of the prolonged difference system.
#[derive(Clone, Debug)]
pub struct ProlongedSample {
    pub tau: f64,
    /// Reference exponent, used for conformal weights and the measure.
    pub u: Vec<f64>,
    /// K - Ktilde.
    pub x0: Vec<f64>,
    /// grad(K - Ktilde): 2 planes.
    pub x1: Vec<f64>,
    /// Conformal factor difference e^{2u} - e^{2utilde}; the metric
    /// difference is this times the identity.
    pub y0f: Vec<f64>,
    /// Christoffel difference: 8 planes.
    pub y1: Vec<f64>,
    /// Gradient of the Christoffel difference: 16 planes, derivative axis
    /// outermost.
    pub y2: Vec<f64>,
}

fn plane_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Pointwise conformal norms of the blocks. Weights: scalars 1, one lower
/// index e^{-2u}, two lower indices e^{-4u}; the single upper Christoffel
/// index contributes e^{+2u}.
struct BlockNorms {
    x: Vec<f64>,
    grad_x: Vec<f64>,
    y: Vec<f64>,
}

fn block_norms(s: &ProlongedSample, kit: &SpectralKit) -> Result<BlockNorms> {
    let np = kit.grid().npoints();
    let mut dx0 = vec![kit.deriv_plane(&s.x0, 0)?, kit.deriv_plane(&s.x0, 1)?];
    let mut dx1 = Vec::with_capacity(4);
    for c in 0..2 {
        let plane = &s.x1[c * np..(c + 1) * np];
        dx1.push(kit.deriv_plane(plane, 0)?);
        dx1.push(kit.deriv_plane(plane, 1)?);
    }
    let mut x = vec![0.0; np];
    let mut grad_x = vec![0.0; np];
    let mut y = vec![0.0; np];
    for p in 0..np {
        let w1 = (-2.0 * s.u[p]).exp();
        let w2 = w1 * w1;
        let mut x2 = s.x0[p] * s.x0[p];
        x2 += w1 * (s.x1[p] * s.x1[p] + s.x1[np + p] * s.x1[np + p]);
        x[p] = x2.sqrt();

        let mut g2 = w1 * (dx0[0][p] * dx0[0][p] + dx0[1][p] * dx0[1][p]);
        for d in &dx1 {
            g2 += w2 * d[p] * d[p];
        }
        grad_x[p] = g2.sqrt();

        let mut y2 = 2.0 * w2 * s.y0f[p] * s.y0f[p];
        for c in 0..8 {
            y2 += w1 * s.y1[c * np + p] * s.y1[c * np + p];
        }
        for c in 0..16 {
            y2 += w2 * s.y2[c * np + p] * s.y2[c * np + p];
        }
        y[p] = y2.sqrt();
    }
    dx0.clear();
    Ok(BlockNorms { x, grad_x, y })
}

/// Prolong a pair of flows into difference variables, reversing time so the
/// samples are ascending in tau = t_end - t.
pub fn prolong_pair(
    a: &FlowTrajectory,
    b: &FlowTrajectory,
    kit: &SpectralKit,
) -> Result<Vec<ProlongedSample>> {
    if a.times.len() != b.times.len() {
        return Err(Error::ShapeMismatch(
            "paired flows must share their time grid".into(),
        ));
    }
    for (ta, tb) in a.times.iter().zip(&b.times) {
        if (ta - tb).abs() > 1e-12 * (1.0 + ta.abs()) {
            return Err(Error::ShapeMismatch(
                "paired flows must share their time grid".into(),
            ));
        }
    }
    let np = kit.grid().npoints();
    let t_end = *a.times.last().unwrap();
    let mut samples = Vec::with_capacity(a.times.len());
    for i in (0..a.times.len()).rev() {
        let u = &a.states[i];
        let ut = &b.states[i];
        let ka = gauss_curvature(u, kit)?;
        let kb = gauss_curvature(ut, kit)?;
        let x0 = plane_sub(&ka, &kb);
        let mut x1 = kit.deriv_plane(&x0, 0)?;
        x1.extend(kit.deriv_plane(&x0, 1)?);

        let y0f: Vec<f64> = u
            .iter()
            .zip(ut)
            .map(|(&p, &q)| (2.0 * p).exp() - (2.0 * q).exp())
            .collect();

        let w = plane_sub(u, ut);
        let dw = [kit.deriv_plane(&w, 0)?, kit.deriv_plane(&w, 1)?];
        let y1 = christoffel_from_gradient([&dw[0], &dw[1]], np);
        let mut y2 = Vec::with_capacity(16 * np);
        for axis in 0..2 {
            for c in 0..8 {
                y2.extend(kit.deriv_plane(&y1[c * np..(c + 1) * np], axis)?);
            }
        }
        samples.push(ProlongedSample {
            tau: t_end - a.times[i],
            u: u.clone(),
            x0,
            x1,
            y0f,
            y1,
            y2,
        });
    }
    Ok(samples)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProlongedNormRow {
    pub tau: f64,
    pub x_norm: f64,
    pub grad_x_norm: f64,
    pub y_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StructuralAudit {
    /// Trimmed max of |dX/dtau + lap_g X| / (|X| + |Y|).
    pub c_parabolic: f64,
    /// Trimmed max of |dY/dtau| / (|X| + |grad X| + |Y|).
    pub c_transport: f64,
    /// Denominator floor used in the ratios.
    pub floor: f64,
    /// Worst relative disagreement between stride-1 and stride-2 centered
    /// time differences; past 0.25 the audit refuses to report constants.
    pub richardson_gap: f64,
    pub rows: Vec<ProlongedNormRow>,
}

fn centered(planes: &[&Vec<f64>], i: usize, stride: usize, dt: f64) -> Vec<f64> {
    let lo = &planes[i - stride];
    let hi = &planes[i + stride];
    hi.iter()
        .zip(lo.iter())
        .map(|(&h, &l)| (h - l) / (2.0 * stride as f64 * dt))
        .collect()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Measure the structural constants of the prolonged system over a trace.
pub fn structural_audit(samples: &[ProlongedSample], kit: &SpectralKit) -> Result<StructuralAudit> {
    if samples.len() < 5 {
        return Err(Error::TimeSamplingTooCoarse(
            "structural audit needs at least 5 tau samples".into(),
        ));
    }
    let np = kit.grid().npoints();
    let grid = kit.grid();
    let dt = samples[1].tau - samples[0].tau;
    for w in samples.windows(2) {
        if ((w[1].tau - w[0].tau) - dt).abs() > 1e-10 * (1.0 + dt.abs()) {
            return Err(Error::TimeSamplingTooCoarse(
                "structural audit needs uniform tau samples".into(),
            ));
        }
    }

    let norms: Vec<BlockNorms> = samples
        .iter()
        .map(|s| block_norms(s, kit))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(samples.len());
    let h2 = grid.spacing() * grid.spacing();
    for (s, n) in samples.iter().zip(&norms) {
        let mut xs = 0.0;
        let mut gs = 0.0;
        let mut ys = 0.0;
        for p in 0..np {
            let vol = h2 * (2.0 * s.u[p]).exp();
            xs += vol * n.x[p] * n.x[p];
            gs += vol * n.grad_x[p] * n.grad_x[p];
            ys += vol * n.y[p] * n.y[p];
        }
        rows.push(ProlongedNormRow {
            tau: s.tau,
            x_norm: xs.sqrt(),
            grad_x_norm: gs.sqrt(),
            y_norm: ys.sqrt(),
        });
    }

    // global denominator scale for the ratio floor
    let mut den_scale = 0.0f64;
    for n in &norms {
        for p in 0..np {
            den_scale = den_scale.max(n.x[p] + n.grad_x[p] + n.y[p]);
        }
    }
    let floor = 1e-14 * den_scale.max(1e-300);

    // stack the X and Y planes per sample for time differencing
    let x_planes: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut v = s.x0.clone();
            v.extend_from_slice(&s.x1);
            v
        })
        .collect();
    let y_planes: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut v = s.y0f.clone();
            v.extend_from_slice(&s.y1);
            v.extend_from_slice(&s.y2);
            v
        })
        .collect();
    let xr: Vec<&Vec<f64>> = x_planes.iter().collect();
    let yr: Vec<&Vec<f64>> = y_planes.iter().collect();

    let mut richardson_gap = 0.0f64;
    let mut ratios_x: Vec<f64> = Vec::new();
    let mut ratios_y: Vec<f64> = Vec::new();

    for i in 2..samples.len() - 2 {
        let dx1 = centered(&xr, i, 1, dt);
        let dx2 = centered(&xr, i, 2, dt);
        let diff: Vec<f64> = dx1.iter().zip(&dx2).map(|(&a, &b)| a - b).collect();
        let gap = l2(&diff) / l2(&dx1).max(1e-300);
        richardson_gap = richardson_gap.max(gap);

        let dy1 = centered(&yr, i, 1, dt);

        let s = &samples[i];
        // lap_g on each X component
        let lap_x0 = kit.laplacian_plane(&s.x0)?;
        let lap_x1 = [
            kit.laplacian_plane(&s.x1[0..np])?,
            kit.laplacian_plane(&s.x1[np..2 * np])?,
        ];
        let n = &norms[i];
        for p in 0..np {
            let w1 = (-2.0 * s.u[p]).exp();
            let w2 = w1 * w1;
            let r0 = dx1[p] + w1 * lap_x0[p];
            let r1 = dx1[np + p] + w1 * lap_x1[0][p];
            let r2 = dx1[2 * np + p] + w1 * lap_x1[1][p];
            let num_x = (r0 * r0 + w1 * (r1 * r1 + r2 * r2)).sqrt();
            ratios_x.push(num_x / (n.x[p] + n.y[p] + floor));

            let mut num_y2 = 2.0 * w2 * dy1[p] * dy1[p];
            for c in 0..8 {
                let v = dy1[(1 + c) * np + p];
                num_y2 += w1 * v * v;
            }
            for c in 0..16 {
                let v = dy1[(9 + c) * np + p];
                num_y2 += w2 * v * v;
            }
            ratios_y.push(num_y2.sqrt() / (n.x[p] + n.grad_x[p] + n.y[p] + floor));
        }
    }

    if richardson_gap > 0.25 {
        return Err(Error::TimeSamplingTooCoarse(format!(
            "stride-1 and stride-2 time differences disagree by {richardson_gap:.3}; \
             refine the sampling before trusting the audit"
        )));
    }

    // the trimmed max discards the top percentile, where the denominator
    // floor rather than the structure sets the ratio
    let trim = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let keep = v.len() - v.len() / 100 - 1;
        v[keep]
    };

    Ok(StructuralAudit {
        c_parabolic: trim(ratios_x),
        c_transport: trim(ratios_y),
        floor,
        richardson_gap,
        rows,
    })
}

/// Shipped initial data for the flow experiments: a band-limited bump.
pub fn bump_exponent(kit: &SpectralKit, amplitude: f64) -> Vec<f64> {
    let grid = kit.grid();
    (0..grid.npoints())
        .map(|p| {
            let c = grid.coords(p);
            amplitude * (c[0].cos() + c[1].cos())
        })
        .collect()
}

/// Shipped perturbation direction, spectrally disjoint from the bump.
pub fn perturbation_direction(kit: &SpectralKit) -> Vec<f64> {
    let grid = kit.grid();
    (0..grid.npoints())
        .map(|p| {
            let c = grid.coords(p);
            (2.0 * c[0]).cos() * c[1].cos() + 0.5 * (2.0 * c[1]).sin()
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityEntry {
    pub eps: f64,
    pub c_parabolic: f64,
    pub c_transport: f64,
    pub cross_check_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub entries: Vec<StabilityEntry>,
    pub spread_parabolic: f64,
    pub spread_transport: f64,
    pub pass: bool,
}

/// Run flow pairs at several separations and check the measured constants
/// are separation-independent within 10 percent.
pub fn perturbation_stability(
    u0: &[f64],
    direction: &[f64],
    epsilons: &[f64],
    t_end: f64,
    steps: usize,
    stride: usize,
    kit: &SpectralKit,
) -> Result<StabilityReport> {
    if epsilons.len() < 2 {
        return Err(Error::OutOfRange("need at least two separations".into()));
    }
    let base = evolve_flow(u0, t_end, steps, kit)?;
    let base_sub = subsample(&base, stride)?;
    let mut entries = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let u0b: Vec<f64> = u0
            .iter()
            .zip(direction)
            .map(|(&a, &w)| a + eps * w)
            .collect();
        let flow_b = evolve_flow(&u0b, t_end, steps, kit)?;
        let flow_b_sub = subsample(&flow_b, stride)?;
        let samples = prolong_pair(&base_sub, &flow_b_sub, kit)?;
        let audit = structural_audit(&samples, kit)?;
        let cross = christoffel_cross_check(base.final_state(), flow_b.final_state(), kit)?;
        entries.push(StabilityEntry {
            eps,
            c_parabolic: audit.c_parabolic,
            c_transport: audit.c_transport,
            cross_check_gap: cross,
        });
    }
    let spread = |f: fn(&StabilityEntry) -> f64| -> f64 {
        let lo = entries.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = entries.iter().map(f).fold(0.0f64, f64::max);
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    };
    let spread_parabolic = spread(|e| e.c_parabolic);
    let spread_transport = spread(|e| e.c_transport);
    let pass = spread_parabolic <= 0.10
        && spread_transport <= 0.10
        && entries.iter().all(|e| e.cross_check_gap <= 1e-9);
    Ok(StabilityReport {
        entries,
        spread_parabolic,
        spread_transport,
        pass,
    })
}

/// Keep every stride-th flow sample (and always the last).
pub fn subsample(flow: &FlowTrajectory, stride: usize) -> Result<FlowTrajectory> {
    if stride == 0 {
        return Err(Error::OutOfRange("stride must be positive".into()));
    }
    let n = flow.times.len();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut i = 0;
    while i < n {
        times.push(flow.times[i]);
        states.push(flow.states[i].clone());
        i += stride;
    }
    if *times.last().unwrap() != flow.times[n - 1] {
        times.push(flow.times[n - 1]);
        states.push(flow.states[n - 1].clone());
    }
    Ok(FlowTrajectory {
        times,
        states,
        max_cfl: flow.max_cfl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TorusGrid;
    use approx::assert_relative_eq;

    fn kit(n: usize) -> SpectralKit {
        SpectralKit::new(TorusGrid::standard(2, n).unwrap())
    }

    #[test]
    fn constants_are_fixed_points_with_zero_curvature() {
        let kit = kit(16);
        let u0 = vec![0.7; kit.grid().npoints()];
        let flow = evolve_flow(&u0, 0.1, 20, &kit).unwrap();
        for (a, b) in flow.final_state().iter().zip(&u0) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
        let k = gauss_curvature(&u0, &kit).unwrap();
        assert!(k.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn adding_a_constant_rescales_time() {
        let kit = kit(16);
        let u0 = bump_exponent(&kit, 0.1);
        let c = 0.3f64;
        let t = 0.2;
        let flow_a = evolve_flow(&u0, t, 160, &kit).unwrap();
        let shifted: Vec<f64> = u0.iter().map(|&v| v + c).collect();
        let flow_b = evolve_flow(&shifted, t * (2.0 * c).exp(), 160, &kit).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in flow_a.final_state().iter().zip(flow_b.final_state()) {
            worst = worst.max((b - a - c).abs());
        }
        assert!(worst < 1e-9, "covariance gap {worst}");
    }

    #[test]
    fn stepper_is_fourth_order_in_time() {
        let kit = kit(16);
        let u0 = bump_exponent(&kit, 0.2);
        let t = 0.2;
        let reference = evolve_flow(&u0, t, 400, &kit).unwrap();
        let errs: Vec<f64> = [10usize, 20]
            .iter()
            .map(|&n| {
                let f = evolve_flow(&u0, t, n, &kit).unwrap();
                f.final_state()
                    .iter()
                    .zip(reference.final_state())
                    .map(|(&a, &b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .collect();
        let rate = (errs[0] / errs[1]).log2();
        assert!(
            (3.5..=4.6).contains(&rate),
            "rate {rate}, errors {errs:?}"
        );
    }

    #[test]
    fn cfl_violations_are_stepper_failures() {
        let kit = kit(32);
        let u0 = bump_exponent(&kit, 0.1);
        let err = evolve_flow(&u0, 1.0, 2, &kit).unwrap_err();
        assert!(matches!(err, Error::StepperFailure { .. }));
    }

    #[test]
    fn identical_pair_prolongs_to_zero() {
        let kit = kit(16);
        let u0 = bump_exponent(&kit, 0.15);
        let flow = evolve_flow(&u0, 0.1, 40, &kit).unwrap();
        let sub = subsample(&flow, 5).unwrap();
        let samples = prolong_pair(&sub, &sub, &kit).unwrap();
        for s in &samples {
            assert!(s.x0.iter().all(|v| v.abs() < 1e-15));
            assert!(s.y0f.iter().all(|v| v.abs() < 1e-15));
            assert!(s.y2.iter().all(|v| v.abs() < 1e-15));
        }
        let audit = structural_audit(&samples, &kit).unwrap();
        assert_eq!(audit.c_parabolic, 0.0);
        assert_eq!(audit.c_transport, 0.0);
    }

    #[test]
    fn constant_shift_pair_hits_metric_difference_oracle() {
        let kit = kit(16);
        let np = kit.grid().npoints();
        let u0 = vec![0.0; np];
        let c = 0.25f64;
        let shifted = vec![c; np];
        let flow_a = evolve_flow(&u0, 0.05, 10, &kit).unwrap();
        let flow_b = evolve_flow(&shifted, 0.05, 10, &kit).unwrap();
        let samples = prolong_pair(&flow_a, &flow_b, &kit).unwrap();
        let expect = 1.0 - (2.0 * c).exp();
        for s in &samples {
            for p in 0..np {
                assert_relative_eq!(s.y0f[p], expect, max_relative = 1e-12);
            }
            // both flows are stationary, so curvature differences vanish
            assert!(s.x0.iter().all(|v| v.abs() < 1e-12));
            assert!(s.y1.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn christoffel_difference_is_linear() {
        let kit = kit(16);
        let ua = bump_exponent(&kit, 0.2);
        let ub = perturbation_direction(&kit);
        let gap = christoffel_cross_check(&ua, &ub, &kit).unwrap();
        assert!(gap < 1e-9, "gap {gap}");
    }

    #[test]
    fn audit_refuses_coarse_sampling() {
        let kit = kit(16);
        let u0 = bump_exponent(&kit, 0.2);
        let flow = evolve_flow(&u0, 0.4, 200, &kit).unwrap();
        let eps = 1e-3;
        let dir = perturbation_direction(&kit);
        let u0b: Vec<f64> = u0.iter().zip(&dir).map(|(&a, &w)| a + eps * w).collect();
        let flow_b = evolve_flow(&u0b, 0.4, 200, &kit).unwrap();
        // keeping only every 40th sample leaves 6 samples over a horizon the
        // curvature decays through; the two strides disagree badly
        let coarse_a = subsample(&flow, 40).unwrap();
        let coarse_b = subsample(&flow_b, 40).unwrap();
        let samples = prolong_pair(&coarse_a, &coarse_b, &kit).unwrap();
        let err = structural_audit(&samples, &kit);
        assert!(
            matches!(err, Err(Error::TimeSamplingTooCoarse(_))),
            "expected refusal, got {err:?}"
        );
    }

    #[test]
    fn measured_constants_are_separation_stable() {
        let kit = kit(16);
        let u0 = bump_exponent(&kit, 0.1);
        let dir = perturbation_direction(&kit);
        let report =
            perturbation_stability(&u0, &dir, &[1e-3, 1e-4], 0.2, 100, 2, &kit).unwrap();
        assert!(
            report.pass,
            "spreads {} / {}",
            report.spread_parabolic, report.spread_transport
        );
        assert!(report.entries.iter().all(|e| e.c_parabolic.is_finite()));
        assert!(report.entries.iter().all(|e| e.c_parabolic > 0.0));
    }
}
