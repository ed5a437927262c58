//! Time stepping of the Galerkin system: classical RK4 and the implicit
//! midpoint rule, with blow-up detection and strided sampling.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::{GalerkinOperators, SourceSpec};
use crate::error::IntegratorError;

/// Modal coefficients and their velocities at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub t: f64,
    pub u: DVector<f64>,
    pub du: DVector<f64>,
    pub w: DVector<f64>,
    pub dw: DVector<f64>,
}

/// Time derivative of every block of a [`ModalState`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModalRate {
    pub u: DVector<f64>,
    pub du: DVector<f64>,
    pub w: DVector<f64>,
    pub dw: DVector<f64>,
}

impl ModalState {
    pub fn zeros(ops: &GalerkinOperators) -> Self {
        Self::zeros_sized(ops.n_wave(), ops.n_plate())
    }

    pub fn zeros_sized(n_wave: usize, n_plate: usize) -> Self {
        Self {
            t: 0.0,
            u: DVector::zeros(n_wave),
            du: DVector::zeros(n_wave),
            w: DVector::zeros(n_plate),
            dw: DVector::zeros(n_plate),
        }
    }

    pub fn n_wave(&self) -> usize {
        self.u.len()
    }

    pub fn n_plate(&self) -> usize {
        self.w.len()
    }

    /// Coefficients scaled by `s`, time unchanged.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            t: self.t,
            u: &self.u * s,
            du: &self.du * s,
            w: &self.w * s,
            dw: &self.dw * s,
        }
    }

    /// `self + h * rate`, advancing time by `h`.
    pub fn advanced(&self, rate: &ModalRate, h: f64) -> Self {
        Self {
            t: self.t + h,
            u: &self.u + &rate.u * h,
            du: &self.du + &rate.du * h,
            w: &self.w + &rate.w * h,
            dw: &self.dw + &rate.dw * h,
        }
    }

    /// Coefficient-wise difference (time taken from `self`).
    pub fn difference(&self, other: &ModalState) -> Self {
        Self {
            t: self.t,
            u: &self.u - &other.u,
            du: &self.du - &other.du,
            w: &self.w - &other.w,
            dw: &self.dw - &other.dw,
        }
    }

    pub fn max_abs(&self) -> f64 {
        [&self.u, &self.du, &self.w, &self.dw]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, &x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.du, &self.w, &self.dw]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Flat coefficient vector `(u, du, w, dw)`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.u
            .iter()
            .chain(self.du.iter())
            .chain(self.w.iter())
            .chain(self.dw.iter())
            .copied()
            .collect()
    }

    pub fn check_dims(&self, ops: &GalerkinOperators) -> Result<(), IntegratorError> {
        let (nw, np) = (ops.n_wave(), ops.n_plate());
        if self.u.len() != nw || self.du.len() != nw || self.w.len() != np || self.dw.len() != np {
            return Err(IntegratorError::DimensionMismatch(format!(
                "state has ({}, {}, {}, {}) coefficients, operators expect ({nw}, {nw}, {np}, {np})",
                self.u.len(),
                self.du.len(),
                self.w.len(),
                self.dw.len()
            )));
        }
        Ok(())
    }
}

impl ModalRate {
    fn combine(parts: &[(f64, &ModalRate)]) -> ModalRate {
        let (c0, r0) = parts[0];
        let mut out = ModalRate {
            u: &r0.u * c0,
            du: &r0.du * c0,
            w: &r0.w * c0,
            dw: &r0.dw * c0,
        };
        for &(c, r) in &parts[1..] {
            out.u.axpy(c, &r.u, 1.0);
            out.du.axpy(c, &r.du, 1.0);
            out.w.axpy(c, &r.w, 1.0);
            out.dw.axpy(c, &r.dw, 1.0);
        }
        out
    }
}

/// Right-hand side of the first-order system.
pub fn rhs(ops: &GalerkinOperators, spec: &SourceSpec, state: &ModalState) -> ModalRate {
    let mut ddu = -state.u.component_mul(&ops.wave_stiffness);
    ddu.gemv(1.0, &ops.coupling, &state.dw, 1.0);
    if spec.wave_source_active() {
        ddu -= ops.project_wave_source(&state.u, spec);
    }

    let mut plate_force = -(&ops.plate_bending * &state.w);
    plate_force.gemv_tr(-1.0, &ops.coupling, &state.du, 1.0);
    if spec.plate_source_active() {
        plate_force += ops.project_plate_source(&state.w, spec);
    }
    let mut ddw = ops.solve_mass(&plate_force);
    ddw.axpy(-ops.damping, &state.dw, 1.0);

    ModalRate {
        u: state.du.clone(),
        du: ddu,
        w: state.dw.clone(),
        dw: ddw,
    }
}

/// One classical fourth-order Runge–Kutta step.
pub fn step_rk4(ops: &GalerkinOperators, spec: &SourceSpec, state: &ModalState, dt: f64) -> ModalState {
    let k1 = rhs(ops, spec, state);
    let k2 = rhs(ops, spec, &state.advanced(&k1, 0.5 * dt));
    let k3 = rhs(ops, spec, &state.advanced(&k2, 0.5 * dt));
    let k4 = rhs(ops, spec, &state.advanced(&k3, dt));
    let incr = ModalRate::combine(&[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
    state.advanced(&incr, dt)
}

/// Result of one implicit midpoint step.
#[derive(Debug, Clone)]
pub struct MidpointStep {
    pub state: ModalState,
    pub iterations: usize,
}

/// One implicit midpoint step, `y1 = y0 + dt f((y0 + y1) / 2)`, solved by
/// fixed-point iteration until the max-norm update drops below
/// `tol * max(1, |y1|)`.
pub fn step_implicit_midpoint(
    ops: &GalerkinOperators,
    spec: &SourceSpec,
    state: &ModalState,
    dt: f64,
    tol: f64,
    max_iter: usize,
) -> Result<MidpointStep, IntegratorError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IntegratorError::InvalidStep(dt));
    }
    let mut next = state.advanced(&rhs(ops, spec, state), dt);
    let mut last_update = f64::INFINITY;
    for iter in 1..=max_iter {
        let mid = ModalState {
            t: state.t + 0.5 * dt,
            u: (&state.u + &next.u) * 0.5,
            du: (&state.du + &next.du) * 0.5,
            w: (&state.w + &next.w) * 0.5,
            dw: (&state.dw + &next.dw) * 0.5,
        };
        let candidate = state.advanced(&rhs(ops, spec, &mid), dt);
        last_update = candidate.difference(&next).max_abs();
        let scale = candidate.max_abs().max(1.0);
        next = candidate;
        if !last_update.is_finite() {
            break;
        }
        if last_update <= tol * scale {
            return Ok(MidpointStep {
                state: next,
                iterations: iter,
            });
        }
    }
    Err(IntegratorError::MidpointDiverged {
        t: state.t,
        tol,
        max_iter,
        last_update,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scheme {
    Rk4,
    ImplicitMidpoint { tol: f64, max_iter: usize },
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::Rk4 => "rk4",
            Scheme::ImplicitMidpoint { .. } => "midpoint",
        }
    }
}

pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub t_end: f64,
    pub dt: f64,
    pub stride: usize,
    pub scheme: Scheme,
    pub blowup_threshold: f64,
}

impl IntegrationOptions {
    pub fn rk4(t_end: f64, dt: f64, stride: usize) -> Self {
        Self {
            t_end,
            dt,
            stride,
            scheme: Scheme::Rk4,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_blowup_threshold(mut self, threshold: f64) -> Self {
        self.blowup_threshold = threshold;
        self
    }

    /// Number of steps: `t_end / dt` rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowUpReason {
    ThresholdExceeded,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    /// Time of the step at which the state left the admissible range.
    pub time: f64,
    pub threshold: f64,
    pub reason: BlowUpReason,
}

/// Sampled solution. Samples hold only admissible (finite, below threshold)
/// states; a detected blow-up is recorded separately.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<ModalState>,
    pub dt: f64,
    pub stride: usize,
    pub scheme: Scheme,
    pub blowup: Option<BlowUp>,
    pub blowup_threshold: f64,
    /// Largest fixed-point iteration count (implicit midpoint only).
    pub max_iterations: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Blow-up time if detected, else the last sample time.
    pub fn halt_time(&self) -> f64 {
        match self.blowup {
            Some(b) => b.time,
            None => self.samples.last().map_or(0.0, |s| s.t),
        }
    }

    pub fn sample_spacing(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn final_state(&self) -> &ModalState {
        self.samples.last().expect("trajectory holds the initial state")
    }
}

/// Integrates from `initial` to `t_end`, sampling every `stride` steps.
pub fn integrate(
    ops: &GalerkinOperators,
    spec: &SourceSpec,
    initial: &ModalState,
    opts: &IntegrationOptions,
) -> Result<Trajectory, IntegratorError> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(IntegratorError::InvalidStep(opts.dt));
    }
    if !(opts.t_end > 0.0 && opts.t_end.is_finite()) {
        return Err(IntegratorError::InvalidHorizon(opts.t_end));
    }
    if opts.stride == 0 {
        return Err(IntegratorError::InvalidStride);
    }
    initial.check_dims(ops)?;

    let n_steps = opts.n_steps();
    let mut samples = Vec::with_capacity(n_steps / opts.stride + 1);
    let t0 = initial.t;
    let mut state = initial.clone();
    samples.push(state.clone());
    let mut blowup = None;
    let mut max_iterations = 0;
    if let Some(reason) = inadmissible(&state, opts.blowup_threshold) {
        blowup = Some(BlowUp {
            time: t0,
            threshold: opts.blowup_threshold,
            reason,
        });
        samples.clear();
    }

    let mut k = 0;
    while blowup.is_none() && k < n_steps {
        let mut next = match opts.scheme {
            Scheme::Rk4 => step_rk4(ops, spec, &state, opts.dt),
            Scheme::ImplicitMidpoint { tol, max_iter } => {
                let step = step_implicit_midpoint(ops, spec, &state, opts.dt, tol, max_iter)?;
                max_iterations = max_iterations.max(step.iterations);
                step.state
            }
        };
        k += 1;
        // recompute time from the step count to avoid drift
        next.t = t0 + k as f64 * opts.dt;
        if let Some(reason) = inadmissible(&next, opts.blowup_threshold) {
            blowup = Some(BlowUp {
                time: next.t,
                threshold: opts.blowup_threshold,
                reason,
            });
            break;
        }
        if k % opts.stride == 0 {
            samples.push(next.clone());
        }
        state = next;
    }

    Ok(Trajectory {
        samples,
        dt: opts.dt,
        stride: opts.stride,
        scheme: opts.scheme,
        blowup,
        blowup_threshold: opts.blowup_threshold,
        max_iterations,
    })
}

fn inadmissible(state: &ModalState, threshold: f64) -> Option<BlowUpReason> {
    if !state.is_finite() {
        Some(BlowUpReason::NonFinite)
    } else if state.max_abs() > threshold {
        Some(BlowUpReason::ThresholdExceeded)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_default;
    use crate::geometry::Domain;

    fn ops(n_wave: usize, n_plate: usize) -> GalerkinOperators {
        assemble_default(&Domain::new(2).unwrap(), n_wave, n_plate, &SourceSpec::linear()).unwrap()
    }

    fn quadratic_energy(ops: &GalerkinOperators, s: &ModalState) -> f64 {
        0.5 * (s.du.norm_squared()
            + s.u.component_mul(&s.u).dot(&ops.wave_stiffness)
            + s.dw.dot(&(&ops.plate_mass * &s.dw))
            + s.w.dot(&(&ops.plate_bending * &s.w)))
    }

    #[test]
    fn zero_state_is_equilibrium() {
        let ops = ops(4, 3);
        let spec = SourceSpec::new(3.0, 1.0, 2.0, 1.0, 3.0).unwrap();
        let z = ModalState::zeros(&ops);
        let r = rhs(&ops, &spec, &z);
        assert_eq!(r.du.amax() + r.dw.amax() + r.u.amax() + r.w.amax(), 0.0);
        assert_eq!(step_rk4(&ops, &spec, &z, 1e-2).max_abs(), 0.0);
        let m = step_implicit_midpoint(&ops, &spec, &z, 1e-2, 1e-12, 50).unwrap();
        assert_eq!(m.state.max_abs(), 0.0);
    }

    #[test]
    fn plate_displacement_acceleration() {
        let ops = ops(3, 3);
        let mut s = ModalState::zeros(&ops);
        let alpha = 0.7;
        s.w[0] = alpha;
        let r = rhs(&ops, &SourceSpec::linear(), &s);
        let mu1 = ops.plate.beams[0].eigenvalue;
        assert!((r.dw[0] + mu1 * alpha).abs() < 1e-8 * mu1);
    }

    #[test]
    fn wave_velocity_drives_plate() {
        let ops = ops(3, 3);
        let mut s = ModalState::zeros(&ops);
        let alpha = 1.3;
        s.du[0] = alpha;
        let r = rhs(&ops, &SourceSpec::linear(), &s);
        let mut e = DVector::zeros(3);
        e[0] = alpha;
        let expect = -ops.plate_mass.clone().try_inverse().unwrap() * ops.coupling.transpose() * e;
        assert!((r.dw - expect).amax() < 1e-12);
    }

    #[test]
    fn rk4_reversible_on_uncoupled_wave() {
        let ops = ops(5, 2).with_coupling_scale(0.0).with_damping(0.0);
        let spec = SourceSpec::linear();
        let mut s = ModalState::zeros(&ops);
        s.u[0] = 1.0;
        s.u[2] = -0.4;
        s.du[1] = 0.3;
        let dt = 1e-3;
        let fwd = step_rk4(&ops, &spec, &s, dt);
        let back = step_rk4(&ops, &spec, &fwd, -dt);
        assert!(back.difference(&s).max_abs() < 1e-10);
    }

    /// Exact solution of the decoupled single plate mode:
    /// `w'' + w' + mu w = 0`, `w(0) = 1`, `w'(0) = 0`.
    fn damped_oscillator(mu: f64, t: f64) -> (f64, f64) {
        let om = (mu - 0.25).sqrt();
        let (s, c) = (om * t).sin_cos();
        let e = (-0.5 * t).exp();
        let w = e * (c + 0.5 / om * s);
        let dw = e * (-0.5 * (c + 0.5 / om * s) + (-om * s + 0.5 * c));
        (w, dw)
    }

    fn order_study(scheme: Scheme, dts: &[f64]) -> Vec<f64> {
        let ops = ops(2, 1).with_coupling_scale(0.0);
        let mu = ops.plate_bending[(0, 0)];
        let period = 2.0 * std::f64::consts::PI / (mu - 0.25).sqrt();
        let mut init = ModalState::zeros(&ops);
        init.w[0] = 1.0;
        dts.iter()
            .map(|&dt| {
                let n = (period / dt).round() as usize;
                let mut s = init.clone();
                for _ in 0..n {
                    s = match scheme {
                        Scheme::Rk4 => step_rk4(&ops, &SourceSpec::linear(), &s, dt),
                        Scheme::ImplicitMidpoint { tol, max_iter } => {
                            step_implicit_midpoint(&ops, &SourceSpec::linear(), &s, dt, tol, max_iter)
                                .unwrap()
                                .state
                        }
                    };
                }
                let (w, dw) = damped_oscillator(mu, n as f64 * dt);
                (mu * (s.w[0] - w).powi(2) + (s.dw[0] - dw).powi(2)).sqrt()
            })
            .collect()
    }

    #[test]
    fn rk4_fourth_order_on_plate_mode() {
        let errs = order_study(Scheme::Rk4, &[4e-3, 2e-3, 1e-3]);
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 3.5, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn midpoint_second_order_on_plate_mode() {
        let scheme = Scheme::ImplicitMidpoint { tol: 1e-14, max_iter: 200 };
        let errs = order_study(scheme, &[2e-3, 1e-3, 5e-4]);
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn midpoint_conserves_quadratic_energy() {
        let ops = ops(6, 4).with_coupling_scale(0.0).with_damping(0.0);
        let spec = SourceSpec::linear();
        let mut s = ModalState::zeros(&ops);
        s.u[0] = 1.0;
        s.du[3] = -0.5;
        s.w[0] = 0.02;
        s.dw[1] = 0.4;
        for _ in 0..50 {
            let e0 = quadratic_energy(&ops, &s);
            s = step_implicit_midpoint(&ops, &spec, &s, 1e-3, 1e-15, 500).unwrap().state;
            let e1 = quadratic_energy(&ops, &s);
            assert!((e1 - e0).abs() <= 1e-12 * e0, "{e0} -> {e1}");
        }
    }

    #[test]
    fn midpoint_reports_divergence_for_large_steps() {
        let ops = ops(4, 4);
        let lam_max = ops.plate_bending[(3, 3)].max(ops.wave_stiffness.max());
        let dt = 2.0 / lam_max.sqrt();
        let mut s = ModalState::zeros(&ops);
        s.w[3] = 0.1;
        s.u[0] = 1.0;
        let res = step_implicit_midpoint(&ops, &SourceSpec::linear(), &s, dt, 1e-12, 100);
        assert!(matches!(res, Err(IntegratorError::MidpointDiverged { .. })), "{res:?}");
    }

    #[test]
    fn integrate_samples_and_zero_data() {
        let ops = ops(3, 2);
        let z = ModalState::zeros(&ops);
        let traj = integrate(&ops, &SourceSpec::linear(), &z, &IntegrationOptions::rk4(1.0, 0.01, 10)).unwrap();
        assert_eq!(traj.samples.len(), 11);
        assert!(traj.samples.iter().all(|s| s.max_abs() == 0.0));
        assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
        assert!((traj.samples[10].t - 1.0).abs() < 1e-12);
        assert!(traj.blowup.is_none());
    }

    #[test]
    fn integrate_rejects_bad_options() {
        let ops = ops(2, 1);
        let z = ModalState::zeros(&ops);
        let spec = SourceSpec::linear();
        assert!(integrate(&ops, &spec, &z, &IntegrationOptions::rk4(1.0, 0.0, 1)).is_err());
        assert!(integrate(&ops, &spec, &z, &IntegrationOptions::rk4(-1.0, 0.1, 1)).is_err());
        assert!(integrate(&ops, &spec, &z, &IntegrationOptions::rk4(1.0, 0.1, 0)).is_err());
        let wrong = ModalState::zeros_sized(3, 1);
        assert!(matches!(
            integrate(&ops, &spec, &wrong, &IntegrationOptions::rk4(1.0, 0.1, 1)),
            Err(IntegratorError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn blowup_flag_for_cubic_plate_source() {
        let ops = ops(2, 2);
        let spec = SourceSpec::new(1.0, 0.0, 0.0, 1.0, 3.0).unwrap();
        let mut s = ModalState::zeros(&ops);
        s.w[0] = 60.0;
        let traj = integrate(&ops, &spec, &s, &IntegrationOptions::rk4(1.0, 1e-4, 10)).unwrap();
        let b = traj.blowup.expect("cubic source must blow up");
        assert!(b.time > 0.0 && b.time < 1.0);
        assert!(traj.samples.iter().all(|s| s.max_abs() <= 1e8));
    }

    #[test]
    fn deterministic() {
        let ops = ops(4, 3);
        let spec = SourceSpec::new(3.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        let mut s = ModalState::zeros(&ops);
        s.u[0] = 0.5;
        s.w[1] = 0.01;
        let o = IntegrationOptions::rk4(0.5, 1e-3, 5);
        let a = integrate(&ops, &spec, &s, &o).unwrap();
        let b = integrate(&ops, &spec, &s, &o).unwrap();
        assert_eq!(a.samples, b.samples);
    }
}
