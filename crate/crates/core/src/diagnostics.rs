//! Energies, balance identities, a priori bounds and perturbation metrics
//! evaluated on sampled trajectories.
//!
//! Time integrals over the sample grid use either the plain trapezoid rule or
//! the trapezoid rule with endpoint derivative correction on each interval,
//!
//! ```text
//! int_a^b f ~ h/2 (f(a) + f(b)) + h^2/12 (f'(a) - f'(b)),
//! ```
//!
//! which is fourth-order accurate. Integrand derivatives come from the
//! system's own vector field evaluated at the samples, so no extra states
//! need to be stored.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::{GalerkinOperators, SourceSpec};
use crate::error::DiagnosticsError;
use crate::integrator::{rhs, ModalRate, ModalState, Trajectory};

/// Instantaneous energy split plus the running balance ledger.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    /// `1/2 |u_t|^2`
    #[serde(rename = "Ek_wave")]
    pub kinetic_wave: f64,
    /// `1/2 |grad u|^2`
    #[serde(rename = "Ep_wave")]
    pub potential_wave: f64,
    #[serde(rename = "Ek_plate")]
    pub kinetic_plate: f64,
    /// `1/2 |lap w|^2`
    #[serde(rename = "Ep_bend")]
    pub bending: f64,
    /// `|u|_{p+1}^{p+1} / (p+1)` (scaled by `rho_w`).
    #[serde(rename = "Ep_source")]
    pub source_potential: f64,
    /// Positive energy: sum of the five terms above.
    #[serde(rename = "E_script")]
    pub energy: f64,
    /// `int_Gamma H(w)`.
    #[serde(rename = "H_int")]
    pub plate_potential: f64,
    /// `energy - plate_potential`.
    #[serde(rename = "E_total")]
    pub total: f64,
    /// `int_0^t d |w_t|^2`.
    #[serde(rename = "damp_cum")]
    pub damping_cum: f64,
    /// `int_0^t int_Gamma h(w) w_t`.
    #[serde(rename = "work_cum")]
    pub work_cum: f64,
    /// `energy(t) + damping_cum - energy(0) - work_cum`.
    pub residual: f64,
}

/// CSV header of an energy series, in column order.
pub const ENERGY_COLUMNS: [&str; 12] = [
    "t", "Ek_wave", "Ep_wave", "Ek_plate", "Ep_bend", "Ep_source", "E_script", "H_int", "E_total", "damp_cum",
    "work_cum", "residual",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegralRule {
    Trapezoid,
    #[default]
    CorrectedTrapezoid,
}

/// Instantaneous energies of one state (ledger fields left at zero).
pub fn energy(ops: &GalerkinOperators, spec: &SourceSpec, state: &ModalState) -> EnergyReport {
    let kinetic_wave = 0.5 * state.du.norm_squared();
    let potential_wave = 0.5 * state.u.component_mul(&state.u).dot(&ops.wave_stiffness);
    let kinetic_plate = 0.5 * state.dw.dot(&(&ops.plate_mass * &state.dw));
    let bending = 0.5 * state.w.dot(&(&ops.plate_bending * &state.w));
    let source_potential = ops.wave_source_potential(&state.u, spec);
    let energy = kinetic_wave + potential_wave + kinetic_plate + bending + source_potential;
    let plate_potential = ops.plate_source_potential(&state.w, spec);
    EnergyReport {
        t: state.t,
        kinetic_wave,
        potential_wave,
        kinetic_plate,
        bending,
        source_potential,
        energy,
        plate_potential,
        total: energy - plate_potential,
        ..Default::default()
    }
}

/// Quadratic energy of the difference of two states.
pub fn difference_energy(ops: &GalerkinOperators, a: &ModalState, b: &ModalState) -> f64 {
    let d = a.difference(b);
    energy(ops, &SourceSpec::linear(), &d).energy
}

/// Power balance of one state, split by mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRate {
    /// `d/dt energy` computed from the vector field.
    pub total: f64,
    /// Coupling power entering the chamber, `u'^T C w'`.
    pub coupling_wave: f64,
    /// Coupling power entering the wall, `-w'^T C^T u'`.
    pub coupling_plate: f64,
    /// `-d |w_t|^2`.
    pub damping: f64,
    /// `int h(w) w_t`.
    pub plate_work: f64,
}

pub fn energy_rate(ops: &GalerkinOperators, spec: &SourceSpec, state: &ModalState) -> EnergyRate {
    let r = rhs(ops, spec, state);
    let f = ops.project_wave_source(&state.u, spec);
    let total = state.du.dot(&r.du)
        + state.du.dot(&state.u.component_mul(&ops.wave_stiffness))
        + state.dw.dot(&(&ops.plate_mass * &r.dw))
        + state.dw.dot(&(&ops.plate_bending * &state.w))
        + f.dot(&state.du);
    let cdw = &ops.coupling * &state.dw;
    EnergyRate {
        total,
        coupling_wave: state.du.dot(&cdw),
        coupling_plate: -cdw.dot(&state.du),
        damping: -ops.damping * state.dw.dot(&(&ops.plate_mass * &state.dw)),
        plate_work: ops.project_plate_source(&state.w, spec).dot(&state.dw),
    }
}

/// Running integral of sampled `values` over `times`. With `derivatives`
/// the endpoint-corrected trapezoid rule is used on each interval.
pub fn cumulative_integral(times: &[f64], values: &[f64], derivatives: Option<&[f64]>) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..values.len() {
        let h = times[k] - times[k - 1];
        acc += 0.5 * h * (values[k - 1] + values[k]);
        if let Some(d) = derivatives {
            acc += h * h / 12.0 * (d[k - 1] - d[k]);
        }
        out.push(acc);
    }
    out
}

fn require_samples(traj: &Trajectory, needed: usize) -> Result<(), DiagnosticsError> {
    if traj.samples.len() < needed {
        return Err(DiagnosticsError::TooFewSamples {
            needed,
            got: traj.samples.len(),
        });
    }
    Ok(())
}

/// Energy series with the balance ledger filled in.
pub fn energy_series(
    traj: &Trajectory,
    ops: &GalerkinOperators,
    spec: &SourceSpec,
    rule: IntegralRule,
) -> Result<Vec<EnergyReport>, DiagnosticsError> {
    require_samples(traj, 1)?;
    let times = traj.times();
    let mut reports: Vec<EnergyReport> = traj.samples.iter().map(|s| energy(ops, spec, s)).collect();

    let mut damp = Vec::with_capacity(times.len());
    let mut work = Vec::with_capacity(times.len());
    let mut damp_d = Vec::with_capacity(times.len());
    let mut work_d = Vec::with_capacity(times.len());
    for s in &traj.samples {
        let mdw = &ops.plate_mass * &s.dw;
        let g = ops.project_plate_source(&s.w, spec);
        damp.push(ops.damping * s.dw.dot(&mdw));
        work.push(g.dot(&s.dw));
        if rule == IntegralRule::CorrectedTrapezoid {
            let r = rhs(ops, spec, s);
            damp_d.push(2.0 * ops.damping * mdw.dot(&r.dw));
            let dg = ops.plate_source_derivative(&s.w, &s.dw, spec);
            work_d.push(dg.dot(&s.dw) + g.dot(&r.dw));
        }
    }
    let corrected = rule == IntegralRule::CorrectedTrapezoid;
    let damp_cum = cumulative_integral(&times, &damp, corrected.then_some(&damp_d[..]));
    let work_cum = cumulative_integral(&times, &work, corrected.then_some(&work_d[..]));
    let e0 = reports[0].energy;
    for (k, rep) in reports.iter_mut().enumerate() {
        rep.damping_cum = damp_cum[k];
        rep.work_cum = work_cum[k];
        rep.residual = rep.energy + rep.damping_cum - e0 - rep.work_cum;
    }
    Ok(reports)
}

/// `R(t) = E(t) + int |w_t|^2 - E(0) - int int h(w) w_t` at each sample.
pub fn identity_residual(
    traj: &Trajectory,
    ops: &GalerkinOperators,
    spec: &SourceSpec,
) -> Result<Vec<f64>, DiagnosticsError> {
    require_samples(traj, 2)?;
    Ok(energy_series(traj, ops, spec, IntegralRule::default())?
        .iter()
        .map(|r| r.residual)
        .collect())
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// One-sided check of the energy inequality: every residual must satisfy
/// `R(t) <= tol`. Returns the indices of violating samples.
pub fn inequality_violations(residuals: &[f64], tol: f64) -> Vec<usize> {
    residuals
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > tol)
        .map(|(i, _)| i)
        .collect()
}

/// True when the cumulative damping ledger never decreases.
pub fn damping_ledger_monotone(reports: &[EnergyReport]) -> bool {
    reports.windows(2).all(|w| w[1].damping_cum >= w[0].damping_cum)
}

/// True when `energy` is non-increasing up to `slack`.
pub fn energy_non_increasing(reports: &[EnergyReport], slack: f64) -> bool {
    reports.windows(2).all(|w| w[1].energy <= w[0].energy + slack)
}

// ---------------------------------------------------------------------------
// Gronwall and Volterra comparison bounds
// ---------------------------------------------------------------------------

/// `(E0 + C t) e^{C t}`.
pub fn gronwall_bound(e0: f64, c: f64, t: f64) -> f64 {
    (e0 + c * t) * (c * t).exp()
}

/// Smallest `C >= 0` with `E(t) <= E(0) + C T + C int_0^t E` at every sample,
/// `T` being the horizon.
pub fn fit_gronwall_constant(times: &[f64], energies: &[f64], horizon: f64) -> f64 {
    let integral = cumulative_integral(times, energies, None);
    let e0 = energies[0];
    energies
        .iter()
        .zip(&integral)
        .map(|(&e, &i)| (e - e0) / (horizon + i))
        .fold(0.0, f64::max)
}

/// Smallest `C >= 0` with
/// `int h(w) w_t - d/2 |w_t|^2 <= C (1 + E(t))` at every sample: the
/// pointwise source-power bound from which the integral Gronwall inequality
/// follows. Unlike [`fit_gronwall_constant`] it depends only on the states
/// visited, not on the energy history.
pub fn fit_source_power_constant(
    traj: &Trajectory,
    ops: &GalerkinOperators,
    spec: &SourceSpec,
) -> Result<f64, DiagnosticsError> {
    require_samples(traj, 1)?;
    Ok(traj
        .samples
        .iter()
        .map(|s| {
            let work = ops.project_plate_source(&s.w, spec).dot(&s.dw);
            let damping = 0.5 * ops.damping * s.dw.dot(&(&ops.plate_mass * &s.dw));
            (work - damping) / (1.0 + energy(ops, spec, s).energy)
        })
        .fold(0.0, f64::max))
}

/// Checks `E(t) <= E(0) + C T + C int_0^t E` at every sample.
pub fn check_gronwall_integral(times: &[f64], energies: &[f64], c: f64, horizon: f64) -> BoundCheck {
    let integral = cumulative_integral(times, energies, None);
    let worst_ratio = energies
        .iter()
        .zip(&integral)
        .map(|(&e, &i)| e / (energies[0] + c * horizon + c * i))
        .fold(0.0, f64::max);
    BoundCheck {
        passed: worst_ratio <= 1.0 + 1e-12,
        worst_ratio,
        checked: times.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub passed: bool,
    /// Largest `value / bound` over the checked samples.
    pub worst_ratio: f64,
    pub checked: usize,
}

/// Checks `E(t) <= (E(0) + C T) e^{C t}` at every sample.
pub fn check_gronwall(times: &[f64], energies: &[f64], c: f64, horizon: f64) -> BoundCheck {
    let e0 = energies[0];
    let worst_ratio = times
        .iter()
        .zip(energies)
        .map(|(&t, &e)| {
            let bound = (e0 + c * horizon) * (c * t).exp();
            if bound > 0.0 {
                e / bound
            } else if e <= 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    BoundCheck {
        passed: worst_ratio <= 1.0 + 1e-12,
        worst_ratio,
        checked: times.len(),
    }
}

/// Value of the Volterra majorant at some time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Majorant {
    Finite(f64),
    /// `t` is at or beyond the majorant's own blow-up time.
    BlownUp,
}

impl Majorant {
    pub fn value(&self) -> f64 {
        match self {
            Majorant::Finite(z) => *z,
            Majorant::BlownUp => f64::INFINITY,
        }
    }
}

/// `z(t) = (C^{1-q} - C1 (q-1) t)^{-1/(q-1)}`, the solution of
/// `z = C + C1 int_0^t z^q`. Requires `q > 1`; the linear case is
/// [`gronwall_bound`].
pub fn volterra_majorant(c: f64, c1: f64, q: f64, t: f64) -> Result<Majorant, DiagnosticsError> {
    if q <= 1.0 {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "Volterra majorant needs q > 1 (got {q}); use the Gronwall bound"
        )));
    }
    if c <= 0.0 || c1 < 0.0 {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "Volterra majorant needs C > 0 and C1 >= 0 (got {c}, {c1})"
        )));
    }
    let base = c.powf(1.0 - q) - c1 * (q - 1.0) * t;
    if base <= 0.0 {
        return Ok(Majorant::BlownUp);
    }
    Ok(Majorant::Finite(base.powf(-1.0 / (q - 1.0))))
}

/// `C^{1-q} / (C1 (q-1))`, infinite when `C1 = 0`.
pub fn majorant_blowup_time(c: f64, c1: f64, q: f64) -> f64 {
    if c1 <= 0.0 {
        f64::INFINITY
    } else {
        c.powf(1.0 - q) / (c1 * (q - 1.0))
    }
}

/// Fitted constants of the integral inequality `y <= C + C1 int_0^t y^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolterraFit {
    pub c: f64,
    pub c1: f64,
    pub q: f64,
}

/// `C = y(0)` and the smallest `C1 >= 0` validating the inequality at every
/// sample.
pub fn fit_volterra(times: &[f64], y: &[f64], q: f64) -> VolterraFit {
    let yq: Vec<f64> = y.iter().map(|v| v.powf(q)).collect();
    let integral = cumulative_integral(times, &yq, None);
    let c = y[0];
    let c1 = y
        .iter()
        .zip(&integral)
        .skip(1)
        .filter(|(_, &i)| i > 0.0)
        .map(|(&v, &i)| (v - c) / i)
        .fold(0.0, f64::max);
    VolterraFit { c, c1, q }
}

/// Checks `y(t) <= z(t)` for all samples with `t <= fraction * T_majorant`.
pub fn check_majorant(times: &[f64], y: &[f64], fit: &VolterraFit, fraction: f64) -> Result<BoundCheck, DiagnosticsError> {
    let limit = fraction * majorant_blowup_time(fit.c, fit.c1, fit.q);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (&t, &v) in times.iter().zip(y) {
        if t > limit {
            break;
        }
        let z = volterra_majorant(fit.c, fit.c1, fit.q, t)?.value();
        worst = worst.max(v / z);
        checked += 1;
    }
    Ok(BoundCheck {
        passed: checked > 0 && worst <= 1.0 + 1e-12,
        worst_ratio: worst,
        checked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEstimate {
    /// `(E0 + C T)^{1-q} / (C (q-1))`.
    pub t1: f64,
    /// `min(T, T1 / 2)`.
    pub t_prime: f64,
}

pub fn blowup_time_estimate(e0: f64, c: f64, horizon: f64, q: f64) -> Result<BlowupEstimate, DiagnosticsError> {
    if q <= 1.0 || c <= 0.0 {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "blow-up estimate needs q > 1 and C > 0 (got q = {q}, C = {c})"
        )));
    }
    let t1 = (e0 + c * horizon).powf(1.0 - q) / (c * (q - 1.0));
    Ok(BlowupEstimate {
        t1,
        t_prime: horizon.min(0.5 * t1),
    })
}

// ---------------------------------------------------------------------------
// Weak-form residuals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    Wave,
    Plate,
}

/// Residual of the variational identity tested against basis function
/// `test_index` of `ops`, at the final sample.
pub fn weak_form_residual(
    traj: &Trajectory,
    ops: &GalerkinOperators,
    spec: &SourceSpec,
    test_index: usize,
    which: Equation,
) -> Result<f64, DiagnosticsError> {
    let all = weak_form_residuals(traj, ops, ops, spec, which, IntegralRule::default())?;
    let size = all.len();
    all.get(test_index)
        .copied()
        .ok_or(DiagnosticsError::TestIndexOutOfRange { index: test_index, size })
}

/// Residuals of the variational identities for every basis test function of
/// `eval_ops`, for a trajectory produced with `sim_ops` (a nested, possibly
/// smaller basis). Time-independent test functions make the `phi_t` terms
/// vanish.
pub fn weak_form_residuals(
    traj: &Trajectory,
    sim_ops: &GalerkinOperators,
    eval_ops: &GalerkinOperators,
    spec: &SourceSpec,
    which: Equation,
    rule: IntegralRule,
) -> Result<Vec<f64>, DiagnosticsError> {
    require_samples(traj, 2)?;
    if !eval_ops.nests(sim_ops) {
        return Err(DiagnosticsError::BasisTooSmall {
            sim: sim_ops.n_wave() + sim_ops.n_plate(),
            eval: eval_ops.n_wave() + eval_ops.n_plate(),
        });
    }
    let times = traj.times();
    let embed_rate = |r: &ModalRate| ModalRate {
        u: eval_ops.embed_wave(&r.u),
        du: eval_ops.embed_wave(&r.du),
        w: eval_ops.embed_plate(&r.w),
        dw: eval_ops.embed_plate(&r.dw),
    };
    let states: Vec<ModalState> = traj.samples.iter().map(|s| eval_ops.embed_state(s)).collect();
    let rates: Vec<ModalRate> = traj.samples.iter().map(|s| embed_rate(&rhs(sim_ops, spec, s))).collect();

    let n = match which {
        Equation::Wave => eval_ops.n_wave(),
        Equation::Plate => eval_ops.n_plate(),
    };
    let mut integrand: Vec<DVector<f64>> = Vec::with_capacity(states.len());
    let mut derivative: Vec<DVector<f64>> = Vec::with_capacity(states.len());
    for (s, r) in states.iter().zip(&rates) {
        match which {
            Equation::Wave => {
                let lam = &eval_ops.wave_stiffness;
                let g = s.u.component_mul(lam) - &eval_ops.coupling * &s.dw + eval_ops.project_wave_source(&s.u, spec);
                let dg = s.du.component_mul(lam) - &eval_ops.coupling * &r.dw
                    + eval_ops.wave_source_derivative(&s.u, &s.du, spec);
                integrand.push(g);
                derivative.push(dg);
            }
            Equation::Plate => {
                let k = &eval_ops.plate_bending;
                let m = &eval_ops.plate_mass;
                let d = eval_ops.damping;
                let g = k * &s.w + (m * &s.dw) * d - eval_ops.project_plate_source(&s.w, spec);
                let dg = k * &s.dw + (m * &r.dw) * d - eval_ops.plate_source_derivative(&s.w, &s.dw, spec);
                integrand.push(g);
                derivative.push(dg);
            }
        }
    }
    let boundary = |s: &ModalState| -> DVector<f64> {
        match which {
            Equation::Wave => s.du.clone(),
            Equation::Plate => &eval_ops.plate_mass * &s.dw + eval_ops.coupling.transpose() * &s.u,
        }
    };
    let first = boundary(&states[0]);
    let last = boundary(states.last().expect("at least two samples"));
    let corrected = rule == IntegralRule::CorrectedTrapezoid;
    Ok((0..n)
        .map(|j| {
            let f: Vec<f64> = integrand.iter().map(|g| g[j]).collect();
            let df: Vec<f64> = derivative.iter().map(|g| g[j]).collect();
            let integral = *cumulative_integral(&times, &f, corrected.then_some(&df[..]))
                .last()
                .expect("non-empty");
            last[j] - first[j] + integral
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Continuous dependence
// ---------------------------------------------------------------------------

/// Quadratic energy of the difference of two trajectories at each sample.
pub fn perturbation_energy(
    a: &Trajectory,
    b: &Trajectory,
    ops: &GalerkinOperators,
) -> Result<Vec<f64>, DiagnosticsError> {
    if a.samples.len() != b.samples.len()
        || a
            .samples
            .iter()
            .zip(&b.samples)
            .any(|(x, y)| (x.t - y.t).abs() > 1e-12 * x.t.abs().max(1.0))
    {
        return Err(DiagnosticsError::GridMismatch);
    }
    Ok(a.samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| difference_energy(ops, x, y))
        .collect())
}

/// Smallest `C_R >= 0` with `E~(t) <= E~(0) e^{C_R t}` at every sample.
pub fn fit_growth_rate(times: &[f64], series: &[f64]) -> f64 {
    let e0 = series[0];
    if e0 <= 0.0 {
        return 0.0;
    }
    times
        .iter()
        .zip(series)
        .filter(|(&t, _)| t > times[0])
        .map(|(&t, &e)| (e / e0).ln() / (t - times[0]))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_default;
    use crate::geometry::Domain;
    use crate::integrator::{integrate, IntegrationOptions};

    fn ops(n_wave: usize, n_plate: usize, spec: &SourceSpec) -> GalerkinOperators {
        assemble_default(&Domain::new(2).unwrap(), n_wave, n_plate, spec).unwrap()
    }

    #[test]
    fn zero_state_energy() {
        let spec = SourceSpec::new(3.0, 1.0, 1.0, 1.0, 3.0).unwrap();
        let o = ops(4, 3, &spec);
        let r = energy(&o, &spec, &ModalState::zeros(&o));
        assert_eq!(r, EnergyReport::default());
    }

    #[test]
    fn bending_energy_of_first_plate_mode() {
        let spec = SourceSpec::linear();
        let o = ops(2, 3, &spec);
        let mut s = ModalState::zeros(&o);
        s.w[0] = 1.0;
        let beta = crate::beam::solve_beam_roots(1).unwrap()[0];
        let r = energy(&o, &spec, &s);
        assert!((r.bending - 0.5 * beta.powi(4)).abs() < 1e-8 * beta.powi(4));
        assert_eq!(r.energy, r.bending);
    }

    #[test]
    fn single_wave_mode_energy_p1() {
        let spec = SourceSpec::new(1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let o = ops(3, 2, &spec);
        let mut s = ModalState::zeros(&o);
        let alpha = 0.6;
        s.u[0] = alpha;
        let r = energy(&o, &spec, &s);
        // source potential = alpha^2 |e_1|^2 / 2 with |e_1| = 1
        assert!((r.source_potential - 0.5 * alpha * alpha).abs() < 1e-12);
        let expect = 0.5 * o.wave_stiffness[0] * alpha * alpha + 0.5 * alpha * alpha;
        assert!((r.energy - expect).abs() < 1e-12);
    }

    #[test]
    fn coupling_power_cancels() {
        let spec = SourceSpec::new(3.0, 1.0, 0.5, 1.0, 3.0).unwrap();
        let o = ops(6, 5, &spec);
        let mut s = ModalState::zeros(&o);
        for j in 0..6 {
            s.u[j] = 0.3 / (j + 1) as f64;
            s.du[j] = (-1.0f64).powi(j as i32) * 0.7;
        }
        for n in 0..5 {
            s.w[n] = 0.01 * (n + 1) as f64;
            s.dw[n] = 0.5 - 0.2 * n as f64;
        }
        let rate = energy_rate(&o, &spec, &s);
        assert!(rate.coupling_wave.abs() > 1e-3);
        let scale = rate.coupling_wave.abs() + rate.damping.abs() + rate.plate_work.abs();
        assert!((rate.coupling_wave + rate.coupling_plate).abs() <= 1e-12 * scale);
        assert!((rate.total - rate.damping - rate.plate_work).abs() <= 1e-12 * scale);
    }

    #[test]
    fn corrected_trapezoid_is_fourth_order() {
        let f = |t: f64| (3.0 * t).sin() + t * t;
        let df = |t: f64| 3.0 * (3.0 * t).cos() + 2.0 * t;
        let exact = (1.0 - (6.0f64).cos()) / 3.0 + 8.0 / 3.0;
        let err = |n: usize| {
            let times: Vec<f64> = (0..=n).map(|k| 2.0 * k as f64 / n as f64).collect();
            let v: Vec<f64> = times.iter().map(|&t| f(t)).collect();
            let d: Vec<f64> = times.iter().map(|&t| df(t)).collect();
            (
                (cumulative_integral(&times, &v, None).last().unwrap() - exact).abs(),
                (cumulative_integral(&times, &v, Some(&d)).last().unwrap() - exact).abs(),
            )
        };
        let (t1, c1) = err(20);
        let (t2, c2) = err(40);
        assert!(((t1 / t2).log2() - 2.0).abs() < 0.1);
        assert!((c1 / c2).log2() > 3.8);
    }

    #[test]
    fn gronwall_values() {
        assert_eq!(gronwall_bound(3.0, 0.0, 5.0), 3.0);
        assert!((gronwall_bound(1.0, 1.0, 1.0) - 2.0 * std::f64::consts::E).abs() < 1e-12);
        assert!((gronwall_bound(1.0, 1.0, 1.0) - 5.43656).abs() < 1e-5);
    }

    #[test]
    fn gronwall_fit_is_minimal() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let e: Vec<f64> = times.iter().map(|t| 1.0 + 0.2 * t).collect();
        let c = fit_gronwall_constant(&times, &e, 10.0);
        assert!(c > 0.0);
        assert!(check_gronwall(&times, &e, c, 10.0).passed);
        // slightly smaller constant violates the fitted inequality somewhere
        let integral = cumulative_integral(&times, &e, None);
        let c_small = 0.99 * c;
        assert!(e.iter().zip(&integral).any(|(&v, &i)| v > e[0] + c_small * 10.0 + c_small * i));
        // decaying energy needs no growth constant
        let dec: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        assert_eq!(fit_gronwall_constant(&times, &dec, 10.0), 0.0);
    }

    #[test]
    fn volterra_values() {
        assert_eq!(volterra_majorant(1.7, 2.0, 3.0, 0.0).unwrap(), Majorant::Finite(1.7));
        let z = volterra_majorant(1.0, 1.0, 2.0, 0.5).unwrap().value();
        assert!((z - 2.0).abs() < 1e-14);
        let near = volterra_majorant(1.0, 1.0, 2.0, 1.0 - 1e-9).unwrap().value();
        assert!(near > 1e8);
        assert_eq!(volterra_majorant(1.0, 1.0, 2.0, 1.0).unwrap(), Majorant::BlownUp);
        assert_eq!(volterra_majorant(1.0, 1.0, 2.0, 3.0).unwrap(), Majorant::BlownUp);
        assert!(volterra_majorant(1.0, 1.0, 1.0, 0.1).is_err());
        assert_eq!(majorant_blowup_time(1.0, 1.0, 2.0), 1.0);
        assert_eq!(majorant_blowup_time(1.0, 0.0, 2.0), f64::INFINITY);
    }

    #[test]
    fn majorant_solves_its_integral_equation() {
        let (c, c1, q) = (1.3, 0.4, 2.5);
        let tb = majorant_blowup_time(c, c1, q);
        let n = 4000;
        let times: Vec<f64> = (0..=n).map(|k| 0.5 * tb * k as f64 / n as f64).collect();
        let z: Vec<f64> = times.iter().map(|&t| volterra_majorant(c, c1, q, t).unwrap().value()).collect();
        let zq: Vec<f64> = z.iter().map(|v| v.powf(q)).collect();
        let integral = cumulative_integral(&times, &zq, None);
        let last = z.len() - 1;
        assert!((z[last] - (c + c1 * integral[last])).abs() < 1e-5 * z[last]);
    }

    #[test]
    fn blowup_estimate_values() {
        let e = blowup_time_estimate(1.0, 1.0, 1.0, 2.0).unwrap();
        assert!((e.t1 - 0.5).abs() < 1e-15);
        assert!((e.t_prime - 0.25).abs() < 1e-15);
        let e = blowup_time_estimate(0.5, 1.0, 0.5, 2.0).unwrap();
        assert!((e.t1 - 1.0).abs() < 1e-15);
        assert_eq!(e.t_prime, 0.5);
        let a = blowup_time_estimate(1.0, 2.0, 1.0, 2.0).unwrap().t1;
        let b = blowup_time_estimate(4.0, 2.0, 1.0, 2.0).unwrap().t1;
        assert!((a / b - 2.0).abs() < 1e-14);
        assert!(blowup_time_estimate(1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_trajectory_diagnostics() {
        let spec = SourceSpec::new(3.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        let o = ops(4, 3, &spec);
        let z = ModalState::zeros(&o);
        let traj = integrate(&o, &spec, &z, &IntegrationOptions::rk4(0.1, 1e-2, 1)).unwrap();
        assert!(identity_residual(&traj, &o, &spec).unwrap().iter().all(|&r| r == 0.0));
        for j in 0..4 {
            assert_eq!(weak_form_residual(&traj, &o, &spec, j, Equation::Wave).unwrap(), 0.0);
        }
        assert_eq!(weak_form_residual(&traj, &o, &spec, 0, Equation::Plate).unwrap(), 0.0);
        assert!(weak_form_residual(&traj, &o, &spec, 9, Equation::Plate).is_err());
        assert!(perturbation_energy(&traj, &traj, &o).unwrap().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn damped_free_energy_decreases() {
        let spec = SourceSpec::linear();
        let o = ops(4, 4, &spec);
        let mut s = ModalState::zeros(&o);
        s.u[0] = 1.0;
        s.w[0] = 0.01;
        s.dw[1] = 0.5;
        let traj = integrate(&o, &spec, &s, &IntegrationOptions::rk4(2.0, 1e-3, 10)).unwrap();
        let rep = energy_series(&traj, &o, &spec, IntegralRule::CorrectedTrapezoid).unwrap();
        assert!(energy_non_increasing(&rep, 1e-10));
        assert!(damping_ledger_monotone(&rep));
        assert!(rep.iter().all(|r| r.energy >= 0.0));
        assert!(rep.last().unwrap().energy < rep[0].energy);
    }

    #[test]
    fn perturbation_initial_energy_closed_form() {
        let spec = SourceSpec::linear();
        let o = ops(4, 3, &spec);
        let mut a = ModalState::zeros(&o);
        a.u[0] = 0.5;
        let delta = 1e-2;
        let mut b = a.clone();
        b.u[0] += delta;
        b.du[1] += delta;
        let opts = IntegrationOptions::rk4(0.2, 1e-3, 10);
        let ta = integrate(&o, &spec, &a, &opts).unwrap();
        let tb = integrate(&o, &spec, &b, &opts).unwrap();
        let e = perturbation_energy(&ta, &tb, &o).unwrap();
        let expect = 0.5 * delta * delta * (o.wave_stiffness[0] + 1.0);
        assert!((e[0] - expect).abs() < 1e-15);
        let short = integrate(&o, &spec, &a, &IntegrationOptions::rk4(0.1, 1e-3, 10)).unwrap();
        assert_eq!(perturbation_energy(&ta, &short, &o), Err(DiagnosticsError::GridMismatch));
    }

    #[test]
    fn growth_rate_fit() {
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.02).collect();
        let series: Vec<f64> = times.iter().map(|t| 2.0 * (0.7 * t).exp()).collect();
        assert!((fit_growth_rate(&times, &series) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn source_power_constant_bounds_every_sample() {
        let spec = SourceSpec::new(3.0, 1.0, 20.0, 0.0, 1.0).unwrap();
        let o = ops(4, 4, &spec);
        let mut s = ModalState::zeros(&o);
        s.u[0] = 0.5;
        s.w[0] = 0.05;
        s.dw[0] = 1.0;
        let traj = integrate(&o, &spec, &s, &IntegrationOptions::rk4(3.0, 1e-3, 5)).unwrap();
        let c = fit_source_power_constant(&traj, &o, &spec).unwrap();
        assert!(c > 0.0);
        let rep = energy_series(&traj, &o, &spec, IntegralRule::CorrectedTrapezoid).unwrap();
        let times: Vec<f64> = rep.iter().map(|r| r.t).collect();
        let e: Vec<f64> = rep.iter().map(|r| r.energy).collect();
        assert!(check_gronwall_integral(&times, &e, c, 3.0).passed);
        assert!(check_gronwall(&times, &e, c, 3.0).passed);
        // no plate source: only the damping term remains, which is never positive
        let lin = SourceSpec::linear();
        let ol = ops(4, 4, &lin);
        let tl = integrate(&ol, &lin, &s, &IntegrationOptions::rk4(1.0, 1e-3, 10)).unwrap();
        assert_eq!(fit_source_power_constant(&tl, &ol, &lin).unwrap(), 0.0);
    }

    #[test]
    fn gronwall_integral_check() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        // E = e^t satisfies E = 1 + int E exactly
        let e: Vec<f64> = times.iter().map(|t| t.exp()).collect();
        let tight = check_gronwall_integral(&times, &e, 1.0, 0.0);
        assert!(tight.passed);
        assert!((tight.worst_ratio - 1.0).abs() < 1e-6);
        assert!(!check_gronwall_integral(&times, &e, 0.9, 0.0).passed);
        assert_eq!(tight.checked, 101);
    }
}
