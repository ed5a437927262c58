//! Scenario runner: executes a configured experiment, evaluates its asserted
//! properties and writes trajectory, energy, table and summary artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{default_quadrature_order, GalerkinOperators, SourceSpec};
use crate::beam::{beam_residual, max_abs_deviation, solve_beam_roots, weighted_gram};
use crate::config::{initial_state, ScenarioConfig, ScenarioKind};
use crate::diagnostics::{
    blowup_time_estimate, check_gronwall, check_gronwall_integral, check_majorant, damping_ledger_monotone, energy, energy_series,
    fit_gronwall_constant, fit_growth_rate, fit_source_power_constant, fit_volterra, gronwall_bound, majorant_blowup_time, perturbation_energy, EnergyReport,
    IntegralRule,
};
use crate::error::ExperimentError;
use crate::integrator::{integrate, ModalState, Trajectory};
use crate::quadrature::{GaussLegendre, Quadrature};

/// `Some(x)` for finite `x`; JSON has no encoding for infinities and NaN.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl Property {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= limit,
            value: finite(value),
            limit: finite(limit),
            detail: format!("{value:.6e} <= {limit:.6e}"),
        }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= limit,
            value: finite(value),
            limit: finite(limit),
            detail: format!("{value:.6e} >= {limit:.6e}"),
        }
    }

    pub fn flag(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            value: None,
            limit: None,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub pass: bool,
    pub properties: Vec<Property>,
    pub constants: BTreeMap<String, Option<f64>>,
    pub halt_time: Option<f64>,
    pub max_residual: Option<f64>,
    pub wall_ms: u64,
}

impl RunSummary {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.into(),
            pass: true,
            properties: Vec::new(),
            constants: BTreeMap::new(),
            halt_time: None,
            max_residual: None,
            wall_ms: 0,
        }
    }

    /// Adds a property. Each name may be recorded once.
    pub fn record(&mut self, property: Property) {
        assert!(
            self.property(&property.name).is_none(),
            "property {} recorded twice",
            property.name
        );
        self.pass &= property.pass;
        self.properties.push(property);
    }

    pub fn constant(&mut self, name: &str, value: f64) {
        self.constants.insert(name.into(), finite(value));
    }

    pub fn property(&self, name: &str) -> Option<&Property> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn failed(&self) -> Vec<&Property> {
        self.properties.iter().filter(|p| !p.pass).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Operators in plain nested-vector form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDump {
    pub dim: usize,
    pub quad_order: usize,
    pub damping: f64,
    pub wave_modes: Vec<Vec<usize>>,
    pub plate_modes: Vec<Vec<usize>>,
    pub beam_roots: Vec<f64>,
    pub wave_stiffness: Vec<f64>,
    pub plate_mass: Vec<Vec<f64>>,
    pub plate_bending: Vec<Vec<f64>>,
    pub coupling: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl OperatorDump {
    pub fn from_operators(ops: &GalerkinOperators) -> Self {
        Self {
            dim: ops.domain.dim(),
            quad_order: ops.quad_order,
            damping: ops.damping,
            wave_modes: ops.wave_modes.iter().map(|m| m.index.clone()).collect(),
            plate_modes: ops
                .plate
                .modes
                .iter()
                .map(|m| m.factors.iter().map(|&f| ops.plate.beams[f].index).collect())
                .collect(),
            beam_roots: ops.plate.beams.iter().map(|b| b.beta).collect(),
            wave_stiffness: ops.wave_stiffness.iter().copied().collect(),
            plate_mass: rows(&ops.plate_mass),
            plate_bending: rows(&ops.plate_bending),
            coupling: rows(&ops.coupling),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub summary: RunSummary,
    pub trajectory: Option<Trajectory>,
    pub energy: Vec<EnergyReport>,
    pub table: Option<Table>,
    pub operators: Option<OperatorDump>,
}

impl ScenarioRun {
    fn new(summary: RunSummary) -> Self {
        Self {
            summary,
            trajectory: None,
            energy: Vec::new(),
            table: None,
            operators: None,
        }
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, ExperimentError> {
    config.validate()?;
    let start = Instant::now();
    let mut run = match config.scenario {
        ScenarioKind::IdentityCheck => energy_balance(config, false)?,
        ScenarioKind::InequalityCheck => energy_balance(config, true)?,
        ScenarioKind::GlobalQ1 => global_q1(config)?,
        ScenarioKind::BlowupExplore => blowup_explore(config)?,
        ScenarioKind::Perturb => perturbation_study(config)?,
        ScenarioKind::Converge => convergence_study(config)?,
        ScenarioKind::Basis => basis_check(config)?,
        ScenarioKind::DumpOps => dump_ops(config)?,
    };
    run.summary.wall_ms = start.elapsed().as_millis() as u64;
    Ok(run)
}

fn simulate(
    config: &ScenarioConfig,
    ops: &GalerkinOperators,
    spec: &SourceSpec,
    initial: &ModalState,
) -> Result<(Trajectory, Vec<EnergyReport>), ExperimentError> {
    let traj = integrate(ops, spec, initial, &config.integration_options())?;
    let reports = energy_series(&traj, ops, spec, IntegralRule::CorrectedTrapezoid)?;
    Ok((traj, reports))
}

fn energies(reports: &[EnergyReport]) -> Vec<f64> {
    reports.iter().map(|r| r.energy).collect()
}

fn record_common(summary: &mut RunSummary, reports: &[EnergyReport]) {
    let min_energy = reports.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    summary.record(Property::at_least("energy_nonnegative", min_energy, 0.0));
    summary.record(Property::flag(
        "damping_monotone",
        damping_ledger_monotone(reports),
        "cumulative damping never decreases",
    ));
}

fn no_blowup(name: &str, traj: &Trajectory) -> Property {
    Property::flag(
        name,
        traj.blowup.is_none(),
        match traj.blowup {
            None => "no blow-up detected".to_string(),
            Some(b) => format!("blow-up at t = {}", b.time),
        },
    )
}

/// Energy identity (p <= 3) or one-sided energy inequality (p > 3).
fn energy_balance(config: &ScenarioConfig, one_sided: bool) -> Result<ScenarioRun, ExperimentError> {
    let spec = config.source_spec()?;
    let ops = config.operators(config.n_wave, config.n_plate)?;
    let x0 = initial_state(config, &ops, config.preset)?;
    let (traj, reports) = simulate(config, &ops, &spec, &x0)?;
    let e0 = reports[0].energy;
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let max_abs_res = reports.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);

    let mut summary = RunSummary::new(config.scenario.name());
    if one_sided {
        let max_res = reports.iter().map(|r| r.residual).fold(f64::NEG_INFINITY, f64::max);
        let positive = reports.iter().filter(|r| r.residual > 0.0).count();
        summary.record(Property::at_most("energy_inequality", max_res / scale, config.identity_tol));
        summary.constant("positive_residual_samples", positive as f64);
    } else {
        summary.record(Property::at_most("energy_identity", max_abs_res / scale, config.identity_tol));
    }
    record_common(&mut summary, &reports);
    summary.record(no_blowup("no_blowup", &traj));
    summary.constant("E0", e0);
    summary.constant("max_relative_residual", max_abs_res / scale);
    summary.halt_time = finite(traj.halt_time());
    summary.max_residual = finite(max_abs_res);

    let mut run = ScenarioRun::new(summary);
    run.trajectory = Some(traj);
    run.energy = reports;
    Ok(run)
}

/// Rescales `state` so that its positive energy equals `target`.
pub fn normalize_energy(
    ops: &GalerkinOperators,
    spec: &SourceSpec,
    state: &ModalState,
    target: f64,
) -> Result<ModalState, ExperimentError> {
    let e = |s: f64| energy(ops, spec, &state.scaled(s)).energy;
    if !(target > 0.0) || e(1.0) <= 0.0 {
        return Err(ExperimentError::Config("cannot normalize zero-energy data".into()));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while e(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if e(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(state.scaled(0.5 * (lo + hi)))
}

/// Linear plate source: fit the Gronwall constant on one data set and
/// re-validate it on a second set with the same initial energy.
fn global_q1(config: &ScenarioConfig) -> Result<ScenarioRun, ExperimentError> {
    let spec = config.source_spec()?;
    let ops = config.operators(config.n_wave, config.n_plate)?;
    let x0 = initial_state(config, &ops, config.preset)?;
    let (traj, reports) = simulate(config, &ops, &spec, &x0)?;
    let e = energies(&reports);
    let times = traj.times();
    let horizon = config.t_end;
    let c = fit_source_power_constant(&traj, &ops, &spec)?;
    let c_history = fit_gronwall_constant(&times, &e, horizon);

    let y0 = initial_state(config, &ops, config.second_preset)?;
    let y0 = normalize_energy(&ops, &spec, &y0, e[0])?;
    let (traj2, reports2) = simulate(config, &ops, &spec, &y0)?;
    let e2 = energies(&reports2);
    let times2 = traj2.times();

    let mut summary = RunSummary::new(config.scenario.name());
    summary.record(no_blowup("no_blowup", &traj));
    summary.record(no_blowup("no_blowup_second_preset", &traj2));
    let limit = 1.0 + 1e-12;
    let checks = [
        ("gronwall_integral_fitted", check_gronwall_integral(&times, &e, c, horizon)),
        ("gronwall_bound_fitted", check_gronwall(&times, &e, c, horizon)),
        ("gronwall_integral_revalidated", check_gronwall_integral(&times2, &e2, c, horizon)),
        ("gronwall_bound_revalidated", check_gronwall(&times2, &e2, c, horizon)),
    ];
    for (name, check) in checks {
        summary.record(Property::at_most(name, check.worst_ratio, limit));
    }
    record_common(&mut summary, &reports);
    let max_res = reports.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    summary.constant("C", c);
    summary.constant("C_second_preset", fit_source_power_constant(&traj2, &ops, &spec)?);
    summary.constant("C_history", c_history);
    summary.constant("E0", e[0]);
    summary.constant("E0_second_preset", e2[0]);
    summary.constant("gronwall_bound_at_T", gronwall_bound(e[0], c, horizon));
    summary.halt_time = finite(traj.halt_time().min(traj2.halt_time()));
    summary.max_residual = finite(max_res);

    let mut run = ScenarioRun::new(summary);
    run.trajectory = Some(traj);
    run.energy = reports;
    Ok(run)
}

/// Superlinear plate source: blow-up detection, halt-time stability under dt
/// halving and domination by the fitted Volterra majorant.
fn blowup_explore(config: &ScenarioConfig) -> Result<ScenarioRun, ExperimentError> {
    let spec = config.source_spec()?;
    let ops = config.operators(config.n_wave, config.n_plate)?;
    let x0 = initial_state(config, &ops, config.preset)?;
    let half = ScenarioConfig {
        dt: 0.5 * config.dt,
        stride: 2 * config.stride,
        ..config.clone()
    };
    let (main_run, half_run) = rayon::join(
        || simulate(config, &ops, &spec, &x0),
        || integrate(&ops, &spec, &x0, &half.integration_options()),
    );
    let (traj, reports) = main_run?;
    let traj_half = half_run?;
    let times = traj.times();
    let y: Vec<f64> = reports.iter().map(|r| 1.0 + r.energy).collect();
    let fit = fit_volterra(&times, &y, spec.q);
    let check = check_majorant(&times, &y, &fit, config.majorant_fraction)?;
    let t_major = majorant_blowup_time(fit.c, fit.c1, fit.q);

    let mut summary = RunSummary::new(config.scenario.name());
    let halt = traj.halt_time();
    let halt_half = traj_half.halt_time();
    if config.expect_blowup {
        summary.record(Property::flag(
            "blowup_detected",
            traj.blowup.is_some() && traj_half.blowup.is_some(),
            format!("halt times {halt} (dt) and {halt_half} (dt/2)"),
        ));
        let rel = (halt - halt_half).abs() / halt_half;
        summary.record(Property::at_most("halt_time_agreement", rel, config.halving_tolerance));
        summary.record(Property::at_most("majorant_blowup_precedes_halt", t_major, halt * (1.0 + 1e-9)));
    }
    summary.record(Property {
        name: "majorant_domination".into(),
        pass: check.passed,
        value: finite(check.worst_ratio),
        limit: Some(1.0),
        detail: format!(
            "max (1 + E)/z = {:.6e} over {} samples up to {} x {:.6e}",
            check.worst_ratio, check.checked, config.majorant_fraction, t_major
        ),
    });
    record_common(&mut summary, &reports);
    summary.constant("C", fit.c);
    summary.constant("C1", fit.c1);
    summary.constant("majorant_blowup_time", t_major);
    summary.constant("halt_time_half_dt", halt_half);
    if fit.c1 > 0.0 {
        let est = blowup_time_estimate(reports[0].energy, fit.c1, config.t_end, spec.q)?;
        summary.constant("T1_estimate", est.t1);
        summary.constant("T_prime", est.t_prime);
    }
    summary.halt_time = finite(halt);
    summary.max_residual = finite(reports.iter().map(|r| r.residual.abs()).fold(0.0, f64::max));

    let mut run = ScenarioRun::new(summary);
    run.trajectory = Some(traj);
    run.energy = reports;
    Ok(run)
}

/// Continuous dependence on the initial data: shifts the first wave
/// coefficient by each `delta` and compares difference energies.
pub fn perturbation_study(config: &ScenarioConfig) -> Result<ScenarioRun, ExperimentError> {
    if config.p > 3.0 {
        return Err(ExperimentError::Config(format!(
            "perturbation study requires p <= 3 (got {})",
            config.p
        )));
    }
    let spec = config.source_spec()?;
    let ops = config.operators(config.n_wave, config.n_plate)?;
    let x0 = initial_state(config, &ops, config.preset)?;
    let opts = config.integration_options();
    let mut starts = vec![x0.clone()];
    for &d in &config.deltas {
        let mut x = x0.clone();
        x.u[0] += d;
        starts.push(x);
    }
    let trajs: Vec<Trajectory> = starts
        .par_iter()
        .map(|x| integrate(&ops, &spec, x, &opts))
        .collect::<Result<_, _>>()?;
    let base = &trajs[0];
    let times = base.times();

    let mut table = Table {
        columns: ["delta", "E_tilde_0", "sup_E_tilde", "ratio", "C_R"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    let mut sups = Vec::new();
    let mut ratios = Vec::new();
    let mut rates = Vec::new();
    for (d, traj) in config.deltas.iter().zip(&trajs[1..]) {
        let e = perturbation_energy(base, traj, &ops)?;
        let sup = e.iter().copied().fold(0.0, f64::max);
        let ratio = sup / e[0];
        let rate = fit_growth_rate(&times, &e);
        table.rows.push(vec![*d, e[0], sup, ratio, rate]);
        sups.push(sup);
        ratios.push(ratio);
        rates.push(rate);
    }

    let mut summary = RunSummary::new(config.scenario.name());
    summary.record(Property::flag(
        "no_blowup",
        trajs.iter().all(|t| t.blowup.is_none()),
        "all perturbed runs reach the horizon",
    ));
    let rmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let rmax = ratios.iter().copied().fold(0.0, f64::max);
    summary.record(Property::at_most(
        "ratio_stability",
        (rmax - rmin) / rmin,
        config.ratio_spread_tolerance,
    ));
    let worst_scaling = config
        .deltas
        .windows(2)
        .zip(sups.windows(2))
        .map(|(d, s)| ((s[0] / s[1]) / (d[0] / d[1]).powi(2) - 1.0).abs())
        .fold(0.0, f64::max);
    summary.record(Property::at_most("quadratic_scaling", worst_scaling, config.scaling_tolerance));
    for (i, r) in rates.iter().enumerate() {
        summary.constant(&format!("C_R_{i}"), *r);
    }
    summary.constant("C_R", rates.iter().copied().fold(0.0, f64::max));
    summary.constant("ratio_spread", (rmax - rmin) / rmin);
    summary.halt_time = finite(trajs.iter().map(Trajectory::halt_time).fold(f64::INFINITY, f64::min));

    let mut run = ScenarioRun::new(summary);
    run.table = Some(table);
    Ok(run)
}

/// `sqrt(sum (1 + lambda_j) du_j^2)` and `sqrt(dw^T K dw)`.
fn sobolev_distance(ops: &GalerkinOperators, a: &ModalState, b: &ModalState) -> (f64, f64) {
    let d = a.difference(b);
    let h1: f64 = d
        .u
        .iter()
        .zip(ops.wave_stiffness.iter())
        .map(|(c, l)| (1.0 + l) * c * c)
        .sum();
    let h2 = d.w.dot(&(&ops.plate_bending * &d.w));
    (h1.sqrt(), h2.max(0.0).sqrt())
}

/// Cauchy differences between consecutive truncations `N` with
/// `n_wave = n_plate = N`, on a common quadrature order and time grid.
pub fn convergence_study(config: &ScenarioConfig) -> Result<ScenarioRun, ExperimentError> {
    let spec = config.source_spec()?;
    let domain = config.domain()?;
    let largest = *config.truncations.last().expect("validated");
    let order = config
        .quad_order
        .unwrap_or_else(|| default_quadrature_order(&domain, largest, largest, &spec));
    let fixed = ScenarioConfig {
        quad_order: Some(order),
        ..config.clone()
    };
    let runs: Vec<(GalerkinOperators, Trajectory)> = config
        .truncations
        .par_iter()
        .map(|&n| -> Result<_, ExperimentError> {
            let ops = fixed.operators(n, n)?;
            let x0 = initial_state(&fixed, &ops, fixed.preset)?;
            let traj = integrate(&ops, &spec, &x0, &fixed.integration_options())?;
            Ok((ops, traj))
        })
        .collect::<Result<_, _>>()?;

    let mut table = Table {
        columns: ["N", "halt_time", "wave_h1_diff", "plate_h2_diff"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    let mut diffs = Vec::new();
    for pair in runs.windows(2) {
        let coarse = &pair[0].1;
        let (fine_ops, fine) = &pair[1];
        let (mut wave, mut plate) = (0.0f64, 0.0f64);
        for (a, b) in coarse.samples.iter().zip(&fine.samples) {
            let (dw, dp) = sobolev_distance(fine_ops, &fine_ops.embed_state(a), b);
            wave = wave.max(dw);
            plate = plate.max(dp);
        }
        diffs.push((wave, plate));
    }
    for (i, (&n, (_, traj))) in config.truncations.iter().zip(&runs).enumerate() {
        let (w, p) = diffs.get(i).copied().unwrap_or((f64::NAN, f64::NAN));
        table.rows.push(vec![n as f64, traj.halt_time(), w, p]);
    }

    let mut summary = RunSummary::new(config.scenario.name());
    let mut min_wave_ratio = f64::INFINITY;
    let mut min_plate_ratio = f64::INFINITY;
    for (i, d) in diffs.windows(2).enumerate() {
        let rw = d[0].0 / d[1].0;
        let rp = d[0].1 / d[1].1;
        summary.constant(&format!("wave_ratio_{i}"), rw);
        summary.constant(&format!("plate_ratio_{i}"), rp);
        min_wave_ratio = min_wave_ratio.min(rw);
        min_plate_ratio = min_plate_ratio.min(rp);
    }
    if diffs.len() >= 2 {
        summary.record(Property::at_least("wave_cauchy_ratio", min_wave_ratio, config.min_cauchy_ratio));
        summary.record(Property::at_least("plate_cauchy_ratio", min_plate_ratio, config.min_cauchy_ratio));
    }
    for (i, (w, p)) in diffs.iter().enumerate() {
        summary.constant(&format!("wave_h1_diff_{i}"), *w);
        summary.constant(&format!("plate_h2_diff_{i}"), *p);
    }
    let halts: Vec<f64> = runs.iter().map(|(_, t)| t.halt_time()).collect();
    let stable = halts
        .windows(2)
        .all(|h| h[1] >= h[0] * (1.0 - config.halving_tolerance));
    summary.record(Property::flag(
        "halt_times_stable",
        stable,
        format!("halt times {halts:?}"),
    ));
    summary.halt_time = finite(halts.iter().copied().fold(f64::INFINITY, f64::min));

    let mut run = ScenarioRun::new(summary);
    run.table = Some(table);
    Ok(run)
}

/// Deviations of the discrete bases from orthonormality and from their
/// Rayleigh identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisReport {
    pub max_beam_residual: f64,
    pub wave_gram_deviation: f64,
    pub plate_gram_deviation: f64,
    pub wave_rayleigh_deviation: f64,
    pub plate_rayleigh_deviation: f64,
    pub table: Table,
}

/// `int phi_i phi_i''` on (0, 1), by high-order Gauss-Legendre.
fn beam_curvature_moment(beam: &crate::beam::BeamMode) -> f64 {
    GaussLegendre::new(2 * beam.index + 48).integrate(|x| beam.eval(x) * beam.second_derivative(x))
}

pub fn basis_report(ops: &GalerkinOperators) -> BasisReport {
    let domain = ops.domain;
    let quad = Quadrature::new(ops.quad_order);
    let roots: Vec<f64> = ops.plate.beams.iter().map(|b| b.beta).collect();
    let max_beam_residual = roots.iter().map(|&b| beam_residual(b).abs()).fold(0.0, f64::max);

    let (pts, wts) = quad.chamber_nodes(&domain);
    let values = DMatrix::from_fn(pts.len(), ops.n_wave(), |k, j| ops.wave_modes[j].eval(&pts[k]));
    let wave_gram_deviation = max_abs_deviation(&weighted_gram(&values, &wts), |_| 1.0);
    let plate_gram_deviation = max_abs_deviation(&ops.plate.l2_gram, |_| 1.0);

    let mut table = Table {
        columns: ["family", "index", "eigenvalue", "normalization", "rayleigh"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    let mut wave_rayleigh_deviation: f64 = 0.0;
    for (j, m) in ops.wave_modes.iter().enumerate() {
        let dirichlet: f64 = pts
            .iter()
            .zip(&wts)
            .map(|(x, w)| {
                let g = m.gradient(x);
                w * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
            })
            .sum();
        wave_rayleigh_deviation = wave_rayleigh_deviation.max((dirichlet - m.eigenvalue).abs() / m.eigenvalue);
        table.rows.push(vec![0.0, j as f64, m.eigenvalue, m.amplitude, dirichlet]);
    }
    let moments: Vec<f64> = ops.plate.beams.iter().map(beam_curvature_moment).collect();
    let mut plate_rayleigh_deviation: f64 = 0.0;
    for (n, mode) in ops.plate.modes.iter().enumerate() {
        let quartic: f64 = mode.factors.iter().map(|&f| ops.plate.beams[f].eigenvalue).sum();
        let cross = if mode.factors.len() == 2 {
            2.0 * moments[mode.factors[0]] * moments[mode.factors[1]]
        } else {
            0.0
        };
        let reference = quartic + cross;
        let computed = ops.plate.bending_gram[(n, n)];
        plate_rayleigh_deviation = plate_rayleigh_deviation.max((computed - reference).abs() / reference);
        let normalization: f64 = mode.factors.iter().map(|&f| ops.plate.beams[f].norm_const).product();
        table.rows.push(vec![1.0, n as f64, reference, normalization, computed]);
    }
    BasisReport {
        max_beam_residual,
        wave_gram_deviation,
        plate_gram_deviation,
        wave_rayleigh_deviation,
        plate_rayleigh_deviation,
        table,
    }
}

fn basis_check(config: &ScenarioConfig) -> Result<ScenarioRun, ExperimentError> {
    let ops = config.operators(config.n_wave, config.n_plate)?;
    let report = basis_report(&ops);
    let mut summary = RunSummary::new(config.scenario.name());
    summary.record(Property::at_most("beam_residual", report.max_beam_residual, 1e-12));
    summary.record(Property::at_most("wave_gram", report.wave_gram_deviation, 1e-8));
    summary.record(Property::at_most("plate_gram", report.plate_gram_deviation, 1e-8));
    summary.record(Property::at_most("wave_rayleigh", report.wave_rayleigh_deviation, 1e-6));
    summary.record(Property::at_most("plate_rayleigh", report.plate_rayleigh_deviation, 1e-6));
    let roots = solve_beam_roots(ops.plate.beams.len())?;
    for (i, b) in roots.iter().enumerate().take(8) {
        summary.constant(&format!("beta_{}", i + 1), *b);
    }
    let mut run = ScenarioRun::new(summary);
    run.table = Some(report.table);
    Ok(run)
}

fn dump_ops(config: &ScenarioConfig) -> Result<ScenarioRun, ExperimentError> {
    let ops = config.operators(config.n_wave, config.n_plate)?;
    let mut summary = RunSummary::new(config.scenario.name());
    let min_eig = |m: &DMatrix<f64>| SymmetricEigen::new(m.clone()).eigenvalues.min();
    summary.record(Property::at_least("mass_positive_definite", min_eig(&ops.plate_mass), f64::MIN_POSITIVE));
    summary.record(Property::at_least(
        "bending_positive_definite",
        min_eig(&ops.plate_bending),
        f64::MIN_POSITIVE,
    ));
    summary.record(Property::flag(
        "coupling_finite",
        ops.coupling.iter().all(|v| v.is_finite()),
        format!("{} x {} coupling matrix", ops.n_wave(), ops.n_plate()),
    ));
    summary.constant("quad_order", ops.quad_order as f64);
    let mut run = ScenarioRun::new(summary);
    run.operators = Some(OperatorDump::from_operators(&ops));
    Ok(run)
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    let (nw, np) = traj
        .samples
        .first()
        .map_or((0, 0), |s| (s.n_wave(), s.n_plate()));
    let mut header = vec!["t".to_string()];
    for (prefix, n) in [("u", nw), ("du", nw), ("w", np), ("dw", np)] {
        header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    w.write_record(&header)?;
    for s in &traj.samples {
        let mut rec = vec![s.t.to_string()];
        rec.extend(s.coefficients().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_energy_csv(reports: &[EnergyReport], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(r)?;
    }
    if reports.is_empty() {
        w.write_record(crate::diagnostics::ENERGY_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_csv(table: &Table, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every artifact of `run` under `out_dir`; returns the paths written.
pub fn write_artifacts(
    run: &ScenarioRun,
    config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    if let Some(traj) = &run.trajectory {
        let p = out_dir.join(&config.trajectory_csv);
        write_trajectory_csv(traj, &p)?;
        written.push(p);
    }
    if !run.energy.is_empty() {
        let p = out_dir.join(&config.energy_csv);
        write_energy_csv(&run.energy, &p)?;
        written.push(p);
    }
    if let Some(table) = &run.table {
        let p = out_dir.join(&config.table_csv);
        write_table_csv(table, &p)?;
        written.push(p);
    }
    if let Some(ops) = &run.operators {
        let p = out_dir.join("operators.json");
        std::fs::write(&p, serde_json::to_string_pretty(ops)?)?;
        written.push(p);
    }
    let p = out_dir.join(&config.summary_json);
    std::fs::write(&p, run.summary.to_json())?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn quick(kind: ScenarioKind) -> ScenarioConfig {
        ScenarioConfig {
            n_wave: 4,
            n_plate: 4,
            t_end: 0.5,
            dt: 1e-3,
            stride: 10,
            ..ScenarioConfig::preset_for(kind)
        }
    }

    #[test]
    fn summary_json_round_trip() {
        let mut s = RunSummary::new("x");
        s.record(Property::at_most("a", 1.0, 2.0));
        s.record(Property::at_least("b", 1.0, 2.0));
        s.constant("C", 0.1 + 0.2);
        s.constant("T", f64::INFINITY);
        s.halt_time = Some(1.0 / 3.0);
        assert!(!s.pass);
        assert_eq!(s.failed().len(), 1);
        let back = RunSummary::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.constants["T"], None);
    }

    #[test]
    #[should_panic(expected = "recorded twice")]
    fn duplicate_property_rejected() {
        let mut s = RunSummary::new("x");
        s.record(Property::flag("a", true, ""));
        s.record(Property::flag("a", true, ""));
    }

    #[test]
    fn identity_check_quick() {
        let run = run_scenario(&quick(ScenarioKind::IdentityCheck)).unwrap();
        assert!(run.summary.pass, "{:?}", run.summary.failed());
        assert_eq!(run.energy.len(), 51);
    }

    #[test]
    fn normalization_matches_target() {
        let cfg = ScenarioConfig::preset_for(ScenarioKind::GlobalQ1);
        let spec = cfg.source_spec().unwrap();
        let ops = cfg.operators(4, 4).unwrap();
        let x = initial_state(&cfg, &ops, Preset::RandomSmooth).unwrap();
        let y = normalize_energy(&ops, &spec, &x, 3.5).unwrap();
        assert!((energy(&ops, &spec, &y).energy - 3.5).abs() < 1e-12);
    }

    #[test]
    fn decoupled_linear_convergence_is_exact() {
        let cfg = ScenarioConfig {
            scenario: ScenarioKind::Converge,
            coupling_scale: 0.0,
            truncations: vec![2, 4, 8],
            modal_w: vec![0.01, 0.002],
            t_end: 0.5,
            dt: 1e-3,
            ..ScenarioConfig::default()
        };
        let run = run_scenario(&cfg).unwrap();
        for row in &run.table.unwrap().rows[..2] {
            assert!(row[2] <= 1e-10 && row[3] <= 1e-10, "{row:?}");
        }
    }

    #[test]
    fn basis_and_dump_ops() {
        let run = run_scenario(&ScenarioConfig::preset_for(ScenarioKind::Basis)).unwrap();
        assert!(run.summary.pass, "{:?}", run.summary.failed());
        let run = run_scenario(&ScenarioConfig::preset_for(ScenarioKind::DumpOps)).unwrap();
        assert!(run.summary.pass);
        let dump = run.operators.unwrap();
        assert_eq!(dump.coupling.len(), 8);
        assert_eq!(dump.wave_modes[0], vec![1, 1]);
    }

    #[test]
    fn artifacts_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick(ScenarioKind::IdentityCheck);
        let run = run_scenario(&cfg).unwrap();
        let paths = write_artifacts(&run, &cfg, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let energy = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
        assert_eq!(
            energy.lines().next().unwrap(),
            crate::diagnostics::ENERGY_COLUMNS.join(",")
        );
        let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert!(traj.starts_with("t,u_0,u_1,u_2,u_3,du_0"));
        let summary =
            RunSummary::from_json(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary, run.summary);
    }
}
