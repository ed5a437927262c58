//! Scenario configuration (flat TOML keys) and initial-data presets.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{GalerkinOperators, SourceSpec};
use crate::error::ExperimentError;
use crate::geometry::{Domain, Point};
use crate::integrator::{IntegrationOptions, ModalState, Scheme, DEFAULT_BLOWUP_THRESHOLD};
use crate::quadrature::Quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    IdentityCheck,
    InequalityCheck,
    GlobalQ1,
    BlowupExplore,
    Perturb,
    Converge,
    Basis,
    DumpOps,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::IdentityCheck => "identity-check",
            ScenarioKind::InequalityCheck => "inequality-check",
            ScenarioKind::GlobalQ1 => "global-q1",
            ScenarioKind::BlowupExplore => "blowup-explore",
            ScenarioKind::Perturb => "perturb",
            ScenarioKind::Converge => "converge",
            ScenarioKind::Basis => "basis",
            ScenarioKind::DumpOps => "dump-ops",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Explicit coefficients from `modal_u`, `modal_du`, `modal_w`, `modal_dw`.
    Modal,
    /// Smooth compactly supported bumps projected onto the bases.
    Bump,
    /// Seeded random coefficients decaying like `(lambda_1 / lambda_j)^2`.
    RandomSmooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Rk4,
    ImplicitMidpoint,
}

/// Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub dim: usize,
    pub n_wave: usize,
    pub n_plate: usize,

    pub p: f64,
    pub rho_w: f64,
    pub a: f64,
    pub b: f64,
    pub q: f64,
    /// Plate damping coefficient (1 for the model equations).
    pub damping: f64,
    /// Multiplies the trace coupling (1 for the model equations).
    pub coupling_scale: f64,

    pub preset: Preset,
    pub amplitude: f64,
    /// Preset used to re-validate fitted constants out of sample.
    pub second_preset: Preset,
    pub modal_u: Vec<f64>,
    pub modal_du: Vec<f64>,
    pub modal_w: Vec<f64>,
    pub modal_dw: Vec<f64>,
    pub seed: u64,

    pub t_end: f64,
    pub dt: f64,
    pub stride: usize,
    pub scheme: SchemeName,
    pub midpoint_tol: f64,
    pub midpoint_max_iter: usize,
    pub blowup_threshold: f64,
    /// Gauss points per axis; chosen from the basis sizes when absent.
    pub quad_order: Option<usize>,

    /// Relative tolerance on energy identity residuals.
    pub identity_tol: f64,
    /// Whether blowup-explore asserts that blow-up is detected.
    pub expect_blowup: bool,
    /// Allowed relative disagreement of halt times under dt halving.
    pub halving_tolerance: f64,
    /// Majorant domination is checked up to this fraction of its blow-up time.
    pub majorant_fraction: f64,
    pub truncations: Vec<usize>,
    pub min_cauchy_ratio: f64,
    pub deltas: Vec<f64>,
    pub ratio_spread_tolerance: f64,
    pub scaling_tolerance: f64,

    pub out_dir: String,
    pub trajectory_csv: String,
    pub energy_csv: String,
    pub table_csv: String,
    pub summary_json: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::IdentityCheck,
            dim: 2,
            n_wave: 8,
            n_plate: 8,
            p: 1.0,
            rho_w: 0.0,
            a: 0.0,
            b: 0.0,
            q: 1.0,
            damping: 1.0,
            coupling_scale: 1.0,
            preset: Preset::Modal,
            amplitude: 1.0,
            second_preset: Preset::RandomSmooth,
            modal_u: vec![1.0],
            modal_du: Vec::new(),
            modal_w: vec![0.01],
            modal_dw: Vec::new(),
            seed: 7,
            t_end: 10.0,
            dt: 1e-3,
            stride: 10,
            scheme: SchemeName::Rk4,
            midpoint_tol: 1e-13,
            midpoint_max_iter: 100,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            quad_order: None,
            identity_tol: 1e-6,
            expect_blowup: true,
            halving_tolerance: 0.1,
            majorant_fraction: 0.9,
            truncations: vec![4, 8, 16],
            min_cauchy_ratio: 2.0,
            deltas: vec![1e-2, 1e-3, 1e-4],
            ratio_spread_tolerance: 0.1,
            scaling_tolerance: 0.2,
            out_dir: "out".into(),
            trajectory_csv: "trajectory.csv".into(),
            energy_csv: "energy.csv".into(),
            table_csv: "table.csv".into(),
            summary_json: "summary.json".into(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

impl ScenarioConfig {
    /// Built-in configuration of each scenario.
    pub fn preset_for(kind: ScenarioKind) -> Self {
        let base = Self {
            scenario: kind,
            ..Self::default()
        };
        match kind {
            ScenarioKind::IdentityCheck | ScenarioKind::Basis | ScenarioKind::DumpOps => base,
            ScenarioKind::InequalityCheck => Self {
                p: 5.0,
                rho_w: 1.0,
                t_end: 2.0,
                dt: 5e-4,
                stride: 1,
                n_wave: 6,
                n_plate: 6,
                ..base
            },
            ScenarioKind::GlobalQ1 => Self {
                p: 3.0,
                rho_w: 1.0,
                a: 50.0,
                q: 1.0,
                t_end: 50.0,
                dt: 2e-3,
                stride: 10,
                n_wave: 6,
                n_plate: 6,
                preset: Preset::Bump,
                second_preset: Preset::RandomSmooth,
                ..base
            },
            ScenarioKind::BlowupExplore => Self {
                p: 1.0,
                rho_w: 0.0,
                b: 1.0,
                q: 3.0,
                n_wave: 4,
                n_plate: 4,
                modal_u: Vec::new(),
                modal_w: vec![60.0],
                t_end: 1.0,
                dt: 1e-5,
                stride: 1,
                ..base
            },
            ScenarioKind::Perturb => Self {
                p: 3.0,
                rho_w: 1.0,
                t_end: 5.0,
                dt: 1e-3,
                stride: 10,
                n_wave: 6,
                n_plate: 6,
                preset: Preset::Bump,
                ..base
            },
            ScenarioKind::Converge => Self {
                p: 3.0,
                rho_w: 1.0,
                t_end: 2.0,
                dt: 2.5e-4,
                stride: 40,
                preset: Preset::Bump,
                ..base
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn source_spec(&self) -> Result<SourceSpec, ExperimentError> {
        Ok(SourceSpec::new(self.p, self.rho_w, self.a, self.b, self.q)?)
    }

    pub fn domain(&self) -> Result<Domain, ExperimentError> {
        Ok(Domain::new(self.dim)?)
    }

    pub fn scheme(&self) -> Scheme {
        match self.scheme {
            SchemeName::Rk4 => Scheme::Rk4,
            SchemeName::ImplicitMidpoint => Scheme::ImplicitMidpoint {
                tol: self.midpoint_tol,
                max_iter: self.midpoint_max_iter,
            },
        }
    }

    pub fn integration_options(&self) -> IntegrationOptions {
        IntegrationOptions::rk4(self.t_end, self.dt, self.stride)
            .with_scheme(self.scheme())
            .with_blowup_threshold(self.blowup_threshold)
    }

    /// Assembles operators for the given sizes with this config's quadrature
    /// order, damping and coupling scale.
    pub fn operators(&self, n_wave: usize, n_plate: usize) -> Result<GalerkinOperators, ExperimentError> {
        let domain = self.domain()?;
        let spec = self.source_spec()?;
        let order = self
            .quad_order
            .unwrap_or_else(|| crate::assembly::default_quadrature_order(&domain, n_wave, n_plate, &spec));
        let ops = crate::assembly::assemble(&domain, n_wave, n_plate, &Quadrature::new(order))?;
        let ops = if self.coupling_scale != 1.0 {
            ops.with_coupling_scale(self.coupling_scale)
        } else {
            ops
        };
        Ok(if self.damping != 1.0 { ops.with_damping(self.damping) } else { ops })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.source_spec()?;
        self.domain()?;
        if self.p > 7.0 {
            return Err(invalid(format!("scenarios support p <= 7, got {}", self.p)));
        }
        if self.n_wave == 0 || self.n_plate == 0 {
            return Err(invalid("n_wave and n_plate must be at least 1"));
        }
        if self.n_wave > 512 || self.n_plate > 128 {
            return Err(invalid("truncations above n_wave = 512 / n_plate = 128 are not supported"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(invalid(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= self.t_end) {
            return Err(invalid(format!("dt must lie in (0, t_end], got {}", self.dt)));
        }
        if self.stride == 0 {
            return Err(invalid("stride must be at least 1"));
        }
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(invalid(format!("seed must be at most {}", i64::MAX)));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(invalid("damping must be finite and non-negative"));
        }
        if !self.coupling_scale.is_finite() {
            return Err(invalid("coupling_scale must be finite"));
        }
        if !self.amplitude.is_finite() {
            return Err(invalid("amplitude must be finite"));
        }
        if !(self.blowup_threshold.is_finite() && self.blowup_threshold > 0.0) {
            return Err(invalid("blowup_threshold must be positive"));
        }
        if !(self.midpoint_tol > 0.0) || self.midpoint_max_iter == 0 {
            return Err(invalid("midpoint_tol must be positive and midpoint_max_iter at least 1"));
        }
        if let Some(order) = self.quad_order {
            if !(2..=256).contains(&order) {
                return Err(invalid("quad_order must lie in 2..=256"));
            }
        }
        for (name, list, n) in [
            ("modal_u", &self.modal_u, self.n_wave),
            ("modal_du", &self.modal_du, self.n_wave),
            ("modal_w", &self.modal_w, self.n_plate),
            ("modal_dw", &self.modal_dw, self.n_plate),
        ] {
            if self.preset == Preset::Modal && list.len() > n {
                return Err(invalid(format!("{name} has {} entries for a basis of {n}", list.len())));
            }
            if list.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("{name} holds a non-finite value")));
            }
        }
        for (name, v) in [
            ("identity_tol", self.identity_tol),
            ("halving_tolerance", self.halving_tolerance),
            ("min_cauchy_ratio", self.min_cauchy_ratio),
            ("ratio_spread_tolerance", self.ratio_spread_tolerance),
            ("scaling_tolerance", self.scaling_tolerance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.majorant_fraction > 0.0 && self.majorant_fraction <= 1.0) {
            return Err(invalid("majorant_fraction must lie in (0, 1]"));
        }
        match self.scenario {
            ScenarioKind::IdentityCheck | ScenarioKind::Perturb if self.p > 3.0 => {
                return Err(invalid(format!(
                    "{} requires p <= 3 (got {}); use inequality-check",
                    self.scenario.name(),
                    self.p
                )))
            }
            ScenarioKind::InequalityCheck if self.p <= 3.0 => {
                return Err(invalid(format!("inequality-check requires p > 3 (got {})", self.p)))
            }
            ScenarioKind::GlobalQ1 if self.q != 1.0 => {
                return Err(invalid(format!("global-q1 requires q = 1 (got {})", self.q)))
            }
            ScenarioKind::BlowupExplore if self.q <= 1.0 => {
                return Err(invalid(format!("blowup-explore requires q > 1 (got {})", self.q)))
            }
            ScenarioKind::Converge => {
                if self.truncations.len() < 2 || self.truncations.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("truncations must be strictly increasing with at least two entries"));
                }
                if self.truncations.iter().any(|&n| n == 0 || n > 128) {
                    return Err(invalid("truncations must lie in 1..=128"));
                }
            }
            ScenarioKind::Perturb => {
                if self.deltas.len() < 2 || self.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                    return Err(invalid("deltas must hold at least two positive values"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Initial data
// ---------------------------------------------------------------------------

/// Gauss points per axis used to project bump data, fixed so that the same
/// data result for every truncation.
pub const BUMP_QUAD_ORDER: usize = 48;

/// `(1 - r^2)^power` for `r < 1`, zero outside; peak value 1. The profile is
/// `C^{power-1}` across the edge of its support. Compactly supported `C^inf`
/// profiles have spectral coefficients that only start to decay at
/// truncations far beyond desk scale; this one decays algebraically from the
/// first modes on.
pub fn smooth_bump(center: &Point, radius: f64, power: i32, x: &Point, dims: usize) -> f64 {
    let r2: f64 = (0..dims).map(|k| ((x[k] - center[k]) / radius).powi(2)).sum();
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - r2).powi(power)
    }
}

const WAVE_BUMP_CENTER: Point = [0.5, 0.5, 0.5];
const WAVE_BUMP_RADIUS: f64 = 0.5;
const WAVE_BUMP_POWER: i32 = 3;
const PLATE_BUMP_CENTER: Point = [0.5, 0.5, 0.0];
const PLATE_BUMP_RADIUS: f64 = 0.45;
const PLATE_BUMP_POWER: i32 = 6;
const PLATE_BUMP_SCALE: f64 = 0.05;

fn bump_state(ops: &GalerkinOperators) -> ModalState {
    let domain = ops.domain;
    let quad = Quadrature::new(BUMP_QUAD_ORDER);
    let mut state = ModalState::zeros(ops);

    let (pts, wts) = quad.chamber_nodes(&domain);
    for (x, wt) in pts.iter().zip(&wts) {
        let phi = smooth_bump(&WAVE_BUMP_CENTER, WAVE_BUMP_RADIUS, WAVE_BUMP_POWER, x, domain.dim());
        if phi == 0.0 {
            continue;
        }
        for (j, m) in ops.wave_modes.iter().enumerate() {
            state.u[j] += wt * phi * m.eval(x);
        }
    }
    // The plate basis is orthonormal, so projection is a plain inner product.
    let (spts, swts) = quad.face_nodes(&domain);
    for (s, wt) in spts.iter().zip(&swts) {
        let psi = PLATE_BUMP_SCALE * smooth_bump(&PLATE_BUMP_CENTER, PLATE_BUMP_RADIUS, PLATE_BUMP_POWER, s, domain.face_dim());
        if psi == 0.0 {
            continue;
        }
        for n in 0..ops.n_plate() {
            state.w[n] += wt * psi * ops.plate.eval(n, s);
        }
    }
    state
}

fn random_block(seed: u64, stream: u64, eigenvalues: &[f64]) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let first = eigenvalues[0];
    DVector::from_iterator(
        eigenvalues.len(),
        eigenvalues
            .iter()
            .map(|&ev| rng.gen_range(-1.0..=1.0) * (first / ev).powi(2)),
    )
}

fn random_smooth_state(ops: &GalerkinOperators, seed: u64) -> ModalState {
    let lam: Vec<f64> = ops.wave_stiffness.iter().copied().collect();
    let mu = ops.plate.eigenvalues();
    let mut state = ModalState::zeros(ops);
    state.u = random_block(seed, 0, &lam);
    state.du = random_block(seed, 1, &lam);
    state.w = random_block(seed, 2, &mu) * PLATE_BUMP_SCALE;
    state.dw = random_block(seed, 3, &mu);
    state
}

fn fill(target: &mut DVector<f64>, values: &[f64]) {
    for (t, v) in target.iter_mut().zip(values) {
        *t = *v;
    }
}

/// Initial state of the given preset, scaled by `config.amplitude`.
pub fn initial_state(
    config: &ScenarioConfig,
    ops: &GalerkinOperators,
    preset: Preset,
) -> Result<ModalState, ExperimentError> {
    let state = match preset {
        Preset::Modal => {
            let mut s = ModalState::zeros(ops);
            for (list, n) in [(&config.modal_u, ops.n_wave()), (&config.modal_du, ops.n_wave())] {
                if list.len() > n {
                    return Err(invalid(format!("modal coefficients exceed wave basis of {n}")));
                }
            }
            for (list, n) in [(&config.modal_w, ops.n_plate()), (&config.modal_dw, ops.n_plate())] {
                if list.len() > n {
                    return Err(invalid(format!("modal coefficients exceed plate basis of {n}")));
                }
            }
            fill(&mut s.u, &config.modal_u);
            fill(&mut s.du, &config.modal_du);
            fill(&mut s.w, &config.modal_w);
            fill(&mut s.dw, &config.modal_dw);
            s
        }
        Preset::Bump => bump_state(ops),
        Preset::RandomSmooth => random_smooth_state(ops, config.seed),
    };
    Ok(state.scaled(config.amplitude))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in [
            ScenarioKind::IdentityCheck,
            ScenarioKind::InequalityCheck,
            ScenarioKind::GlobalQ1,
            ScenarioKind::BlowupExplore,
            ScenarioKind::Perturb,
            ScenarioKind::Converge,
            ScenarioKind::Basis,
            ScenarioKind::DumpOps,
        ] {
            ScenarioConfig::preset_for(kind).validate().unwrap();
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::preset_for(ScenarioKind::Converge);
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ScenarioConfig::from_toml_str("scenario = \"global-q1\"\nq = 1.0\nt_end = 3.0\n").unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::GlobalQ1);
        assert_eq!(cfg.t_end, 3.0);
        assert_eq!(cfg.n_wave, 8);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("dim = 4").is_err());
        assert!(ScenarioConfig::from_toml_str("dt = -1.0").is_err());
        assert!(ScenarioConfig::from_toml_str("stride = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("p = 0.5").is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"inequality-check\"\np = 9.0").is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"perturb\"\np = 5.0\nrho_w = 1.0").is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"global-q1\"\nq = 2.0").is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"converge\"\ntruncations = [8, 4]").is_err());
        assert!(ScenarioConfig::from_toml_str("n_wave = 2\nmodal_u = [1.0, 2.0, 3.0]").is_err());
        let big_seed = ScenarioConfig {
            seed: u64::MAX,
            ..ScenarioConfig::default()
        };
        assert!(big_seed.validate().is_err());
    }

    #[test]
    fn bump_data_nest_across_truncations() {
        let cfg = ScenarioConfig::preset_for(ScenarioKind::Converge);
        let small = cfg.operators(4, 4).unwrap();
        let large = cfg.operators(8, 8).unwrap();
        let a = initial_state(&cfg, &small, Preset::Bump).unwrap();
        let b = initial_state(&cfg, &large, Preset::Bump).unwrap();
        for j in 0..4 {
            assert_eq!(a.u[j], b.u[j]);
            assert_eq!(a.w[j], b.w[j]);
        }
        assert!(a.u[0].abs() > 0.05 && a.w[0].abs() > 1e-3);
    }

    #[test]
    fn random_preset_is_seeded() {
        let mut cfg = ScenarioConfig::default();
        let ops = cfg.operators(6, 4).unwrap();
        let a = initial_state(&cfg, &ops, Preset::RandomSmooth).unwrap();
        let b = initial_state(&cfg, &ops, Preset::RandomSmooth).unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        cfg.seed += 1;
        let c = initial_state(&cfg, &ops, Preset::RandomSmooth).unwrap();
        assert_ne!(a.coefficients(), c.coefficients());
        // later coefficients decay with the eigenvalues
        assert!(a.u[5].abs() <= (ops.wave_stiffness[0] / ops.wave_stiffness[5]).powi(2));
    }

    #[test]
    fn modal_preset_scales() {
        let cfg = ScenarioConfig {
            amplitude: 2.0,
            modal_du: vec![0.0, 0.5],
            ..ScenarioConfig::default()
        };
        let ops = cfg.operators(4, 4).unwrap();
        let s = initial_state(&cfg, &ops, Preset::Modal).unwrap();
        assert_eq!(s.u[0], 2.0);
        assert_eq!(s.du[1], 1.0);
        assert_eq!(s.w[0], 0.02);
    }
}
