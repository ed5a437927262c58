//! Finite-dimensional operators of the Galerkin system and the collocated
//! projections of the nonlinear sources.
//!
//! With wave coefficients `u` and plate coefficients `w` the system reads
//!
//! ```text
//! u''   = -L u + C w' - F(u)
//! M w'' = -K w - d M w' - C^T u' + G(w)
//! ```
//!
//! where `L` is the (diagonal) acoustic stiffness, `M` and `K` the plate mass
//! and bending matrices, `C[j][n] = (s_n, trace e_j)` on the elastic face and
//! `d` the plate damping coefficient (one in the physical model). `F` and `G`
//! are the sources collocated at quadrature nodes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::beam::{build_plate_basis, max_abs_deviation, plate_max_index, weighted_gram, PlateBasis};
use crate::error::{BasisError, SourceError};
use crate::geometry::{wave_modes, Domain, Point, WaveMode};
use crate::integrator::ModalState;
use crate::quadrature::Quadrature;

/// Source terms: `|u|^{p-1} u` in the chamber, scaled by `rho_w`, and
/// `h(w) = a w + b |w|^{q-1} w` on the plate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceSpec {
    pub p: f64,
    pub rho_w: f64,
    pub a: f64,
    pub b: f64,
    pub q: f64,
}

/// `|x|^{e-1} x`.
#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 3.0 {
        x * x * x
    } else {
        x.abs().powf(e - 1.0) * x
    }
}

/// `|x|^e`.
#[inline]
fn abs_pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x.abs()
    } else if e == 2.0 {
        x * x
    } else if e == 4.0 {
        let s = x * x;
        s * s
    } else {
        x.abs().powf(e)
    }
}

impl SourceSpec {
    pub fn new(p: f64, rho_w: f64, a: f64, b: f64, q: f64) -> Result<Self, SourceError> {
        let spec = Self { p, rho_w, a, b, q };
        spec.validate()?;
        Ok(spec)
    }

    /// Everything switched off: the purely quadratic regime.
    pub fn linear() -> Self {
        Self {
            p: 1.0,
            rho_w: 0.0,
            a: 0.0,
            b: 0.0,
            q: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if !self.p.is_finite() || self.p < 1.0 {
            return Err(SourceError::WaveExponent(self.p));
        }
        if !self.q.is_finite() || self.q < 1.0 {
            return Err(SourceError::PlateExponent(self.q));
        }
        for (name, value) in [("rho_w", self.rho_w), ("a", self.a), ("b", self.b)] {
            if !value.is_finite() {
                return Err(SourceError::NotFinite { name, value });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn wave_source(&self, u: f64) -> f64 {
        self.rho_w * signed_pow(u, self.p)
    }

    #[inline]
    pub fn wave_source_derivative(&self, u: f64) -> f64 {
        self.rho_w * self.p * abs_pow(u, self.p - 1.0)
    }

    #[inline]
    pub fn wave_potential(&self, u: f64) -> f64 {
        self.rho_w * abs_pow(u, self.p + 1.0) / (self.p + 1.0)
    }

    /// `h(w)`.
    #[inline]
    pub fn plate_source(&self, w: f64) -> f64 {
        self.a * w + self.b * signed_pow(w, self.q)
    }

    #[inline]
    pub fn plate_source_derivative(&self, w: f64) -> f64 {
        self.a + self.b * self.q * abs_pow(w, self.q - 1.0)
    }

    /// Primitive `H(w)` with `H(0) = 0`.
    #[inline]
    pub fn plate_potential(&self, w: f64) -> f64 {
        0.5 * self.a * w * w + self.b * abs_pow(w, self.q + 1.0) / (self.q + 1.0)
    }

    /// Growth constant of the plate source family, `max(|a|, |b|) (1 + q)`.
    pub fn growth_constant(&self) -> f64 {
        self.a.abs().max(self.b.abs()) * (1.0 + self.q)
    }

    pub fn wave_source_active(&self) -> bool {
        self.rho_w != 0.0
    }

    pub fn plate_source_active(&self) -> bool {
        self.a != 0.0 || self.b != 0.0
    }
}

/// Pointwise field values `(u, u_t, w, w_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldValues {
    pub u: f64,
    pub u_t: f64,
    pub w: f64,
    pub w_t: f64,
}

#[derive(Debug, Clone)]
pub struct GalerkinOperators {
    pub domain: Domain,
    pub wave_modes: Vec<WaveMode>,
    pub plate: PlateBasis,
    pub quad_order: usize,
    /// Diagonal of the acoustic stiffness (the eigenvalues).
    pub wave_stiffness: DVector<f64>,
    pub plate_mass: DMatrix<f64>,
    pub plate_bending: DMatrix<f64>,
    /// `n_wave x n_plate`.
    pub coupling: DMatrix<f64>,
    /// Coefficient of the plate friction term.
    pub damping: f64,
    mass_factor: Cholesky<f64, Dyn>,
    chamber_weights: Vec<f64>,
    /// Mode values at chamber nodes, `n_nodes x n_wave`.
    wave_at_nodes: DMatrix<f64>,
    /// Weighted transpose, `n_wave x n_nodes`.
    wave_projector: DMatrix<f64>,
    face_weights: Vec<f64>,
    plate_at_nodes: DMatrix<f64>,
    plate_projector: DMatrix<f64>,
}

const ASSEMBLY_GRAM_TOLERANCE: f64 = 1e-6;

/// Assembles all operators for `n_wave` acoustic and `n_plate` plate modes.
pub fn assemble(
    domain: &Domain,
    n_wave: usize,
    n_plate: usize,
    quad: &Quadrature,
) -> Result<GalerkinOperators, BasisError> {
    if n_wave == 0 {
        return Err(BasisError::EmptyBasis(0));
    }
    let plate = build_plate_basis(domain, n_plate, quad)?;
    let modes = wave_modes(domain, n_wave);

    let (cpts, cw) = quad.chamber_nodes(domain);
    let wave_at_nodes = DMatrix::from_fn(cpts.len(), n_wave, |k, j| modes[j].eval(&cpts[k]));
    let gram = weighted_gram(&wave_at_nodes, &cw);
    let dev = max_abs_deviation(&gram, |_| 1.0);
    if dev > ASSEMBLY_GRAM_TOLERANCE {
        return Err(BasisError::InsufficientQuadrature {
            order: quad.order(),
            what: "wave L2 Gram",
            deviation: dev,
        });
    }

    let (fpts, fw) = quad.face_nodes(domain);
    let plate_at_nodes = DMatrix::from_fn(fpts.len(), n_plate, |k, n| plate.eval(n, &fpts[k]));
    let traces = DMatrix::from_fn(fpts.len(), n_wave, |k, j| modes[j].trace(&fpts[k]));
    let plate_projector = weighted_transpose(&plate_at_nodes, &fw);
    // C[j][n] = sum_k w_k trace_j(s_k) sigma_n(s_k)
    let coupling = traces.transpose() * plate_projector.transpose();

    let plate_mass = plate.l2_gram.clone();
    let plate_bending = plate.bending_gram.clone();
    let mass_factor = Cholesky::new(plate_mass.clone()).ok_or(BasisError::InsufficientQuadrature {
        order: quad.order(),
        what: "plate mass factorization",
        deviation: f64::NAN,
    })?;

    Ok(GalerkinOperators {
        domain: *domain,
        wave_stiffness: DVector::from_iterator(n_wave, modes.iter().map(|m| m.eigenvalue)),
        wave_projector: weighted_transpose(&wave_at_nodes, &cw),
        wave_modes: modes,
        plate,
        quad_order: quad.order(),
        plate_mass,
        plate_bending,
        coupling,
        damping: 1.0,
        mass_factor,
        chamber_weights: cw,
        wave_at_nodes,
        face_weights: fw,
        plate_at_nodes,
        plate_projector,
    })
}

/// Assembles with the default quadrature order for the given sizes and source.
pub fn assemble_default(
    domain: &Domain,
    n_wave: usize,
    n_plate: usize,
    spec: &SourceSpec,
) -> Result<GalerkinOperators, BasisError> {
    let quad = Quadrature::new(default_quadrature_order(domain, n_wave, n_plate, spec));
    assemble(domain, n_wave, n_plate, &quad)
}

pub fn default_quadrature_order(domain: &Domain, n_wave: usize, n_plate: usize, spec: &SourceSpec) -> usize {
    let wave_max = wave_modes(domain, n_wave)
        .iter()
        .map(WaveMode::max_index)
        .max()
        .unwrap_or(1);
    let max_index = wave_max.max(plate_max_index(domain, n_plate.max(1)));
    Quadrature::default_order(max_index, spec.p, spec.q)
}

fn weighted_transpose(values: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut t = values.transpose();
    for (k, &w) in weights.iter().enumerate() {
        t.column_mut(k).scale_mut(w);
    }
    t
}

impl GalerkinOperators {
    pub fn n_wave(&self) -> usize {
        self.wave_modes.len()
    }

    pub fn n_plate(&self) -> usize {
        self.plate.len()
    }

    /// Copy with the trace coupling scaled by `scale` (zero decouples the
    /// chamber from the wall).
    pub fn with_coupling_scale(&self, scale: f64) -> Self {
        let mut ops = self.clone();
        ops.coupling *= scale;
        ops
    }

    /// Copy with a different plate friction coefficient.
    pub fn with_damping(&self, damping: f64) -> Self {
        let mut ops = self.clone();
        ops.damping = damping;
        ops
    }

    pub fn solve_mass(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.mass_factor.solve(rhs)
    }

    pub fn chamber_node_count(&self) -> usize {
        self.chamber_weights.len()
    }

    pub fn face_node_count(&self) -> usize {
        self.face_weights.len()
    }

    /// Acoustic field at the chamber quadrature nodes.
    pub fn wave_field_at_nodes(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.wave_at_nodes * u
    }

    /// Plate field at the face quadrature nodes.
    pub fn plate_field_at_nodes(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.plate_at_nodes * w
    }

    /// `F_j = sum_k w_k rho_w |u|^{p-1} u (x_k) e_j(x_k)`.
    ///
    /// Overflow at extreme amplitudes shows up as non-finite entries; callers
    /// treat that as blow-up.
    pub fn project_wave_source(&self, u: &DVector<f64>, spec: &SourceSpec) -> DVector<f64> {
        if !spec.wave_source_active() {
            return DVector::zeros(self.n_wave());
        }
        let mut field = self.wave_field_at_nodes(u);
        field.apply(|v| *v = spec.wave_source(*v));
        &self.wave_projector * field
    }

    /// `G_j = sum_k w_k h(w(s_k)) sigma_j(s_k)`.
    pub fn project_plate_source(&self, w: &DVector<f64>, spec: &SourceSpec) -> DVector<f64> {
        if !spec.plate_source_active() {
            return DVector::zeros(self.n_plate());
        }
        let mut field = self.plate_field_at_nodes(w);
        field.apply(|v| *v = spec.plate_source(*v));
        &self.plate_projector * field
    }

    /// Directional derivative of `F` at `u` along `du`.
    pub fn wave_source_derivative(
        &self,
        u: &DVector<f64>,
        du: &DVector<f64>,
        spec: &SourceSpec,
    ) -> DVector<f64> {
        if !spec.wave_source_active() {
            return DVector::zeros(self.n_wave());
        }
        let field = self.wave_field_at_nodes(u);
        let mut dfield = self.wave_field_at_nodes(du);
        dfield
            .iter_mut()
            .zip(field.iter())
            .for_each(|(d, &v)| *d *= spec.wave_source_derivative(v));
        &self.wave_projector * dfield
    }

    /// Directional derivative of `G` at `w` along `dw`.
    pub fn plate_source_derivative(
        &self,
        w: &DVector<f64>,
        dw: &DVector<f64>,
        spec: &SourceSpec,
    ) -> DVector<f64> {
        if !spec.plate_source_active() {
            return DVector::zeros(self.n_plate());
        }
        let field = self.plate_field_at_nodes(w);
        let mut dfield = self.plate_field_at_nodes(dw);
        dfield
            .iter_mut()
            .zip(field.iter())
            .for_each(|(d, &v)| *d *= spec.plate_source_derivative(v));
        &self.plate_projector * dfield
    }

    /// `sum_k w_k rho_w |u|^{p+1} / (p+1)`: the potential whose gradient is
    /// [`Self::project_wave_source`].
    pub fn wave_source_potential(&self, u: &DVector<f64>, spec: &SourceSpec) -> f64 {
        if !spec.wave_source_active() {
            return 0.0;
        }
        let field = self.wave_field_at_nodes(u);
        field
            .iter()
            .zip(&self.chamber_weights)
            .map(|(&v, &wt)| wt * spec.wave_potential(v))
            .sum()
    }

    /// `sum_k w_k H(w(s_k))`, the potential of [`Self::project_plate_source`].
    pub fn plate_source_potential(&self, w: &DVector<f64>, spec: &SourceSpec) -> f64 {
        if !spec.plate_source_active() {
            return 0.0;
        }
        let field = self.plate_field_at_nodes(w);
        field
            .iter()
            .zip(&self.face_weights)
            .map(|(&v, &wt)| wt * spec.plate_potential(v))
            .sum()
    }

    /// Pointwise modal sums. Plate fields are taken at the tangential
    /// coordinates of each point (its projection onto the elastic face).
    pub fn eval_fields(&self, state: &ModalState, points: &[Point]) -> Vec<FieldValues> {
        let fd = self.domain.face_dim();
        points
            .iter()
            .map(|p| {
                let mut out = FieldValues::default();
                for (j, m) in self.wave_modes.iter().enumerate() {
                    let e = m.eval(p);
                    out.u += state.u[j] * e;
                    out.u_t += state.du[j] * e;
                }
                let mut s = [0.0; 3];
                s[..fd].copy_from_slice(&p[..fd]);
                for n in 0..self.n_plate() {
                    let sig = self.plate.eval(n, &s);
                    out.w += state.w[n] * sig;
                    out.w_t += state.dw[n] * sig;
                }
                out
            })
            .collect()
    }

    /// Zero-pads wave coefficients from a smaller nested basis.
    pub fn embed_wave(&self, coarse: &DVector<f64>) -> DVector<f64> {
        embed(coarse, self.n_wave())
    }

    /// Zero-pads plate coefficients from a smaller nested basis.
    pub fn embed_plate(&self, coarse: &DVector<f64>) -> DVector<f64> {
        embed(coarse, self.n_plate())
    }

    /// Zero-pads a whole state from a smaller nested basis.
    pub fn embed_state(&self, coarse: &ModalState) -> ModalState {
        ModalState {
            t: coarse.t,
            u: self.embed_wave(&coarse.u),
            du: self.embed_wave(&coarse.du),
            w: self.embed_plate(&coarse.w),
            dw: self.embed_plate(&coarse.dw),
        }
    }

    /// True when the leading modes of `self` coincide with all modes of
    /// `coarse`, so coefficients can be compared after zero-padding.
    pub fn nests(&self, coarse: &GalerkinOperators) -> bool {
        self.domain == coarse.domain
            && coarse.n_wave() <= self.n_wave()
            && coarse.n_plate() <= self.n_plate()
            && coarse.wave_modes[..] == self.wave_modes[..coarse.n_wave()]
            && coarse
                .plate
                .modes
                .iter()
                .zip(&self.plate.modes)
                .all(|(a, b)| a == b)
    }
}

fn embed(v: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    let m = v.len().min(n);
    out.rows_mut(0, m).copy_from(&v.rows(0, m));
    out
}
