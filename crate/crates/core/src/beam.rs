//! Clamped–clamped beam eigenfunctions and the plate basis built from them.
//!
//! On `(0, 1)` the clamped beam modes are
//!
//! ```text
//! s(x) = cosh(bx) - cos(bx) - a (sinh(bx) - sin(bx)),
//! a    = (cosh b - cos b) / (sinh b - sin b),
//! ```
//!
//! with `cos(b) cosh(b) = 1` and eigenvalue `b^4` for the operator `d^4/dx^4`.
//! The hyperbolic part is evaluated through decaying exponentials so that
//! modes with large `b` keep full precision away from `x = 0`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::BasisError;
use crate::geometry::{Domain, Point};
use crate::quadrature::{GaussLegendre, Quadrature};

const ROOT_ITERATION_CAP: usize = 200;

/// `cos(b) - sech(b)`: zero exactly at the clamped-beam frequencies.
///
/// This is `cos(b) cosh(b) - 1` divided by `cosh(b)`. The unscaled form
/// cannot be resolved in double precision beyond the first few roots because
/// its slope grows like `cosh(b)`.
pub fn beam_residual(beta: f64) -> f64 {
    beta.cos() - sech(beta)
}

fn sech(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

fn beam_residual_derivative(beta: f64) -> f64 {
    let s = sech(beta);
    -beta.sin() + s * beta.tanh()
}

/// First `count` positive roots of `cos(b) cosh(b) = 1`.
///
/// Root `n` is bracketed in `((n + 1/4) pi, (n + 3/4) pi)`, isolated by
/// bisection and polished with a guarded Newton step.
pub fn solve_beam_roots(count: usize) -> Result<Vec<f64>, BasisError> {
    if count == 0 {
        return Err(BasisError::EmptyBasis(count));
    }
    (1..=count).map(beam_root).collect()
}

fn beam_root(n: usize) -> Result<f64, BasisError> {
    use std::f64::consts::PI;
    let mut lo = (n as f64 + 0.25) * PI;
    let mut hi = (n as f64 + 0.75) * PI;
    let mut f_lo = beam_residual(lo);
    if f_lo * beam_residual(hi) > 0.0 {
        return Err(BasisError::RootNotConverged {
            index: n,
            iterations: 0,
        });
    }
    let mut iterations = 0;
    while hi - lo > 1e-9 {
        iterations += 1;
        if iterations > ROOT_ITERATION_CAP {
            return Err(BasisError::RootNotConverged { index: n, iterations });
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = beam_residual(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let step = beam_residual(x) / beam_residual_derivative(x);
        let next = x - step;
        if !(lo - 1e-9..=hi + 1e-9).contains(&next) {
            break;
        }
        x = next;
        if step.abs() <= 4.0 * f64::EPSILON * x {
            break;
        }
    }
    Ok(x)
}

/// One L2-normalized clamped beam mode on `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamMode {
    pub index: usize,
    pub beta: f64,
    pub eigenvalue: f64,
    /// Factor applied to the raw mode so that its L2 norm is one.
    pub norm_const: f64,
    alpha: f64,
    /// Growing half of the hyperbolic part is `grow * e^{b (x - 1)}`.
    grow: f64,
    /// Decaying half is `decay * e^{-b x}`.
    decay: f64,
}

impl BeamMode {
    pub fn new(index: usize, beta: f64) -> Self {
        let (s, c) = beta.sin_cos();
        let e = (-beta).exp();
        // sinh(b) - sin(b) = e^b (1 - e^{-2b} - 2 sin(b) e^{-b}) / 2
        let scaled_den = 1.0 - e * e - 2.0 * s * e;
        let alpha = (beta.cosh() - c) / (beta.sinh() - s);
        // (1 - a) = (cos b - sin b - e^{-b}) / (sinh b - sin b)
        let grow = (c - s - e) / scaled_den;
        // (1 + a) = (e^b - sin b - cos b) / (sinh b - sin b)
        let decay = (1.0 - (s + c) * e) / scaled_den;
        let mut mode = Self {
            index,
            beta,
            eigenvalue: beta.powi(4),
            norm_const: 1.0,
            alpha,
            grow,
            decay,
        };
        let gl = GaussLegendre::new(2 * index + 48);
        let norm2 = gl.integrate(|x| mode.raw(x).0.powi(2));
        mode.norm_const = 1.0 / norm2.sqrt();
        mode
    }

    /// Raw (unnormalized) value, first and second derivative.
    fn raw(&self, x: f64) -> (f64, f64, f64) {
        let b = self.beta;
        let g = self.grow * (b * (x - 1.0)).exp();
        let d = self.decay * (-b * x).exp();
        let (s, c) = (b * x).sin_cos();
        let ch = g + d; // cosh(bx) - a sinh(bx)
        let sh = g - d; // sinh(bx) - a cosh(bx)
        let v = ch - c + self.alpha * s;
        let d1 = b * (sh + s + self.alpha * c);
        let d2 = b * b * (ch + c - self.alpha * s);
        (v, d1, d2)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.norm_const * self.raw(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.norm_const * self.raw(x).1
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.norm_const * self.raw(x).2
    }
}

/// A plate mode: one beam factor per tangential axis of the elastic face.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateMode {
    /// Indices into `PlateBasis::beams`, one per tangential axis.
    pub factors: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PlateBasis {
    pub dim: usize,
    pub beams: Vec<BeamMode>,
    pub modes: Vec<PlateMode>,
    pub l2_gram: DMatrix<f64>,
    pub bending_gram: DMatrix<f64>,
}

impl PlateBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eval(&self, mode: usize, s: &Point) -> f64 {
        self.modes[mode]
            .factors
            .iter()
            .enumerate()
            .map(|(axis, &f)| self.beams[f].eval(s[axis]))
            .product()
    }

    /// Tangential Laplacian of a plate mode.
    pub fn laplacian(&self, mode: usize, s: &Point) -> f64 {
        let factors = &self.modes[mode].factors;
        (0..factors.len())
            .map(|k| {
                factors
                    .iter()
                    .enumerate()
                    .map(|(axis, &f)| {
                        let b = &self.beams[f];
                        if axis == k {
                            b.second_derivative(s[axis])
                        } else {
                            b.eval(s[axis])
                        }
                    })
                    .product::<f64>()
            })
            .sum()
    }

    /// Largest beam index used by any mode (1-based).
    pub fn max_index(&self) -> usize {
        self.modes
            .iter()
            .flat_map(|m| m.factors.iter().map(|&f| self.beams[f].index))
            .max()
            .unwrap_or(0)
    }

    /// Nominal eigenvalue per mode: `mu_n` in dimension 2, the diagonal of the
    /// bending Gram in dimension 3.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.bending_gram[(i, i)]).collect()
    }
}

/// Largest beam index needed for `n_modes` plate modes on a face of the given
/// domain.
pub fn plate_max_index(domain: &Domain, n_modes: usize) -> usize {
    plate_mode_layout(domain, n_modes)
        .iter()
        .flatten()
        .copied()
        .max()
        .unwrap_or(1)
}

/// 1-based beam index tuples of the first `n_modes` plate modes, ordered by
/// `(b_i^2 + b_j^2)` in dimension 3 (ties lexicographic).
fn plate_mode_layout(domain: &Domain, n_modes: usize) -> Vec<Vec<usize>> {
    if domain.face_dim() == 1 {
        return (1..=n_modes).map(|n| vec![n]).collect();
    }
    let roots = solve_beam_roots(n_modes).expect("beam roots converge for moderate counts");
    let mut pairs: Vec<(f64, Vec<usize>)> = Vec::with_capacity(n_modes * n_modes);
    for i in 1..=n_modes {
        for j in 1..=n_modes {
            let key = roots[i - 1].powi(2) + roots[j - 1].powi(2);
            pairs.push((key, vec![i, j]));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    pairs.into_iter().take(n_modes).map(|(_, idx)| idx).collect()
}

const GRAM_TOLERANCE: f64 = 1e-6;

/// Builds the plate basis and its Gram matrices on the elastic face.
pub fn build_plate_basis(
    domain: &Domain,
    n_modes: usize,
    quad: &Quadrature,
) -> Result<PlateBasis, BasisError> {
    if n_modes == 0 {
        return Err(BasisError::EmptyBasis(0));
    }
    let layout = plate_mode_layout(domain, n_modes);
    let max_beam = layout.iter().flatten().copied().max().unwrap_or(1);
    let roots = solve_beam_roots(max_beam)?;
    let beams: Vec<BeamMode> = roots
        .iter()
        .enumerate()
        .map(|(i, &b)| BeamMode::new(i + 1, b))
        .collect();
    let modes: Vec<PlateMode> = layout
        .into_iter()
        .map(|idx| PlateMode {
            factors: idx.into_iter().map(|i| i - 1).collect(),
        })
        .collect();
    let mut basis = PlateBasis {
        dim: domain.dim(),
        beams,
        modes,
        l2_gram: DMatrix::zeros(n_modes, n_modes),
        bending_gram: DMatrix::zeros(n_modes, n_modes),
    };

    let (pts, wts) = quad.face_nodes(domain);
    let values = DMatrix::from_fn(pts.len(), n_modes, |k, i| basis.eval(i, &pts[k]));
    let laps = DMatrix::from_fn(pts.len(), n_modes, |k, i| basis.laplacian(i, &pts[k]));
    basis.l2_gram = weighted_gram(&values, &wts);
    basis.bending_gram = weighted_gram(&laps, &wts);

    let l2_dev = max_abs_deviation(&basis.l2_gram, |_| 1.0);
    if l2_dev > GRAM_TOLERANCE {
        return Err(BasisError::InsufficientQuadrature {
            order: quad.order(),
            what: "plate L2 Gram",
            deviation: l2_dev,
        });
    }
    if domain.face_dim() == 1 {
        let mu: Vec<f64> = basis.beams.iter().map(|b| b.eigenvalue).collect();
        let scale = mu.iter().cloned().fold(0.0, f64::max);
        let dev = max_abs_deviation(&basis.bending_gram, |i| mu[i]) / scale;
        if dev > GRAM_TOLERANCE {
            return Err(BasisError::InsufficientQuadrature {
                order: quad.order(),
                what: "plate bending Gram",
                deviation: dev,
            });
        }
    } else {
        let eig = SymmetricEigen::new(basis.bending_gram.clone());
        if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
            return Err(BasisError::BendingNotPositiveDefinite);
        }
    }
    Ok(basis)
}

/// `A^T diag(w) A`, symmetrized.
pub(crate) fn weighted_gram(values: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = values.clone();
    for (k, &w) in weights.iter().enumerate() {
        scaled.row_mut(k).scale_mut(w);
    }
    let g = values.transpose() * scaled;
    (&g + g.transpose()) * 0.5
}

/// Max-norm distance from `diag(d)` where `d(i)` supplies the diagonal.
pub(crate) fn max_abs_deviation<F: Fn(usize) -> f64>(m: &DMatrix<f64>, d: F) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { d(i) } else { 0.0 };
            worst = worst.max((m[(i, j)] - target).abs());
        }
    }
    worst
}
