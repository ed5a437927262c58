//! Unit-box chamber with a flat elastic top face, and the closed-form
//! acoustic modes living on it.
//!
//! The chamber is `(0,1)^dim` with `dim` in {2, 3}. The elastic face is
//! `{x_dim = 1}`; every other face is rigid (homogeneous Dirichlet). Wave
//! modes are separable:
//!
//! ```text
//! e(x) = A * prod_i sin(k_i pi x_i) * sin((m - 1/2) pi x_dim)
//! ```
//!
//! which vanish on the rigid faces, carry a free (Neumann) condition on the
//! elastic face and are orthonormal in L2 with `A = 2^(dim/2)`.

use std::f64::consts::PI;

use crate::error::BasisError;

/// Point in the chamber. In dimension 2 the third slot is ignored.
pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Domain {
    dim: usize,
}

impl Domain {
    pub fn new(dim: usize) -> Result<Self, BasisError> {
        if dim == 2 || dim == 3 {
            Ok(Self { dim })
        } else {
            Err(BasisError::UnsupportedDimension(dim))
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Axis normal to the elastic face.
    pub fn normal_axis(&self) -> usize {
        self.dim - 1
    }

    /// Number of tangential coordinates on the elastic face.
    pub fn face_dim(&self) -> usize {
        self.dim - 1
    }

    /// Outward unit normal on the elastic face.
    pub fn face_normal(&self) -> Point {
        let mut n = [0.0; 3];
        n[self.normal_axis()] = 1.0;
        n
    }

    pub fn contains(&self, p: &Point) -> bool {
        p[..self.dim].iter().all(|&x| (0.0..=1.0).contains(&x))
    }

    /// True when `p` lies on the elastic face (closure).
    pub fn on_face(&self, p: &Point) -> bool {
        self.contains(p) && p[self.normal_axis()] == 1.0
    }

    /// True when `p` lies on the rigid part of the boundary.
    pub fn on_rigid_boundary(&self, p: &Point) -> bool {
        if !self.contains(p) {
            return false;
        }
        let n = self.normal_axis();
        p[..self.dim]
            .iter()
            .enumerate()
            .any(|(i, &x)| x == 0.0 || (x == 1.0 && i != n))
    }

    /// Lift face coordinates onto the chamber boundary point `x_dim = 1`.
    pub fn lift_face_point(&self, s: &Point) -> Point {
        let mut p = [0.0; 3];
        p[..self.face_dim()].copy_from_slice(&s[..self.face_dim()]);
        p[self.normal_axis()] = 1.0;
        p
    }
}

/// One separable acoustic mode.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveMode {
    /// `(k_1, .., k_{dim-1}, m)`, all positive.
    pub index: Vec<usize>,
    pub eigenvalue: f64,
    pub amplitude: f64,
}

impl WaveMode {
    pub fn new(index: Vec<usize>) -> Result<Self, BasisError> {
        let dim = index.len();
        if !(2..=3).contains(&dim) {
            return Err(BasisError::UnsupportedDimension(dim));
        }
        if index.contains(&0) {
            return Err(BasisError::InvalidModeIndex(index));
        }
        let eigenvalue = PI * PI * index.iter().enumerate().map(|(i, &k)| {
            let f = if i + 1 == dim { k as f64 - 0.5 } else { k as f64 };
            f * f
        })
        .sum::<f64>();
        let amplitude = 2f64.powf(dim as f64 / 2.0);
        Ok(Self {
            index,
            eigenvalue,
            amplitude,
        })
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    fn frequency(&self, axis: usize) -> f64 {
        let k = self.index[axis] as f64;
        if axis + 1 == self.dim() {
            (k - 0.5) * PI
        } else {
            k * PI
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        (0..self.dim())
            .map(|a| (self.frequency(a) * p[a]).sin())
            .product::<f64>()
            * self.amplitude
    }

    pub fn gradient(&self, p: &Point) -> Point {
        let dim = self.dim();
        let mut g = [0.0; 3];
        for (a, ga) in g.iter_mut().enumerate().take(dim) {
            let mut v = self.amplitude;
            for b in 0..dim {
                let f = self.frequency(b);
                v *= if a == b { f * (f * p[b]).cos() } else { (f * p[b]).sin() };
            }
            *ga = v;
        }
        g
    }

    /// `sin((m - 1/2) pi) = (-1)^(m+1)`, the value of the normal factor on the
    /// elastic face.
    pub fn trace_sign(&self) -> f64 {
        if self.index[self.dim() - 1] % 2 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Closed-form trace on the elastic face, at tangential coordinates `s`.
    pub fn trace(&self, s: &Point) -> f64 {
        let tangential: f64 = (0..self.dim() - 1)
            .map(|a| (self.frequency(a) * s[a]).sin())
            .product();
        self.amplitude * tangential * self.trace_sign()
    }

    pub fn max_index(&self) -> usize {
        self.index.iter().copied().max().unwrap_or(0)
    }
}

/// The `count` acoustic modes of lowest eigenvalue, ties broken
/// lexicographically on the index. The set for `n` is a prefix of the set
/// for any larger `n`.
pub fn wave_modes(domain: &Domain, count: usize) -> Vec<WaveMode> {
    let dim = domain.dim();
    let bound = count.max(1);
    let mut all: Vec<WaveMode> = (0..bound.pow(dim as u32))
        .map(|flat| {
            let mut rest = flat;
            let index = (0..dim)
                .map(|_| {
                    let k = rest % bound + 1;
                    rest /= bound;
                    k
                })
                .collect();
            WaveMode::new(index).expect("indices are positive")
        })
        .collect();
    all.sort_by(|x, y| {
        x.eigenvalue
            .total_cmp(&y.eigenvalue)
            .then_with(|| x.index.cmp(&y.index))
    });
    all.truncate(count);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Quadrature;

    #[test]
    fn domain_rejects_other_dimensions() {
        assert!(Domain::new(1).is_err());
        assert!(Domain::new(4).is_err());
        let d = Domain::new(3).unwrap();
        assert_eq!(d.face_normal(), [0.0, 0.0, 1.0]);
        assert!(d.on_face(&[0.3, 0.2, 1.0]));
        assert!(d.on_rigid_boundary(&[0.0, 0.2, 0.5]));
        assert!(!d.on_rigid_boundary(&[0.3, 0.2, 1.0]));
    }

    #[test]
    fn first_mode_values() {
        let m = WaveMode::new(vec![1, 1]).unwrap();
        assert!((m.eigenvalue - PI * PI * 1.25).abs() < 1e-12);
        assert!((m.eval(&[0.5, 1.0, 0.0]) - 2.0).abs() < 1e-14);
        assert_eq!(m.eval(&[0.0, 0.7, 0.0]), 0.0);
        assert!(m.eval(&[0.3, 0.0, 0.0]).abs() < 1e-15);
        assert!((m.trace(&[0.5, 0.0, 0.0]) - 2.0).abs() < 1e-14);
        let m2 = WaveMode::new(vec![1, 2]).unwrap();
        let x = 0.37;
        assert!((m2.trace(&[x, 0.0, 0.0]) + 2.0 * (PI * x).sin()).abs() < 1e-14);
        assert!(m2.trace(&[1.0, 0.0, 0.0]).abs() < 1e-14);
    }

    #[test]
    fn trace_matches_evaluation_on_face() {
        let d = Domain::new(3).unwrap();
        for mode in wave_modes(&d, 10) {
            let s = [0.23, 0.81, 0.0];
            let p = d.lift_face_point(&s);
            assert!((mode.trace(&s) - mode.eval(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn modes_sorted_and_nested() {
        let d = Domain::new(2).unwrap();
        let big = wave_modes(&d, 20);
        assert!(big.windows(2).all(|w| w[0].eigenvalue <= w[1].eigenvalue));
        for n in 1..20 {
            assert_eq!(wave_modes(&d, n)[..], big[..n]);
        }
        assert_eq!(big[0].index, vec![1, 1]);
        assert_eq!(big[1].index, vec![1, 2]);
        assert_eq!(big[2].index, vec![2, 1]);
    }

    #[test]
    fn orthonormal_and_rayleigh() {
        for dim in [2, 3] {
            let d = Domain::new(dim).unwrap();
            let modes = wave_modes(&d, 12);
            let maxk = modes.iter().map(WaveMode::max_index).max().unwrap();
            let q = Quadrature::new(Quadrature::default_order(maxk, 1.0, 1.0));
            let (pts, w) = q.chamber_nodes(&d);
            for (i, a) in modes.iter().enumerate() {
                for (j, b) in modes.iter().enumerate() {
                    let g: f64 = pts.iter().zip(&w).map(|(p, w)| w * a.eval(p) * b.eval(p)).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((g - expect).abs() < 1e-10, "dim {dim} ({i},{j}) {g}");
                }
                let r: f64 = pts
                    .iter()
                    .zip(&w)
                    .map(|(p, w)| {
                        let g = a.gradient(p);
                        w * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
                    })
                    .sum();
                assert!((r - a.eigenvalue).abs() <= 1e-8 * a.eigenvalue);
            }
        }
    }
}
