//! Gauss–Legendre rules on the unit interval and their tensor products over
//! the chamber and the elastic face.

use crate::geometry::{Domain, Point};

/// Gauss–Legendre rule mapped to `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `order`-point rule. Nodes come back in increasing order.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be at least 1");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess for the i-th largest root on (-1, 1).
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // Map the pair (+x, -x) onto (0, 1).
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Returns `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensorized Gauss–Legendre quadrature over the unit box and its top face.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    rule: GaussLegendre,
}

impl Quadrature {
    pub fn new(order: usize) -> Self {
        Self {
            rule: GaussLegendre::new(order),
        }
    }

    /// Default order for a mode set whose largest 1-D index is `max_index`:
    /// `2 * max_index + 8`, doubled when either source exponent exceeds 3.
    pub fn default_order(max_index: usize, p: f64, q: f64) -> usize {
        let base = 2 * max_index + 8;
        if p > 3.0 || q > 3.0 {
            2 * base
        } else {
            base
        }
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    /// Tensor nodes and weights over the chamber `(0,1)^dim`.
    pub fn chamber_nodes(&self, domain: &Domain) -> (Vec<Point>, Vec<f64>) {
        self.tensor(domain.dim(), |coords| {
            let mut p = [0.0; 3];
            p[..coords.len()].copy_from_slice(coords);
            p
        })
    }

    /// Tensor nodes and weights over the elastic face, expressed in its
    /// `dim - 1` tangential coordinates (unused trailing slots are zero).
    pub fn face_nodes(&self, domain: &Domain) -> (Vec<Point>, Vec<f64>) {
        self.tensor(domain.dim() - 1, |coords| {
            let mut p = [0.0; 3];
            p[..coords.len()].copy_from_slice(coords);
            p
        })
    }

    fn tensor<F: Fn(&[f64]) -> Point>(&self, axes: usize, build: F) -> (Vec<Point>, Vec<f64>) {
        let n = self.rule.order();
        let total = n.pow(axes as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes];
        let mut coords = vec![0.0; axes];
        for _ in 0..total {
            let mut w = 1.0;
            for (a, &i) in idx.iter().enumerate() {
                coords[a] = self.rule.nodes[i];
                w *= self.rule.weights[i];
            }
            points.push(build(&coords));
            weights.push(w);
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if *slot < n {
                    break;
                }
                *slot = 0;
            }
        }
        (points, weights)
    }
}
