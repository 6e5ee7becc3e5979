//! Gauss rules for the channel expectations and the cascade recursion.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    /// Gauss–Legendre, possibly composite, on a bounded interval.
    LegendreOnInterval,
    /// Gauss–Hermite for a standard Gaussian weight; weights sum to one.
    HermiteGaussian,
    /// Counting measure on a finite set of points (unit weights).
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: QuadratureKind,
}

impl QuadratureRule {
    /// Gauss–Legendre with `n` nodes mapped onto `[a, b]`.
    pub fn legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("legendre rule needs at least one node".into()));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
        }
        let (x, w) = legendre_reference(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Ok(Self {
            nodes: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|v| half * v).collect(),
            kind: QuadratureKind::LegendreOnInterval,
        })
    }

    /// Composite Gauss–Legendre: one panel between each pair of consecutive
    /// points of `breaks` (sorted, deduplicated), `n` nodes per panel.
    pub fn composite_legendre(n: usize, breaks: &[f64]) -> Result<Self> {
        let mut pts: Vec<f64> = breaks.to_vec();
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        if pts.len() < 2 {
            return Err(Error::InvalidArgument("composite rule needs two distinct break points".into()));
        }
        let mut nodes = Vec::with_capacity(n * (pts.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in pts.windows(2) {
            let panel = Self::legendre(n, pair[0], pair[1])?;
            nodes.extend(panel.nodes);
            weights.extend(panel.weights);
        }
        Ok(Self { nodes, weights, kind: QuadratureKind::LegendreOnInterval })
    }

    /// Gauss–Hermite for `E f(z)`, `z ~ N(0, 1)`.
    pub fn hermite(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("hermite rule needs at least one node".into()));
        }
        let (x, w) = hermite_physicists(n);
        let norm = PI.sqrt();
        Ok(Self {
            nodes: x.iter().map(|t| t * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / norm).collect(),
            kind: QuadratureKind::HermiteGaussian,
        })
    }

    pub fn discrete(points: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("discrete rule needs at least one point".into()));
        }
        Ok(Self { nodes: points.to_vec(), weights: vec![1.0; points.len()], kind: QuadratureKind::Discrete })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

fn legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 - 1.0) * z * p2 - (j as f64 - 1.0) * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

// Nodes and weights for the weight e^{-x^2}, via the orthonormal recurrence.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    // x[0..m] holds the non-negative half in decreasing order.
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..m {
        nodes.push(-x[i]);
        weights.push(w[i]);
    }
    for i in (0..n / 2).rev() {
        nodes.push(x[i]);
        weights.push(w[i]);
    }
    if n % 2 == 1 {
        // middle node was pushed once as -0.0
        nodes[m - 1] = 0.0;
    }
    (nodes, weights)
}
