//! Atomic priors, the overlap constraint set, the annealed log-Laplace
//! transform `Λ(λ, μ)` and its Legendre transform `𝓘(S, M)`.
//!
//! Throughout, `λ` multiplies `x²` and is dual to the self-overlap `S`,
//! while `μ` multiplies `x·x⁰` and is dual to the magnetization `M`.

use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::numerics::log_sum_exp;
use crate::variational::OptimizerConfig;
use serde::{Deserialize, Serialize};

/// A compactly supported probability measure given by weighted atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub struct DiscretePrior {
    atoms: Vec<(f64, f64)>,
    support_bound: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorRepr {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<PriorRepr> for DiscretePrior {
    type Error = Error;
    fn try_from(r: PriorRepr) -> Result<Self> {
        make_discrete_prior(&r.atoms)
    }
}

impl From<DiscretePrior> for PriorRepr {
    fn from(p: DiscretePrior) -> Self {
        PriorRepr { atoms: p.atoms }
    }
}

/// Builds a prior from `(position, weight)` pairs, renormalizing the weights.
pub fn make_discrete_prior(atoms: &[(f64, f64)]) -> Result<DiscretePrior> {
    if atoms.is_empty() {
        return Err(Error::InvalidPrior("atom list is empty".into()));
    }
    for (i, &(x, w)) in atoms.iter().enumerate() {
        if !x.is_finite() || !w.is_finite() {
            return Err(Error::InvalidPrior(format!("atom {i} has a non-finite entry")));
        }
        if w <= 0.0 {
            return Err(Error::InvalidPrior(format!("atom {i} has non-positive weight {w}")));
        }
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let atoms: Vec<(f64, f64)> = atoms.iter().map(|&(x, w)| (x, w / total)).collect();
    let support_bound = atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max);
    Ok(DiscretePrior { atoms, support_bound })
}

impl DiscretePrior {
    /// `½δ₋₁ + ½δ₊₁`.
    pub fn rademacher() -> Self {
        make_discrete_prior(&[(1.0, 0.5), (-1.0, 0.5)]).expect("valid atoms")
    }

    pub fn dirac(c: f64) -> Result<Self> {
        make_discrete_prior(&[(c, 1.0)])
    }

    /// Boolean spins: `P(1) = p`, `P(0) = 1 − p`.
    pub fn boolean(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidPrior(format!("boolean weight {p} outside (0, 1)")));
        }
        make_discrete_prior(&[(0.0, 1.0 - p), (1.0, p)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    pub fn support_bound(&self) -> f64 {
        self.support_bound
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * f(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn second_moment(&self) -> f64 {
        self.expect(|x| x * x)
    }

    /// True when the measure is invariant under `x → −x` up to `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.atoms.iter().all(|&(x, w)| {
            let mirrored: f64 = self.atoms.iter().filter(|a| (a.0 + x).abs() <= tol).map(|a| a.1).sum();
            (mirrored - w).abs() <= tol || (x.abs() <= tol)
        })
    }
}

/// A target pair for the overlaps `(R₁₁, R₁₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapPoint {
    pub s: f64,
    pub m: f64,
}

impl OverlapPoint {
    pub fn new(s: f64, m: f64) -> Self {
        Self { s, m }
    }

    /// The overlaps of an independent draw from the two priors.
    pub fn typical(prior_x: &DiscretePrior, prior_0: &DiscretePrior) -> Self {
        Self { s: prior_x.second_moment(), m: prior_x.mean() * prior_0.mean() }
    }
}

/// Membership in the closed constraint set, tested on a `(ρ, t)` grid of
/// `[-1, 1]²` with spacing `grid_step`.
pub fn in_constraint_set(
    p: OverlapPoint,
    prior_x: &DiscretePrior,
    prior_0: &DiscretePrior,
    grid_step: f64,
    tol: f64,
) -> bool {
    assert!(grid_step > 0.0 && grid_step <= 1.0, "grid_step must lie in (0, 1]");
    assert!(tol >= 0.0, "tol must be non-negative");
    let steps = (2.0 / grid_step).round() as usize;
    let axis: Vec<f64> = (0..=steps).map(|k| -1.0 + 2.0 * k as f64 / steps as f64).collect();
    for &rho in &axis {
        for &t in &axis {
            let (mut lo, mut hi) = (0.0, 0.0);
            for &(x0, w0) in prior_0.atoms() {
                let (mn, mx) = prior_x
                    .positions()
                    .map(|x| rho * x * x + t * x * x0)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                lo += w0 * mn;
                hi += w0 * mx;
            }
            let v = rho * p.s + t * p.m;
            if v < lo - tol || v > hi + tol {
                return false;
            }
        }
    }
    true
}

/// `Λ(λ, μ) = Σ_{x⁰} w⁰ log Σ_x w e^{λx² + μxx⁰}`.
pub fn log_laplace(prior_x: &DiscretePrior, prior_0: &DiscretePrior, lambda: f64, mu: f64) -> f64 {
    let mut buf = Vec::with_capacity(prior_x.len());
    prior_0
        .atoms()
        .iter()
        .map(|&(x0, w0)| {
            buf.clear();
            buf.extend(prior_x.atoms().iter().map(|&(x, w)| w.ln() + lambda * x * x + mu * x * x0));
            w0 * log_sum_exp(&buf)
        })
        .sum()
}

/// `Λ` with its gradient and Hessian in `(λ, μ)`.
#[derive(Debug, Clone, Copy)]
pub struct LaplaceDerivatives {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

pub fn log_laplace_derivatives(
    prior_x: &DiscretePrior,
    prior_0: &DiscretePrior,
    lambda: f64,
    mu: f64,
) -> LaplaceDerivatives {
    let mut out = LaplaceDerivatives { value: 0.0, grad: [0.0; 2], hess: [[0.0; 2]; 2] };
    let mut expo = Vec::with_capacity(prior_x.len());
    for &(x0, w0) in prior_0.atoms() {
        expo.clear();
        expo.extend(prior_x.atoms().iter().map(|&(x, w)| w.ln() + lambda * x * x + mu * x * x0));
        let lse = log_sum_exp(&expo);
        // tilted moments of (x², x x⁰)
        let (mut a, mut b, mut aa, mut ab, mut bb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&(x, _), &e) in prior_x.atoms().iter().zip(&expo) {
            let p = (e - lse).exp();
            let u = x * x;
            let v = x * x0;
            a += p * u;
            b += p * v;
            aa += p * u * u;
            ab += p * u * v;
            bb += p * v * v;
        }
        out.value += w0 * lse;
        out.grad[0] += w0 * a;
        out.grad[1] += w0 * b;
        out.hess[0][0] += w0 * (aa - a * a).max(0.0);
        out.hess[0][1] += w0 * (ab - a * b);
        out.hess[1][1] += w0 * (bb - b * b).max(0.0);
    }
    out.hess[1][0] = out.hess[0][1];
    out
}

/// `𝓘(S, M) = sup_{λ,μ} [λS + μM − Λ(λ, μ)]`.
///
/// Damped Newton ascent on the concave objective. The supremum is reported
/// as `+inf` once the iterate leaves the ball of radius
/// `cfg.divergence_bound` while the objective still improves by more than
/// `1e-10` per step.
pub fn entropy_rate(
    prior_x: &DiscretePrior,
    prior_0: &DiscretePrior,
    p: OverlapPoint,
    cfg: &OptimizerConfig,
) -> Result<Extended> {
    if !p.s.is_finite() || !p.m.is_finite() {
        return Err(Error::InvalidArgument(format!("overlap point ({}, {}) is not finite", p.s, p.m)));
    }
    const STEP_CAP: f64 = 100.0;
    const MIN_DIVERGENT_GAIN: f64 = 1e-10;

    let objective = |th: [f64; 2]| th[0] * p.s + th[1] * p.m - log_laplace(prior_x, prior_0, th[0], th[1]);
    let mut theta = [0.0f64; 2];
    let mut d = log_laplace_derivatives(prior_x, prior_0, 0.0, 0.0);
    let mut f = -d.value;

    for _ in 0..cfg.max_iter {
        let g = [p.s - d.grad[0], p.m - d.grad[1]];
        let gnorm = g[0].abs().max(g[1].abs());
        if gnorm <= cfg.tol {
            return Ok(Extended::Finite(f));
        }
        let h = d.hess;
        let tau = 1e-12 * (1.0 + h[0][0] + h[1][1]);
        let (a, b, c) = (h[0][0] + tau, h[0][1], h[1][1] + tau);
        let det = a * c - b * b;
        let mut dir = [(c * g[0] - b * g[1]) / det, (a * g[1] - b * g[0]) / det];
        let slope = dir[0] * g[0] + dir[1] * g[1];
        if !(dir[0].is_finite() && dir[1].is_finite()) || slope <= 0.0 {
            dir = g;
        }
        let len = dir[0].hypot(dir[1]);
        if len > STEP_CAP {
            dir = [dir[0] * STEP_CAP / len, dir[1] * STEP_CAP / len];
        }
        let slope = dir[0] * g[0] + dir[1] * g[1];

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = [theta[0] + step * dir[0], theta[1] + step * dir[1]];
            let fc = objective(cand);
            // slack for rounding: near the optimum the gain is below the resolution of f
            if fc.is_finite() && fc >= f + 1e-4 * step * slope - 4.0 * f64::EPSILON * (1.0 + f.abs()) {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // No representable ascent left.
            if gnorm <= 1e-6 {
                return Ok(Extended::Finite(f));
            }
            return Err(Error::NoConvergence { what: "entropy rate ascent", iterations: 0, best: f });
        };
        let gain = fc - f;
        theta = cand;
        f = fc;
        if theta[0].hypot(theta[1]) > cfg.divergence_bound && gain > MIN_DIVERGENT_GAIN {
            return Ok(Extended::PosInf);
        }
        d = log_laplace_derivatives(prior_x, prior_0, theta[0], theta[1]);
    }
    Err(Error::NoConvergence { what: "entropy rate ascent", iterations: cfg.max_iter, best: f })
}

/// Wasserstein-1 distance between the empirical measure of `sample` and
/// `prior`, as the integral of the absolute difference of the two CDFs.
pub fn empirical_distance(sample: &[f64], prior: &DiscretePrior) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empirical sample is empty".into()));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("entry in empirical sample".into()));
    }
    let unit = 1.0 / sample.len() as f64;
    // signed mass events: +unit for sample points, -w for prior atoms
    let mut events: Vec<(f64, f64)> = sample.iter().map(|&x| (x, unit)).collect();
    events.extend(prior.atoms().iter().map(|&(x, w)| (x, -w)));
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf_gap = 0.0;
    let mut dist = 0.0;
    for pair in events.windows(2) {
        cdf_gap += pair[0].1;
        dist += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(dist)
}
