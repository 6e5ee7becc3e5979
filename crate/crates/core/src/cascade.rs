//! Ruelle-cascade averages by recursive Gauss–Hermite folding.
//!
//! For a depth-`r` sequence `0 < ζ_0 < … < ζ_{r−1} < 1` and overlaps
//! `0 = Q_0 ≤ … ≤ Q_r = S`, the leaf value `X_r` is a function of a sum of
//! independent centred Gaussians, and each level folds
//! `X_p = ζ_p⁻¹ log E_{z_{p+1}} e^{ζ_p X_{p+1}}` down to `X_0`.

use crate::error::{Error, Result};
use crate::measures::DiscretePrior;
use crate::numerics::log_sum_exp;
use crate::quadrature::{QuadratureKind, QuadratureRule};
use serde::{Deserialize, Serialize};

/// Deepest supported cascade; `32⁴` leaf evaluations per call.
pub const R_MAX: usize = 4;
pub const MIN_HERMITE_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RsbRepr", into = "RsbRepr")]
pub struct RSBSequence {
    zeta: Vec<f64>,
    q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RsbRepr {
    zeta: Vec<f64>,
    q: Vec<f64>,
}

impl TryFrom<RsbRepr> for RSBSequence {
    type Error = Error;
    fn try_from(r: RsbRepr) -> Result<Self> {
        RSBSequence::new(r.zeta, r.q)
    }
}

impl From<RSBSequence> for RsbRepr {
    fn from(s: RSBSequence) -> Self {
        RsbRepr { zeta: s.zeta, q: s.q }
    }
}

impl RSBSequence {
    /// `zeta` has `r` entries, `q` has `r + 1` entries starting at zero.
    pub fn new(zeta: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let r = zeta.len();
        if r == 0 {
            return Err(Error::InvalidArgument("an RSB sequence needs at least one level".into()));
        }
        if q.len() != r + 1 {
            return Err(Error::InvalidArgument(format!("expected {} overlap values, got {}", r + 1, q.len())));
        }
        if zeta.iter().chain(&q).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("entry of an RSB sequence".into()));
        }
        if zeta[0] <= 0.0 || zeta[r - 1] >= 1.0 || !zeta.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidArgument(format!("zeta {zeta:?} must be strictly increasing in (0, 1)")));
        }
        if q[0] != 0.0 || !q.windows(2).all(|p| p[0] <= p[1]) {
            return Err(Error::InvalidArgument(format!("Q {q:?} must start at 0 and be non-decreasing")));
        }
        Ok(Self { zeta, q })
    }

    /// One level: `ζ_0 = zeta`, `Q = (0, s)`.
    pub fn single(zeta: f64, s: f64) -> Result<Self> {
        Self::new(vec![zeta], vec![0.0, s])
    }

    pub fn r(&self) -> usize {
        self.zeta.len()
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn s_cap(&self) -> f64 {
        self.q[self.q.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSBPoint {
    pub lambda: f64,
    pub mu: f64,
    pub rsb: RSBSequence,
}

/// `ζ⁻¹ log Σ ω_k e^{ζ v_k}`, accurate for small `ζ`.
fn fold_level(zeta: f64, weights: &[f64], values: &[f64]) -> f64 {
    let mean: f64 = weights.iter().zip(values).map(|(w, v)| w * v).sum();
    let spread = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if zeta * spread < 1.0 {
        let t: f64 = weights.iter().zip(values).map(|(w, v)| w * (zeta * (v - mean)).exp_m1()).sum();
        mean + t.ln_1p() / zeta
    } else {
        let shifted: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w.ln() + zeta * v).collect();
        log_sum_exp(&shifted) / zeta
    }
}

/// Level-by-level standard deviations and the generic fold.
struct Fold<'a, L: Fn(f64) -> f64> {
    zeta: &'a [f64],
    sd: Vec<f64>,
    hermite: &'a QuadratureRule,
    leaf: L,
}

impl<L: Fn(f64) -> f64> Fold<'_, L> {
    fn eval(&self, level: usize, field: f64) -> f64 {
        let r = self.zeta.len();
        if level == r {
            return (self.leaf)(field);
        }
        let sd = self.sd[level];
        if sd == 0.0 {
            // single node at zero
            return self.eval(level + 1, field);
        }
        let values: Vec<f64> = self.hermite.nodes.iter().map(|z| self.eval(level + 1, field + sd * z)).collect();
        fold_level(self.zeta[level], &self.hermite.weights, &values)
    }
}

fn check_hermite(hermite: &QuadratureRule) -> Result<()> {
    if hermite.kind != QuadratureKind::HermiteGaussian || hermite.len() < MIN_HERMITE_NODES {
        return Err(Error::InvalidArgument(format!(
            "cascade folding needs a Gauss-Hermite rule with at least {MIN_HERMITE_NODES} nodes"
        )));
    }
    Ok(())
}

fn finite_or_overflow(v: f64, context: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow { context: context.into() })
    }
}

/// `X_0(λ, μ, Q, ζ)[x⁰]` for the leaf
/// `X_r = log Σ_x w e^{β(Σ_j z_j)x + λx² + μxx⁰}`, `Var z_j = Q_j − Q_{j−1}`.
pub fn cascade_x0(
    point: &RSBPoint,
    beta: f64,
    x0: f64,
    prior_x: &DiscretePrior,
    hermite: &QuadratureRule,
) -> Result<f64> {
    check_hermite(hermite)?;
    let rsb = &point.rsb;
    if rsb.r() > R_MAX {
        return Err(Error::InvalidArgument(format!("cascade depth {} exceeds {R_MAX}", rsb.r())));
    }
    let base: Vec<(f64, f64)> =
        prior_x.atoms().iter().map(|&(x, w)| (x, w.ln() + point.lambda * x * x + point.mu * x * x0)).collect();
    let leaf = |h: f64| {
        let max = base.iter().map(|&(x, a)| a + h * x).fold(f64::NEG_INFINITY, f64::max);
        max + base.iter().map(|&(x, a)| (a + h * x - max).exp()).sum::<f64>().ln()
    };
    let sd = rsb.q.windows(2).map(|p| beta.abs() * (p[1] - p[0]).max(0.0).sqrt()).collect();
    let fold = Fold { zeta: &rsb.zeta, sd, hermite, leaf };
    finite_or_overflow(fold.eval(0, 0.0), "cascade recursion")
}

/// `E_0[X_0]`, the average of [`cascade_x0`] over the atoms of `prior_0`.
pub fn cascade_expectation(
    point: &RSBPoint,
    beta: f64,
    prior_x: &DiscretePrior,
    prior_0: &DiscretePrior,
    hermite: &QuadratureRule,
) -> Result<f64> {
    prior_0.atoms().iter().map(|&(x0, w0)| cascade_x0(point, beta, x0, prior_x, hermite).map(|v| w0 * v)).sum()
}

/// `(β²/4) Σ_k ζ_k (Q_{k+1}² − Q_k²)`.
pub fn y_term(rsb: &RSBSequence, beta: f64) -> f64 {
    let sum: f64 = rsb.zeta.iter().zip(rsb.q.windows(2)).map(|(z, q)| z * (q[1] * q[1] - q[0] * q[0])).sum();
    0.25 * beta * beta * sum
}

/// Generic cascade average: leaf `f(Σ_k (C(Q_k) − C(Q_{k−1}))^{1/2} z_k)`.
pub fn rpc_average<F, C>(f: F, cov: C, rsb: &RSBSequence, hermite: &QuadratureRule) -> Result<f64>
where
    F: Fn(f64) -> f64,
    C: Fn(f64) -> f64,
{
    check_hermite(hermite)?;
    let mut sd = Vec::with_capacity(rsb.r());
    for p in rsb.q.windows(2) {
        let inc = cov(p[1]) - cov(p[0]);
        if inc < -1e-14 || !inc.is_finite() {
            return Err(Error::InvalidArgument(format!("covariance function decreases on [{}, {}]", p[0], p[1])));
        }
        sd.push(inc.max(0.0).sqrt());
    }
    let fold = Fold { zeta: &rsb.zeta, sd, hermite, leaf: f };
    finite_or_overflow(fold.eval(0, 0.0), "rpc average; try a smaller zeta or a narrower f")
}
