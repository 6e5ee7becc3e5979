//! The constrained free-energy functional `φ(S, M)`, its replica-symmetric
//! upper bound, the limiting free energy `sup φ` and the rate function.

use crate::cascade::{cascade_expectation, y_term, RSBPoint, RSBSequence, R_MAX};
use crate::channel::BetaTriple;
use crate::error::{Error, Result};
use crate::extended::{format_sig9, Extended};
use crate::measures::{in_constraint_set, DiscretePrior, OverlapPoint};
use crate::optim::NelderMead;
use crate::quadrature::QuadratureRule;
use crate::rng::{stream, StreamDomain};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt::Write as _;

/// Raw ζ logits are clamped to this range before the softmax.
const LOGIT_CLAMP: f64 = 50.0;
/// Minimum relative gap between consecutive ζ values.
const ZETA_MIN_GAP: f64 = 1e-9;
/// Values closer than this (relative) count as ties.
const TIE_TOL: f64 = 1e-12;
/// Second local maxima within this gap of the supremum mark a non-unique minimiser.
const UNIQUENESS_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub prior_x: DiscretePrior,
    pub prior_0: DiscretePrior,
    pub betas: BetaTriple,
}

impl ModelSpec {
    pub fn new(prior_x: DiscretePrior, prior_0: DiscretePrior, betas: BetaTriple) -> Result<Self> {
        let spec = Self { prior_x, prior_0, betas };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        BetaTriple::new(self.betas.beta, self.betas.beta_snr, self.betas.beta_s).map(|_| ())
    }

    /// Rademacher `P_X`, `P_0 = δ_1`.
    pub fn mattis(betas: BetaTriple) -> Self {
        Self { prior_x: DiscretePrior::rademacher(), prior_0: DiscretePrior::dirac(1.0).expect("finite atom"), betas }
    }

    fn quadratic_terms(&self, p: OverlapPoint) -> f64 {
        0.5 * self.betas.beta_snr * p.m * p.m + 0.25 * self.betas.beta_s * p.s * p.s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Deepest RSB level scanned, in `1..=4`.
    pub r_max: usize,
    /// Nelder–Mead starts per level.
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub hermite_nodes: usize,
    /// ζ is kept inside `(zeta_margin, 1 − zeta_margin)`.
    pub zeta_margin: f64,
    /// Radius beyond which a still-improving Legendre ascent is declared divergent.
    pub divergence_bound: f64,
    pub constraint_grid_step: f64,
    pub constraint_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            r_max: 2,
            restarts: 8,
            max_iter: 5000,
            tol: 1e-10,
            seed: 0,
            hermite_nodes: 32,
            zeta_margin: 1e-6,
            divergence_bound: 1e4,
            constraint_grid_step: 0.05,
            constraint_tol: 1e-9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(1..=R_MAX).contains(&self.r_max) {
            return bad(format!("r_max must lie in [1, {R_MAX}], got {}", self.r_max));
        }
        if self.restarts == 0 || self.max_iter == 0 {
            return bad("restarts and max_iter must be at least 1".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.hermite_nodes < crate::cascade::MIN_HERMITE_NODES {
            return bad(format!("hermite_nodes must be at least {}", crate::cascade::MIN_HERMITE_NODES));
        }
        if !(self.zeta_margin > 0.0 && self.zeta_margin < 0.25) {
            return bad(format!("zeta_margin must lie in (0, 0.25), got {}", self.zeta_margin));
        }
        if !(self.divergence_bound > 0.0) {
            return bad("divergence_bound must be positive".into());
        }
        if !(self.constraint_grid_step > 0.0 && self.constraint_grid_step <= 1.0) {
            return bad("constraint_grid_step must lie in (0, 1]".into());
        }
        if !(self.constraint_tol >= 0.0) {
            return bad("constraint_tol must be non-negative".into());
        }
        Ok(())
    }

    fn hermite(&self) -> Result<QuadratureRule> {
        QuadratureRule::hermite(self.hermite_nodes)
    }

    fn contains(&self, spec: &ModelSpec, p: OverlapPoint) -> bool {
        in_constraint_set(p, &spec.prior_x, &spec.prior_0, self.constraint_grid_step, self.constraint_tol)
    }
}

fn objective_with(spec: &ModelSpec, p: OverlapPoint, point: &RSBPoint, hermite: &QuadratureRule) -> Result<f64> {
    let beta = spec.betas.beta;
    let x0 = cascade_expectation(point, beta, &spec.prior_x, &spec.prior_0, hermite)?;
    Ok(x0 - point.lambda * p.s - point.mu * p.m - y_term(&point.rsb, beta) + spec.quadratic_terms(p))
}

/// The functional whose infimum over `(λ, μ, ζ, Q)` is `φ(S, M)`.
pub fn parisi_objective(spec: &ModelSpec, p: OverlapPoint, point: &RSBPoint, cfg: &OptimizerConfig) -> Result<f64> {
    if (point.rsb.s_cap() - p.s).abs() > 1e-12 * (1.0 + p.s.abs()) {
        return Err(Error::InvalidArgument(format!(
            "the overlap sequence ends at {} but S = {}",
            point.rsb.s_cap(),
            p.s
        )));
    }
    objective_with(spec, p, point, &cfg.hermite()?)
}

/// Unconstrained coordinates for an `r`-level point.
///
/// Layout: `[λ, μ, a_0..a_{r−1}, u_0..u_{r−1}]`, the `u` block only for
/// `r ≥ 2`. ζ is the cumulative sum of `r + 1` softmax gaps (the last logit is
/// fixed at 0) mapped into `(m, 1 − m)`; the overlap increments are
/// `S u_k² / Σ u²`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    r: usize,
    s: f64,
    margin: f64,
}

impl Layout {
    fn dim(&self) -> usize {
        2 + self.r + if self.r >= 2 { self.r } else { 0 }
    }

    fn decode(&self, x: &[f64]) -> Result<RSBPoint> {
        let r = self.r;
        let logits: Vec<f64> = x[2..2 + r].iter().map(|a| a.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)).chain([0.0]).collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = logits.iter().map(|a| (a - top).exp()).collect();
        let total: f64 = ex.iter().sum();
        let width = 1.0 - 2.0 * self.margin;
        let free = 1.0 - (r + 1) as f64 * ZETA_MIN_GAP;
        let mut zeta = Vec::with_capacity(r);
        let mut acc = self.margin;
        for e in &ex[..r] {
            acc += width * (ZETA_MIN_GAP + free * e / total);
            zeta.push(acc);
        }

        let mut q = vec![0.0; r + 1];
        if r == 1 {
            q[1] = self.s;
        } else {
            let w: Vec<f64> = x[2 + r..2 + 2 * r].iter().map(|u| u * u).collect();
            let tot: f64 = w.iter().sum();
            let w = if tot > 0.0 && tot.is_finite() { w } else { vec![1.0; r] };
            let tot: f64 = w.iter().sum();
            let mut part = 0.0;
            for k in 0..r - 1 {
                part += w[k];
                q[k + 1] = self.s * (part / tot);
            }
            q[r] = self.s;
        }
        Ok(RSBPoint { lambda: x[0], mu: x[1], rsb: RSBSequence::new(zeta, q)? })
    }

    /// The replica-symmetric point `ζ → (0, 1)`, `Q = (0, q, S, …, S)`, `λ = μ = 0`.
    fn rs_start(&self, q: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        x[2] = -LOGIT_CLAMP;
        if self.r >= 2 {
            x[3] = LOGIT_CLAMP;
            x[2 + self.r] = q.max(0.0).sqrt();
            x[3 + self.r] = (self.s - q).max(0.0).sqrt();
        }
        x
    }

    fn random_start(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        x[0] = rng.random_range(-1.0..1.0);
        x[1] = rng.random_range(-1.0..1.0);
        for a in &mut x[2..2 + self.r] {
            *a = rng.random_range(-3.0..3.0);
        }
        for u in &mut x[2 + self.r..] {
            *u = rng.random_range(0.0..1.0);
        }
        x
    }
}

/// Value of `φ(S, M)` with the minimising parameters found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiResult {
    pub value: Extended,
    pub argmin: Option<RSBPoint>,
}

fn flatten(point: &RSBPoint) -> Vec<f64> {
    let mut v = vec![point.lambda, point.mu];
    v.extend_from_slice(point.rsb.zeta());
    v.extend_from_slice(point.rsb.q());
    v
}

fn better(value: f64, point: &RSBPoint, best_value: f64, best: &RSBPoint) -> bool {
    if value < best_value - TIE_TOL * (1.0 + best_value.abs()) {
        return true;
    }
    if value > best_value + TIE_TOL * (1.0 + best_value.abs()) {
        return false;
    }
    match point.rsb.r().cmp(&best.rsb.r()) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => {
            let (a, b) = (flatten(point), flatten(best));
            a.iter().zip(&b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(Ordering::Less)
        }
    }
}

/// `φ(S, M)`: multi-start Nelder–Mead over `(λ, μ, ζ, Q)` for every depth
/// `r = 1..=r_max`; `−∞` outside the constraint set.
///
/// Start 0 at each depth is the replica-symmetric point at the best `q`,
/// the remaining `restarts − 1` starts are drawn from per-depth streams of
/// `cfg.seed`. The best run is polished by one restart from its endpoint.
pub fn phi(spec: &ModelSpec, p: OverlapPoint, cfg: &OptimizerConfig) -> Result<PhiResult> {
    cfg.validate()?;
    spec.validate()?;
    if !cfg.contains(spec, p) {
        return Ok(PhiResult { value: Extended::NegInf, argmin: None });
    }
    let hermite = cfg.hermite()?;
    let nm = NelderMead { initial_step: 0.5, max_iter: cfg.max_iter, ftol: cfg.tol, xtol: 1e-12 };

    let beta_zero = spec.betas.beta == 0.0;
    let rs_q = if beta_zero { p.s } else { rs_minimum(spec, p, &hermite)?.0 };
    let depths = if beta_zero { 1..=1 } else { 1..=cfg.r_max };

    let mut best: Option<(f64, RSBPoint)> = None;
    let mut any_converged = false;
    let mut iterations = 0;
    for r in depths {
        let layout = Layout { r, s: p.s, margin: cfg.zeta_margin };
        let objective = |x: &[f64]| -> f64 {
            let full: Vec<f64>;
            let x = if beta_zero {
                full = [x, &layout.rs_start(p.s)[2..]].concat();
                &full[..]
            } else {
                x
            };
            layout.decode(x).and_then(|pt| objective_with(spec, p, &pt, &hermite)).unwrap_or(f64::INFINITY)
        };
        let restrict = |x: Vec<f64>| if beta_zero { x[..2].to_vec() } else { x };
        let expand = |x: &[f64]| if beta_zero { [x, &layout.rs_start(p.s)[2..]].concat() } else { x.to_vec() };

        let mut rng = stream(cfg.seed, StreamDomain::Restart, r as u64);
        let mut level_best: Option<(f64, Vec<f64>)> = None;
        for k in 0..cfg.restarts {
            let start = if k == 0 { layout.rs_start(rs_q) } else { layout.random_start(&mut rng) };
            let run = nm.minimize(objective, &restrict(start));
            iterations += run.iterations;
            any_converged |= run.converged;
            if run.value.is_finite() && level_best.as_ref().is_none_or(|(v, _)| run.value < *v) {
                level_best = Some((run.value, run.x));
            }
        }
        let Some((_, x)) = level_best else { continue };
        let polished = nm.minimize(objective, &x);
        iterations += polished.iterations;
        any_converged |= polished.converged;
        let point = layout.decode(&expand(&polished.x))?;
        let value = objective_with(spec, p, &point, &hermite)?;
        if best.as_ref().is_none_or(|(bv, bp)| better(value, &point, *bv, bp)) {
            best = Some((value, point));
        }
    }
    let Some((value, point)) = best else {
        return Err(Error::NonFinite(format!("objective at ({}, {}) on every start", p.s, p.m)));
    };
    if !any_converged {
        return Err(Error::NoConvergence { what: "phi minimisation", iterations, best: value });
    }
    Ok(PhiResult { value: Extended::Finite(value), argmin: Some(point) })
}

/// The objective at the replica-symmetric point `r = 2`, `Q = (0, q, S)`,
/// `ζ → (0, 1)`, `λ = μ = 0`:
/// `E_z log Σ_x w e^{β√q z x + β²(S−q)x²/2} − β²(S² − q²)/4 + β_SNR M²/2 + β_S S²/4`.
pub fn phi_rs(spec: &ModelSpec, p: OverlapPoint, q: f64, hermite: &QuadratureRule) -> Result<f64> {
    if !(q >= 0.0 && q <= p.s) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in [0, S = {}]", p.s)));
    }
    let beta = spec.betas.beta;
    let a = beta * q.sqrt();
    let b = 0.5 * beta * beta * (p.s - q);
    let base: Vec<(f64, f64)> = spec.prior_x.atoms().iter().map(|&(x, w)| (x, w.ln() + b * x * x)).collect();
    let mean_log = hermite.integrate(|z| {
        let h = a * z;
        let max = base.iter().map(|&(x, c)| c + h * x).fold(f64::NEG_INFINITY, f64::max);
        max + base.iter().map(|&(x, c)| (c + h * x - max).exp()).sum::<f64>().ln()
    });
    Ok(mean_log - 0.25 * beta * beta * (p.s * p.s - q * q) + spec.quadratic_terms(p))
}

/// `min_{q ∈ [0, S]} phi_rs`: a 65-point scan refined by golden-section search.
pub fn rs_minimum(spec: &ModelSpec, p: OverlapPoint, hermite: &QuadratureRule) -> Result<(f64, f64)> {
    if !(p.s >= 0.0) {
        return Err(Error::InvalidArgument(format!("S = {} must be non-negative", p.s)));
    }
    const SCAN: usize = 64;
    let f = |q: f64| phi_rs(spec, p, q.clamp(0.0, p.s), hermite);
    let mut best = (0.0, f(0.0)?);
    for k in 1..=SCAN {
        let q = p.s * k as f64 / SCAN as f64;
        let v = f(q)?;
        if v < best.1 {
            best = (q, v);
        }
    }
    let h = p.s / SCAN as f64;
    let (mut lo, mut hi) = ((best.0 - h).max(0.0), (best.0 + h).min(p.s));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (c, d) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(c)? < f(d)? {
            hi = d;
        } else {
            lo = c;
        }
    }
    let q = 0.5 * (lo + hi);
    let v = f(q)?;
    Ok(if v < best.1 { (q, v) } else { best })
}

/// `φ` on an `(S, M)` grid with the limiting free energy and its maximiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSurface {
    pub spec: ModelSpec,
    pub cfg: OptimizerConfig,
    pub s_grid: Vec<f64>,
    pub m_grid: Vec<f64>,
    /// `phi_values[i][j] = φ(s_grid[i], m_grid[j])`.
    pub phi_values: Vec<Vec<Extended>>,
    pub sup_phi: f64,
    pub argmax: OverlapPoint,
    pub minimizer_unique: bool,
    /// `sup φ` minus the second-highest separated local maximum (`+inf` if none).
    pub gap: Extended,
}

impl RateSurface {
    /// CSV with columns `S,M,phi,rate`, nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("S,M,phi,rate\n");
        for (i, &s) in self.s_grid.iter().enumerate() {
            for (j, &m) in self.m_grid.iter().enumerate() {
                let v = self.phi_values[i][j];
                let rate = match v {
                    Extended::Finite(x) => Extended::Finite((self.sup_phi - x).max(0.0)),
                    _ => Extended::PosInf,
                };
                let _ = writeln!(out, "{},{},{},{}", format_sig9(s), format_sig9(m), v, rate);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn local_step(grid: &[f64], i: usize) -> f64 {
    let left = i.checked_sub(1).map(|k| grid[i] - grid[k]);
    let right = grid.get(i + 1).map(|g| g - grid[i]);
    match (left, right) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0.0,
    }
}

/// Evaluates `φ` on the grid (in parallel), refines once around the best
/// grid point on a half-step 3×3 stencil, and records the uniqueness gap.
pub fn sup_phi(spec: &ModelSpec, cfg: &OptimizerConfig, s_grid: &[f64], m_grid: &[f64]) -> Result<RateSurface> {
    cfg.validate()?;
    spec.validate()?;
    let sorted = |g: &[f64]| !g.is_empty() && g.iter().all(|v| v.is_finite()) && g.windows(2).all(|w| w[0] < w[1]);
    if !sorted(s_grid) || !sorted(m_grid) {
        return Err(Error::InvalidArgument("grids must be non-empty, finite and strictly increasing".into()));
    }
    let (ns, nm) = (s_grid.len(), m_grid.len());
    let flat: Vec<Extended> = (0..ns * nm)
        .into_par_iter()
        .map(|k| phi(spec, OverlapPoint::new(s_grid[k / nm], m_grid[k % nm]), cfg).map(|r| r.value))
        .collect::<Result<_>>()?;
    let phi_values: Vec<Vec<Extended>> = flat.chunks(nm).map(|c| c.to_vec()).collect();

    let mut top: Option<(f64, usize, usize)> = None;
    for i in 0..ns {
        for j in 0..nm {
            if let Extended::Finite(v) = phi_values[i][j] {
                if top.is_none_or(|(b, _, _)| v > b) {
                    top = Some((v, i, j));
                }
            }
        }
    }
    let Some((grid_sup, bi, bj)) = top else {
        return Err(Error::EmptyConstraintGrid);
    };

    // separated local maxima for the uniqueness statistic
    let finite = |i: usize, j: usize| phi_values[i][j].finite();
    let mut maxima = Vec::new();
    for i in 0..ns {
        for j in 0..nm {
            let Some(v) = finite(i, j) else { continue };
            let mut is_max = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= ns as i64 || b >= nm as i64 {
                        continue;
                    }
                    if finite(a as usize, b as usize).is_some_and(|w| w > v) {
                        is_max = false;
                    }
                }
            }
            if is_max {
                maxima.push((v, i, j));
            }
        }
    }
    let second = maxima
        .iter()
        .filter(|&&(_, i, j)| i.abs_diff(bi) > 1 || j.abs_diff(bj) > 1)
        .map(|&(v, _, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = Extended::from(grid_sup - second);

    // one level of half-step refinement around the grid maximiser
    let (hs, hm) = (0.5 * local_step(s_grid, bi), 0.5 * local_step(m_grid, bj));
    let mut stencil = Vec::new();
    for a in [-1.0, 0.0, 1.0] {
        for b in [-1.0, 0.0, 1.0] {
            let cand = OverlapPoint::new(s_grid[bi] + a * hs, m_grid[bj] + b * hm);
            let duplicate = (a == 0.0 || hs == 0.0) && (b == 0.0 || hm == 0.0);
            if !duplicate && !stencil.contains(&cand) {
                stencil.push(cand);
            }
        }
    }
    let refined: Vec<(OverlapPoint, Extended)> =
        stencil.into_par_iter().map(|pt| phi(spec, pt, cfg).map(|r| (pt, r.value))).collect::<Result<_>>()?;
    let mut sup = grid_sup;
    let mut argmax = OverlapPoint::new(s_grid[bi], m_grid[bj]);
    for (pt, v) in refined {
        if let Extended::Finite(v) = v {
            if v > sup {
                sup = v;
                argmax = pt;
            }
        }
    }

    let minimizer_unique = match gap {
        Extended::Finite(g) => g > UNIQUENESS_GAP * (1.0 + grid_sup.abs()),
        _ => true,
    };
    Ok(RateSurface {
        spec: spec.clone(),
        cfg: *cfg,
        s_grid: s_grid.to_vec(),
        m_grid: m_grid.to_vec(),
        phi_values,
        sup_phi: sup,
        argmax,
        minimizer_unique,
        gap,
    })
}

/// `I(S, M) = sup φ − φ(S, M)`, `+∞` off the constraint set.
///
/// Values of `φ` above the recorded supremum (possible off the grid) give 0.
pub fn rate_function(spec: &ModelSpec, surface: &RateSurface, p: OverlapPoint) -> Result<Extended> {
    Ok(match phi(spec, p, &surface.cfg)?.value {
        Extended::Finite(v) => Extended::Finite((surface.sup_phi - v).max(0.0)),
        _ => Extended::PosInf,
    })
}

/// The overlap where `φ` is maximal, with the uniqueness flag of the surface.
pub fn overlap_minimizer(surface: &RateSurface) -> (OverlapPoint, bool) {
    (surface.argmax, surface.minimizer_unique)
}
