//! Output channels and the universality coefficients `(β, β_SNR, β_S)`.
//!
//! A [`ChannelModel`] pairs the statistician's log-likelihood `g(y, w)` with
//! the data-generating law `P_out(y | w)`. Expectations are taken under
//! `P_out(· | 0)` with an explicit quadrature rule over the output domain.

use crate::error::{Error, Result};
use crate::quadrature::{QuadratureKind, QuadratureRule};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

pub const FD_STEP_FIRST: f64 = 1e-5;
pub const FD_STEP_SECOND: f64 = 1e-4;
/// Tolerance on the normalization of `e^{g⁰(y, 0)}` over the domain.
pub const NORMALIZATION_TOL: f64 = 1e-8;
/// Consistency residual above which a warning is attached to the coefficients.
pub const CONSISTENCY_WARN: f64 = 1e-6;
pub const DEFAULT_NODES: usize = 200;

/// The effective Gaussian-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaTriple {
    pub beta: f64,
    pub beta_snr: f64,
    pub beta_s: f64,
}

impl BetaTriple {
    pub fn new(beta: f64, beta_snr: f64, beta_s: f64) -> Result<Self> {
        if !(beta.is_finite() && beta_snr.is_finite() && beta_s.is_finite()) {
            return Err(Error::NonFinite("beta triple entry".into()));
        }
        if beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta must be non-negative, got {beta}")));
        }
        Ok(Self { beta, beta_snr, beta_s })
    }

    pub fn zero() -> Self {
        Self { beta: 0.0, beta_snr: 0.0, beta_s: 0.0 }
    }

    /// Multiplies every coefficient by `l` (zero-temperature scaling).
    pub fn scaled(self, l: f64) -> Self {
        Self { beta: self.beta * l, beta_snr: self.beta_snr * l, beta_s: self.beta_s * l }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    #[default]
    Analytic,
    FiniteDifference,
}

type LogLikFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(f64, &mut dyn RngCore) -> f64 + Send + Sync>;

/// A user-supplied likelihood given by closures.
#[derive(Clone)]
pub struct FnLikelihood {
    pub log_lik: LogLikFn,
    pub d1: Option<ScalarFn>,
    pub d2: Option<ScalarFn>,
    pub sampler: Option<SamplerFn>,
}

impl FnLikelihood {
    pub fn new(log_lik: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { log_lik: Arc::new(log_lik), d1: None, d2: None, sampler: None }
    }

    pub fn with_derivatives(
        mut self,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.d1 = Some(Arc::new(d1));
        self.d2 = Some(Arc::new(d2));
        self
    }

    pub fn with_sampler(mut self, s: impl Fn(f64, &mut dyn RngCore) -> f64 + Send + Sync + 'static) -> Self {
        self.sampler = Some(Arc::new(s));
        self
    }
}

impl fmt::Debug for FnLikelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnLikelihood")
            .field("analytic", &self.d1.is_some())
            .field("sampler", &self.sampler.is_some())
            .finish()
    }
}

/// Tabulated channel on a `y` grid, interpolated by local cubics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelTable {
    pub y: Vec<f64>,
    /// `g⁰(y, 0)`, the log density of the data-generating law at `w = 0`.
    pub log_density: Vec<f64>,
    /// `∂_w g(y, 0)` of the assumed likelihood.
    pub dg: Vec<f64>,
    /// `∂²_w g(y, 0)` of the assumed likelihood.
    pub d2g: Vec<f64>,
    /// `∂_w g⁰(y, 0)`; defaults to `dg` (matched).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Vec<f64>>,
}

impl ChannelTable {
    fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n < 2 {
            return Err(Error::InvalidChannel("table needs at least two y values".into()));
        }
        let lens = [self.log_density.len(), self.dg.len(), self.d2g.len()];
        if lens.iter().any(|&l| l != n) || self.score.as_ref().is_some_and(|s| s.len() != n) {
            return Err(Error::InvalidChannel("table columns must have equal length".into()));
        }
        if !self.y.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidChannel("table y values must be strictly increasing".into()));
        }
        let all = self.y.iter().chain(&self.log_density).chain(&self.dg).chain(&self.d2g);
        if all.chain(self.score.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidChannel("table contains non-finite values".into()));
        }
        Ok(())
    }

    /// Cubic Lagrange interpolation through the four nearest rows (linear for
    /// tables with fewer than four rows).
    fn interp(&self, col: &[f64], y: f64) -> f64 {
        let n = self.y.len();
        let k = self.y.partition_point(|&v| v <= y).clamp(1, n - 1);
        if n < 4 {
            let (y0, y1) = (self.y[k - 1], self.y[k]);
            let t = ((y - y0) / (y1 - y0)).clamp(0.0, 1.0);
            return col[k - 1] + t * (col[k] - col[k - 1]);
        }
        let y = y.clamp(self.y[0], self.y[n - 1]);
        let start = (k.saturating_sub(2)).min(n - 4);
        let idx = start..start + 4;
        idx.clone()
            .map(|i| {
                let basis: f64 =
                    idx.clone().filter(|&j| j != i).map(|j| (y - self.y[j]) / (self.y[i] - self.y[j])).product();
                basis * col[i]
            })
            .sum()
    }
}

/// A log-likelihood `y ↦ log P(y | w)` (or the statistician's surrogate).
#[derive(Debug, Clone)]
pub enum Likelihood {
    /// `y = w + σ ξ`, `ξ` standard Gaussian.
    Gaussian {
        sigma: f64,
    },
    /// `y = w + ξ`, `ξ` Laplace with scale `b`.
    Laplace {
        b: f64,
    },
    /// `y ∈ {−1, +1}` with `P(y | w) = e^{yw} / (2 cosh w)`.
    Binary,
    Tabulated(Arc<ChannelTable>),
    Function(FnLikelihood),
}

impl Likelihood {
    pub fn log_lik(&self, y: f64, w: f64) -> f64 {
        match self {
            Likelihood::Gaussian { sigma } => {
                -(y - w).powi(2) / (2.0 * sigma * sigma) - 0.5 * (2.0 * PI * sigma * sigma).ln()
            }
            Likelihood::Laplace { b } => -(y - w).abs() / b - (2.0 * b).ln(),
            Likelihood::Binary => y * w - (2.0 * w.cosh()).ln(),
            Likelihood::Tabulated(t) => {
                // second-order expansion around w = 0
                t.interp(&t.log_density, y) + w * t.interp(&t.dg, y) + 0.5 * w * w * t.interp(&t.d2g, y)
            }
            Likelihood::Function(f) => (f.log_lik)(y, w),
        }
    }

    /// Analytic `(∂_w, ∂²_w)` at `w = 0`, when available.
    pub fn analytic_derivatives(&self, y: f64) -> Option<(f64, f64)> {
        match self {
            Likelihood::Gaussian { sigma } => Some((y / (sigma * sigma), -1.0 / (sigma * sigma))),
            Likelihood::Laplace { b } => {
                let s = if y > 0.0 {
                    1.0
                } else if y < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                Some((s / b, 0.0))
            }
            Likelihood::Binary => Some((y, -1.0)),
            Likelihood::Tabulated(t) => Some((t.interp(&t.dg, y), t.interp(&t.d2g, y))),
            Likelihood::Function(f) => match (&f.d1, &f.d2) {
                (Some(d1), Some(d2)) => Some((d1(y), d2(y))),
                _ => None,
            },
        }
    }

    /// Point masses `(y, c)` of the distributional `∂²_w g(·, 0)` that the
    /// pointwise derivative misses (kinks at `y = w`).
    pub fn singular_second_derivative(&self) -> Vec<(f64, f64)> {
        match self {
            Likelihood::Laplace { b } => vec![(0.0, -2.0 / b)],
            _ => Vec::new(),
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            Likelihood::Laplace { .. } => vec![0.0],
            _ => Vec::new(),
        }
    }

    /// Log density of the law at `w = 0`.
    fn base_log_density(&self, y: f64) -> f64 {
        self.log_lik(y, 0.0)
    }

    /// `∂_w log P(y | w)` at `w = 0` for a data-generating law.
    fn score(&self, y: f64, mode: DerivativeMode) -> f64 {
        if let Likelihood::Tabulated(t) = self {
            return t.interp(t.score.as_deref().unwrap_or(&t.dg), y);
        }
        match (mode, self.analytic_derivatives(y)) {
            (DerivativeMode::Analytic, Some((d1, _))) => d1,
            _ => central_first(|w| self.log_lik(y, w)),
        }
    }

    /// Draws `y ~ P(· | w)`; `None` when the law has no sampler.
    pub fn sample(&self, w: f64, rng: &mut dyn RngCore) -> Option<f64> {
        match self {
            Likelihood::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                Some(w + sigma * z)
            }
            Likelihood::Laplace { b } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                Some(w - b * u.signum() * (1.0 - 2.0 * u.abs()).ln())
            }
            Likelihood::Binary => {
                let p_plus = 0.5 * (1.0 + w.tanh());
                Some(if rng.random::<f64>() < p_plus { 1.0 } else { -1.0 })
            }
            Likelihood::Tabulated(_) => None,
            Likelihood::Function(f) => f.sampler.as_ref().map(|s| s(w, rng)),
        }
    }

    pub fn has_sampler(&self) -> bool {
        match self {
            Likelihood::Tabulated(_) => false,
            Likelihood::Function(f) => f.sampler.is_some(),
            _ => true,
        }
    }

    fn default_domain(&self) -> OutputDomain {
        match self {
            Likelihood::Gaussian { sigma } => OutputDomain::interval(-12.0 * sigma, 12.0 * sigma),
            Likelihood::Laplace { b } => OutputDomain::Interval { a: -40.0 * b, b: 40.0 * b, breaks: vec![0.0] },
            Likelihood::Binary => OutputDomain::Points(vec![-1.0, 1.0]),
            Likelihood::Tabulated(t) => OutputDomain::interval(t.y[0], t.y[t.y.len() - 1]),
            Likelihood::Function(_) => OutputDomain::interval(-12.0, 12.0),
        }
    }
}

fn central_first(f: impl Fn(f64) -> f64) -> f64 {
    (f(FD_STEP_FIRST) - f(-FD_STEP_FIRST)) / (2.0 * FD_STEP_FIRST)
}

fn central_second(f: impl Fn(f64) -> f64) -> f64 {
    (f(FD_STEP_SECOND) - 2.0 * f(0.0) + f(-FD_STEP_SECOND)) / (FD_STEP_SECOND * FD_STEP_SECOND)
}

/// Where the outputs `y` live.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputDomain {
    /// `[a, b]`, with interior break points where the integrand has kinks.
    Interval { a: f64, b: f64, breaks: Vec<f64> },
    /// A finite output alphabet (counting measure).
    Points(Vec<f64>),
}

impl OutputDomain {
    pub fn interval(a: f64, b: f64) -> Self {
        OutputDomain::Interval { a, b, breaks: Vec::new() }
    }

    fn contains(&self, y: f64) -> bool {
        match self {
            OutputDomain::Interval { a, b, .. } => y >= *a && y <= *b,
            OutputDomain::Points(p) => p.contains(&y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelModel {
    assumed: Likelihood,
    truth: Likelihood,
    mode: DerivativeMode,
    domain: OutputDomain,
}

impl ChannelModel {
    /// Builds a channel and checks that `e^{g⁰(y,0)}` is a probability
    /// density on the domain.
    pub fn new(assumed: Likelihood, truth: Likelihood, domain: OutputDomain, mode: DerivativeMode) -> Result<Self> {
        match &domain {
            OutputDomain::Interval { a, b, breaks } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidChannel(format!("invalid domain [{a}, {b}]")));
                }
                if breaks.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidChannel("non-finite break point".into()));
                }
            }
            OutputDomain::Points(p) => {
                if p.is_empty() || p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidChannel("output alphabet must be non-empty and finite".into()));
                }
            }
        }
        for l in [&assumed, &truth] {
            if let Likelihood::Tabulated(t) = l {
                t.validate()?;
            }
            match l {
                Likelihood::Gaussian { sigma: s } | Likelihood::Laplace { b: s } if !(*s > 0.0 && s.is_finite()) => {
                    return Err(Error::InvalidChannel(format!("scale must be positive, got {s}")));
                }
                _ => {}
            }
        }
        let ch = Self { assumed, truth, mode, domain };
        let quad = ch.default_quadrature(DEFAULT_NODES)?;
        let mut mass = 0.0;
        for (y, w) in quad.iter() {
            let dens = ch.truth.base_log_density(y).exp();
            let (d1, d2) = ch.raw_derivatives(y);
            if !(dens.is_finite() && d1.is_finite() && d2.is_finite() && ch.true_score_at_zero(y).is_finite()) {
                return Err(Error::InvalidChannel(format!("channel functions are not finite at y = {y}")));
            }
            mass += w * dens;
        }
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidChannel(format!("base density integrates to {mass} on the domain, expected 1")));
        }
        Ok(ch)
    }

    /// Matched channel on the law's default domain.
    pub fn matched(law: Likelihood) -> Result<Self> {
        let domain = law.default_domain();
        Self::new(law.clone(), law, domain, DerivativeMode::Analytic)
    }

    /// Mismatched channel; the domain follows the data-generating law and
    /// also breaks at kinks of the assumed likelihood.
    pub fn mismatched(assumed: Likelihood, truth: Likelihood) -> Result<Self> {
        let mut domain = truth.default_domain();
        if let OutputDomain::Interval { breaks, .. } = &mut domain {
            breaks.extend(assumed.kinks());
        }
        Self::new(assumed, truth, domain, DerivativeMode::Analytic)
    }

    pub fn matched_gaussian() -> Self {
        Self::matched(Likelihood::Gaussian { sigma: 1.0 }).expect("standard Gaussian channel")
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn assumed(&self) -> &Likelihood {
        &self.assumed
    }

    pub fn truth(&self) -> &Likelihood {
        &self.truth
    }

    pub fn domain(&self) -> &OutputDomain {
        &self.domain
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    /// The statistician's `g(y, w)`.
    pub fn assumed_loglik(&self, y: f64, w: f64) -> f64 {
        self.assumed.log_lik(y, w)
    }

    /// `g⁰(y, 0)`.
    pub fn true_base_logdensity(&self, y: f64) -> f64 {
        self.truth.base_log_density(y)
    }

    /// `∂_w g⁰(y, 0)`.
    pub fn true_score_at_zero(&self, y: f64) -> f64 {
        self.truth.score(y, self.mode)
    }

    /// Composite Gauss–Legendre on the interval (split at break points), or
    /// the counting rule on a finite alphabet.
    pub fn default_quadrature(&self, nodes_per_panel: usize) -> Result<QuadratureRule> {
        match &self.domain {
            OutputDomain::Interval { a, b, breaks } => {
                let mut pts = vec![*a, *b];
                pts.extend(breaks.iter().copied().filter(|v| v > a && v < b));
                QuadratureRule::composite_legendre(nodes_per_panel, &pts)
            }
            OutputDomain::Points(p) => QuadratureRule::discrete(p),
        }
    }

    fn raw_derivatives(&self, y: f64) -> (f64, f64) {
        match (self.mode, self.assumed.analytic_derivatives(y)) {
            (DerivativeMode::Analytic, Some(d)) => d,
            _ => (central_first(|w| self.assumed.log_lik(y, w)), central_second(|w| self.assumed.log_lik(y, w))),
        }
    }
}

/// `(∂_w g(y, 0), ∂²_w g(y, 0))` of the assumed likelihood.
pub fn score_derivatives(ch: &ChannelModel, y: f64) -> Result<(f64, f64)> {
    if !ch.domain.contains(y) {
        return Err(Error::InvalidArgument(format!("y = {y} lies outside the channel domain")));
    }
    let (d1, d2) = ch.raw_derivatives(y);
    if !d1.is_finite() {
        return Err(Error::NonFinite(format!("first w-derivative of g at y = {y}")));
    }
    if !d2.is_finite() {
        return Err(Error::NonFinite(format!("second w-derivative of g at y = {y}")));
    }
    Ok((d1, d2))
}

/// Coefficients together with the consistency diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalityReport {
    pub betas: BetaTriple,
    pub consistency_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn universality_coefficients(ch: &ChannelModel, quad: &QuadratureRule) -> Result<UniversalityReport> {
    let (mut sq, mut snr, mut curv, mut resid) = (0.0, 0.0, 0.0, 0.0);
    for (y, w) in quad.iter() {
        let dens = w * ch.true_base_logdensity(y).exp();
        let (d1, d2) = score_derivatives(ch, y)?;
        sq += dens * d1 * d1;
        snr += dens * d1 * ch.true_score_at_zero(y);
        curv += dens * d2;
        resid += dens * d1;
    }
    if quad.kind != QuadratureKind::Discrete {
        for (y, c) in ch.assumed.singular_second_derivative() {
            curv += c * ch.true_base_logdensity(y).exp();
        }
    }
    if sq < -1e-12 {
        return Err(Error::NegativeVariance { value: sq });
    }
    let betas = BetaTriple { beta: sq.max(0.0).sqrt(), beta_snr: snr, beta_s: curv };
    if !(betas.beta.is_finite() && snr.is_finite() && curv.is_finite()) {
        return Err(Error::NonFinite("universality coefficient".into()));
    }
    let warning = (resid.abs() > CONSISTENCY_WARN)
        .then(|| format!("consistency residual E[dg(Y,0)] = {resid:e}; the free energy is not of order N"));
    Ok(UniversalityReport { betas, consistency_residual: resid, warning })
}

/// `E_{P_out(·|0)}[∂_w g(Y, 0)]`, which must vanish for a consistent estimator.
pub fn check_consistency(ch: &ChannelModel, quad: &QuadratureRule) -> f64 {
    quad.iter().map(|(y, w)| w * ch.true_base_logdensity(y).exp() * ch.raw_derivatives(y).0).sum()
}

/// JSON description of a built-in or tabulated channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelSpec {
    Gaussian {
        sigma: f64,
        #[serde(default, rename = "true", skip_serializing_if = "Option::is_none")]
        truth: Option<LawSpec>,
        #[serde(default)]
        derivatives: DerivativeMode,
    },
    Laplace {
        b: f64,
        #[serde(default, rename = "true", skip_serializing_if = "Option::is_none")]
        truth: Option<LawSpec>,
        #[serde(default)]
        derivatives: DerivativeMode,
    },
    Binary {
        #[serde(default)]
        derivatives: DerivativeMode,
    },
    MatchedGaussian {},
    Custom {
        table: ChannelTable,
        domain: [f64; 2],
        #[serde(default)]
        derivatives: DerivativeMode,
    },
}

/// A data-generating law for mismatched specs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LawSpec {
    Gaussian { sigma: f64 },
    Laplace { b: f64 },
}

impl LawSpec {
    fn likelihood(self) -> Likelihood {
        match self {
            LawSpec::Gaussian { sigma } => Likelihood::Gaussian { sigma },
            LawSpec::Laplace { b } => Likelihood::Laplace { b },
        }
    }
}

impl ChannelSpec {
    pub fn build(&self) -> Result<ChannelModel> {
        let with = |assumed: Likelihood, truth: &Option<LawSpec>, mode: DerivativeMode| -> Result<ChannelModel> {
            let ch = match truth {
                Some(t) => ChannelModel::mismatched(assumed, t.likelihood())?,
                None => ChannelModel::matched(assumed)?,
            };
            Ok(ch.with_mode(mode))
        };
        match self {
            ChannelSpec::Gaussian { sigma, truth, derivatives } => {
                with(Likelihood::Gaussian { sigma: *sigma }, truth, *derivatives)
            }
            ChannelSpec::Laplace { b, truth, derivatives } => with(Likelihood::Laplace { b: *b }, truth, *derivatives),
            ChannelSpec::Binary { derivatives } => {
                Ok(ChannelModel::matched(Likelihood::Binary)?.with_mode(*derivatives))
            }
            ChannelSpec::MatchedGaussian {} => Ok(ChannelModel::matched_gaussian()),
            ChannelSpec::Custom { table, domain, derivatives } => {
                let law = Likelihood::Tabulated(Arc::new(table.clone()));
                ChannelModel::new(law.clone(), law, OutputDomain::interval(domain[0], domain[1]), *derivatives)
            }
        }
    }
}
