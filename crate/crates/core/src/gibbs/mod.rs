//! Finite-size ground truth: exact enumeration and Metropolis sampling of the
//! Gibbs measure `∝ Π_i P_X(x_i) e^{H(x)}`.

mod enumerate;
mod metropolis;

pub use enumerate::{
    channel_free_energy, empirical_rate, enumerate_gibbs, hamiltonian_free_energy, rates_to_csv, universality_gap,
    zero_temperature_check, EmpiricalRateRow, GapRow, ZeroTemperatureReport, ENUMERATION_CAP,
};
pub use metropolis::{metropolis_sample, ChainConfig, MetropolisChain};

use crate::channel::BetaTriple;
use crate::error::{Error, Result};
use crate::measures::DiscretePrior;
use crate::rng::{stream, StreamDomain};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Tolerance for overlaps landing exactly on a bin or window boundary.
const EDGE_TOL: f64 = 1e-12;

/// Couplings `W` (symmetric, zero diagonal) and the planted signal `x⁰`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DisorderRepr", into = "DisorderRepr")]
pub struct DisorderSample {
    n: usize,
    w: Vec<Vec<f64>>,
    x0: Vec<f64>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DisorderRepr {
    n: usize,
    w: Vec<Vec<f64>>,
    x0: Vec<f64>,
    seed: u64,
}

impl TryFrom<DisorderRepr> for DisorderSample {
    type Error = Error;
    fn try_from(r: DisorderRepr) -> Result<Self> {
        DisorderSample::new(r.w, r.x0, r.seed)
    }
}

impl From<DisorderSample> for DisorderRepr {
    fn from(d: DisorderSample) -> Self {
        DisorderRepr { n: d.n, w: d.w, x0: d.x0, seed: d.seed }
    }
}

impl DisorderSample {
    pub fn new(w: Vec<Vec<f64>>, x0: Vec<f64>, seed: u64) -> Result<Self> {
        let n = x0.len();
        if w.len() != n || w.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument(format!("coupling matrix must be {n}x{n}")));
        }
        if w.iter().flatten().chain(&x0).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("disorder entry".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if w[i][j] != w[j][i] {
                    return Err(Error::InvalidArgument(format!("coupling matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, w, x0, seed })
    }

    /// Draw `index` of the family `seed`: `W_ij` (`i < j`) standard Gaussian in
    /// column-growing order and `x⁰_i` iid from `prior_0`, each from its own
    /// stream, so the first `n` sites coincide across sizes.
    pub fn draw(n: usize, prior_0: &DiscretePrior, seed: u64, index: u64) -> Self {
        let mut rng = stream(seed, StreamDomain::Couplings, index);
        let mut w = vec![vec![0.0; n]; n];
        for j in 1..n {
            for i in 0..j {
                let v: f64 = rng.sample(StandardNormal);
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        Self { n, w, x0: draw_signal(n, prior_0, seed, index), seed }
    }

    /// Checks `|x⁰_i|` against the support bound of `prior_0`.
    pub fn check_signal(&self, prior_0: &DiscretePrior) -> Result<()> {
        let bound = prior_0.support_bound() * (1.0 + 1e-12);
        match self.x0.iter().find(|v| v.abs() > bound) {
            Some(v) => Err(Error::InvalidArgument(format!("signal entry {v} exceeds the support bound {bound}"))),
            None => Ok(()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub(crate) fn draw_signal(n: usize, prior_0: &DiscretePrior, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = stream(seed, StreamDomain::Signal, index);
    let atoms = prior_0.atoms();
    let pick = WeightedIndex::new(atoms.iter().map(|a| a.1)).expect("prior weights are positive");
    (0..n).map(|_| atoms[pick.sample(&mut rng)].0).collect()
}

/// `Σ_{i<j} [β W_ij x_i x_j/√N + (β_SNR/N) x_i x_j x⁰_i x⁰_j + (β_S/(2N)) (x_i x_j)²]`.
pub fn hamiltonian(x: &[f64], d: &DisorderSample, betas: &BetaTriple) -> Result<f64> {
    let n = d.n;
    if x.len() != n {
        return Err(Error::InvalidArgument(format!("configuration has {} sites, disorder has {n}", x.len())));
    }
    let nf = n as f64;
    let mut h = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let xx = x[i] * x[j];
            h += betas.beta * d.w[i][j] * xx / nf.sqrt()
                + betas.beta_snr * xx * d.x0[i] * d.x0[j] / nf
                + betas.beta_s * xx * xx / (2.0 * nf);
        }
    }
    Ok(h)
}

/// Rectangular bins for `(R₁₁, R₁₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapBins {
    pub s_edges: Vec<f64>,
    pub m_edges: Vec<f64>,
}

impl OverlapBins {
    pub fn new(s_edges: Vec<f64>, m_edges: Vec<f64>) -> Result<Self> {
        let ok = |e: &[f64]| e.len() >= 2 && e.iter().all(|v| v.is_finite()) && e.windows(2).all(|p| p[0] < p[1]);
        if !ok(&s_edges) || !ok(&m_edges) {
            return Err(Error::InvalidArgument("bin edges must be finite, strictly increasing, at least two".into()));
        }
        Ok(Self { s_edges, m_edges })
    }

    /// `ns × nm` equal bins over `[s_lo, s_hi] × [m_lo, m_hi]`.
    pub fn uniform(s: (f64, f64), m: (f64, f64), ns: usize, nm: usize) -> Result<Self> {
        let axis = |(lo, hi): (f64, f64), k: usize| -> Vec<f64> {
            (0..=k).map(|i| if i == k { hi } else { lo + (hi - lo) * i as f64 / k as f64 }).collect()
        };
        if ns == 0 || nm == 0 {
            return Err(Error::InvalidArgument("bin counts must be positive".into()));
        }
        Self::new(axis(s, ns), axis(m, nm))
    }

    /// 41 × 41 bins over `[0, C²] × [−C², C²]`, `C` the larger support bound.
    pub fn default_for(prior_x: &DiscretePrior, prior_0: &DiscretePrior) -> Self {
        let c = prior_x.support_bound().max(prior_0.support_bound());
        let c2 = if c > 0.0 { c * c } else { 1.0 };
        Self::uniform((0.0, c2), (-c2, c2), 41, 41).expect("valid default bins")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.s_edges.len() - 1, self.m_edges.len() - 1)
    }

    /// Flat bin index, `None` outside the binned rectangle.
    pub fn locate(&self, s: f64, m: f64) -> Option<usize> {
        let (_, nm) = self.shape();
        Some(axis_index(&self.s_edges, s)? * nm + axis_index(&self.m_edges, m)?)
    }
}

fn axis_index(edges: &[f64], v: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if v < edges[0] - EDGE_TOL || v > edges[last] + EDGE_TOL {
        return None;
    }
    Some(edges.partition_point(|&e| e <= v).clamp(1, last) - 1)
}

/// Probability of each `(R₁₁, R₁₀)` bin; `outside` is the mass not covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapHistogram {
    pub s_edges: Vec<f64>,
    pub m_edges: Vec<f64>,
    /// `mass[i][j]` for `s_edges[i]..s_edges[i+1]` × `m_edges[j]..m_edges[j+1]`.
    pub mass: Vec<Vec<f64>>,
    pub outside: f64,
    pub n: usize,
}

impl OverlapHistogram {
    fn from_flat(bins: &OverlapBins, flat: &[f64], outside: f64, n: usize) -> Self {
        let (_, nm) = bins.shape();
        Self {
            s_edges: bins.s_edges.clone(),
            m_edges: bins.m_edges.clone(),
            mass: flat.chunks(nm).map(|c| c.to_vec()).collect(),
            outside,
            n,
        }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().flatten().sum::<f64>() + self.outside
    }

    /// `½ Σ |p − q|` over bins (and the uncovered mass).
    pub fn total_variation(&self, other: &OverlapHistogram) -> Result<f64> {
        if self.s_edges != other.s_edges || self.m_edges != other.m_edges {
            return Err(Error::InvalidArgument("histograms use different bins".into()));
        }
        let bins: f64 = self.mass.iter().flatten().zip(other.mass.iter().flatten()).map(|(a, b)| (a - b).abs()).sum();
        Ok(0.5 * (bins + (self.outside - other.outside).abs()))
    }
}
