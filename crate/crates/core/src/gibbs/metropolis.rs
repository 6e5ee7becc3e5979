//! Single-site Metropolis sampling with optional parallel tempering.

use super::enumerate::{PairTable, Sites};
use super::{DisorderSample, OverlapBins, OverlapHistogram};
use crate::channel::BetaTriple;
use crate::error::{Error, Result};
use crate::measures::DiscretePrior;
use crate::rng::{stream, StreamDomain};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Accepted moves between exact recomputations of the running sums.
const RESYNC_PERIOD: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Sweeps per chain; one sweep is `n` single-site updates.
    pub sweeps: u64,
    pub burn_in: u64,
    pub chains: usize,
    /// Inverse temperatures for replica exchange; must contain 1.
    pub temperature_ladder: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { sweeps: 100_000, burn_in: 1_000, chains: 4, temperature_ladder: None, seed: 0 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "sweeps ({}) must exceed burn_in ({})",
                self.sweeps, self.burn_in
            )));
        }
        if self.chains == 0 {
            return Err(Error::InvalidArgument("chains must be at least 1".into()));
        }
        if let Some(ladder) = &self.temperature_ladder {
            if ladder.iter().any(|b| !(b.is_finite() && *b >= 0.0)) || !ladder.contains(&1.0) {
                return Err(Error::InvalidArgument(
                    "temperature_ladder must hold finite non-negative values including 1".into(),
                ));
            }
        }
        Ok(())
    }

    fn ladder(&self) -> Vec<f64> {
        let mut l = self.temperature_ladder.clone().unwrap_or_else(|| vec![1.0]);
        l.sort_by(f64::total_cmp);
        l.dedup();
        l
    }
}

/// One Markov chain targeting `∝ Π w(x_i) e^{b H(x)}`.
#[derive(Debug, Clone)]
pub struct MetropolisChain<'a> {
    table: PairTable,
    sites: Sites<'a>,
    pick: WeightedIndex<f64>,
    b: f64,
    state: Vec<usize>,
    counts: Vec<u64>,
    energy: f64,
    r10_sum: f64,
    accepted: u64,
}

impl<'a> MetropolisChain<'a> {
    /// Starts from a draw of the product prior.
    pub fn new(
        d: &'a DisorderSample,
        prior_x: &DiscretePrior,
        betas: &BetaTriple,
        inverse_temperature: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let sites = Sites::new(prior_x, d.x0());
        let pick = WeightedIndex::new(prior_x.atoms().iter().map(|a| a.1)).expect("prior weights are positive");
        let state: Vec<usize> = (0..d.n()).map(|_| pick.sample(rng)).collect();
        let table = PairTable::hamiltonian(d, prior_x, betas);
        let mut counts = vec![0u64; prior_x.len()];
        for &a in &state {
            counts[a] += 1;
        }
        let energy = table.energy(&state);
        let r10_sum = sites.r10_sum(&state);
        Self { table, sites, pick, b: inverse_temperature, state, counts, energy, r10_sum, accepted: 0 }
    }

    /// Atom index of every site.
    pub fn state(&self) -> &[usize] {
        &self.state
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `(R₁₁, R₁₀)` of the current configuration.
    pub fn overlaps(&self) -> (f64, f64) {
        self.sites.overlaps(&self.counts, self.r10_sum)
    }

    /// Proposes a fresh prior draw at a uniformly chosen site; accepts with
    /// probability `min(1, e^{b ΔH})`.
    pub fn update(&mut self, rng: &mut impl Rng) -> bool {
        let i = rng.random_range(0..self.state.len());
        let to = self.pick.sample(rng);
        let from = self.state[i];
        if to == from {
            return true;
        }
        let delta = self.table.delta(&self.state, i, to);
        let u: f64 = rng.random();
        if u.ln() >= self.b * delta {
            return false;
        }
        self.state[i] = to;
        self.counts[from] -= 1;
        self.counts[to] += 1;
        self.energy += delta;
        self.r10_sum += (self.sites.atoms[to] - self.sites.atoms[from]) * self.sites.x0[i];
        self.accepted += 1;
        if self.accepted.is_multiple_of(RESYNC_PERIOD) {
            self.energy = self.table.energy(&self.state);
            self.r10_sum = self.sites.r10_sum(&self.state);
        }
        true
    }

    /// `n` single-site updates.
    pub fn sweep(&mut self, rng: &mut impl Rng) {
        for _ in 0..self.state.len() {
            self.update(rng);
        }
    }

    fn swap_configurations(&mut self, other: &mut Self) {
        std::mem::swap(&mut self.state, &mut other.state);
        std::mem::swap(&mut self.counts, &mut other.counts);
        std::mem::swap(&mut self.energy, &mut other.energy);
        std::mem::swap(&mut self.r10_sum, &mut other.r10_sum);
    }
}

/// Histogram of `(R₁₁, R₁₀)` at inverse temperature 1 over post-burn-in
/// sweeps, pooled over `cfg.chains` independent chains (chain `c` uses the
/// stream `(cfg.seed, Chain, c)`). With a ladder, neighbouring replicas
/// attempt an exchange after every sweep, alternating even and odd pairs.
pub fn metropolis_sample(
    d: &DisorderSample,
    prior_x: &DiscretePrior,
    betas: &BetaTriple,
    cfg: &ChainConfig,
    bins: &OverlapBins,
) -> Result<OverlapHistogram> {
    cfg.validate()?;
    if d.n() == 0 {
        return Err(Error::InvalidArgument("system size must be at least 1".into()));
    }
    let ladder = cfg.ladder();
    let target = ladder.iter().position(|&b| b == 1.0).expect("validated ladder contains 1");
    let (ns, nm) = bins.shape();

    let per_chain: Vec<(Vec<u64>, u64)> = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(cfg.seed, StreamDomain::Chain, c);
            let mut replicas: Vec<MetropolisChain> =
                ladder.iter().map(|&b| MetropolisChain::new(d, prior_x, betas, b, &mut rng)).collect();
            let mut counts = vec![0u64; ns * nm];
            let mut outside = 0u64;
            for sweep in 0..cfg.sweeps {
                for r in &mut replicas {
                    r.sweep(&mut rng);
                }
                let mut t = (sweep % 2) as usize;
                while t + 1 < replicas.len() {
                    let log_ratio = (ladder[t] - ladder[t + 1]) * (replicas[t + 1].energy - replicas[t].energy);
                    let u: f64 = rng.random();
                    if u.ln() < log_ratio {
                        let (lo, hi) = replicas.split_at_mut(t + 1);
                        lo[t].swap_configurations(&mut hi[0]);
                    }
                    t += 2;
                }
                if sweep >= cfg.burn_in {
                    let (s, m) = replicas[target].overlaps();
                    match bins.locate(s, m) {
                        Some(b) => counts[b] += 1,
                        None => outside += 1,
                    }
                }
            }
            (counts, outside)
        })
        .collect();

    let mut counts = vec![0u64; ns * nm];
    let mut outside = 0u64;
    for (c, o) in &per_chain {
        for (acc, v) in counts.iter_mut().zip(c) {
            *acc += v;
        }
        outside += o;
    }
    let total = (counts.iter().sum::<u64>() + outside) as f64;
    let flat: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    Ok(OverlapHistogram::from_flat(bins, &flat, outside as f64 / total, d.n()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::enumerate_gibbs;
    use crate::measures::make_discrete_prior;
    use rand::SeedableRng;

    fn ternary() -> DiscretePrior {
        make_discrete_prior(&[(-1.0, 1.0), (0.5, 2.0), (1.5, 1.0)]).unwrap()
    }

    #[test]
    fn config_validation() {
        ChainConfig::default().validate().unwrap();
        assert!(ChainConfig { sweeps: 10, burn_in: 10, ..Default::default() }.validate().is_err());
        assert!(ChainConfig { chains: 0, ..Default::default() }.validate().is_err());
        assert!(ChainConfig { temperature_ladder: Some(vec![0.5, 0.8]), ..Default::default() }.validate().is_err());
        assert!(ChainConfig { temperature_ladder: Some(vec![0.5, 1.0]), ..Default::default() }.validate().is_ok());
        let c: ChainConfig = serde_json::from_str(r#"{"sweeps": 50, "burn_in": 5}"#).unwrap();
        assert_eq!(c.chains, 4);
        assert!(serde_json::from_str::<ChainConfig>(r#"{"sweep": 50}"#).is_err());
    }

    #[test]
    fn product_prior_at_zero_coupling() {
        let px = ternary();
        let p0 = DiscretePrior::rademacher();
        let d = DisorderSample::draw(4, &p0, 2, 0);
        let bins = OverlapBins::default_for(&px, &p0);
        let cfg = ChainConfig { sweeps: 40_000, burn_in: 100, chains: 2, temperature_ladder: None, seed: 3 };
        let mc = metropolis_sample(&d, &px, &BetaTriple::zero(), &cfg, &bins).unwrap();
        let (_, exact) = enumerate_gibbs(&d, &px, &BetaTriple::zero(), &bins).unwrap();
        // sweeps are close to independent at zero coupling (each site refreshed w.p. 1 − e^{-1})
        let samples = 2.0 * (40_000.0 - 100.0);
        for (a, e) in mc.mass.iter().flatten().zip(exact.mass.iter().flatten()) {
            let sigma = (e * (1.0 - e) / samples).sqrt();
            assert!((a - e).abs() <= 3.0 * sigma * 2.0 + 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn single_atom_prior_is_degenerate() {
        let px = DiscretePrior::dirac(0.5).unwrap();
        let d = DisorderSample::draw(5, &DiscretePrior::rademacher(), 0, 0);
        let bins = OverlapBins::default_for(&DiscretePrior::rademacher(), &DiscretePrior::rademacher());
        let cfg = ChainConfig { sweeps: 100, burn_in: 10, chains: 1, temperature_ladder: None, seed: 0 };
        let h = metropolis_sample(&d, &px, &BetaTriple::new(1.0, 0.3, 0.2).unwrap(), &cfg, &bins).unwrap();
        let ones = h.mass.iter().flatten().filter(|&&m| m == 1.0).count();
        assert_eq!(ones, 1);
        assert_eq!(h.total(), 1.0);
    }

    #[test]
    fn matches_enumeration_with_and_without_tempering() {
        let px = DiscretePrior::rademacher();
        let p0 = DiscretePrior::dirac(1.0).unwrap();
        let d = DisorderSample::draw(8, &p0, 7, 0);
        let b = BetaTriple::new(1.2, 0.8, 0.0).unwrap();
        let bins = OverlapBins::default_for(&px, &p0);
        let (_, exact) = enumerate_gibbs(&d, &px, &b, &bins).unwrap();
        for ladder in [None, Some(vec![0.3, 0.6, 1.0])] {
            let cfg = ChainConfig { sweeps: 60_000, burn_in: 1_000, chains: 2, temperature_ladder: ladder, seed: 1 };
            let mc = metropolis_sample(&d, &px, &b, &cfg, &bins).unwrap();
            assert!(mc.total_variation(&exact).unwrap() < 0.03);
        }
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let px = ternary();
        let d = DisorderSample::draw(6, &px, 1, 1);
        let bins = OverlapBins::default_for(&px, &px);
        let b = BetaTriple::new(0.7, 0.2, 0.1).unwrap();
        let cfg =
            ChainConfig { sweeps: 2_000, burn_in: 100, chains: 3, temperature_ladder: Some(vec![0.5, 1.0]), seed: 9 };
        let a = metropolis_sample(&d, &px, &b, &cfg, &bins).unwrap();
        assert_eq!(a, metropolis_sample(&d, &px, &b, &cfg, &bins).unwrap());
        let other = ChainConfig { seed: 10, ..cfg };
        assert_ne!(a, metropolis_sample(&d, &px, &b, &other, &bins).unwrap());
    }

    #[test]
    fn detailed_balance_of_single_updates() {
        // stationary probability flows i → j and j → i must agree
        let px = ternary();
        let d = DisorderSample::draw(3, &DiscretePrior::rademacher(), 5, 0);
        let b = BetaTriple::new(1.5, 0.6, -0.4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut chain = MetropolisChain::new(&d, &px, &b, 1.0, &mut rng);
        let code = |s: &[usize]| s.iter().fold(0, |acc, &a| acc * 3 + a);
        for _ in 0..1000 {
            chain.update(&mut rng);
        }
        let steps = 4_000_000usize;
        let mut flow = vec![vec![0u64; 27]; 27];
        let mut from = code(chain.state());
        for _ in 0..steps {
            chain.update(&mut rng);
            let to = code(chain.state());
            flow[from][to] += 1;
            from = to;
        }
        for i in 0..27 {
            for j in i + 1..27 {
                let (a, c) = (flow[i][j] as f64, flow[j][i] as f64);
                let sigma = (a + c).sqrt().max(1.0);
                assert!((a - c).abs() <= 3.0 * sigma + 1.0, "{i}->{j}: {a} vs {c}");
            }
        }
    }
}
