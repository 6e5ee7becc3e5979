//! Exact enumeration in reflected mixed-radix Gray-code order.

use super::{draw_signal, DisorderSample, OverlapBins, OverlapHistogram, EDGE_TOL};
use crate::channel::{universality_coefficients, BetaTriple, ChannelModel, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::extended::{format_sig9, Extended};
use crate::measures::{DiscretePrior, OverlapPoint};
use crate::numerics::{mean_stderr, LogSumExp};
use crate::rng::{stream, StreamDomain};
use crate::variational::ModelSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Largest state space enumerated exactly.
pub const ENUMERATION_CAP: u64 = 20_000_000;
/// Incremental sums are recomputed from scratch this often.
const RESYNC_PERIOD: u64 = 4096;

/// Pairwise energy `E(x) = Σ_{i<j} t(i, j, a_i, a_j)` over atom indices.
#[derive(Debug, Clone)]
pub(crate) struct PairTable {
    n: usize,
    k: usize,
    t: Vec<f64>,
}

impl PairTable {
    fn build(n: usize, k: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = vec![0.0; n * n * k * k];
        for i in 0..n {
            for j in i + 1..n {
                for a in 0..k {
                    for b in 0..k {
                        let v = f(i, j, a, b);
                        t[((i * n + j) * k + a) * k + b] = v;
                        t[((j * n + i) * k + b) * k + a] = v;
                    }
                }
            }
        }
        Self { n, k, t }
    }

    /// The quadratic Hamiltonian of the Gaussian model, pair by pair.
    pub(crate) fn hamiltonian(d: &DisorderSample, prior_x: &DiscretePrior, betas: &BetaTriple) -> Self {
        let atoms: Vec<f64> = prior_x.positions().collect();
        let nf = d.n() as f64;
        Self::build(d.n(), atoms.len(), |i, j, a, b| {
            let xx = atoms[a] * atoms[b];
            betas.beta * d.w()[i][j] * xx / nf.sqrt()
                + betas.beta_snr * xx * d.x0()[i] * d.x0()[j] / nf
                + betas.beta_s * xx * xx / (2.0 * nf)
        })
    }

    /// `Σ_{i<j} [g(Y_ij, x_i x_j/√n) − g(Y_ij, 0)]` for the assumed likelihood.
    fn channel(y: &[Vec<f64>], ch: &ChannelModel, prior_x: &DiscretePrior) -> Self {
        let atoms: Vec<f64> = prior_x.positions().collect();
        let n = y.len();
        let root = (n as f64).sqrt();
        Self::build(n, atoms.len(), |i, j, a, b| {
            ch.assumed_loglik(y[i][j], atoms[a] * atoms[b] / root) - ch.assumed_loglik(y[i][j], 0.0)
        })
    }

    #[inline]
    fn get(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.t[((i * self.n + j) * self.k + a) * self.k + b]
    }

    pub(crate) fn energy(&self, state: &[usize]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                e += self.get(i, j, state[i], state[j]);
            }
        }
        e
    }

    /// Energy change when site `i` moves to atom `to`.
    #[inline]
    pub(crate) fn delta(&self, state: &[usize], i: usize, to: usize) -> f64 {
        let from = state[i];
        let mut d = 0.0;
        for (j, &b) in state.iter().enumerate() {
            if j != i {
                d += self.get(i, j, to, b) - self.get(i, j, from, b);
            }
        }
        d
    }
}

/// Atom data and exact overlap bookkeeping shared by enumeration and sampling.
#[derive(Debug, Clone)]
pub(crate) struct Sites<'a> {
    pub(crate) atoms: Vec<f64>,
    pub(crate) log_w: Vec<f64>,
    pub(crate) x0: &'a [f64],
}

impl<'a> Sites<'a> {
    pub(crate) fn new(prior_x: &DiscretePrior, x0: &'a [f64]) -> Self {
        Self { atoms: prior_x.positions().collect(), log_w: prior_x.atoms().iter().map(|a| a.1.ln()).collect(), x0 }
    }

    /// `(R₁₁, R₁₀)` from atom counts and the running `Σ x_i x⁰_i`.
    pub(crate) fn overlaps(&self, counts: &[u64], r10_sum: f64) -> (f64, f64) {
        let n = self.x0.len() as f64;
        let s2: f64 = counts.iter().zip(&self.atoms).map(|(&c, x)| c as f64 * x * x).sum();
        (s2 / n, r10_sum / n)
    }

    pub(crate) fn r10_sum(&self, state: &[usize]) -> f64 {
        state.iter().zip(self.x0).map(|(&a, x0)| self.atoms[a] * x0).sum()
    }
}

/// One visited configuration.
#[derive(Debug, Clone, Copy)]
struct StateView {
    /// `Σ_i log w(x_i)`.
    log_prior: f64,
    energy: f64,
    r11: f64,
    r10: f64,
}

fn check_cap(k: usize, n: usize) -> Result<()> {
    let states = (k as f64).powi(n as i32);
    if states > ENUMERATION_CAP as f64 {
        return Err(Error::StateSpaceTooLarge { states, cap: ENUMERATION_CAP });
    }
    Ok(())
}

/// Visits every configuration once, changing one site per step.
fn for_each_state(table: &PairTable, sites: &Sites, mut visit: impl FnMut(&StateView)) -> Result<()> {
    let (n, k) = (table.n, table.k);
    check_cap(k, n)?;
    let mut state = vec![0usize; n];
    let mut dir = vec![1i64; n];
    let mut counts = vec![0u64; k];
    counts[0] = n as u64;
    let resync = |state: &[usize]| {
        let log_prior: f64 = state.iter().map(|&a| sites.log_w[a]).sum();
        (log_prior, table.energy(state), sites.r10_sum(state))
    };
    let (mut log_prior, mut energy, mut r10_sum) = resync(&state);
    let mut step: u64 = 0;
    loop {
        let (r11, r10) = sites.overlaps(&counts, r10_sum);
        visit(&StateView { log_prior, energy, r11, r10 });

        let Some(i) = (0..n).find(|&i| {
            let next = state[i] as i64 + dir[i];
            next >= 0 && next < k as i64
        }) else {
            return Ok(());
        };
        for d in &mut dir[..i] {
            *d = -*d;
        }
        let from = state[i];
        let to = (from as i64 + dir[i]) as usize;
        energy += table.delta(&state, i, to);
        log_prior += sites.log_w[to] - sites.log_w[from];
        r10_sum += (sites.atoms[to] - sites.atoms[from]) * sites.x0[i];
        counts[from] -= 1;
        counts[to] += 1;
        state[i] = to;
        step += 1;
        if step.is_multiple_of(RESYNC_PERIOD) {
            (log_prior, energy, r10_sum) = resync(&state);
        }
    }
}

fn check_disorder(d: &DisorderSample) -> Result<()> {
    if d.n() == 0 {
        return Err(Error::InvalidArgument("system size must be at least 1".into()));
    }
    Ok(())
}

/// Exact `log Z = log Σ_x Π w(x_i) e^{H(x)}` and the Gibbs law of the overlaps.
pub fn enumerate_gibbs(
    d: &DisorderSample,
    prior_x: &DiscretePrior,
    betas: &BetaTriple,
    bins: &OverlapBins,
) -> Result<(f64, OverlapHistogram)> {
    check_disorder(d)?;
    let table = PairTable::hamiltonian(d, prior_x, betas);
    let sites = Sites::new(prior_x, d.x0());
    let (ns, nm) = bins.shape();
    let mut per_bin = vec![LogSumExp::default(); ns * nm];
    let mut outside = LogSumExp::default();
    let mut total = LogSumExp::default();
    for_each_state(&table, &sites, |s| {
        let lw = s.log_prior + s.energy;
        total.push(lw);
        match bins.locate(s.r11, s.r10) {
            Some(b) => per_bin[b].push(lw),
            None => outside.push(lw),
        }
    })?;
    let log_z = total.value();
    if !log_z.is_finite() {
        return Err(Error::Overflow { context: "partition function".into() });
    }
    let flat: Vec<f64> = per_bin.iter().map(|a| (a.value() - log_z).exp()).collect();
    let hist = OverlapHistogram::from_flat(bins, &flat, (outside.value() - log_z).exp(), d.n());
    Ok((log_z, hist))
}

/// `−(1/n) log G_n(Σ_ε(p))` averaged over disorder draws, for each `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRateRow {
    pub n: usize,
    /// Mean over draws with a non-empty window (`+inf` if there are none).
    pub estimate: Extended,
    pub stderr: f64,
    pub infinite_draws: usize,
}

/// The Gibbs probability of the window `|R₁₁ − S| ≤ ε`, `|R₁₀ − M| ≤ ε`
/// gives `−(1/n) log G_n`, averaged over `samples` draws per `n`. Draw `k`
/// uses the same streams for every `n` (common random numbers).
pub fn empirical_rate(
    spec: &ModelSpec,
    p: OverlapPoint,
    eps: f64,
    n_list: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<EmpiricalRateRow>> {
    spec.validate()?;
    if !(eps >= 0.0 && eps.is_finite()) || samples == 0 {
        return Err(Error::InvalidArgument("eps must be non-negative and samples positive".into()));
    }
    for &n in n_list {
        if n == 0 {
            return Err(Error::InvalidArgument("system size must be at least 1".into()));
        }
        check_cap(spec.prior_x.len(), n)?;
    }
    n_list
        .iter()
        .map(|&n| {
            let draws: Vec<Option<f64>> = (0..samples as u64)
                .into_par_iter()
                .map(|k| {
                    let d = DisorderSample::draw(n, &spec.prior_0, seed, k);
                    let table = PairTable::hamiltonian(&d, &spec.prior_x, &spec.betas);
                    let sites = Sites::new(&spec.prior_x, d.x0());
                    let (mut all, mut inside) = (LogSumExp::default(), LogSumExp::default());
                    for_each_state(&table, &sites, |s| {
                        let lw = s.log_prior + s.energy;
                        all.push(lw);
                        if (s.r11 - p.s).abs() <= eps + EDGE_TOL && (s.r10 - p.m).abs() <= eps + EDGE_TOL {
                            inside.push(lw);
                        }
                    })?;
                    let log_g = inside.value() - all.value();
                    Ok(log_g.is_finite().then(|| (-log_g / n as f64).max(0.0)))
                })
                .collect::<Result<_>>()?;
            let finite: Vec<f64> = draws.iter().flatten().copied().collect();
            let infinite_draws = samples - finite.len();
            let (estimate, stderr) = if finite.is_empty() {
                (Extended::PosInf, 0.0)
            } else {
                let (m, se) = mean_stderr(&finite);
                (Extended::Finite(m), se)
            };
            Ok(EmpiricalRateRow { n, estimate, stderr, infinite_draws })
        })
        .collect()
}

/// CSV with columns `n,estimate,stderr,infinite_draws`.
pub fn rates_to_csv(rows: &[EmpiricalRateRow]) -> String {
    let mut out = String::from("n,estimate,stderr,infinite_draws\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.n, r.estimate, format_sig9(r.stderr), r.infinite_draws);
    }
    out
}

/// Mean and standard error of `(1/n) log Z_n` for the quadratic Hamiltonian
/// over draws `0..samples` of [`DisorderSample::draw`].
pub fn hamiltonian_free_energy(spec: &ModelSpec, n: usize, samples: usize, seed: u64) -> Result<(f64, f64)> {
    spec.validate()?;
    if n == 0 || samples == 0 {
        return Err(Error::InvalidArgument("n and samples must be positive".into()));
    }
    check_cap(spec.prior_x.len(), n)?;
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let d = DisorderSample::draw(n, &spec.prior_0, seed, k);
            let table = PairTable::hamiltonian(&d, &spec.prior_x, &spec.betas);
            log_partition(&table, &Sites::new(&spec.prior_x, d.x0())).map(|z| z / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&values))
}

fn log_partition(table: &PairTable, sites: &Sites) -> Result<f64> {
    let mut total = LogSumExp::default();
    for_each_state(table, sites, |s| total.push(s.log_prior + s.energy))?;
    let v = total.value();
    if !v.is_finite() {
        return Err(Error::Overflow { context: "partition function".into() });
    }
    Ok(v)
}

/// Mean and standard error of `(1/n)(log Z_n^Y − Σ_{i<j} g(Y_ij, 0))`.
///
/// Draw `k`: `x⁰` from the signal stream `k` (shared with
/// [`DisorderSample::draw`]) and `Y_ij ~ P_out(· | x⁰_i x⁰_j/√n)` from the
/// channel-noise stream `k`, in column-growing order.
pub fn channel_free_energy(
    ch: &ChannelModel,
    prior_x: &DiscretePrior,
    prior_0: &DiscretePrior,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !ch.truth().has_sampler() {
        return Err(Error::NoSampler);
    }
    if n == 0 || samples == 0 {
        return Err(Error::InvalidArgument("n and samples must be positive".into()));
    }
    check_cap(prior_x.len(), n)?;
    let root = (n as f64).sqrt();
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let x0 = draw_signal(n, prior_0, seed, k);
            let mut rng = stream(seed, StreamDomain::ChannelNoise, k);
            let mut y = vec![vec![0.0; n]; n];
            for j in 1..n {
                for i in 0..j {
                    let v = ch.truth().sample(x0[i] * x0[j] / root, &mut rng).ok_or(Error::NoSampler)?;
                    y[i][j] = v;
                    y[j][i] = v;
                }
            }
            let table = PairTable::channel(&y, ch, prior_x);
            log_partition(&table, &Sites::new(prior_x, &x0)).map(|z| z / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&values))
}

/// Channel free energy against the Gaussian model with the channel's
/// universality coefficients, at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub channel_mean: f64,
    pub channel_stderr: f64,
    pub gaussian_mean: f64,
    pub gaussian_stderr: f64,
    pub gap: f64,
}

/// `|F_n(g) − F_n(β̄(g))|` for each `n`, with `β̄(g)` from
/// [`universality_coefficients`] on the channel's default quadrature.
pub fn universality_gap(
    ch: &ChannelModel,
    prior_x: &DiscretePrior,
    prior_0: &DiscretePrior,
    n_list: &[usize],
    samples: usize,
    seed: u64,
) -> Result<(BetaTriple, Vec<GapRow>)> {
    let betas = universality_coefficients(ch, &ch.default_quadrature(DEFAULT_NODES)?)?.betas;
    let spec = ModelSpec::new(prior_x.clone(), prior_0.clone(), betas)?;
    let rows = n_list
        .iter()
        .map(|&n| {
            let (cm, cs) = channel_free_energy(ch, prior_x, prior_0, n, samples, seed)?;
            let (gm, gs) = hamiltonian_free_energy(&spec, n, samples, seed)?;
            Ok(GapRow {
                n,
                channel_mean: cm,
                channel_stderr: cs,
                gaussian_mean: gm,
                gaussian_stderr: gs,
                gap: (cm - gm).abs(),
            })
        })
        .collect::<Result<_>>()?;
    Ok((betas, rows))
}

/// `(1/(L n)) log Σ_x Π w(x_i) e^{L H(x)}` for each `L`, and `max_x H(x)/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroTemperatureReport {
    /// `(L, value)`; `L = 0` reports the limit `E_P[H]/n`.
    pub rows: Vec<(f64, f64)>,
    pub max_energy_per_site: f64,
}

/// All `L` are evaluated in one enumeration pass.
pub fn zero_temperature_check(
    d: &DisorderSample,
    prior_x: &DiscretePrior,
    betas: &BetaTriple,
    l_list: &[f64],
) -> Result<ZeroTemperatureReport> {
    check_disorder(d)?;
    if l_list.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidArgument("every L must be finite and non-negative".into()));
    }
    let table = PairTable::hamiltonian(d, prior_x, betas);
    let sites = Sites::new(prior_x, d.x0());
    let mut acc = vec![LogSumExp::default(); l_list.len()];
    let mut max_energy = f64::NEG_INFINITY;
    let mut mean_energy = 0.0;
    for_each_state(&table, &sites, |s| {
        max_energy = max_energy.max(s.energy);
        mean_energy += s.log_prior.exp() * s.energy;
        for (a, &l) in acc.iter_mut().zip(l_list) {
            a.push(s.log_prior + l * s.energy);
        }
    })?;
    let n = d.n() as f64;
    let rows = l_list
        .iter()
        .zip(&acc)
        .map(|(&l, a)| (l, if l == 0.0 { mean_energy / n } else { a.value() / (l * n) }))
        .collect();
    Ok(ZeroTemperatureReport { rows, max_energy_per_site: max_energy / n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Likelihood;
    use crate::gibbs::hamiltonian;
    use crate::measures::make_discrete_prior;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mattis(b: BetaTriple) -> ModelSpec {
        ModelSpec::mattis(b)
    }

    fn ternary() -> DiscretePrior {
        make_discrete_prior(&[(-1.0, 1.0), (0.5, 2.0), (1.5, 1.0)]).unwrap()
    }

    /// Brute force over all configurations in lexicographic order.
    fn brute_force(d: &DisorderSample, px: &DiscretePrior, b: &BetaTriple) -> Vec<(f64, f64, f64, f64)> {
        let atoms = px.atoms();
        let (n, k) = (d.n(), atoms.len());
        let mut out = Vec::new();
        for code in 0..k.pow(n as u32) {
            let mut c = code;
            let mut x = Vec::with_capacity(n);
            let mut lw = 0.0;
            for _ in 0..n {
                x.push(atoms[c % k].0);
                lw += atoms[c % k].1.ln();
                c /= k;
            }
            let h = hamiltonian(&x, d, b).unwrap();
            let r11 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let r10 = x.iter().zip(d.x0()).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            out.push((lw, h, r11, r10));
        }
        out
    }

    #[test]
    fn gray_code_visits_every_state_once() {
        let px = ternary();
        let d = DisorderSample::draw(5, &make_discrete_prior(&[(1.0, 1.0), (-0.5, 1.0)]).unwrap(), 1, 0);
        let b = BetaTriple::new(0.9, 0.4, -0.3).unwrap();
        let table = PairTable::hamiltonian(&d, &px, &b);
        let sites = Sites::new(&px, d.x0());
        let mut seen = Vec::new();
        for_each_state(&table, &sites, |s| seen.push((s.log_prior, s.energy, s.r11, s.r10))).unwrap();
        let mut oracle = brute_force(&d, &px, &b);
        assert_eq!(seen.len(), oracle.len());
        let key = |v: &(f64, f64, f64, f64)| (v.1 * 1e9).round() as i64;
        seen.sort_by_key(key);
        oracle.sort_by_key(key);
        for (a, o) in seen.iter().zip(&oracle) {
            assert_abs_diff_eq!(a.0, o.0, epsilon = 1e-12);
            assert_abs_diff_eq!(a.1, o.1, epsilon = 1e-12);
            assert_abs_diff_eq!(a.2, o.2, epsilon = 1e-12);
            assert_abs_diff_eq!(a.3, o.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_partition_functions() {
        let px = DiscretePrior::rademacher();
        let bins = OverlapBins::default_for(&px, &px);
        let d1 = DisorderSample::draw(1, &px, 0, 0);
        let (z, h) = enumerate_gibbs(&d1, &px, &BetaTriple::new(1.0, 1.0, 1.0).unwrap(), &bins).unwrap();
        assert_abs_diff_eq!(z, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.total(), 1.0, epsilon = 1e-12);

        let d2 = DisorderSample::draw(2, &px, 5, 3);
        let beta = 0.8;
        let (z, _) = enumerate_gibbs(&d2, &px, &BetaTriple::new(beta, 0.0, 0.0).unwrap(), &bins).unwrap();
        assert_abs_diff_eq!(z, (beta * d2.w()[0][1] / 2f64.sqrt()).cosh().ln(), epsilon = 1e-14);
    }

    #[test]
    fn histogram_matches_brute_force() {
        let px = ternary();
        let p0 = DiscretePrior::rademacher();
        let d = DisorderSample::draw(6, &p0, 9, 2);
        let b = BetaTriple::new(1.1, 0.7, 0.2).unwrap();
        let bins = OverlapBins::default_for(&px, &p0);
        let (log_z, hist) = enumerate_gibbs(&d, &px, &b, &bins).unwrap();
        let states = brute_force(&d, &px, &b);
        let z: f64 = states.iter().map(|s| (s.0 + s.1).exp()).sum();
        assert_abs_diff_eq!(log_z, z.ln(), epsilon = 1e-12);
        let (_, nm) = bins.shape();
        let mut mass = vec![0.0; bins.shape().0 * nm];
        for s in &states {
            mass[bins.locate(s.2, s.3).unwrap()] += (s.0 + s.1).exp() / z;
        }
        for (a, o) in hist.mass.iter().flatten().zip(&mass) {
            assert_abs_diff_eq!(a, o, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(hist.total(), 1.0, epsilon = 1e-12);
        assert_eq!(hist.outside, 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let px = ternary();
        let d = DisorderSample::draw(16, &px, 0, 0);
        let r = enumerate_gibbs(&d, &px, &BetaTriple::zero(), &OverlapBins::default_for(&px, &px));
        assert!(matches!(r, Err(Error::StateSpaceTooLarge { .. })));
    }

    #[test]
    fn cramer_rates_at_beta_zero() {
        // G_n(|R10 − 0.5| ≤ 0.05) is a binomial tail; oracle by counting
        let spec = mattis(BetaTriple::zero());
        let rows = empirical_rate(&spec, OverlapPoint::new(1.0, 0.5), 0.05, &[8, 12, 16], 3, 1).unwrap();
        for row in &rows {
            let n = row.n;
            let mut p = 0.0;
            for plus in 0..=n {
                let r10 = (2 * plus) as f64 / n as f64 - 1.0;
                if (r10 - 0.5).abs() <= 0.05 + 1e-12 {
                    p += binomial(n, plus) / 2f64.powi(n as i32);
                }
            }
            assert_abs_diff_eq!(row.estimate.to_f64(), -p.ln() / n as f64, epsilon = 1e-12);
            assert!(row.stderr < 1e-15);
            assert_eq!(row.infinite_draws, 0);
        }
        // a window with no configuration at n = 8
        let empty = empirical_rate(&spec, OverlapPoint::new(1.0, 0.1), 0.01, &[8], 2, 1).unwrap();
        assert_eq!(empty[0].estimate, Extended::PosInf);
        assert_eq!(empty[0].infinite_draws, 2);
        let csv = rates_to_csv(&empty);
        assert_eq!(csv, "n,estimate,stderr,infinite_draws\n8,+inf,0,2\n");
    }

    fn binomial(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn whole_range_window_has_zero_rate() {
        let spec = mattis(BetaTriple::new(0.7, 0.3, 0.0).unwrap());
        let rows = empirical_rate(&spec, OverlapPoint::new(1.0, 0.0), 2.0, &[6, 8], 4, 3).unwrap();
        for r in rows {
            assert_eq!(r.estimate, Extended::Finite(0.0));
        }
    }

    #[test]
    fn constrained_mass_is_monotone_in_eps() {
        let spec =
            ModelSpec::new(ternary(), DiscretePrior::rademacher(), BetaTriple::new(0.8, 0.5, 0.1).unwrap()).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.05, 0.1, 0.2, 0.4, 1.0] {
            let r = empirical_rate(&spec, OverlapPoint::new(1.2, 0.3), eps, &[7], 3, 5).unwrap();
            let v = r[0].estimate.to_f64();
            assert!(v <= last + 1e-12);
            assert!(v >= 0.0);
            last = v;
        }
    }

    #[test]
    fn zero_temperature_limits() {
        let px = DiscretePrior::rademacher();
        let d = DisorderSample::draw(10, &px, 4, 0);
        let b = BetaTriple::new(1.0, 0.5, 0.0).unwrap();
        let rep = zero_temperature_check(&d, &px, &b, &[0.0, 1.0, 10.0, 1000.0]).unwrap();
        let states = brute_force(&d, &px, &b);
        let max = states.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max) / 10.0;
        let mean = states.iter().map(|s| s.0.exp() * s.1).sum::<f64>() / 10.0;
        assert_abs_diff_eq!(rep.max_energy_per_site, max, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.rows[0].1, mean, epsilon = 1e-12);
        let at_1000 = rep.rows[3].1;
        assert!(at_1000 <= max + 1e-12 && max - at_1000 <= 2f64.ln() / 1000.0 + 1e-12);
        assert!(rep.rows.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-12));

        let single = DiscretePrior::dirac(0.7).unwrap();
        let rep = zero_temperature_check(&d, &single, &b, &[0.5, 3.0]).unwrap();
        let h = hamiltonian(&[0.7; 10], &d, &b).unwrap() / 10.0;
        for (_, v) in rep.rows {
            assert_abs_diff_eq!(v, h, epsilon = 1e-12);
        }
        assert!(zero_temperature_check(&d, &px, &b, &[-1.0]).is_err());
    }

    #[test]
    fn channel_free_energy_trivial_cases() {
        let px = DiscretePrior::rademacher();
        let ch = ChannelModel::matched_gaussian();
        let (m, _) = channel_free_energy(&ch, &px, &px, 1, 5, 0).unwrap();
        assert_eq!(m, 0.0);

        let flat = ChannelModel::mismatched(
            Likelihood::Function(crate::channel::FnLikelihood::new(|y, _w| {
                -0.5 * y * y - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })),
            Likelihood::Gaussian { sigma: 1.0 },
        )
        .unwrap();
        let (m, s) = channel_free_energy(&flat, &px, &px, 6, 4, 0).unwrap();
        assert_abs_diff_eq!(m, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-15);

        let unsampled = ChannelModel::mismatched(
            Likelihood::Gaussian { sigma: 1.0 },
            Likelihood::Function(crate::channel::FnLikelihood::new(|y, w| {
                -0.5 * (y - w) * (y - w) - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })),
        )
        .unwrap();
        assert!(matches!(channel_free_energy(&unsampled, &px, &px, 4, 1, 0), Err(Error::NoSampler)));
    }

    #[test]
    fn matched_gaussian_channel_is_the_gaussian_model() {
        // with common noise the two constructions coincide draw by draw
        let px = DiscretePrior::rademacher();
        let ch = ChannelModel::matched_gaussian();
        let n = 7;
        let x0 = draw_signal(n, &px, 3, 0);
        let mut y = vec![vec![0.0; n]; n];
        let mut w = vec![vec![0.0; n]; n];
        let mut rng = stream(3, StreamDomain::ChannelNoise, 0);
        for j in 1..n {
            for i in 0..j {
                let v = ch.truth().sample(x0[i] * x0[j] / (n as f64).sqrt(), &mut rng).unwrap();
                y[i][j] = v;
                y[j][i] = v;
                w[i][j] = v - x0[i] * x0[j] / (n as f64).sqrt();
                w[j][i] = w[i][j];
            }
        }
        let sites = Sites::new(&px, &x0);
        let a = log_partition(&PairTable::channel(&y, &ch, &px), &sites).unwrap();
        let d = DisorderSample::new(w, x0.clone(), 3).unwrap();
        let b =
            log_partition(&PairTable::hamiltonian(&d, &px, &BetaTriple::new(1.0, 1.0, -1.0).unwrap()), &sites).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-11);
    }

    #[test]
    fn free_energies_are_reproducible() {
        let spec = mattis(BetaTriple::new(0.9, 0.5, -0.2).unwrap());
        assert_eq!(hamiltonian_free_energy(&spec, 8, 6, 2).unwrap(), hamiltonian_free_energy(&spec, 8, 6, 2).unwrap());
        let ch = ChannelModel::matched(Likelihood::Laplace { b: 1.0 }).unwrap();
        let px = DiscretePrior::rademacher();
        let a = channel_free_energy(&ch, &px, &px, 6, 5, 1).unwrap();
        assert_eq!(a, channel_free_energy(&ch, &px, &px, 6, 5, 1).unwrap());
        let (betas, rows) = universality_gap(&ch, &px, &px, &[4, 6], 5, 1).unwrap();
        assert!((betas.beta * betas.beta - betas.beta_snr).abs() < 1e-6);
        assert_eq!(rows.len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn histogram_is_normalised(seed in 0u64..1000, n in 1usize..7, beta in 0.0f64..2.0, snr in -1.0f64..2.0, bs in -1.0f64..1.0) {
            let px = ternary();
            let p0 = make_discrete_prior(&[(1.0, 1.0), (-0.5, 1.0)]).unwrap();
            let d = DisorderSample::draw(n, &p0, seed, 0);
            let bins = OverlapBins::default_for(&px, &p0);
            let (_, h) = enumerate_gibbs(&d, &px, &BetaTriple::new(beta, snr, bs).unwrap(), &bins).unwrap();
            prop_assert!((h.total() - 1.0).abs() < 1e-12);
            prop_assert!(h.mass.iter().flatten().all(|&m| m >= 0.0));
            prop_assert_eq!(h.outside, 0.0);
        }
    }
}
