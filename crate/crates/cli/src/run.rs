//! Dispatch of a validated configuration to the library.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fpld_core::gibbs::rates_to_csv;
use fpld_core::{
    empirical_rate, entropy_rate, enumerate_gibbs, format_sig9, metropolis_sample, phi, rate_function, sup_phi,
    universality_coefficients, universality_gap, zero_temperature_check, DisorderSample, Extended, OverlapBins,
    OverlapHistogram, OverlapPoint,
};
use serde::Serialize;

use crate::config::{
    CoeffsConfig, EntropyConfig, ExperimentConfig, PhiConfig, RateCheck, RateGridConfig, Sampler, SimulateConfig,
    UniversalityCheck, VerifyConfig, ZeroTempConfig,
};
use crate::error::CliError;

/// Everything a command produces: the stdout summary and the file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: String,
    pub csv: String,
    pub json: String,
}

/// Paths written for output path `out`: the CSV itself and `<out>.json`.
pub fn output_paths(out: &Path) -> (PathBuf, PathBuf) {
    let mut json = OsString::from(out.as_os_str());
    json.push(".json");
    (out.to_path_buf(), PathBuf::from(json))
}

/// Runs the command on a pool of `threads` workers (all cores if `None`)
/// and writes the outputs if the configuration names an output path.
pub fn execute(config: &ExperimentConfig, threads: Option<usize>) -> Result<Report, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::ThreadPool(e.to_string()))?;
    let report = pool.install(|| run(config))?;
    if let Some(out) = config.output_path() {
        let (csv_path, json_path) = output_paths(out);
        for (path, text) in [(csv_path, &report.csv), (json_path, &report.json)] {
            std::fs::write(&path, text).map_err(|source| CliError::Write { path, source })?;
        }
    }
    Ok(report)
}

/// Computes the outputs of a validated configuration without touching disk.
pub fn run(config: &ExperimentConfig) -> Result<Report, CliError> {
    match config {
        ExperimentConfig::Coeffs(c) => coeffs(c),
        ExperimentConfig::Phi(c) => run_phi(c),
        ExperimentConfig::Entropy(c) => entropy(c),
        ExperimentConfig::RateGrid(c) => rate_grid(c),
        ExperimentConfig::Simulate(c) => simulate(c),
        ExperimentConfig::Verify(c) => verify(c),
        ExperimentConfig::ZeroTemp(c) => zero_temp(c),
    }
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    config: &'a C,
    result: R,
}

fn envelope<C: Serialize, R: Serialize>(config: &C, result: R) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(&Envelope { config, result }).map_err(CliError::Json)?;
    s.push('\n');
    Ok(s)
}

fn point(p: [f64; 2]) -> OverlapPoint {
    OverlapPoint::new(p[0], p[1])
}

fn sig(x: f64) -> String {
    format_sig9(x)
}

fn coeffs(c: &CoeffsConfig) -> Result<Report, CliError> {
    let ch = c.channel.build()?;
    let report = universality_coefficients(&ch, &ch.default_quadrature(c.quadrature_nodes)?)?;
    let b = report.betas;
    let mut summary = format!("beta={:.6} beta_snr={:.6} beta_s={:.6}", b.beta, b.beta_snr, b.beta_s);
    let _ = write!(summary, " residual={}", sig(report.consistency_residual));
    if let Some(w) = &report.warning {
        let _ = write!(summary, " warning=\"{w}\"");
    }
    let csv = format!(
        "beta,beta_snr,beta_s,consistency_residual\n{},{},{},{}\n",
        sig(b.beta),
        sig(b.beta_snr),
        sig(b.beta_s),
        sig(report.consistency_residual)
    );
    Ok(Report { summary, csv, json: envelope(c, &report)? })
}

fn run_phi(c: &PhiConfig) -> Result<Report, CliError> {
    let res = phi(&c.spec, point(c.point), &c.optimizer)?;
    let depth = res.argmin.as_ref().map_or("-".to_string(), |a| a.rsb.r().to_string());
    let summary = format!("phi={} S={} M={} r={}", res.value, sig(c.point[0]), sig(c.point[1]), depth);
    let csv = format!("S,M,phi\n{},{},{}\n", sig(c.point[0]), sig(c.point[1]), res.value);
    Ok(Report { summary, csv, json: envelope(c, &res)? })
}

#[derive(Serialize)]
struct EntropyRow {
    s: f64,
    m: f64,
    entropy: Extended,
}

fn entropy(c: &EntropyConfig) -> Result<Report, CliError> {
    let rows = c
        .points
        .iter()
        .map(|&p| {
            let v = entropy_rate(&c.prior_x, &c.prior_0, point(p), &c.optimizer)?;
            Ok(EntropyRow { s: p[0], m: p[1], entropy: v })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut csv = String::from("S,M,entropy\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{}", sig(r.s), sig(r.m), r.entropy);
    }
    let first = &rows[0];
    let summary = format!("points={} entropy={} at S={} M={}", rows.len(), first.entropy, sig(first.s), sig(first.m));
    Ok(Report { summary, csv, json: envelope(c, &rows)? })
}

fn rate_grid(c: &RateGridConfig) -> Result<Report, CliError> {
    let surface = sup_phi(&c.spec, &c.optimizer, &c.s_grid.points(), &c.m_grid.points())?;
    let summary = format!(
        "sup_phi={} argmax=({},{}) unique={} gap={}",
        sig(surface.sup_phi),
        sig(surface.argmax.s),
        sig(surface.argmax.m),
        surface.minimizer_unique,
        surface.gap
    );
    let mut json = surface.to_json()?;
    json.push('\n');
    Ok(Report { summary, csv: surface.to_csv(), json })
}

fn histogram_csv(h: &OverlapHistogram) -> String {
    let mut csv = String::from("S_lo,S_hi,M_lo,M_hi,mass\n");
    for (i, row) in h.mass.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                sig(h.s_edges[i]),
                sig(h.s_edges[i + 1]),
                sig(h.m_edges[j]),
                sig(h.m_edges[j + 1]),
                sig(p)
            );
        }
    }
    csv
}

#[derive(Serialize)]
struct SimulateResult {
    log_z: Option<f64>,
    histogram: OverlapHistogram,
}

fn simulate(c: &SimulateConfig) -> Result<Report, CliError> {
    let d = DisorderSample::draw(c.n, &c.spec.prior_0, c.seed, c.disorder_index);
    let bins = c.bins.clone().unwrap_or_else(|| OverlapBins::default_for(&c.spec.prior_x, &c.spec.prior_0));
    let (log_z, histogram) = match c.sampler {
        Sampler::Enumerate => {
            let (lz, h) = enumerate_gibbs(&d, &c.spec.prior_x, &c.spec.betas, &bins)?;
            (Some(lz), h)
        }
        Sampler::Metropolis => (None, metropolis_sample(&d, &c.spec.prior_x, &c.spec.betas, &c.chain, &bins)?),
    };
    // Most probable bin; ties go to the first in row-major order.
    let (mut best, mut at) = (f64::NEG_INFINITY, (0, 0));
    for (i, row) in histogram.mass.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > best {
                best = p;
                at = (i, j);
            }
        }
    }
    let centre = |e: &[f64], k: usize| 0.5 * (e[k] + e[k + 1]);
    let summary = format!(
        "n={} sampler={} mode=({},{}) mass={} outside={}",
        c.n,
        c.sampler.name(),
        sig(centre(&histogram.s_edges, at.0)),
        sig(centre(&histogram.m_edges, at.1)),
        sig(best),
        sig(histogram.outside)
    );
    let csv = histogram_csv(&histogram);
    Ok(Report { summary, csv, json: envelope(c, SimulateResult { log_z, histogram })? })
}

#[derive(Serialize)]
struct RateVerification {
    limit: Extended,
    rows: Vec<fpld_core::EmpiricalRateRow>,
}

fn verify(c: &VerifyConfig) -> Result<Report, CliError> {
    match (&c.rate, &c.universality) {
        (Some(r), None) => verify_rate(c, r),
        (None, Some(u)) => verify_universality(c, u),
        _ => Err(CliError::Invalid {
            path: "verify".into(),
            message: "exactly one of `rate` and `universality` must be given".into(),
        }),
    }
}

fn verify_rate(c: &VerifyConfig, r: &RateCheck) -> Result<Report, CliError> {
    let p = point(r.point);
    let surface = sup_phi(&r.spec, &r.optimizer, &r.s_grid.points(), &r.m_grid.points())?;
    let limit = rate_function(&r.spec, &surface, p)?;
    let rows = empirical_rate(&r.spec, p, r.eps, &r.n_list, r.samples, c.seed)?;
    let last = rows.last().expect("n_list is non-empty");
    let summary = format!("limit={} n={} estimate={} stderr={}", limit, last.n, last.estimate, sig(last.stderr));
    Ok(Report { summary, csv: rates_to_csv(&rows), json: envelope(c, RateVerification { limit, rows })? })
}

#[derive(Serialize)]
struct UniversalityVerification {
    betas: fpld_core::BetaTriple,
    rows: Vec<fpld_core::GapRow>,
}

fn verify_universality(c: &VerifyConfig, u: &UniversalityCheck) -> Result<Report, CliError> {
    let ch = u.channel.build()?;
    let (betas, rows) = universality_gap(&ch, &u.prior_x, &u.prior_0, &u.n_list, u.samples, c.seed)?;
    let mut summary = format!("beta={:.6} beta_snr={:.6} beta_s={:.6}", betas.beta, betas.beta_snr, betas.beta_s);
    let mut csv = String::from("n,channel_mean,channel_stderr,gaussian_mean,gaussian_stderr,gap\n");
    for g in &rows {
        let _ = write!(summary, " gap[n={}]={}", g.n, sig(g.gap));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            g.n,
            sig(g.channel_mean),
            sig(g.channel_stderr),
            sig(g.gaussian_mean),
            sig(g.gaussian_stderr),
            sig(g.gap)
        );
    }
    Ok(Report { summary, csv, json: envelope(c, UniversalityVerification { betas, rows })? })
}

fn zero_temp(c: &ZeroTempConfig) -> Result<Report, CliError> {
    let d = DisorderSample::draw(c.n, &c.spec.prior_0, c.seed, c.disorder_index);
    let report = zero_temperature_check(&d, &c.spec.prior_x, &c.spec.betas, &c.l_list)?;
    let mut csv = String::from("L,value\n");
    for (l, v) in &report.rows {
        let _ = writeln!(csv, "{},{}", sig(*l), sig(*v));
    }
    let (l_top, v_top) = report.rows.iter().copied().max_by(|a, b| a.0.total_cmp(&b.0)).expect("l_list is non-empty");
    let summary = format!(
        "max_energy_per_site={} L={} value={} diff={}",
        sig(report.max_energy_per_site),
        sig(l_top),
        sig(v_top),
        sig((v_top - report.max_energy_per_site).abs())
    );
    Ok(Report { summary, csv, json: envelope(c, &report)? })
}
