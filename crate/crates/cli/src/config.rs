//! Strict JSON experiment configurations, one struct per command.

use std::path::PathBuf;

use fpld_core::channel::DEFAULT_NODES;
use fpld_core::{BetaTriple, ChainConfig, ChannelSpec, DiscretePrior, ModelSpec, OptimizerConfig, OverlapBins};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// The command names accepted in the `command` field, in help order.
pub const COMMANDS: [&str; 7] = ["coeffs", "phi", "entropy", "rate-grid", "simulate", "verify", "zero-temp"];

/// A validated experiment: the command and its parameters.
#[allow(clippy::large_enum_variant)] // built once per process
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Coeffs(CoeffsConfig),
    Phi(PhiConfig),
    Entropy(EntropyConfig),
    RateGrid(RateGridConfig),
    Simulate(SimulateConfig),
    Verify(VerifyConfig),
    ZeroTemp(ZeroTempConfig),
}

/// Universality coefficients of a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffsConfig {
    pub channel: ChannelSpec,
    /// Gauss–Legendre nodes per panel of the output-space quadrature.
    #[serde(default = "default_quadrature_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

/// `φ(S, M)` at one overlap point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    pub spec: ModelSpec,
    /// `[S, M]`.
    pub point: [f64; 2],
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

/// The reference-measure rate `𝓘(S, M)` at a list of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    pub prior_x: DiscretePrior,
    pub prior_0: DiscretePrior,
    /// `[[S, M], ...]`.
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

/// `φ` on an `(S, M)` grid, its supremum and the rate surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateGridConfig {
    pub spec: ModelSpec,
    pub s_grid: Grid,
    pub m_grid: Grid,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Enumerate,
    #[default]
    Metropolis,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Enumerate => "enumerate",
            Sampler::Metropolis => "metropolis",
        }
    }
}

/// The overlap histogram of one disorder draw at size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub spec: ModelSpec,
    pub n: usize,
    #[serde(default)]
    pub sampler: Sampler,
    #[serde(default)]
    pub chain: ChainConfig,
    /// Defaults to a 41 × 41 grid covering the support bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<OverlapBins>,
    /// Seed of the disorder streams.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub disorder_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

/// A finite-size check against a limiting prediction; exactly one of
/// `rate` and `universality` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universality: Option<UniversalityCheck>,
    /// Seed of the disorder streams.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

/// Empirical `−(1/n) log G_n(window)` against the variational rate at `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCheck {
    pub spec: ModelSpec,
    pub point: [f64; 2],
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub samples: usize,
    /// Grid on which `sup φ` is taken for the limiting rate.
    pub s_grid: Grid,
    pub m_grid: Grid,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

/// Channel free energy against its Gaussian-equivalent Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniversalityCheck {
    pub channel: ChannelSpec,
    pub prior_x: DiscretePrior,
    pub prior_0: DiscretePrior,
    pub n_list: Vec<usize>,
    pub samples: usize,
}

/// `(1/(L n)) log Z_n(L)` against the exact ground-state energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroTempConfig {
    pub spec: ModelSpec,
    pub n: usize,
    pub l_list: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub disorder_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

/// A list of values, or `{"start", "stop", "num"}` for evenly spaced ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Linspace(Linspace),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub num: usize,
}

impl Grid {
    pub fn linspace(start: f64, stop: f64, num: usize) -> Self {
        Grid::Linspace(Linspace { start, stop, num })
    }

    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Linspace(Linspace { start, stop, num }) => match num {
                0 => Vec::new(),
                1 => vec![*start],
                _ => {
                    let h = (stop - start) / (*num - 1) as f64;
                    let mut v: Vec<f64> = (0..*num).map(|k| start + k as f64 * h).collect();
                    v[num - 1] = *stop;
                    v
                }
            },
        }
    }

    fn validate(&self, path: &str) -> Result<(), CliError> {
        let pts = self.points();
        if pts.is_empty() {
            return Err(invalid(path, "grid must contain at least one point"));
        }
        if pts.iter().any(|v| !v.is_finite()) {
            return Err(invalid(path, "grid values must be finite"));
        }
        if pts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid(path, "grid values must be strictly increasing"));
        }
        Ok(())
    }
}

fn default_quadrature_nodes() -> usize {
    DEFAULT_NODES
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Invalid { path: path.to_string(), message: message.into() }
}

fn check(path: &str, r: fpld_core::Result<()>) -> Result<(), CliError> {
    r.map_err(|e| invalid(path, e.to_string()))
}

fn check_point(path: &str, p: [f64; 2]) -> Result<(), CliError> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(path, "point coordinates must be finite"))
    }
}

fn check_sizes(path: &str, list: &[usize]) -> Result<(), CliError> {
    if list.is_empty() || list.contains(&0) {
        return Err(invalid(path, "list must be non-empty with every size at least 1"));
    }
    Ok(())
}

fn check_positive(path: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(invalid(path, "must be at least 1"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn command(&self) -> &'static str {
        match self {
            ExperimentConfig::Coeffs(_) => "coeffs",
            ExperimentConfig::Phi(_) => "phi",
            ExperimentConfig::Entropy(_) => "entropy",
            ExperimentConfig::RateGrid(_) => "rate-grid",
            ExperimentConfig::Simulate(_) => "simulate",
            ExperimentConfig::Verify(_) => "verify",
            ExperimentConfig::ZeroTemp(_) => "zero-temp",
        }
    }

    pub fn output_path(&self) -> Option<&PathBuf> {
        match self {
            ExperimentConfig::Coeffs(c) => c.output_path.as_ref(),
            ExperimentConfig::Phi(c) => c.output_path.as_ref(),
            ExperimentConfig::Entropy(c) => c.output_path.as_ref(),
            ExperimentConfig::RateGrid(c) => c.output_path.as_ref(),
            ExperimentConfig::Simulate(c) => c.output_path.as_ref(),
            ExperimentConfig::Verify(c) => c.output_path.as_ref(),
            ExperimentConfig::ZeroTemp(c) => c.output_path.as_ref(),
        }
    }

    pub fn set_output_path(&mut self, path: PathBuf) {
        let slot = match self {
            ExperimentConfig::Coeffs(c) => &mut c.output_path,
            ExperimentConfig::Phi(c) => &mut c.output_path,
            ExperimentConfig::Entropy(c) => &mut c.output_path,
            ExperimentConfig::RateGrid(c) => &mut c.output_path,
            ExperimentConfig::Simulate(c) => &mut c.output_path,
            ExperimentConfig::Verify(c) => &mut c.output_path,
            ExperimentConfig::ZeroTemp(c) => &mut c.output_path,
        };
        *slot = Some(path);
    }

    /// Sets every seed the command consumes.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Coeffs(_) => {}
            ExperimentConfig::Phi(c) => c.optimizer.seed = seed,
            ExperimentConfig::Entropy(c) => c.optimizer.seed = seed,
            ExperimentConfig::RateGrid(c) => c.optimizer.seed = seed,
            ExperimentConfig::Simulate(c) => {
                c.seed = seed;
                c.chain.seed = seed;
            }
            ExperimentConfig::Verify(c) => {
                c.seed = seed;
                if let Some(r) = &mut c.rate {
                    r.optimizer.seed = seed;
                }
            }
            ExperimentConfig::ZeroTemp(c) => c.seed = seed,
        }
    }

    /// Range checks beyond what deserialization enforces; messages are
    /// qualified by the offending field path.
    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            ExperimentConfig::Coeffs(c) => {
                if !(2..=100_000).contains(&c.quadrature_nodes) {
                    return Err(invalid("quadrature_nodes", "must lie in [2, 100000]"));
                }
                check("channel", c.channel.build().map(|_| ()))
            }
            ExperimentConfig::Phi(c) => {
                check("spec", c.spec.validate())?;
                check_point("point", c.point)?;
                check("optimizer", c.optimizer.validate())
            }
            ExperimentConfig::Entropy(c) => {
                if c.points.is_empty() {
                    return Err(invalid("points", "at least one point is required"));
                }
                for (k, p) in c.points.iter().enumerate() {
                    check_point(&format!("points[{k}]"), *p)?;
                }
                check("optimizer", c.optimizer.validate())
            }
            ExperimentConfig::RateGrid(c) => {
                check("spec", c.spec.validate())?;
                c.s_grid.validate("s_grid")?;
                c.m_grid.validate("m_grid")?;
                check("optimizer", c.optimizer.validate())
            }
            ExperimentConfig::Simulate(c) => {
                check("spec", c.spec.validate())?;
                check_positive("n", c.n)?;
                if c.sampler == Sampler::Metropolis {
                    check("chain", c.chain.validate())?;
                }
                if let Some(b) = &c.bins {
                    check("bins", OverlapBins::new(b.s_edges.clone(), b.m_edges.clone()).map(|_| ()))?;
                }
                Ok(())
            }
            ExperimentConfig::Verify(c) => match (&c.rate, &c.universality) {
                (Some(r), None) => {
                    check("rate.spec", r.spec.validate())?;
                    check_point("rate.point", r.point)?;
                    if !(r.eps >= 0.0 && r.eps.is_finite()) {
                        return Err(invalid("rate.eps", "must be finite and non-negative"));
                    }
                    check_sizes("rate.n_list", &r.n_list)?;
                    check_positive("rate.samples", r.samples)?;
                    r.s_grid.validate("rate.s_grid")?;
                    r.m_grid.validate("rate.m_grid")?;
                    check("rate.optimizer", r.optimizer.validate())
                }
                (None, Some(u)) => {
                    check("universality.channel", u.channel.build().map(|_| ()))?;
                    check_sizes("universality.n_list", &u.n_list)?;
                    check_positive("universality.samples", u.samples)
                }
                _ => Err(invalid("verify", "exactly one of `rate` and `universality` must be given")),
            },
            ExperimentConfig::ZeroTemp(c) => {
                check("spec", c.spec.validate())?;
                check_positive("n", c.n)?;
                if c.l_list.is_empty() || c.l_list.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                    return Err(invalid("l_list", "must be non-empty with finite non-negative entries"));
                }
                Ok(())
            }
        }
    }

    /// The configuration used when a command is run without `--config`.
    pub fn default_for(command: &str) -> Result<Self, CliError> {
        let mattis = ModelSpec::mattis(BetaTriple { beta: 0.5, beta_snr: 0.4, beta_s: 0.0 });
        let cramer = ModelSpec::mattis(BetaTriple::zero());
        Ok(match command {
            "coeffs" => ExperimentConfig::Coeffs(CoeffsConfig {
                channel: ChannelSpec::MatchedGaussian {},
                quadrature_nodes: DEFAULT_NODES,
                output_path: None,
            }),
            "phi" => ExperimentConfig::Phi(PhiConfig {
                spec: mattis,
                point: [1.0, 0.0],
                optimizer: OptimizerConfig::default(),
                output_path: None,
            }),
            "entropy" => ExperimentConfig::Entropy(EntropyConfig {
                prior_x: DiscretePrior::rademacher(),
                prior_0: cramer.prior_0.clone(),
                points: vec![[1.0, 0.0]],
                optimizer: OptimizerConfig::default(),
                output_path: None,
            }),
            "rate-grid" => ExperimentConfig::RateGrid(RateGridConfig {
                spec: mattis,
                s_grid: Grid::Values(vec![1.0]),
                m_grid: Grid::linspace(-1.0, 1.0, 21),
                optimizer: OptimizerConfig::default(),
                output_path: None,
            }),
            "simulate" => ExperimentConfig::Simulate(SimulateConfig {
                spec: mattis,
                n: 12,
                sampler: Sampler::Metropolis,
                chain: ChainConfig::default(),
                bins: None,
                seed: 0,
                disorder_index: 0,
                output_path: None,
            }),
            "verify" => ExperimentConfig::Verify(VerifyConfig {
                rate: Some(RateCheck {
                    spec: cramer,
                    point: [1.0, 0.5],
                    eps: 0.05,
                    n_list: vec![8, 12, 16],
                    samples: 1,
                    s_grid: Grid::Values(vec![1.0]),
                    m_grid: Grid::linspace(-1.0, 1.0, 41),
                    optimizer: OptimizerConfig::default(),
                }),
                universality: None,
                seed: 0,
                output_path: None,
            }),
            "zero-temp" => ExperimentConfig::ZeroTemp(ZeroTempConfig {
                spec: mattis,
                n: 12,
                l_list: vec![0.0, 10.0, 100.0, 1000.0],
                seed: 0,
                disorder_index: 0,
                output_path: None,
            }),
            other => return Err(CliError::UnknownCommand(other.to_string())),
        })
    }
}

fn from_value<T: serde::de::DeserializeOwned>(value: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Invalid { path, message: e.into_inner().to_string() }
    })
}

/// Parses and validates a configuration. Unknown keys, unknown commands and
/// out-of-range values are rejected with a path-qualified message.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(CliError::Json)?;
    let Value::Object(mut map) = value else {
        return Err(invalid(".", "configuration must be a JSON object"));
    };
    let command = match map.remove("command") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(invalid("command", "must be a string")),
        None => return Err(invalid("command", "missing field `command`")),
    };
    let body = Value::Object(map);
    let config = match command.as_str() {
        "coeffs" => ExperimentConfig::Coeffs(from_value(body)?),
        "phi" => ExperimentConfig::Phi(from_value(body)?),
        "entropy" => ExperimentConfig::Entropy(from_value(body)?),
        "rate-grid" => ExperimentConfig::RateGrid(from_value(body)?),
        "simulate" => ExperimentConfig::Simulate(from_value(body)?),
        "verify" => ExperimentConfig::Verify(from_value(body)?),
        "zero-temp" => ExperimentConfig::ZeroTemp(from_value(body)?),
        _ => return Err(CliError::UnknownCommand(command)),
    };
    config.validate()?;
    Ok(config)
}

/// Strict JSON text of a configuration; `parse_config` inverts it.
pub fn to_json(config: &ExperimentConfig) -> Result<String, CliError> {
    serde_json::to_string_pretty(config).map_err(CliError::Json)
}
