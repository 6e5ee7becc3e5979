//! Command-line front end: JSON experiment configurations in, CSV and JSON
//! tables out.

pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fpld_core::{BetaTriple, ChannelSpec};

pub use config::{parse_config, to_json, ExperimentConfig, Grid, Sampler};
pub use error::CliError;
pub use run::{execute, output_paths, run, Report};

const CONFIG_HELP: &str = "\
Configurations are strict JSON objects (unknown keys are rejected) with a
`command` field; flags given on the command line override the file.

Required fields per command (optional ones in brackets):
  coeffs     channel  [quadrature_nodes, output_path]
  phi        spec, point=[S,M]  [optimizer, output_path]
  entropy    prior_x, prior_0, points=[[S,M],...]  [optimizer, output_path]
  rate-grid  spec, s_grid, m_grid  [optimizer, output_path]
  simulate   spec, n  [sampler, chain, bins, seed, disorder_index, output_path]
  verify     rate={spec, point, eps, n_list, samples, s_grid, m_grid [optimizer]}
             or universality={channel, prior_x, prior_0, n_list, samples}  [seed, output_path]
  zero-temp  spec, n, l_list  [seed, disorder_index, output_path]

  spec    = {\"prior_x\": {\"atoms\": [[x, w], ...]}, \"prior_0\": {...},
             \"betas\": {\"beta\": b, \"beta_snr\": s, \"beta_s\": t}}
  channel = {\"kind\": \"gaussian\", \"sigma\": 1} | {\"kind\": \"laplace\", \"b\": 1}
            | {\"kind\": \"binary\"} | {\"kind\": \"matched-gaussian\"}
            | {\"kind\": \"custom\", \"table\": {...}, \"domain\": [a, b]}
  grid    = [v0, v1, ...] | {\"start\": a, \"stop\": b, \"num\": k}

Outputs go to <out> (CSV, nine significant digits) and <out>.json; a one-line
summary is printed on stdout. Exit codes: 2 configuration, 3 numerical
failure, 4 resource cap.";

#[derive(Debug, Parser)]
#[command(name = "fpld", version, about = "Franz–Parisi large deviations and universality coefficients", after_help = CONFIG_HELP)]
pub struct Cli {
    /// JSON experiment configuration; without a subcommand its `command` field is run.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream the command consumes.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output path: CSV at PATH, JSON at PATH.json.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Universality coefficients (beta, beta_snr, beta_s) of a channel. Requires: channel.
    Coeffs {
        /// Channel as inline JSON, e.g. '{"kind":"laplace","b":1}'.
        #[arg(long, value_name = "JSON")]
        channel: Option<String>,
    },
    /// The variational functional phi(S, M). Requires: spec, point.
    Phi {
        /// Overlap point "S,M".
        #[arg(long, value_parser = parse_pair, value_name = "S,M", allow_hyphen_values = true)]
        point: Option<[f64; 2]>,
        /// Coefficients "beta,beta_snr,beta_s".
        #[arg(long, value_parser = parse_betas, value_name = "B,B_SNR,B_S", allow_hyphen_values = true)]
        betas: Option<BetaTriple>,
    },
    /// The reference-measure rate I(S, M). Requires: prior_x, prior_0, points.
    Entropy {
        /// Overlap point "S,M"; repeat for several.
        #[arg(long, value_parser = parse_pair, value_name = "S,M", allow_hyphen_values = true)]
        point: Vec<[f64; 2]>,
    },
    /// phi and the rate function on an (S, M) grid. Requires: spec, s_grid, m_grid.
    RateGrid {
        #[arg(long, value_parser = parse_betas, value_name = "B,B_SNR,B_S", allow_hyphen_values = true)]
        betas: Option<BetaTriple>,
    },
    /// Overlap histogram of the finite-n Gibbs measure. Requires: spec, n.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum)]
        sampler: Option<Sampler>,
        /// Sweeps per chain (Metropolis).
        #[arg(long)]
        sweeps: Option<u64>,
        #[arg(long, value_parser = parse_betas, value_name = "B,B_SNR,B_S", allow_hyphen_values = true)]
        betas: Option<BetaTriple>,
    },
    /// Finite-n checks: empirical rate or universality gap. Requires: rate or universality.
    Verify {
        /// Disorder draws per size.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Low-temperature free energy against the ground state. Requires: spec, n, l_list.
    ZeroTemp {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_parser = parse_betas, value_name = "B,B_SNR,B_S", allow_hyphen_values = true)]
        betas: Option<BetaTriple>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Coeffs { .. } => "coeffs",
            Command::Phi { .. } => "phi",
            Command::Entropy { .. } => "entropy",
            Command::RateGrid { .. } => "rate-grid",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
            Command::ZeroTemp { .. } => "zero-temp",
        }
    }
}

fn parse_floats<const K: usize>(s: &str) -> Result<[f64; K], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != K {
        return Err(format!("expected {K} comma-separated numbers, got `{s}`"));
    }
    let mut out = [0.0; K];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse::<f64>().map_err(|e| format!("`{p}`: {e}"))?;
    }
    Ok(out)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_floats::<2>(s)
}

fn parse_betas(s: &str) -> Result<BetaTriple, String> {
    let [b, snr, bs] = parse_floats::<3>(s)?;
    BetaTriple::new(b, snr, bs).map_err(|e| e.to_string())
}

impl Cli {
    /// The configuration to run: the file (or the command's defaults),
    /// with command-line flags applied on top and validated.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| CliError::ReadConfig { path: path.clone(), source })?;
                let config = parse_config(&text)?;
                if let Some(cmd) = &self.command {
                    if cmd.name() != config.command() {
                        return Err(CliError::Invalid {
                            path: "command".into(),
                            message: format!("config is for `{}` but `{}` was requested", config.command(), cmd.name()),
                        });
                    }
                }
                config
            }
            None => match &self.command {
                Some(cmd) => ExperimentConfig::default_for(cmd.name())?,
                None => {
                    return Err(CliError::Invalid {
                        path: "command".into(),
                        message: "give a subcommand or --config".into(),
                    })
                }
            },
        };
        if let Some(cmd) = &self.command {
            apply_flags(&mut config, cmd)?;
        }
        if let Some(seed) = self.seed {
            config.set_seed(seed);
        }
        if let Some(out) = &self.out {
            config.set_output_path(out.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

fn apply_flags(config: &mut ExperimentConfig, cmd: &Command) -> Result<(), CliError> {
    match (config, cmd) {
        (ExperimentConfig::Coeffs(c), Command::Coeffs { channel }) => {
            if let Some(text) = channel {
                c.channel = serde_json::from_str::<ChannelSpec>(text)
                    .map_err(|e| CliError::Invalid { path: "channel".into(), message: e.to_string() })?;
            }
        }
        (ExperimentConfig::Phi(c), Command::Phi { point, betas }) => {
            if let Some(p) = point {
                c.point = *p;
            }
            if let Some(b) = betas {
                c.spec.betas = *b;
            }
        }
        (ExperimentConfig::Entropy(c), Command::Entropy { point }) => {
            if !point.is_empty() {
                c.points = point.clone();
            }
        }
        (ExperimentConfig::RateGrid(c), Command::RateGrid { betas }) => {
            if let Some(b) = betas {
                c.spec.betas = *b;
            }
        }
        (ExperimentConfig::Simulate(c), Command::Simulate { n, sampler, sweeps, betas }) => {
            if let Some(n) = n {
                c.n = *n;
            }
            if let Some(s) = sampler {
                c.sampler = *s;
            }
            if let Some(s) = sweeps {
                c.chain.sweeps = *s;
            }
            if let Some(b) = betas {
                c.spec.betas = *b;
            }
        }
        (ExperimentConfig::Verify(c), Command::Verify { samples }) => {
            if let Some(s) = samples {
                if let Some(r) = &mut c.rate {
                    r.samples = *s;
                }
                if let Some(u) = &mut c.universality {
                    u.samples = *s;
                }
            }
        }
        (ExperimentConfig::ZeroTemp(c), Command::ZeroTemp { n, betas }) => {
            if let Some(n) = n {
                c.n = *n;
            }
            if let Some(b) = betas {
                c.spec.betas = *b;
            }
        }
        _ => unreachable!("command and configuration kinds are checked to agree"),
    }
    Ok(())
}

/// Parses arguments, runs, prints the summary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.resolve().and_then(|config| execute(&config, cli.threads)) {
        Ok(report) => {
            println!("{}", report.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
