//! Franz–Parisi large deviations and universality coefficients for mismatched
//! rank-one estimation with discrete priors.

mod error;
mod extended;
mod numerics;
mod optim;
mod quadrature;
mod rng;

pub mod cascade;
pub mod channel;
pub mod gibbs;
pub mod measures;
pub mod variational;

pub use cascade::{cascade_expectation, cascade_x0, rpc_average, y_term, RSBPoint, RSBSequence};
pub use channel::{
    score_derivatives, universality_coefficients, BetaTriple, ChannelModel, ChannelSpec, DerivativeMode, Likelihood,
    UniversalityReport,
};
pub use error::{Error, ErrorCategory, Result};
pub use extended::{format_sig9, Extended};
pub use gibbs::{
    channel_free_energy, empirical_rate, enumerate_gibbs, hamiltonian, hamiltonian_free_energy, metropolis_sample,
    universality_gap, zero_temperature_check, ChainConfig, DisorderSample, EmpiricalRateRow, GapRow, OverlapBins,
    OverlapHistogram, ZeroTemperatureReport,
};
pub use measures::{entropy_rate, in_constraint_set, log_laplace, make_discrete_prior, DiscretePrior, OverlapPoint};
pub use numerics::{log_sum_exp, mean_stderr, LogSumExp};
pub use optim::{Minimum, NelderMead};
pub use quadrature::{QuadratureKind, QuadratureRule};
pub use rng::{stream, StreamDomain};
pub use variational::{
    overlap_minimizer, parisi_objective, phi, phi_rs, rate_function, rs_minimum, sup_phi, ModelSpec, OptimizerConfig,
    PhiResult, RateSurface,
};
