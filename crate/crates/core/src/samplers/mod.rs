//! Metropolis-Hastings with plug-in likelihoods, rejection ABC and SMC-ABC.

mod abc;
mod mh;
mod prior;
mod scaling;

pub use abc::{abc_rejection, smc_abc, AbcPopulation, AbcRejection, SmcAbcConfig, SmcAbcResult};
pub use mh::{
    acceptance_terms, mh_chain, pmmh, slmh, AcceptanceTerms, Chain, FnLogLik, LogLikelihood, MhConfig, PfPlugin,
    ProposalSpec, SlPlugin, Transform,
};
pub use prior::{ricker_prior, vole_prior, PriorComponent, PriorDist, PriorSpec};
pub use scaling::{
    quadratic_argmin, quadratic_fit, scaling_matrix_experiment, write_scaling_csv, ScalingExperimentConfig, ScalingRow,
};
