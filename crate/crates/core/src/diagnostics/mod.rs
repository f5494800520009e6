//! Normality checks of summary statistics, Lyapunov exponents and
//! estimator comparison tables.

mod compare;
mod lyapunov;
mod normality;

pub use compare::{
    batch_means_mcse, compare_estimators, paired_t_pvalue, posterior_summary, ComparisonRow, ComparisonTable,
    ErrorStats, ParamSummary,
};
pub use lyapunov::{
    lyapunov_exponent, lyapunov_max, lyapunov_posterior, Divergence, DynamicalSystem, LogisticMap, LyapunovPosterior,
    LyapunovResult, VoleSkeleton, DEFAULT_DELTA0, MIN_HORIZON_MONTHS, STEPS_PER_MONTH,
};
pub use normality::{krzanowski_report, MarginalQq, NormalityReport};
