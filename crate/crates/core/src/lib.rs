pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod params;
pub mod pfilter;
pub mod rng;
pub mod samplers;
pub mod simulators;
pub mod summaries;
pub mod synlik;

pub use error::{Error, Result};
pub use params::ParamVec;
