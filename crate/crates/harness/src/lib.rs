//! Experiment front door: synthetic dataset generation, flat key-value
//! configuration, seeded experiment execution, gradient checking, and
//! JSON-lines metrics persistence.

mod config;
mod data;
mod error;
mod gradcheck;
mod runner;
mod sweep;

pub use config::{Generator, Mode, RunConfig};
pub use data::{generate_data, DatasetBundle, LearnerSplits};
pub use error::{HarnessError, Result};
pub use gradcheck::{
    max_err_hvp_bilinear, max_err_hvp_quadratic, max_err_random_graphs, random_graph,
    require_pass, run_gradcheck, GradcheckOptions, GradcheckReport, TagResult,
};
pub use runner::{il_config, il_sources, lpt_config, lpt_shape, lpt_sources, run_experiment, RunOutcome};
pub use sweep::{sweep, SweepParam};
