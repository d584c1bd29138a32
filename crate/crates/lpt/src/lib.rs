//! Learning by passing tests: a testee searches an architecture while a
//! tester composes tests from a bank of examples. The testee descends the
//! normalized loss on the selected test; the tester ascends it while
//! keeping its own validation loss low. Both updates differentiate through
//! one-step approximations of the inner training stages.

mod engine_bridge;
mod graphs;
mod model;
mod oracle;
mod steps;

pub use engine_bridge::build_engine_problem;
pub use graphs::{LptGraphs, ProbsGraph};
pub use model::{
    init_groups, relaxed_weighted_loss, select_probabilities, test_cardinality, AblationMode,
    LptConfig, LptShape, RelaxedTest, Tester, Testee,
};
pub use oracle::{unrolled_objective, ObjectiveProbe};
pub use steps::{
    arch_hypergrad, creator_hypergrad, lpt_iterate, stage1_weight_step, stage2_tester_step,
    unroll, LptSetup, Unrolled,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LptError {
    #[error("per-example losses and selection probabilities differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("test cardinality {0:e} below the 1e-8 floor")]
    DivisionDegenerate(f64),

    #[error("lpt step {step} failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<LptError>,
    },

    #[error(transparent)]
    Engine(#[from] mlo_engine::EngineError),

    #[error(transparent)]
    Ad(#[from] tensor_ad::AdError),
}

pub type Result<T> = std::result::Result<T, LptError>;

/// Dataset names the LPT problem draws from.
pub const SET_TRAIN: &str = "train";
pub const SET_VAL: &str = "val";
pub const SET_BANK: &str = "bank";

/// Group names.
pub const G_ARCH: &str = "arch";
pub const G_WEIGHTS: &str = "w";
pub const G_ENCODER: &str = "enc";
pub const G_CREATOR: &str = "cre";
pub const G_EXECUTOR: &str = "exec";
pub const G_SELECTOR: &str = "sel";
