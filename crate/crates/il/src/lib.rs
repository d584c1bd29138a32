//! Interleaving learning: K learners share one encoder architecture and
//! train per-round encoder replicas in round-major order, each stage
//! proximally anchored to the previous stage's one-step optimum. The
//! architecture descends the summed validation losses of the final round,
//! with gradients flowing through the whole recursive chain. A joint
//! baseline drops the rounds and the proximal coupling.

mod engine_bridge;
mod schedule;
mod setup;
mod steps;

pub use engine_bridge::build_engine_problem;
pub use schedule::IlSchedule;
pub use setup::{head_group, weight_group, IlConfig, IlGraphs, IlSetup, IlShape};
pub use steps::{
    build_chain, chained_objective, il_arch_grad, il_chain_step, il_first_stage_step,
    il_head_step, il_iterate, jl_config, jl_iterate, IlChain,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IlError {
    #[error("stage (round {round}, learner {learner}) has no predecessor value")]
    MissingPredecessor { round: usize, learner: usize },

    #[error("il stage (round {round}, learner {learner}) failed: {source}")]
    Stage {
        round: usize,
        learner: usize,
        #[source]
        source: Box<IlError>,
    },

    #[error(transparent)]
    Engine(#[from] mlo_engine::EngineError),

    #[error(transparent)]
    Ad(#[from] tensor_ad::AdError),
}

pub type Result<T> = std::result::Result<T, IlError>;

/// Architecture group name (shared by all learners and rounds).
pub const G_ARCH: &str = "arch";

/// Training/validation set names per learner.
pub fn train_set(learner: usize) -> String {
    format!("tr{learner}")
}

pub fn val_set(learner: usize) -> String {
    format!("val{learner}")
}
