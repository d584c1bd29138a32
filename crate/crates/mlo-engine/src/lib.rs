//! Generic multi-level optimization: ordered learning stages plus a
//! validation stage, solved by one-step gradient unrolling.
//!
//! Each stage approximates its optimum with a single gradient step; the
//! validation stage's remaining parameters are updated by differentiating
//! the approximated objective through the whole chain, with mixed
//! second-derivative products replaced by centered finite differences of
//! first-order gradients.

mod data;
mod error;
mod group;
mod metrics;
mod problem;
mod solver;

pub use data::{sample_indices, DataBinding, DataSources, LabeledSet};
pub use error::{EngineError, Result};
pub use group::{approx_leaf, is_approx_leaf, strip_approx, ParamGroup, Role, TensorGroup};
pub use metrics::MetricsRecord;
pub use problem::{GroupState, MLOProblem, StageSpec, TermKind, TermSense, ValTerm, ValidationSpec};
pub use solver::{
    group_fd_hvp, group_grad, AccessLog, Approximations, HyperOutput, SolveReport, TermValue,
    CARDINALITY_FLOOR,
};
