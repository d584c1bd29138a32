//! Minimal dense-tensor numerics with reverse-mode automatic
//! differentiation and finite-difference oracles.
//!
//! Graphs are define-then-run: built once via [`GraphBuilder`], then
//! evaluated repeatedly with fresh leaf [`Bindings`]. Everything is 64-bit;
//! graphs and tensors are immutable after construction and safe to share
//! across threads (each evaluation carries its own workspace).

mod error;
mod eval;
mod fd;
mod graph;
mod tensor;

pub use error::{AdError, Result};
pub use eval::{backward_grad, bind, evaluate, forward_eval, Bindings, Evaluation, GradMap};
pub use fd::{finite_diff_grad, finite_diff_hvp, relative_error, FD_STEP};
pub use graph::{Graph, GraphBuilder, Node, NodeId};
pub use tensor::{derive_seed, seeded_init, stable_hash, InitScheme, Tensor};
