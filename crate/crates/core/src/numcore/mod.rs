//! Minimal dense-tensor numerics: reverse-mode autodiff on a per-step tape,
//! a named parameter store with text checkpoints, and an adaptive-moment
//! optimizer. Everything runs single-threaded on f64; a [`ParamStore`] is
//! immutable during inference and can be shared read-only.

mod adam;
mod store;
mod tape;
mod tensor;

pub use adam::{adam_step, OptimState};
pub use store::{Gradients, ParamStore};
pub use tape::{grad_check, Tape, Var};
pub use tensor::Tensor;
