//! Learned adaptive computation on a small reverse-mode autodiff engine.
//!
//! The crate trains a recurrent step function that, at every step, emits a
//! prediction and a probability of halting there. Two halting schemes are
//! implemented on top of it:
//!
//! * [`ponder`]: halting as a random variable. Training unrolls a fixed
//!   horizon, weights each step's loss by the probability of halting at that
//!   step and pulls the halting distribution towards a geometric prior.
//!   Inference samples a halting step or takes the most probable one.
//! * [`act`]: deterministic halting once the accumulated halting outputs
//!   reach `1 − ε`, with a differentiable ponder cost.
//!
//! Gradients come from [`tape::Tape`], a define-by-run tape over dense `f64`
//! tensors. [`trainer`] runs Adam on the parity task from [`tasks`].
//! [`sweep`] spreads many runs across a thread pool, and [`plot`] renders
//! their metrics.
//!
//! With the default `parallel` feature, evaluation chunks and sweep runs are
//! spread over a rayon pool. Every random stream is keyed by seed and chunk
//! index, and reductions happen in index order, so results are identical with
//! or without the feature.

pub mod act;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod halting;
pub mod metrics;
pub mod par;
pub mod params;
pub mod plot;
pub mod ponder;
pub mod run;
pub mod selftest;
pub mod stepfn;
pub mod sweep;
pub mod tape;
pub mod tasks;
pub mod tensor;
pub mod trainer;

pub use config::{ExperimentConfig, Method, Task};
pub use error::{Error, Result};
pub use halting::TruncationMode;
pub use par::Exec;
pub use params::{Gradients, ParamId, ParamSet};
pub use stepfn::{RnnStep, StepFunction};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
