//! A small decoder-only transformer with hand-written reverse-mode autodiff.
//!
//! [`tape`] holds the differentiable primitives, [`model`] the prompt-conditioned
//! policy network and [`checkpoint`] the on-disk tensor container.

pub mod checkpoint;
pub mod error;
pub mod model;
pub mod tape;

pub use error::{NnError, Result};
pub use model::{Forward, Model, ModelConfig, SeqItem};
pub use tape::{Graph, ParamId, ParamStore, Tensor, Var};
