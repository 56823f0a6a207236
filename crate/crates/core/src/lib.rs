//! Cross-sentence n-ary relation classification with a dual encoder: a
//! standard Transformer and a Graph Transformer whose attention is limited
//! to dependency neighbors, fused in one classification head.
//!
//! Module map:
//!
//! * [`numerics`]: tensors, reverse-mode tape, gradient checking
//! * [`attention`]: multi-head self-attention and neighbor attention
//! * [`encoders`]: embeddings and the two encoder stacks
//! * [`graph`]: instances, entity expansion, neighbor construction, datasets
//! * [`model`]: the assembled classifier, vocabulary and checkpoints
//! * [`harness`]: training, metrics, cross-validation, significance tests,
//!   sweeps and the synthetic data generator

// `!(x > 0.0)` rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod encoders;
mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::{Tape, Tensor, Var};
