//! Object-aware online action detection core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (only `alloc` is required). File formats, the
//! command-line tool and checkpoints live in the `oad-oam` crate.
//!
//! Layout:
//!
//! * [`tensor`], [`graph`], [`param`], [`optim`], [`rng`]: the numeric engine
//!   (dense row-major tensors, a reverse-mode tape, Adam, a reproducible
//!   generator).
//! * [`objects`]: detections and per-category object score vectors.
//! * [`encoder`]: the gated recurrent backbone producing temporal cues.
//! * [`oam`]: learnable queries refined against the object token and the cues.
//! * [`heads`]: max pooling over queries and the verb / noun / action classifiers.
//! * [`model`]: the full pipeline for training and causal streaming.
//! * [`metrics`]: mean top-5 recall.
//! * [`synth`]: deterministic synthetic episodes.
//! * [`gradcheck`]: finite-difference validation of the tape.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod heads;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod oam;
pub mod objects;
pub mod optim;
pub mod param;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use param::{ParamId, ParamStore, Parameter};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;
