//! Inference engine, loss evaluator and benchmark metrics for a lightweight
//! RGB-thermal tracker built on MobileViTv2-style separable attention.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds without `std` (an allocator is required). File formats, dataset
//! layouts, timing and the command line live in the companion `mmvt` crate.
//!
//! Layout of the crate, bottom-up:
//!
//! * [`tensor`], [`conv`], [`ops`], [`resize`], [`tokens`]: NCHW kernels.
//! * [`weights`], [`params`]: the named-tensor store, its binary encoding,
//!   random initialisation and model binding.
//! * [`attention`], [`backbone`], [`neck`], [`head`], [`model`]: the network.
//! * [`bbox`], [`loss`]: boxes, GIoU and the training objective.
//! * [`tracker`]: the crop / forward / window / decode inference loop.
//! * [`metrics`], [`synth`]: benchmark metrics and synthetic sequences.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod attention;
pub mod backbone;
pub mod bbox;
pub mod config;
pub mod conv;
pub mod error;
pub mod head;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod neck;
pub mod ops;
pub mod oracle;
pub mod params;
pub mod passthrough;
pub mod resize;
pub mod synth;
pub mod tensor;
pub mod tokens;
pub mod tracker;
pub mod weights;

mod par;

pub use bbox::BBox;
pub use config::{Layer4Concat, ModelConfig, Variant};
pub use error::{Error, Result};
pub use head::ScoreMap;
pub use model::Model;
pub use tensor::{ConvSpec, Tensor};
pub use tokens::TokenBlock;
pub use weights::WeightStore;
