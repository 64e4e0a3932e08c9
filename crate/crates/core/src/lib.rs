//! Distributed deep joint source-channel coding over a two-user AWGN
//! multiple-access channel.
//!
//! Two transmitters share one encoder (a Siamese network) and are told apart
//! by trainable device-embedding planes concatenated to their input images.
//! Both latents are power-normalized, superposed on the same channel uses,
//! and a single decoder reconstructs both images from the noisy sum.
//!
//! The crate is `no_std` (with `alloc`). Everything here is pure computation
//! driven by explicit seeded generators; file formats, dataset loaders and
//! the experiment runner live in the companion `jscc` crate.
//!
//! Module map:
//!
//! * [`channel`]: power normalization, AWGN MAC / point-to-point channels,
//!   SNR conversions.
//! * [`nn`]: the small layer library (convolutions, attention, SNR-adaptive
//!   gates) with hand-written backward passes.
//! * [`model`]: encoder, decoder, device embeddings and the NOMA / TDMA
//!   model variants.
//! * [`pipeline`]: batched encode → normalize → channel → decode and its
//!   backward pass.
//! * [`data`]: image stores, splits, training-pair subsampling.
//! * [`training`]: losses, the Adam optimizer, the epoch loop with early
//!   stopping, and the two-phase curriculum.
//! * [`evaluation`]: PSNR, SNR sweeps for every baseline, fairness, and the
//!   analytic Gaussian MAC capacity region.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channel;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;
