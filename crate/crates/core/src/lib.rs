//! Semi-supervised few-shot learning by transfer.
//!
//! The pipeline has three stages:
//!
//! 1. pre-train a feature extractor on abundant base-class data ([`model::pretrain`]),
//! 2. imprint a cosine classifier for the novel classes from the few labeled
//!    support embeddings ([`imprint`]),
//! 3. fine-tune the imprinted model with MixMatch on the labeled support set plus
//!    unlabeled novel-class images ([`mixmatch`]).
//!
//! Episodic evaluation and the accuracy statistics used to compare methods live
//! in [`eval`] and [`stats`]. The crate is `no_std` and only needs `alloc`; file
//! formats, the benchmark runner and the command line live in the `transmatch`
//! crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod image;
pub mod imprint;
pub mod method;
pub mod mixmatch;
pub mod model;
pub mod prob;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use image::{Image, ImageShape};
pub use prob::ProbVector;
