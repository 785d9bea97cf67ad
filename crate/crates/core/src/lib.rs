//! Emotion-aware bootstrap representation learning.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! pipeline: the ToyEmotions domain-shift benchmark, the two-view augmentation
//! pipeline, the online/target networks with the emotion matrix, the three
//! pre-training losses, LARS/momentum/Adam optimizers, the pre-training and
//! transfer step logic, and the macro-F1 metric. File formats, checkpoints and
//! the command-line driver live in the `byel` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod label;
pub mod losses;
pub mod nn;
pub mod optim;
pub mod pretrain;
pub mod real;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
pub use label::{Domain, EmotionLabel, NUM_CLASSES};
pub use real::Real;
