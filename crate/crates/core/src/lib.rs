//! Illumination-robust offline fine-tuning lab.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. Everything here is pure computation: reverse-mode autodiff over
//! dense tensors, the agent's encoder/actor/critic heads, a pixel-rendered
//! reaching world with a parametric light model, transition recording and
//! relighting, the replay pools with their stratified samplers, and the two
//! training procedures (source training with a scripted intervening expert,
//! and the anchored offline fine-tune).
//!
//! File formats, configuration, the experiment harness and the CLI live in
//! the `rohil-lab` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;

pub mod datasets;
pub mod eval;
pub mod learners;
pub mod litworld;
pub mod nets;
pub mod numerics;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
