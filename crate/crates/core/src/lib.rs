//! Deep RL for continuous control under partial observability.
//!
//! The crate bundles TD3, SAC and their n-step variants, PPO with λ-return
//! or fixed n-step advantages, three small closed-form control tasks,
//! observation transforms that turn them into POMDPs, and a deterministic
//! training/evaluation harness with table and plot emission.

// Validation uses `!(x > 0.0)` style checks on purpose: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod offpolicy;
pub mod ppo;
pub mod replay;
pub mod report;
pub mod seeding;
pub mod wrappers;

pub use error::{Error, Result};
