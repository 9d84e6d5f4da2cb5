//! Core of the ToM2C multi-agent framework.
//!
//! Everything in this crate is pure computation over `alloc` collections:
//! the two target-oriented environments, a small reverse-mode autodiff
//! engine, the per-agent theory-of-mind pipeline, the training losses and
//! schedules, and the heuristic-search reference policy with its metrics.
//! File formats, threading and the command line live in the `tom2c` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod autodiff;
pub mod cn;
mod error;
pub mod geometry;
pub(crate) mod math;
pub mod metrics;
pub mod msmtc;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{EnvConfig, Obstacle, Pose2D, StepInfo, StepResult, TargetState, Task, TeamEnv, Vec2};
