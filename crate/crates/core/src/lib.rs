//! Two-stage radio-resource management for UAV aerial corridors.
//!
//! Stage 1 precomputes per-link beam gains by annealing the scan angle of a
//! sectorized planar array; stage 2 associates UAVs with (BS, beam) pairs,
//! either with a multi-head PPO agent or with one of the reference baselines.
//! Everything runs against a synthetic channel twin.

pub mod antenna;
pub mod baselines;
pub mod beam;
pub mod channel;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod dqn;
pub mod env;
pub mod error;
pub mod eval;
pub mod format;
pub mod heads;
pub mod geometry;
pub mod nn;
pub mod ppo;

pub use antenna::{AntennaModel, ArrayConfig, ElementPattern};
pub use beam::{AnnealConfig, BeamGainTable};
pub use channel::{ChannelTensor, PathComponent, Scenario, SceneConfig};
pub use env::{AssociationEnv, JointAction, LinkBudget, StepOutcome};
pub use error::{Error, Result};
