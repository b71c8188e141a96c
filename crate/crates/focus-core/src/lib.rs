//! Offline model-based reinforcement learning with learned causal structure.
//!
//! The pipeline has two stages. Stage one learns a binary parent mask over
//! state/action variables by running kernel conditional-independence tests
//! with RL-specific conditioning rules and a gap-based p-value threshold.
//! Stage two fits per-target world-model regressors whose inputs are masked
//! by that structure and optimizes a policy against the model with an
//! uncertainty-penalized model-predictive planner.
//!
//! The crate also ships a deterministic toy car-driving environment with a
//! known ground-truth causal graph, and a numerical verification suite for
//! the linear-case generalization-error analysis that motivates the method
//! (ridge-regression leakage onto spurious variables and the resulting
//! model/policy error bounds).

pub mod car_env;
pub mod data;
pub mod error;
pub mod kci;
pub mod linalg;
pub mod offline_rl;
pub mod seeding;
pub mod structure;
pub mod theory;
pub mod world_model;

pub use data::{CausalGraph, DimensionSchema, PValueMatrix, SourceTag, TransitionDataset};
pub use error::{FocusError, Result};
