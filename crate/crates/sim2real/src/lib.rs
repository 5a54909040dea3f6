//! Simulation core for evaluating feature-attribution explanations against
//! known ground-truth classifiers with a computational proxy for a person.
//!
//! The pipeline runs bottom up:
//!
//! * [`functions`] defines the ground-truth classifiers and their oracles.
//! * [`explainers`] builds faithful, robust, sparse and sparse+robust
//!   attributions for them.
//! * [`properties`] measures local stability, local infidelity and sparsity.
//! * [`proxy_human`] turns a point and its attribution into what a
//!   memory-limited person sees, and trains a small decision tree on it.
//! * [`tasks`] defines forward prediction and forbidden features.
//! * [`experiments`] runs seeded trials and tabulates the results.
//! * [`stimuli`] selects study items for the web study server.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expect;
pub mod experiments;
pub mod explainers;
pub mod functions;
pub mod numeric;
pub mod properties;
pub mod proxy_human;
pub mod sampling;
pub mod stimuli;
pub mod tasks;

pub use error::{Error, Result};
pub use explainers::{ExplainerKind, Explainers, LocalFitConfig};
pub use functions::{FunctionId, GroundTruth, RegionInfo};
pub use numeric::{dot_with_intercept, mean_ci95, round_sig, Attribution, InputPoint, RngStream, SummaryStat};
pub use proxy_human::{DecisionTree, HumanInput, MemoryKind, MemoryModel, ProxyHuman};
pub use tasks::{TaskKind, TestCategory};
