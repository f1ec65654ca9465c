//! Seldonian classification under delayed-impact fairness constraints.
//!
//! Given data logged by a deployed stochastic classifier (the behavior
//! model) together with the delayed impact each logged prediction caused,
//! [`run_elf`] trains a new softmax-linear classifier and returns it only if
//! held-out data certifies, with confidence `1 - δ_j`, that its expected
//! delayed impact meets every constraint; otherwise it returns
//! [`ElfOutcome::NoSolutionFound`].
//!
//! The [`world`] and [`harness`] modules provide a synthetic environment with
//! known ground truth and the repeated-trial experiments built on it.

pub mod bounds;
pub mod candidate;
pub mod classifier;
pub mod cli;
pub mod cmaes;
pub mod data;
pub mod elf;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod fairness;
pub mod harness;
pub mod seed;
pub mod stats;
pub mod world;

pub use bounds::{hoeffding_upper, inflated_upper, ttest_upper, BoundMethod, BoundRequest};
pub use candidate::{cost, select_candidate, CostConfig, CostModel, LossKind};
pub use classifier::{fit_behavior_model, BehaviorFit, StochasticLinearClassifier};
pub use cmaes::SearchConfig;
pub use data::{stratified_partition, Dataset, LabeledExample, Predicate};
pub use elf::{run_elf, ElfConfig, ElfRun};
pub use error::{ElfError, Result};
pub use estimate::{g_estimates, importance_weight, true_g_oracle, DiConstraint, GEstimates, Objective};
pub use exec::Execution;
pub use fairness::{fairness_test, ElfOutcome};
pub use world::WorldConfig;
