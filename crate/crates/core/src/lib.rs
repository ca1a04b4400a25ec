//! Simulation harness for comparing label-acquisition strategies.
//!
//! A label pool and a holdout set are drawn from a household dataset. Labels
//! are acquired from the pool in rounds of growing budget, using uniform
//! sampling or one of five adaptive strategies, and a random-forest
//! consumption model is retrained and scored on the holdout after each round.
//!
//! - [`dataset`]: records, CSV I/O, synthetic data, the pool/holdout split
//! - [`models`]: random forest, logistic classifier, PCA, depth CV
//! - [`strategies`]: acquisition weights and weighted sampling
//! - [`metrics`]: holdout metrics, per-group and fairness summaries
//! - [`simulation`]: budget schedule, acquisition loop, bootstrap aggregation
//! - [`cli`]: command implementations and result tables

pub mod cli;
pub mod dataset;
pub mod metrics;
pub mod models;
pub mod seeding;
pub mod simulation;
pub mod strategies;
