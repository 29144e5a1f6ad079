//! Reinforcement-learning agents for timing a single stock purchase within a
//! window of trading days, with the evaluation harness and supervised
//! price-prediction baselines they are compared against.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod market_data;
pub mod nn;
pub mod pipeline;
pub mod prediction;
pub mod stats;
pub mod tabular;

pub use config::RunConfig;
pub use env::{Action, PriceState, RewardConfig};
pub use error::{Error, Result};
pub use evaluation::{AgentKind, EvalReport, Policy, RunResult};
pub use market_data::{OhlcBar, PriceSeries, TimeWindow};
