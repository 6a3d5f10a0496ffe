//! Mining of non-dominated quantitative association rules over user
//! histories, with synthetic data generators and evaluation helpers.

pub mod dataset;
pub mod distributed;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod generators;
pub mod itemsets;
pub mod rule;
pub mod support;

pub use error::{Error, Result};
