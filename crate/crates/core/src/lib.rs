//! Recursive logit route choice with accumulated-cost constraints.

pub mod bellman;
pub mod crl;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod network;
pub mod path_oracle;
pub mod rl;
pub mod simulation;

pub use error::{Error, Result, SolveFailure};
