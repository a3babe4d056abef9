//! Two-population growth models for sparse concentration data: fitting,
//! profile likelihoods, bootstrap intervals, stochastic simulation and
//! effect-detection scoring.

pub mod bootstrap;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod io;
pub mod models;
pub mod ode;
pub mod profiles;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use data::{Dataset, Design, Pair, Record, INPUT_DAY};
pub use error::{Error, Result};
