//! Parameter and state estimation for ODE systems with periodic
//! trajectories.
//!
//! A measured periodic output is represented as an explicit integral of
//! computable kernels: the model's auxiliary states are eliminated in closed
//! form against the data, the observer error dynamics supply a fundamental
//! matrix that is built once per dataset, and every parameter candidate is
//! then scored by quadrature alone — a batch of prefix sums that executes
//! on sequential, parallel-scan or multithreaded backends with identical
//! results.

pub mod bench;
pub mod canonical;
pub mod config;
pub mod error;
pub mod estimation;
pub mod models;
pub mod observer;
pub mod ode;
pub mod optim;
pub mod quadrature;
pub mod signal;

pub use error::{Error, Result};
