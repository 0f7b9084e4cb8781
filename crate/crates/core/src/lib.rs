//! Decentralized primal-dual interior point method for partitioned nonlinear
//! programs
//!
//! ```text
//! min  sum_i f_i(x_i)
//! s.t. g_i(x_i) = 0,  h_i(x_i) <= 0,  sum_i A_i x_i = b
//! ```
//!
//! Each subsystem is handled by an agent that only factors its own KKT block;
//! the coupling system is solved by a conjugate gradient method whose only
//! communication is global sums over a simulated message bus.
//!
//! The crate is `no_std` with `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agent;
pub mod coordination;
pub mod driver;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod quadratic;

pub use agent::{LocalKkt, RegularizationPolicy, SchurContribution};
pub use coordination::{dcg_solve, CgState, CommReport, MessageBus, Phase};
pub use driver::{
    initial_points, solve, InnerTolerance, IterationRecord, Metrics, Reference, SolveResult,
    SolverOptions, Status,
};
pub use error::{Error, Result};
pub use linalg::{CooMatrix, DenseMatrix};
pub use problem::{Dims, Evaluator, PartitionedNlp, Subsystem, SubsystemPoint};
pub use quadratic::{QuadraticFunction, QuadraticSubsystem};
