//! Randomized rounding for packing integer programs.
//!
//! The crate covers four rounding families that share one instance model:
//!
//! * [`kcspip`]: alteration rounding for `k`-column-sparse packing programs,
//!   with the conflict-digraph coloring of [`graphcolor`] and the classic
//!   deterministic-alteration baseline.
//! * [`sksp`]: stochastic `k`-set packing with single, two and `T`-chance
//!   probing, calibrated by simulation-based attenuation.
//! * [`hypermatch`]: hypergraph matching with linear and non-uniform
//!   attenuation.
//! * [`ufptree`]: a contention-resolution scheme for unit-demand flows on
//!   trees.
//!
//! [`lp`] solves the relaxations these algorithms round, [`montecarlo`]
//! holds the estimation primitives, and [`harness`] generates instances,
//! computes exact optima and runs trial experiments.

pub mod cli;
pub mod error;
pub mod graphcolor;
pub mod harness;
pub mod hypermatch;
pub mod instance;
pub mod kcspip;
pub mod lp;
pub mod montecarlo;
pub mod report;
pub mod rng;
pub mod sksp;
pub mod ufptree;

pub use error::{Error, Result};
pub use instance::{
    check_feasible, column_sparsity, validate_instance, FractionalSolution, ItemSet,
    PackingInstance, ValidationReport, Violation,
};
