//! Bi-criteria approximation algorithms for median clustering with per-client
//! discounts.
//!
//! A client `j` pays `(c(j, S) - r_j)^+` where `c(j, S)` is its distance to the
//! nearest open facility and `r_j` its discount. The solvers in this crate
//! open a facility set under a cardinality, matroid, or knapsack constraint
//! and certify, at run time, inequalities of the form
//!
//! ```text
//! sum_j (c(j, S) - alpha * r_j)^+  <=  beta * LP optimum
//! ```
//!
//! The pipeline is: natural LP relaxation ([`fractional`]) solved to a vertex
//! by a dense simplex ([`lp`]), distance-optimal repair and facility
//! duplication, geometric metric discretization ([`discretize`]), and
//! iterative rounding over ball systems ([`iterround`]). The knapsack variant
//! adds estimate enumeration and sparsification ([`knapsack`]), and
//! [`stochastic`] builds the unassigned stochastic center solver on top of the
//! median solvers. [`oracle`] holds exhaustive solvers used to check all of
//! the above on small instances.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line, and parallel drivers live in the `meddis` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod discretize;
pub mod error;
pub mod fractional;
pub mod instance;
pub mod iterround;
pub mod knapsack;
pub mod lp;
pub mod matroid;
pub mod oracle;
pub mod report;
pub mod stochastic;

mod math;

pub use error::{Error, Result};
pub use instance::{Constraint, Instance, MetricSpace};
pub use matroid::MatroidSpec;
pub use report::{Certificate, SolveReport};
