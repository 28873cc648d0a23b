//! Solver reports: the chosen facilities plus every inequality the run
//! certified, so a report can be checked without trusting the solver.

use alloc::string::String;
use alloc::vec::Vec;

/// Relative tolerance applied when deciding whether a certificate holds.
pub const CERT_TOL: f64 = 1e-7;

/// `lhs <= rhs`, evaluated at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Certificate {
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let holds = lhs <= rhs + CERT_TOL * (1.0 + rhs.abs());
        Self { name: name.into(), lhs, rhs, holds }
    }

    /// A yes/no structural check, encoded as `0 <= 0` or `1 <= 0`.
    pub fn check(name: impl Into<String>, ok: bool) -> Self {
        Self { name: name.into(), lhs: if ok { 0.0 } else { 1.0 }, rhs: 0.0, holds: ok }
    }

    /// Same verdict with both sides divided by `scale`.
    pub fn unscaled(mut self, scale: f64) -> Self {
        self.lhs /= scale;
        self.rhs /= scale;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Initial vertex, before any move.
    Start,
    /// Client moved from `C0` to `C1`.
    Promote,
    /// Radius level of a `C1` client decreased.
    Shrink,
    /// No move applies; the last vertex is returned.
    Stop,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Start => "start",
            Action::Promote => "promote",
            Action::Shrink => "shrink",
            Action::Stop => "stop",
        }
    }
}

/// One rounding iteration: the move made after solving, and the vertex objective.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub action: Action,
    pub client: Option<String>,
    pub objective: f64,
}

/// Outcome of one extended instance in the knapsack pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSummary {
    pub c0: f64,
    pub est: f64,
    pub preselected: Vec<String>,
    pub removed_clients: usize,
    /// `None` when the strengthened relaxation was infeasible.
    pub objective: Option<f64>,
    pub fractional: Option<usize>,
    pub lp_value: Option<f64>,
    pub solution: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// `"cardinality"`, `"matroid"`, `"knapsack"` or `"stochastic-..."`.
    pub problem: String,
    pub tau: f64,
    pub b: f64,
    pub h: u8,
    /// Facility ids, sorted by position.
    pub solution: Vec<String>,
    /// Facility positions of `solution`.
    pub solution_positions: Vec<usize>,
    /// Discounted cost of the solution at multiplier 1, in input units.
    pub objective: f64,
    /// Discounted cost at multiplier `alpha`, in input units.
    pub objective_alpha: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Optimum of the relaxation the guarantee is stated against, in input units.
    pub lp_value: f64,
    pub iterations: Vec<IterationRecord>,
    /// `(client id, final radius level)`.
    pub final_levels: Vec<(String, i32)>,
    pub certificates: Vec<Certificate>,
    pub candidates: Vec<CandidateSummary>,
    /// Conditions weakening the guarantee (lowered caps, sweep fallback, ...).
    pub flags: Vec<String>,
}

impl SolveReport {
    pub fn all_hold(&self) -> bool {
        self.certificates.iter().all(|c| c.holds)
    }

    pub fn certificate(&self, name: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_is_relative() {
        assert!(Certificate::le("a", 1.0 + 1e-9, 1.0).holds);
        assert!(!Certificate::le("a", 1.001, 1.0).holds);
        assert!(Certificate::le("zero", 0.0, 0.0).holds);
        assert!(!Certificate::check("x", false).holds);
    }
}
