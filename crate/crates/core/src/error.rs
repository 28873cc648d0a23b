use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An objective was requested for an empty facility set.
    EmptyFacilitySet,
    /// A facility index is out of range for the instance.
    UnknownFacility(usize),
    /// A parameter is outside its domain (`tau <= 1`, `rho` not in (0,1), ...).
    InvalidParameter(String),
    /// The solver was handed an instance with the wrong constraint family.
    WrongConstraint { expected: &'static str },
    /// An explicit matroid is too large to enumerate.
    MatroidTooLarge { elements: usize, limit: usize },
    /// A linear program is malformed (length mismatch, infinite bound, ...).
    MalformedLp(String),
    /// A relaxation that should be feasible turned out infeasible.
    Infeasible(&'static str),
    /// A relaxation turned out unbounded.
    Unbounded(&'static str),
    /// Enumeration refused because the projected count is over the limit.
    GuardExceeded { what: &'static str, count: u128, limit: u128 },
    /// Rounding ended fractional where an integral vertex is guaranteed.
    NotIntegral { fractional: usize, dump: String },
    /// Knapsack rounding left more than two fractional coordinates.
    TooManyFractional { count: usize, dump: String },
    /// The rounded facility set is not independent in the matroid.
    NotIndependent,
    /// A structural postcondition failed (pre-selected facility closed, budget exceeded, ...).
    Postcondition(String),
    /// No extended instance produced a feasible candidate.
    NoFeasibleCandidate,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyFacilitySet => write!(f, "facility set is empty"),
            Error::UnknownFacility(i) => write!(f, "facility index {i} out of range"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::WrongConstraint { expected } => {
                write!(f, "solver expects a {expected} constraint")
            }
            Error::MatroidTooLarge { elements, limit } => write!(
                f,
                "explicit matroid over {elements} elements exceeds the enumeration limit of {limit}"
            ),
            Error::MalformedLp(msg) => write!(f, "malformed linear program: {msg}"),
            Error::Infeasible(what) => write!(f, "{what} is infeasible"),
            Error::Unbounded(what) => write!(f, "{what} is unbounded"),
            Error::GuardExceeded { what, count, limit } => write!(
                f,
                "refusing to enumerate {count} {what} (limit {limit})"
            ),
            Error::NotIntegral { fractional, dump } => write!(
                f,
                "rounding ended with {fractional} fractional coordinates where an integral vertex is guaranteed\n{dump}"
            ),
            Error::TooManyFractional { count, dump } => write!(
                f,
                "knapsack rounding left {count} fractional coordinates (at most 2 allowed)\n{dump}"
            ),
            Error::NotIndependent => write!(f, "rounded facility set is not independent"),
            Error::Postcondition(msg) => write!(f, "postcondition failed: {msg}"),
            Error::NoFeasibleCandidate => write!(f, "no extended instance yielded a feasible candidate"),
        }
    }
}

impl core::error::Error for Error {}
