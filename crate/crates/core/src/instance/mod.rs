//! Clustering-with-discounts instances: metric, discounts, client weights and
//! the facility constraint.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;
use crate::matroid::MatroidSpec;

mod generate;

pub use generate::{generate, GenConstraint, GenParams};

/// Absolute slack allowed in triangle-inequality checks.
pub const TRIANGLE_TOL: f64 = 1e-9;

/// Dense symmetric distance matrix over sites `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    n: usize,
    dist: Vec<f64>,
}

impl MetricSpace {
    /// Builds from a row-major `n x n` matrix. Only the shape is checked here;
    /// metric axioms are reported by [`Instance::validate`].
    pub fn from_matrix(n: usize, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "distance matrix has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        Ok(Self { n, dist })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::InvalidParameter(format!(
                "distance matrix row has {} entries, expected {n}",
                r.len()
            )));
        }
        Ok(Self { n, dist: rows.concat() })
    }

    /// Euclidean distances between planar points.
    pub fn euclidean(points: &[(f64, f64)]) -> Self {
        let n = points.len();
        let mut dist = alloc::vec![0.0; n * n];
        for (a, &(xa, ya)) in points.iter().enumerate() {
            for (b, &(xb, yb)) in points.iter().enumerate().skip(a + 1) {
                let d = math::sqrt((xa - xb) * (xa - xb) + (ya - yb) * (ya - yb));
                dist[a * n + b] = d;
                dist[b * n + a] = d;
            }
        }
        Self { n, dist }
    }

    #[inline]
    pub fn d(&self, p: usize, q: usize) -> f64 {
        self.dist[p * self.n + q]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.dist.chunks(self.n.max(1))
    }

    /// Smallest strictly positive distance, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.dist.iter().copied().filter(|&d| d > 0.0).reduce(f64::min)
    }

    /// Divides every distance by `unit`; dividing (rather than multiplying by
    /// the reciprocal) keeps `unit / unit` exactly 1.
    fn divided(&self, unit: f64) -> Self {
        Self { n: self.n, dist: self.dist.iter().map(|d| d / unit).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Cardinality { k: usize },
    Matroid(MatroidSpec),
    /// `weights` is indexed by facility position.
    Knapsack { weights: Vec<f64>, budget: f64 },
}

impl Constraint {
    pub fn kind(&self) -> &'static str {
        match self {
            Constraint::Cardinality { .. } => "cardinality",
            Constraint::Matroid(_) => "matroid",
            Constraint::Knapsack { .. } => "knapsack",
        }
    }

    /// Whether a set of facility positions (no duplicates) is feasible.
    pub fn admits(&self, set: &[usize]) -> bool {
        match self {
            Constraint::Cardinality { k } => set.len() <= *k,
            Constraint::Matroid(m) => m.is_independent(set),
            Constraint::Knapsack { weights, budget } => {
                set.iter().map(|&i| weights[i]).sum::<f64>() <= *budget + 1e-9
            }
        }
    }
}

/// A clustering-with-discounts instance.
///
/// Facilities and clients are referred to by *position* (`0..facilities.len()`,
/// `0..clients.len()`); `facilities[i]` and `clients[j]` give the metric site.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Site names, unique across facilities and clients.
    pub ids: Vec<String>,
    pub metric: MetricSpace,
    pub facilities: Vec<usize>,
    pub clients: Vec<usize>,
    /// Discount `r_j` per client position.
    pub discounts: Vec<f64>,
    /// Weight per client position; 1 recovers the unweighted objective.
    pub client_weights: Vec<f64>,
    pub constraint: Constraint,
    /// Factor by which distances and discounts were multiplied by
    /// [`Instance::normalize`]; divide objectives by it to report them in
    /// input units.
    pub scale: f64,
}

/// A broken instance invariant, naming the offending sites.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty(&'static str),
    SiteOutOfRange(usize),
    NonFinite { a: String, b: String },
    NegativeDistance { a: String, b: String },
    NonzeroSelfDistance { site: String },
    Asymmetric { a: String, b: String },
    Triangle { a: String, b: String, c: String, excess: f64 },
    Normalization { a: String, b: String, dist: f64 },
    NegativeDiscount { client: String },
    NegativeWeight { client: String },
    Shape(String),
    Cardinality { k: usize, facilities: usize },
    Knapsack(String),
    Matroid(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty(what) => write!(f, "no {what}"),
            Violation::SiteOutOfRange(s) => write!(f, "site index {s} outside the metric"),
            Violation::NonFinite { a, b } => write!(f, "distance {a}-{b} is not finite"),
            Violation::NegativeDistance { a, b } => write!(f, "distance {a}-{b} is negative"),
            Violation::NonzeroSelfDistance { site } => write!(f, "distance {site}-{site} is not 0"),
            Violation::Asymmetric { a, b } => write!(f, "distance {a}-{b} is not symmetric"),
            Violation::Triangle { a, b, c, excess } => write!(
                f,
                "triangle inequality fails: d({a},{c}) exceeds d({a},{b}) + d({b},{c}) by {excess}"
            ),
            Violation::Normalization { a, b, dist } => write!(
                f,
                "sites {a} and {b} are at distance {dist} (neither 0 nor at least 1)"
            ),
            Violation::NegativeDiscount { client } => write!(f, "client {client} has a negative discount"),
            Violation::NegativeWeight { client } => write!(f, "client {client} has a negative weight"),
            Violation::Shape(msg) => f.write_str(msg),
            Violation::Cardinality { k, facilities } => write!(
                f,
                "cardinality k = {k} must be between 1 and the number of facilities ({facilities})"
            ),
            Violation::Knapsack(msg) => write!(f, "knapsack: {msg}"),
            Violation::Matroid(msg) => write!(f, "matroid: {msg}"),
        }
    }
}

impl Instance {
    /// Instance with unit client weights and scale 1.
    pub fn new(
        ids: Vec<String>,
        metric: MetricSpace,
        facilities: Vec<usize>,
        clients: Vec<usize>,
        discounts: Vec<f64>,
        constraint: Constraint,
    ) -> Self {
        let client_weights = alloc::vec![1.0; clients.len()];
        Self { ids, metric, facilities, clients, discounts, client_weights, constraint, scale: 1.0 }
    }

    pub fn n_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    /// Distance between facility position `i` and client position `j`.
    #[inline]
    pub fn fc(&self, i: usize, j: usize) -> f64 {
        self.metric.d(self.facilities[i], self.clients[j])
    }

    #[inline]
    pub fn ff(&self, i: usize, i2: usize) -> f64 {
        self.metric.d(self.facilities[i], self.facilities[i2])
    }

    #[inline]
    pub fn cc(&self, j: usize, j2: usize) -> f64 {
        self.metric.d(self.clients[j], self.clients[j2])
    }

    pub fn facility_id(&self, i: usize) -> &str {
        &self.ids[self.facilities[i]]
    }

    pub fn client_id(&self, j: usize) -> &str {
        &self.ids[self.clients[j]]
    }

    /// Distance from client `j` to the nearest facility of `set`.
    pub fn dist_to_set(&self, j: usize, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.fc(i, j)).fold(f64::INFINITY, f64::min)
    }

    /// Largest facility-client distance.
    pub fn max_fc(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n_facilities() {
            for j in 0..self.n_clients() {
                m = m.max(self.fc(i, j));
            }
        }
        m
    }

    /// `sum_j weight_j * (c(j, S) - multiplier * r_j)^+`.
    pub fn discounted_cost(&self, set: &[usize], multiplier: f64) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::EmptyFacilitySet);
        }
        if let Some(&i) = set.iter().find(|&&i| i >= self.n_facilities()) {
            return Err(Error::UnknownFacility(i));
        }
        Ok((0..self.n_clients())
            .map(|j| {
                self.client_weights[j]
                    * math::pos(self.dist_to_set(j, set) - multiplier * self.discounts[j])
            })
            .sum())
    }

    /// Knapsack weight of a facility set (0 for other constraint families).
    pub fn weight_of(&self, set: &[usize]) -> f64 {
        match &self.constraint {
            Constraint::Knapsack { weights, .. } => set.iter().map(|&i| weights[i]).sum(),
            _ => 0.0,
        }
    }

    /// Every metric and constraint invariant violation. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.metric.len();
        if self.facilities.is_empty() {
            out.push(Violation::Empty("facilities"));
        }
        if self.clients.is_empty() {
            out.push(Violation::Empty("clients"));
        }
        if self.ids.len() != n {
            out.push(Violation::Shape(format!("{} site ids for a metric over {n} sites", self.ids.len())));
            return out;
        }
        for &s in self.facilities.iter().chain(&self.clients) {
            if s >= n {
                out.push(Violation::SiteOutOfRange(s));
            }
        }
        if self.discounts.len() != self.n_clients() || self.client_weights.len() != self.n_clients() {
            out.push(Violation::Shape(String::from("discounts and weights must be given for every client")));
        }
        if !out.is_empty() {
            return out;
        }
        let id = |p: usize| self.ids[p].clone();
        let d = |p, q| self.metric.d(p, q);
        let mut finite = true;
        for a in 0..n {
            if d(a, a) != 0.0 {
                out.push(Violation::NonzeroSelfDistance { site: id(a) });
            }
            for b in a + 1..n {
                let (ab, ba) = (d(a, b), d(b, a));
                if !ab.is_finite() || !ba.is_finite() {
                    out.push(Violation::NonFinite { a: id(a), b: id(b) });
                    finite = false;
                    continue;
                }
                if ab < 0.0 || ba < 0.0 {
                    out.push(Violation::NegativeDistance { a: id(a), b: id(b) });
                }
                if ab != ba {
                    out.push(Violation::Asymmetric { a: id(a), b: id(b) });
                }
                if ab > 0.0 && ab < 1.0 {
                    out.push(Violation::Normalization { a: id(a), b: id(b), dist: ab });
                }
            }
        }
        if finite {
            for a in 0..n {
                for c in a + 1..n {
                    for b in 0..n {
                        if b == a || b == c {
                            continue;
                        }
                        let excess = d(a, c) - d(a, b) - d(b, c);
                        if excess > TRIANGLE_TOL {
                            out.push(Violation::Triangle { a: id(a), b: id(b), c: id(c), excess });
                        }
                    }
                }
            }
        }
        for j in 0..self.n_clients() {
            if !(self.discounts[j] >= 0.0) {
                out.push(Violation::NegativeDiscount { client: id(self.clients[j]) });
            }
            if !(self.client_weights[j] >= 0.0) {
                out.push(Violation::NegativeWeight { client: id(self.clients[j]) });
            }
        }
        let nf = self.n_facilities();
        match &self.constraint {
            Constraint::Cardinality { k } => {
                if *k == 0 || *k > nf {
                    out.push(Violation::Cardinality { k: *k, facilities: nf });
                }
            }
            Constraint::Knapsack { weights, budget } => {
                if weights.len() != nf {
                    out.push(Violation::Knapsack(format!(
                        "{} weights for {nf} facilities",
                        weights.len()
                    )));
                } else {
                    if weights.iter().any(|w| !(*w >= 0.0)) {
                        out.push(Violation::Knapsack(String::from("negative facility weight")));
                    }
                    if !(*budget >= 0.0) {
                        out.push(Violation::Knapsack(String::from("negative budget")));
                    }
                    if !weights.iter().any(|w| w <= budget) {
                        out.push(Violation::Knapsack(String::from("no single facility fits the budget")));
                    }
                }
            }
            Constraint::Matroid(m) => {
                out.extend(m.violations(nf).into_iter().map(Violation::Matroid));
            }
        }
        out
    }

    /// Scales distances and discounts so that the smallest nonzero distance is
    /// at least 1. Instances already satisfying this are returned unchanged.
    pub fn normalize(&self) -> Instance {
        let mut out = self.clone();
        if let Some(min) = self.metric.min_positive() {
            if min < 1.0 {
                out.metric = self.metric.divided(min);
                for r in &mut out.discounts {
                    *r /= min;
                }
                out.scale = self.scale / min;
            }
        }
        out
    }

    /// Same instance with every discount replaced by `r` and client weights by
    /// `weights`.
    pub fn with_uniform_discount(&self, r: f64, weights: &[f64]) -> Instance {
        let mut out = self.clone();
        out.discounts = alloc::vec![r; self.n_clients()];
        out.client_weights = weights.to_vec();
        out
    }
}
