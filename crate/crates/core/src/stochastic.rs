//! Unassigned stochastic center: each point lands on a client location with
//! known probabilities, independently of the others, and the open set pays
//! the expected largest distance from a realized point.
//!
//! The solver sweeps a uniform discount `T` downward and runs the median
//! solver of the instance's constraint family with client weights `p_j`
//! (the chance that some point lands on `j`) and discounts `T`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{Constraint, Instance};
use crate::iterround::{self, check_tau};
use crate::knapsack::{self, KnapParams};
use crate::math;
use crate::report::{Certificate, SolveReport};

/// The sweep falls back to `T = 0` once `T` drops below this fraction of its start.
pub const SWEEP_FLOOR: f64 = 1e-9;

/// Exact evaluation refuses realization spaces larger than this.
pub const EXACT_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPoint {
    pub id: String,
    /// `(client position, probability)`; the remainder is "does not realize".
    pub dist: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticInstance {
    /// Discounts are ignored; weights are replaced by realization probabilities.
    pub base: Instance,
    pub points: Vec<StochasticPoint>,
}

impl StochasticInstance {
    pub fn validate(&self) -> Result<()> {
        let nc = self.base.n_clients();
        for p in &self.points {
            let mut total = 0.0;
            for &(j, q) in &p.dist {
                if j >= nc {
                    return Err(Error::InvalidParameter(format!("point {} lands on unknown client {j}", p.id)));
                }
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::InvalidParameter(format!("point {} has probability {q}", p.id)));
                }
                total += q;
            }
            if total > 1.0 + 1e-9 {
                return Err(Error::InvalidParameter(format!("point {} probabilities sum to {total}", p.id)));
            }
        }
        Ok(())
    }

    /// Number of joint outcomes, saturating.
    pub fn outcomes(&self) -> u128 {
        self.points.iter().fold(1u128, |acc, p| acc.saturating_mul(p.dist.len() as u128 + 1))
    }
}

/// `p_j = 1 - prod_v (1 - q_vj)`.
pub fn realization_probs(stoch: &StochasticInstance) -> Vec<f64> {
    let mut miss = alloc::vec![1.0; stoch.base.n_clients()];
    for p in &stoch.points {
        for &(j, q) in &p.dist {
            miss[j] *= 1.0 - q;
        }
    }
    miss.into_iter().map(|m| 1.0 - m).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Walk every joint outcome; guarded by [`EXACT_LIMIT`].
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

/// `E[max_v c(realized v, set)]`, with the max over no realized point read as 0.
pub fn eval_expected_max(stoch: &StochasticInstance, set: &[usize], mode: EvalMode) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyFacilitySet);
    }
    let inst = &stoch.base;
    let dist: Vec<f64> = (0..inst.n_clients()).map(|j| inst.dist_to_set(j, set)).collect();
    match mode {
        EvalMode::Exact => {
            let count = stoch.outcomes();
            if count > EXACT_LIMIT {
                return Err(Error::GuardExceeded { what: "realization outcomes", count, limit: EXACT_LIMIT });
            }
            Ok(exact(&stoch.points, &dist, 0, 0.0, 1.0))
        }
        EvalMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidParameter("monte carlo needs at least one sample".to_string()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut total = 0.0;
            for _ in 0..samples {
                let mut m: f64 = 0.0;
                for p in &stoch.points {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for &(j, q) in &p.dist {
                        acc += q;
                        if u < acc {
                            m = m.max(dist[j]);
                            break;
                        }
                    }
                }
                total += m;
            }
            Ok(total / samples as f64)
        }
    }
}

fn exact(points: &[StochasticPoint], dist: &[f64], v: usize, cur: f64, prob: f64) -> f64 {
    if prob == 0.0 {
        return 0.0;
    }
    if v == points.len() {
        return prob * cur;
    }
    let mut miss = 1.0;
    let mut e = 0.0;
    for &(j, q) in &points[v].dist {
        miss -= q;
        e += exact(points, dist, v + 1, cur.max(dist[j]), prob * q);
    }
    e + exact(points, dist, v + 1, cur, prob * miss.max(0.0))
}

/// `E[max_i s_i X_i]` for independent Bernoulli `X_i` with means `p_i` and `s_i >= 0`.
pub fn expected_max_bernoulli(s: &[f64], p: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut none_above = 1.0;
    let mut e = 0.0;
    for i in order {
        e += s[i] * p[i] * none_above;
        none_above *= 1.0 - p[i];
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochParams {
    pub tau: f64,
    pub epsilon: f64,
    /// Used for knapsack instances; its `tau` is replaced by `tau` above.
    pub knapsack: KnapParams,
    /// How the final solution's expected maximum is evaluated.
    pub eval: EvalMode,
}

impl Default for StochParams {
    fn default() -> Self {
        Self { tau: 1.985, epsilon: 0.1, knapsack: KnapParams::default(), eval: EvalMode::Exact }
    }
}

/// `(alpha, beta)` the sweep tests against, by constraint family. For
/// knapsack, `beta` carries the estimate grid's `1 + epsilon`.
pub fn sweep_factors(c: &Constraint, tau: f64, knap: &KnapParams) -> (f64, f64) {
    match c {
        Constraint::Cardinality { .. } => iterround::kmed_factors(tau),
        Constraint::Matroid(_) => iterround::matroid_factors(tau),
        Constraint::Knapsack { .. } => (
            knapsack::knapsack_alpha(tau),
            knapsack::knapsack_bound_factor(tau, knap.rho) * (1.0 + knap.epsilon),
        ),
    }
}

/// `3 (alpha + beta) / (1 - epsilon)`: the sweep's factor against the optimum.
pub fn guarantee_constant(alpha: f64, beta: f64, epsilon: f64) -> f64 {
    3.0 * (alpha + beta) / (1.0 - epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepStep {
    /// Uniform discount, in input units.
    pub t: f64,
    /// `sum_j p_j (c(j, S_T) - alpha T)^+`, in input units.
    pub cost_alpha: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticReport {
    pub solution: Vec<usize>,
    pub solution_ids: Vec<String>,
    /// Smallest accepted discount, in input units.
    pub t_star: f64,
    /// First rejected discount, in input units; `None` if every value passed.
    pub t_fail: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub constant: f64,
    pub probs: Vec<f64>,
    pub sweep: Vec<SweepStep>,
    /// Expected maximum of the returned set, in input units.
    pub expected_max: f64,
    /// Lower bound on the optimum implied by the sweep, in input units.
    pub lower_bound: f64,
    pub certificates: Vec<Certificate>,
    pub flags: Vec<String>,
    /// Median-solver report at `T*`.
    pub inner: SolveReport,
}

impl StochasticReport {
    pub fn all_hold(&self) -> bool {
        self.certificates.iter().all(|c| c.holds)
    }
}

fn solve_at(inst: &Instance, params: &StochParams) -> Result<SolveReport> {
    match inst.constraint {
        Constraint::Cardinality { .. } => iterround::solve_kmeddis(inst, params.tau),
        Constraint::Matroid(_) => iterround::solve_matmeddis(inst, params.tau),
        Constraint::Knapsack { .. } => {
            knapsack::solve_knapmeddis(inst, &KnapParams { tau: params.tau, ..params.knapsack.clone() })
        }
    }
}

/// Discount sweep from the largest facility-client distance down by factors
/// of `1 - epsilon` until [`SWEEP_FLOOR`] of the start, then `T = 0`. Stops at the
/// first `T` whose output fails `cost_alpha <= beta T` and returns the output
/// of the last accepted `T`.
pub fn solve_stochastic_center(stoch: &StochasticInstance, params: &StochParams) -> Result<StochasticReport> {
    solve_stochastic_center_with(stoch, params, |inst| solve_at(inst, params))
}

/// [`solve_stochastic_center`] with the median solver supplied by the caller.
/// `solve` receives the normalized instance with a uniform discount and must
/// return a report for the constraint family's default solver.
pub fn solve_stochastic_center_with(
    stoch: &StochasticInstance,
    params: &StochParams,
    mut solve: impl FnMut(&Instance) -> Result<SolveReport>,
) -> Result<StochasticReport> {
    check_tau(params.tau)?;
    if !(params.epsilon > 0.0 && params.epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {}", params.epsilon)));
    }
    stoch.validate()?;
    let norm = iterround::prepared(&stoch.base)?;
    let scale = norm.scale;
    let probs = realization_probs(stoch);
    let (alpha, beta) = sweep_factors(&norm.constraint, params.tau, &params.knapsack);
    let start = norm.max_fc();

    let mut sweep = Vec::new();
    let mut accepted: Option<(f64, SolveReport)> = None;
    let mut t_fail = None;
    let floor = SWEEP_FLOOR * start.max(1.0);
    let mut t = start;
    let mut flags = Vec::new();
    loop {
        let at = norm.with_uniform_discount(t, &probs);
        let rep = solve(&at)?;
        let cost_alpha = at.discounted_cost(&rep.solution_positions, alpha)?;
        let passed = cost_alpha <= beta * t + crate::report::CERT_TOL * (1.0 + beta * t);
        sweep.push(SweepStep { t: t / scale, cost_alpha: cost_alpha / scale, passed });
        if !passed {
            t_fail = Some(t);
            break;
        }
        accepted = Some((t, rep));
        if t == 0.0 {
            break;
        }
        t *= 1.0 - params.epsilon;
        if t < floor {
            flags.push("sweep reached the zero discount".to_string());
            t = 0.0;
        }
    }
    let (t_star, inner) = accepted.ok_or_else(|| Error::Postcondition("largest discount rejected".to_string()))?;
    let solution = inner.solution_positions.clone();

    let orig = StochasticInstance { base: norm.clone(), points: stoch.points.clone() };
    let expected = eval_expected_max(&orig, &solution, params.eval)?;
    let chain = alpha * t_star
        + (0..norm.n_clients())
            .map(|j| probs[j] * math::pos(norm.dist_to_set(j, &solution) - alpha * t_star))
            .sum::<f64>();
    // A rejected T certifies OPT_T > T and hence OPT* >= T / 3. When the zero
    // discount is rejected, some client with p_j > 0 is at distance >= 1 from
    // every feasible set.
    let lower = match t_fail {
        Some(tf) if tf > 0.0 => tf / 3.0,
        Some(_) => {
            flags.push("lower bound from smallest realization probability".to_string());
            probs.iter().copied().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min).min(1.0)
        }
        None => 0.0,
    };
    let constant = guarantee_constant(alpha, beta, params.epsilon);
    let mut certs = Vec::new();
    let accept_lhs = sweep.iter().rev().find(|s| s.passed).map_or(0.0, |s| s.cost_alpha);
    certs.push(Certificate::le("sweep-accept", accept_lhs, beta * t_star / scale));
    let slack = match params.eval {
        EvalMode::Exact => 0.0,
        EvalMode::MonteCarlo { samples, .. } => {
            // three standard deviations of a mean of values in [0, max distance]
            3.0 * start / math::sqrt(samples as f64)
        }
    };
    certs.push(Certificate::le("expected-max-chain", expected - slack, chain).unscaled(scale));
    certs.push(Certificate::le("expected-max", chain, (alpha + beta) * t_star).unscaled(scale));
    if t_fail.is_some_and(|tf| tf > 0.0) {
        certs.push(Certificate::le("guarantee", (alpha + beta) * t_star, constant * lower).unscaled(scale));
    }

    Ok(StochasticReport {
        solution_ids: solution.iter().map(|&i| norm.facility_id(i).to_string()).collect(),
        solution,
        t_star: t_star / scale,
        t_fail: t_fail.map(|v| v / scale),
        alpha,
        beta,
        epsilon: params.epsilon,
        constant,
        probs,
        sweep,
        expected_max: expected / scale,
        lower_bound: lower / scale,
        certificates: certs,
        flags,
        inner,
    })
}

/// Random stochastic instance over a generated base: `n_points` points, each
/// with `1..=max_support` distinct locations and total probability in `(0, 1]`.
pub fn generate_stochastic(base: &crate::instance::GenParams, n_points: usize, max_support: usize) -> StochasticInstance {
    let inst = crate::instance::generate(base);
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed ^ 0x5eed_0f_9011);
    let nc = inst.n_clients();
    let points = (0..n_points)
        .map(|v| {
            let k = rng.gen_range(1..=max_support.clamp(1, nc.max(1)));
            let mut locs: Vec<usize> = Vec::with_capacity(k);
            while locs.len() < k {
                let j = rng.gen_range(0..nc);
                if !locs.contains(&j) {
                    locs.push(j);
                }
            }
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total = rng.gen_range(0.2..=1.0) / raw.iter().sum::<f64>();
            StochasticPoint { id: format!("v{v}"), dist: locs.into_iter().zip(raw.into_iter().map(|q| q * total)).collect() }
        })
        .collect();
    let discounts = alloc::vec![0.0; nc];
    StochasticInstance { base: Instance { discounts, ..inst }, points }
}
