//! Knapsack median with discounts: estimate enumeration, sparsification into
//! extended instances, the strengthened relaxation, star-balanced duplication,
//! rounding with pinned pre-selected facilities, and resolution of the last
//! two fractional copies.
//!
//! All work happens on the normalized instance; reports are in input units.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::discretize::{self, DiscretizedMetric};
use crate::error::{Error, Result};
use crate::fractional::{self, BallSystem, KnapsackExtension};
use crate::instance::{Constraint, Instance};
use crate::iterround::{self, check_tau, iter_round, opened, pair_inputs, Family, RoundState, INTEGRAL_TOL};
use crate::math;
use crate::report::{Action, CandidateSummary, Certificate, IterationRecord, SolveReport};

/// Default limit on extended instances per estimate.
pub const DEFAULT_MAX_CANDIDATES: u128 = 2_000_000;
/// Most clients a removal mask can address.
pub const MAX_CLIENTS: usize = 128;
/// Slack on the `y(i1) + y(i2) = 1` identity of the last two fractional copies.
pub const PAIR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KnapParams {
    pub tau: f64,
    pub rho: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// `(cap1, cap2)`; `None` uses [`theoretical_caps`].
    pub caps: Option<(usize, usize)>,
    pub max_candidates: u128,
    /// Stop after the first estimate holding a candidate that meets its own
    /// bound. Estimates are visited in increasing order, so the estimate the
    /// guarantee is stated against is never skipped.
    pub early_stop: bool,
    /// Skip extended instances that cannot satisfy the estimate inequality.
    pub prune: bool,
}

impl Default for KnapParams {
    fn default() -> Self {
        Self {
            tau: 1.9,
            rho: 1.0 / 3.0,
            delta: 2.0 / 3.0,
            epsilon: 0.1,
            caps: None,
            max_candidates: DEFAULT_MAX_CANDIDATES,
            early_stop: false,
            prune: true,
        }
    }
}

impl KnapParams {
    fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.rho) {
            return Err(Error::InvalidParameter(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !open_unit(self.delta) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn resolved_caps(&self) -> (usize, usize) {
        self.caps.unwrap_or_else(|| theoretical_caps(self.rho, self.delta))
    }
}

/// `(ceil(1 / rho), ceil(1 / (rho (1 - delta))))`.
pub fn theoretical_caps(rho: f64, delta: f64) -> (usize, usize) {
    (math::ceil_tol(1.0 / rho) as usize, math::ceil_tol(1.0 / (rho * (1.0 - delta))) as usize)
}

/// `sigma = tau (3 tau - 1) / (tau - 1)`.
pub fn sigma(tau: f64) -> f64 {
    tau * (3.0 * tau - 1.0) / (tau - 1.0)
}

/// `alpha'' = 3 sigma + 2`.
pub fn knapsack_alpha(tau: f64) -> f64 {
    3.0 * sigma(tau) + 2.0
}

/// Multiplier of `EST` on the certified side:
/// `max{5, (3 tau - 1) / ln tau} + rho (7 sigma + 14/3)`.
pub fn knapsack_bound_factor(tau: f64, rho: f64) -> f64 {
    let beta = (3.0 * tau - 1.0) / math::ln(tau);
    beta.max(5.0) + rho * (7.0 * sigma(tau) + 14.0 / 3.0)
}

/// `gamma = delta / (2 sigma + delta)`.
pub fn gamma(tau: f64, delta: f64) -> f64 {
    delta / (2.0 * sigma(tau) + delta)
}

/// `eta = sigma (1 + gamma) / (1 - gamma)`, which equals `sigma + delta`.
pub fn eta(tau: f64, delta: f64) -> f64 {
    let g = gamma(tau, delta);
    sigma(tau) * (1.0 + g) / (1.0 - g)
}

fn cost(inst: &Instance, i: usize, j: usize) -> f64 {
    inst.client_weights[j] * math::pos(inst.fc(i, j) - inst.discounts[j])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub c0: f64,
    pub est: f64,
}

/// Every `(c0, EST)` pair: `c0` ranges over 0 and the distinct positive pair
/// costs, and `EST = c0 (1 + eps)^s` for `s = 0 ..= ceil(log_{1+eps} n)`.
pub fn enumerate_estimates(inst: &Instance, epsilon: f64) -> Result<Vec<Estimate>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut c0s: Vec<f64> = Vec::new();
    for i in 0..inst.n_facilities() {
        for j in 0..inst.n_clients() {
            let c = cost(inst, i, j);
            if c > 0.0 {
                c0s.push(c);
            }
        }
    }
    c0s.sort_by(f64::total_cmp);
    c0s.dedup();
    let n = inst.n_clients().max(1) as f64;
    let steps = math::ceil_tol(math::ln(n) / math::ln(1.0 + epsilon)).max(0.0) as i32;
    let mut out = vec![Estimate { c0: 0.0, est: 0.0 }];
    for c0 in c0s {
        for s in 0..=steps {
            out.push(Estimate { c0, est: c0 * math::powi(1.0 + epsilon, s) });
        }
    }
    Ok(out)
}

/// A knapsack instance with pre-selected facilities and a reduced client set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedInstance {
    /// Pre-selected facility positions, sorted.
    pub f0: Vec<usize>,
    /// Surviving client positions, sorted.
    pub clients: Vec<usize>,
    /// Removed client positions, sorted.
    pub removed: Vec<usize>,
    pub rho: f64,
    pub delta: f64,
    pub est: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    pub value: f64,
    /// The budget never binds; `value` is the finite cap.
    pub capped: bool,
}

impl ExtendedInstance {
    pub fn rho_est(&self) -> f64 {
        self.rho * self.est
    }

    /// Radius per client position (0 for removed clients) and whether any was capped.
    pub fn radii(&self, inst: &Instance) -> (Vec<f64>, bool) {
        let mut out = vec![0.0; inst.n_clients()];
        let mut capped = false;
        for &j in &self.clients {
            let r = compute_rj(inst, self, j);
            out[j] = r.value;
            capped |= r.capped;
        }
        (out, capped)
    }

    /// `(1 - delta) / (1 + delta) * sum over removed j of
    /// w_j (c(j, F0) - (1 + delta) / (1 - delta) r_j)^+`; infinite when
    /// clients were removed but `F0` is empty.
    pub fn removed_term(&self, inst: &Instance) -> f64 {
        if self.removed.is_empty() {
            return 0.0;
        }
        if self.f0.is_empty() {
            return f64::INFINITY;
        }
        let k = (1.0 + self.delta) / (1.0 - self.delta);
        let s: f64 = self
            .removed
            .iter()
            .map(|&j| inst.client_weights[j] * math::pos(inst.dist_to_set(j, &self.f0) - k * inst.discounts[j]))
            .sum();
        s / k
    }
}

/// Largest `R >= 0` with
/// `sum over kept j' with c(j, j') <= delta R of w_j' (R - r_j' / (1 - delta))^+ <= rho EST`,
/// found by walking the breakpoints of the left side. When the sum never
/// exceeds the budget, the result is capped at `max distance / delta + rho EST`.
pub fn compute_rj(inst: &Instance, ext: &ExtendedInstance, j: usize) -> Radius {
    let budget = ext.rho_est();
    let delta = ext.delta;
    // (entry radius, kink, weight)
    let terms: Vec<(f64, f64, f64)> = ext
        .clients
        .iter()
        .map(|&q| (inst.cc(j, q) / delta, inst.discounts[q] / (1.0 - delta), inst.client_weights[q]))
        .filter(|t| t.2 > 0.0)
        .collect();
    let value_at = |r: f64| -> f64 { terms.iter().filter(|t| t.0 <= r).map(|t| t.2 * math::pos(r - t.1)).sum() };
    let slope_after = |r: f64| -> f64 { terms.iter().filter(|t| t.0 <= r && t.1 <= r).map(|t| t.2).sum() };
    let mut points: Vec<f64> = terms.iter().flat_map(|t| [t.0, t.1]).collect();
    points.push(0.0);
    points.sort_by(f64::total_cmp);
    points.dedup();
    for w in points.windows(2) {
        let (p, next) = (w[0], w[1]);
        let g = value_at(p);
        let slope = slope_after(p);
        let left_limit = g + slope * (next - p);
        if left_limit > budget {
            return Radius { value: p + (budget - g) / slope, capped: false };
        }
        if value_at(next) > budget {
            return Radius { value: next, capped: false };
        }
    }
    let last = *points.last().unwrap_or(&0.0);
    let slope = slope_after(last);
    if slope > 0.0 {
        return Radius { value: last + (budget - value_at(last)) / slope, capped: false };
    }
    let max_d = inst.metric.rows().flat_map(|r| r.iter().copied()).fold(0.0, f64::max);
    Radius { value: max_d / delta + budget, capped: true }
}

/// Enumeration bounds for [`sparsify_candidates`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsifyOptions {
    pub cap1: usize,
    pub cap2: usize,
    pub limit: u128,
    /// Draw removal radii `delta c(p, i)` only from `i` in `F0` rather than all
    /// of `F`. Every ball the construction removes has its radius set by a
    /// facility it also pre-selects, so this keeps the sparse instance.
    pub radii_from_f0: bool,
}

/// Subsets of `0..n` of size at most `m`, by size then lexicographically.
fn subsets_up_to(n: usize, m: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, size: usize, start: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if cur.len() == size {
            visit(cur);
            return;
        }
        for i in start..n {
            if n - i < size - cur.len() {
                break;
            }
            cur.push(i);
            rec(n, size, i + 1, cur, visit);
            cur.pop();
        }
    }
    let mut cur = Vec::new();
    for size in 0..=m.min(n) {
        rec(n, size, 0, &mut cur, visit);
    }
}

fn binomial_prefix(n: usize, m: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for s in 0..=m.min(n) {
        total = total.saturating_add(c);
        c = c.saturating_mul((n - s) as u128) / (s as u128 + 1);
    }
    total
}

/// Masks of the closed removal balls around every site, with radius
/// `delta c(p, i)` for `i` in `radius_from`.
fn ball_masks(inst: &Instance, delta: f64, radius_from: &[usize]) -> Vec<u128> {
    let mut masks = BTreeSet::new();
    let sites = inst.facilities.iter().chain(&inst.clients).copied();
    for p in sites {
        for &i in radius_from {
            let radius = delta * inst.metric.d(p, inst.facilities[i]);
            let mut m: u128 = 0;
            for j in 0..inst.n_clients() {
                if inst.metric.d(inst.clients[j], p) <= radius * (1.0 + 1e-12) {
                    m |= 1 << j;
                }
            }
            if m != 0 {
                masks.insert(m);
            }
        }
    }
    masks.into_iter().collect()
}

/// Distinct unions of at most `cap` masks, including the empty union.
fn unions(masks: &[u128], cap: usize) -> Vec<u128> {
    let mut seen: BTreeSet<u128> = BTreeSet::new();
    seen.insert(0);
    let mut frontier = vec![0u128];
    for _ in 0..cap {
        let mut next = Vec::new();
        for &u in &frontier {
            for &m in masks {
                let v = u | m;
                if seen.insert(v) {
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    seen.into_iter().collect()
}

/// Every extended instance with `|F0| <= cap1 + cap2`, `w(F0) <= W`, and the
/// kept clients equal to all clients minus a union of at most `cap2` removal
/// balls. Refuses when the count exceeds `opts.limit`.
pub fn sparsify_candidates(
    inst: &Instance,
    rho: f64,
    delta: f64,
    est: f64,
    c0: f64,
    opts: SparsifyOptions,
) -> Result<Vec<ExtendedInstance>> {
    let Constraint::Knapsack { weights, budget } = &inst.constraint else {
        return Err(Error::WrongConstraint { expected: "knapsack" });
    };
    let nc = inst.n_clients();
    if nc > MAX_CLIENTS {
        return Err(Error::InvalidParameter(format!("at most {MAX_CLIENTS} clients supported, got {nc}")));
    }
    let nf = inst.n_facilities();
    let max_f0 = opts.cap1 + opts.cap2;
    let subsets = binomial_prefix(nf, max_f0);
    if subsets > opts.limit {
        return Err(Error::GuardExceeded { what: "pre-selected facility sets", count: subsets, limit: opts.limit });
    }
    let mut f0s: Vec<Vec<usize>> = Vec::new();
    subsets_up_to(nf, max_f0, &mut |s| {
        if s.iter().map(|&i| weights[i]).sum::<f64>() <= *budget {
            f0s.push(s.to_vec());
        }
    });
    let all: Vec<usize> = (0..nf).collect();
    let shared = if opts.radii_from_f0 { None } else { Some(unions(&ball_masks(inst, delta, &all), opts.cap2)) };
    let mut per_f0 = Vec::with_capacity(f0s.len());
    let mut count: u128 = 0;
    for f0 in &f0s {
        let u = match &shared {
            Some(u) => u.clone(),
            None if opts.cap2 == 0 || f0.is_empty() => vec![0],
            None => unions(&ball_masks(inst, delta, f0), opts.cap2),
        };
        count = count.saturating_add(u.len() as u128);
        if count > opts.limit {
            return Err(Error::GuardExceeded { what: "extended instances", count, limit: opts.limit });
        }
        per_f0.push(u);
    }
    let mut out = Vec::with_capacity(count as usize);
    for (f0, masks) in f0s.into_iter().zip(per_f0) {
        for m in masks {
            let (removed, clients): (Vec<usize>, Vec<usize>) = (0..nc).partition(|&j| m >> j & 1 == 1);
            out.push(ExtendedInstance { f0: f0.clone(), clients, removed, rho, delta, est, c0 });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reroute {
    /// `c(j, i2) >= gamma d`: checked against `(1 + 1/gamma) c(j, i2)`.
    Near,
    /// `c(j, i2) < gamma d`: checked against `eta R_j`.
    Far,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerouteEntry {
    pub client: usize,
    pub class: Reroute,
    /// `c(j, i')`.
    pub lhs: f64,
    pub rhs: f64,
}

/// Result of rounding one extended instance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapCandidate {
    pub extended: ExtendedInstance,
    pub solution: Vec<usize>,
    pub cost: f64,
    /// Discounted cost at multiplier `alpha''`.
    pub cost_alpha: f64,
    /// Fractional copies left by the rounding.
    pub t: usize,
    /// Optimum `U` of the strengthened relaxation.
    pub lp_value: f64,
    pub removed_term: f64,
    pub b: f64,
    /// Auxiliary objective at the chosen offset.
    pub initial: f64,
    /// Largest star cost over copies not co-located with `F0`.
    pub max_star: f64,
    /// Smallest fractional mass within `(3 tau - 1) / (tau - 1) D_l` of a client,
    /// before resolution.
    pub min_near_mass: f64,
    /// `y(i1) + y(i2)` when two copies were fractional.
    pub pair_sum: Option<f64>,
    pub weight: f64,
    pub preselected_kept: bool,
    pub reroutes: Vec<RerouteEntry>,
    pub radius_capped: bool,
    pub cstar_ok: bool,
    pub max_increase: f64,
    /// `(action, client position or None for a pin, objective)`.
    pub history: Vec<(Action, Option<usize>, f64)>,
    /// `(client position, final level)` for every kept client.
    pub final_levels: Vec<(usize, i32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    /// The strengthened relaxation has no solution.
    Infeasible,
    /// Fails the estimate inequality the sparse instance satisfies.
    Pruned,
    Candidate(alloc::boxed::Box<KnapCandidate>),
}

/// Full pipeline on one extended instance of the normalized `inst`.
pub fn solve_extended(inst: &Instance, ext: &ExtendedInstance, tau: f64) -> Result<Evaluation> {
    evaluate(inst, ext, tau, false)
}

fn evaluate(inst: &Instance, ext: &ExtendedInstance, tau: f64, prune: bool) -> Result<Evaluation> {
    check_tau(tau)?;
    if !matches!(inst.constraint, Constraint::Knapsack { .. }) {
        return Err(Error::WrongConstraint { expected: "knapsack" });
    }
    let slack = |v: f64| 1e-9 * (1.0 + v.abs());
    let removed_term = ext.removed_term(inst);
    if prune && removed_term > ext.est + slack(ext.est) {
        return Ok(Evaluation::Pruned);
    }
    let nf = inst.n_facilities();
    let (radius, radius_capped) = ext.radii(inst);
    let kext = KnapsackExtension { f0: &ext.f0, clients: &ext.clients, radius: &radius, rho_est: ext.rho_est() };
    let nat = fractional::build_knapsack_lp(inst, &kext)?;
    if ext.clients.iter().any(|&j| nat.x_var[j].iter().all(Option::is_none)) {
        return Ok(Evaluation::Infeasible);
    }
    let Some(opt) = nat.lp.solve()?.optimal() else {
        return Ok(Evaluation::Infeasible);
    };
    let lp_value = opt.objective;
    if prune && removed_term + lp_value > ext.est + slack(ext.est) {
        return Ok(Evaluation::Pruned);
    }
    let sol = nat.solution(&opt);
    let dup = fractional::duplicate_star_balanced(&sol, inst);
    let star = dup.star_costs(inst);
    let max_star = (0..dup.origin.len())
        .filter(|&c| !ext.f0.contains(&dup.origin[c]))
        .map(|c| star[c])
        .fold(0.0, f64::max);
    let (b, initial) = discretize::choose_offset(&pair_inputs(inst, &dup), tau);
    let disc = DiscretizedMetric::new(tau, b);
    let balls = BallSystem::new(&dup, inst, &disc, &ext.f0);
    let real = dup.clients.len();
    let state = iter_round(RoundState::new(balls, inst, disc, 1), Family::of(&inst.constraint), nf)?;

    let frac = state.fractional();
    if frac.len() > 2 {
        return Err(Error::TooManyFractional { count: frac.len(), dump: state.dump(inst) });
    }
    let reach = (3.0 * tau - 1.0) / (tau - 1.0);
    let origin = &state.balls.origin;
    let mut min_near_mass = f64::INFINITY;
    for bi in 0..real {
        let j = dup.clients[bi];
        let lim = reach * disc.d(state.level(bi)).max(0.0);
        let mass: f64 = (0..origin.len())
            .filter(|&c| inst.fc(origin[c], j) <= lim * (1.0 + 1e-9) + 1e-12)
            .map(|c| state.y[c])
            .sum();
        min_near_mass = min_near_mass.min(mass);
    }

    let mut y = state.y.clone();
    let mut closed = None;
    let mut pair_sum = None;
    match frac.as_slice() {
        [] => {}
        &[c] => {
            y[c] = 0.0;
            closed = Some(c);
        }
        &[p, q] => {
            let Constraint::Knapsack { weights, .. } = &inst.constraint else { unreachable!() };
            let (light, heavy) = if weights[origin[q]] < weights[origin[p]] { (q, p) } else { (p, q) };
            pair_sum = Some(y[p] + y[q]);
            y[light] = 1.0;
            y[heavy] = 0.0;
            closed = Some(heavy);
        }
        _ => unreachable!(),
    }
    for v in &mut y {
        if *v <= INTEGRAL_TOL {
            *v = 0.0;
        } else if *v >= 1.0 - INTEGRAL_TOL {
            *v = 1.0;
        }
    }
    let solution = opened(origin, &y);
    if solution.is_empty() {
        return Ok(Evaluation::Infeasible);
    }
    let preselected_kept = ext.f0.iter().all(|i| solution.contains(i));
    let weight = inst.weight_of(&solution);

    let mut reroutes = Vec::new();
    if let Some(c2) = closed {
        let i2 = origin[c2];
        if !ext.f0.contains(&i2) {
            let near = *solution
                .iter()
                .min_by(|&&a, &&b| inst.ff(i2, a).total_cmp(&inst.ff(i2, b)).then(a.cmp(&b)))
                .expect("nonempty");
            let d = inst.ff(i2, near);
            let g = gamma(tau, ext.delta);
            for bi in 0..real {
                if !state.balls.balls[bi].inner.contains(&c2) {
                    continue;
                }
                let j = dup.clients[bi];
                let lhs = inst.fc(near, j);
                let (class, rhs) = if inst.fc(i2, j) >= g * d {
                    (Reroute::Near, (1.0 + 1.0 / g) * inst.fc(i2, j))
                } else {
                    (Reroute::Far, eta(tau, ext.delta) * radius[j])
                };
                reroutes.push(RerouteEntry { client: j, class, lhs, rhs });
            }
        }
    }

    let alpha = knapsack_alpha(tau);
    let history = state
        .history
        .iter()
        .map(|&(a, bi, v)| (a, bi.and_then(|bi| state.balls.balls[bi].client), v))
        .collect();
    let final_levels = (0..real).map(|bi| (dup.clients[bi], state.level(bi))).collect();
    Ok(Evaluation::Candidate(alloc::boxed::Box::new(KnapCandidate {
        extended: ext.clone(),
        cost: inst.discounted_cost(&solution, 1.0)?,
        cost_alpha: inst.discounted_cost(&solution, alpha)?,
        solution,
        t: frac.len(),
        lp_value,
        removed_term,
        b,
        initial,
        max_star,
        min_near_mass,
        pair_sum,
        weight,
        preselected_kept,
        reroutes,
        radius_capped,
        cstar_ok: state.cstar_ok,
        max_increase: iterround::max_increase(&state),
        history,
        final_levels,
    })))
}

/// Cheapest discounted cost reachable by greedily adding the facility that
/// lowers the cost most while the budget allows.
fn greedy_upper_bound(inst: &Instance) -> f64 {
    let Constraint::Knapsack { weights, budget } = &inst.constraint else { return f64::INFINITY };
    let mut set: Vec<usize> = Vec::new();
    let mut best = f64::INFINITY;
    loop {
        let used = inst.weight_of(&set);
        let mut step: Option<(f64, usize)> = None;
        for i in 0..inst.n_facilities() {
            if set.contains(&i) || used + weights[i] > *budget {
                continue;
            }
            set.push(i);
            let v = inst.discounted_cost(&set, 1.0).unwrap_or(f64::INFINITY);
            set.pop();
            if step.map_or(true, |(s, _)| v < s) {
                step = Some((v, i));
            }
        }
        match step {
            Some((v, i)) if v < best => {
                best = v;
                set.push(i);
            }
            _ => return best,
        }
    }
}

/// Estimates to try, ascending and deduplicated, with the normalized instance
/// and the quantities shared by every extended instance.
#[derive(Debug, Clone)]
pub struct KnapPlan {
    pub norm: Instance,
    pub params: KnapParams,
    pub caps: (usize, usize),
    pub levels: Vec<Estimate>,
    /// Natural relaxation optimum, a lower bound on the optimum.
    pub lower: f64,
    /// Greedy cost, an upper bound on the optimum.
    pub upper: f64,
    pub flags: Vec<String>,
}

/// Validates the input and fixes the estimate levels.
pub fn plan(inst: &Instance, params: &KnapParams) -> Result<KnapPlan> {
    params.validate()?;
    let Constraint::Knapsack { weights, budget } = &inst.constraint else {
        return Err(Error::WrongConstraint { expected: "knapsack" });
    };
    if !weights.iter().any(|&w| w <= *budget) {
        return Err(Error::NoFeasibleCandidate);
    }
    let norm = iterround::prepared(inst)?;
    let nat = fractional::build_natural_lp(&norm)?;
    let lower = nat.lp.solve()?.optimal().ok_or(Error::Infeasible("natural relaxation"))?.objective;
    let upper = greedy_upper_bound(&norm);
    let hi = (1.0 + params.epsilon) * upper;
    let mut levels: Vec<Estimate> = enumerate_estimates(&norm, params.epsilon)?
        .into_iter()
        .filter(|e| e.est >= lower - 1e-9 * (1.0 + lower) && e.est <= hi + 1e-9 * (1.0 + hi))
        .collect();
    levels.sort_by(|a, b| a.est.total_cmp(&b.est).then(a.c0.total_cmp(&b.c0)));
    levels.dedup_by(|a, b| a.est == b.est);
    let caps = params.resolved_caps();
    let theory = theoretical_caps(params.rho, params.delta);
    let mut flags = Vec::new();
    if caps.0 < theory.0 || caps.1 < theory.1 {
        flags.push(format!("caps ({}, {}) below theoretical ({}, {})", caps.0, caps.1, theory.0, theory.1));
    }
    if params.early_stop {
        flags.push("early stop".to_string());
    }
    Ok(KnapPlan { norm, params: params.clone(), caps, levels, lower, upper, flags })
}

impl KnapPlan {
    pub fn alpha(&self) -> f64 {
        knapsack_alpha(self.params.tau)
    }

    pub fn bound_factor(&self) -> f64 {
        knapsack_bound_factor(self.params.tau, self.params.rho)
    }

    pub fn candidates(&self, level: usize) -> Result<Vec<ExtendedInstance>> {
        let e = self.levels[level];
        let opts = SparsifyOptions {
            cap1: self.caps.0,
            cap2: self.caps.1,
            limit: self.params.max_candidates,
            radii_from_f0: true,
        };
        sparsify_candidates(&self.norm, self.params.rho, self.params.delta, e.est, e.c0, opts)
    }

    pub fn evaluate(&self, ext: &ExtendedInstance) -> Result<Evaluation> {
        evaluate(&self.norm, ext, self.params.tau, self.params.prune)
    }

    /// The candidate meets its own certified bound.
    pub fn certifies(&self, c: &KnapCandidate) -> bool {
        let rhs = self.bound_factor() * c.extended.est;
        c.cost_alpha <= rhs + crate::report::CERT_TOL * (1.0 + rhs)
    }

    /// Evaluates levels in order with `map`, which may run candidates
    /// concurrently but must preserve order.
    pub fn run(
        &self,
        mut map: impl FnMut(&KnapPlan, &[ExtendedInstance]) -> Vec<Result<Evaluation>>,
    ) -> Result<SolveReport> {
        let mut found: Vec<KnapCandidate> = Vec::new();
        let mut stats = Stats::default();
        let mut certified_est: Option<f64> = None;
        for level in 0..self.levels.len() {
            let exts = self.candidates(level)?;
            stats.generated += exts.len();
            for r in map(self, &exts) {
                match r? {
                    Evaluation::Infeasible => stats.infeasible += 1,
                    Evaluation::Pruned => stats.pruned += 1,
                    Evaluation::Candidate(c) => {
                        if certified_est.is_none() && self.certifies(&c) {
                            certified_est = Some(c.extended.est);
                        }
                        found.push(*c);
                    }
                }
            }
            stats.levels += 1;
            if certified_est.is_some() && self.params.early_stop {
                break;
            }
        }
        self.finish(found, certified_est, stats)
    }

    fn finish(&self, found: Vec<KnapCandidate>, certified_est: Option<f64>, stats: Stats) -> Result<SolveReport> {
        let norm = &self.norm;
        let scale = norm.scale;
        let best = found
            .iter()
            .min_by(|a, b| a.cost_alpha.total_cmp(&b.cost_alpha).then_with(|| a.solution.cmp(&b.solution)))
            .ok_or(Error::NoFeasibleCandidate)?;
        let Constraint::Knapsack { budget, .. } = &norm.constraint else { unreachable!() };
        let tau = self.params.tau;
        let alpha = self.alpha();
        let factor = self.bound_factor();
        let two_rho = 2.0 * self.params.rho;
        let mut flags = self.flags.clone();
        flags.push(format!(
            "levels {} of {}, extended {}, infeasible {}, pruned {}, rounded {}",
            stats.levels,
            self.levels.len(),
            stats.generated,
            stats.infeasible,
            stats.pruned,
            found.len()
        ));
        if found.iter().any(|c| c.radius_capped) {
            flags.push("radius cap reached".to_string());
        }

        let worst = |key: &dyn Fn(&KnapCandidate) -> f64| {
            found.iter().max_by(|a, b| key(a).total_cmp(&key(b))).expect("nonempty")
        };
        let mut certs = Vec::new();
        let e = &best.extended;
        certs.push(Certificate::le("sparse-estimate", best.removed_term + best.lp_value, e.est).unscaled(scale));
        certs.push(Certificate::le("discretization", best.initial, discretize::stretch(tau) * best.lp_value).unscaled(scale));
        let w = worst(&|c| c.max_increase);
        certs.push(Certificate::le("objective-monotone", w.max_increase, 0.0).unscaled(scale));
        certs.push(Certificate::check("cstar-discipline", found.iter().all(|c| c.cstar_ok)));
        let t = found.iter().map(|c| c.t).max().unwrap_or(0);
        certs.push(Certificate::le("fractional-residual", t as f64, 2.0));
        let w = worst(&|c| c.pair_sum.map_or(0.0, |s| (s - 1.0).abs()));
        certs.push(Certificate::le("fractional-pair", w.pair_sum.map_or(0.0, |s| (s - 1.0).abs()), PAIR_TOL));
        let w = worst(&|c| c.weight);
        certs.push(Certificate::le("budget", w.weight, *budget));
        certs.push(Certificate::check("preselected-kept", found.iter().all(|c| c.preselected_kept)));
        let w = worst(&|c| c.max_star - two_rho * c.extended.est);
        certs.push(Certificate::le("star-bound", w.max_star, two_rho * w.extended.est).unscaled(scale));
        let w = worst(&|c| -c.min_near_mass);
        certs.push(Certificate::le("near-mass", 1.0 - w.min_near_mass, iterround::SHRINK_TOL));
        let entries = || found.iter().flat_map(|c| c.reroutes.iter());
        for (class, name) in [(Reroute::Near, "reroute-near"), (Reroute::Far, "reroute-far")] {
            let worst_entry = entries()
                .filter(|r| r.class == class)
                .max_by(|a, b| (a.lhs - a.rhs).total_cmp(&(b.lhs - b.rhs)));
            if let Some(r) = worst_entry {
                certs.push(Certificate::le(name, r.lhs, r.rhs).unscaled(scale));
            }
        }
        for r in &best.reroutes {
            let tag = match r.class {
                Reroute::Near => "near",
                Reroute::Far => "far",
            };
            certs.push(Certificate::le(format!("reroute-{tag}:{}", norm.client_id(r.client)), r.lhs, r.rhs).unscaled(scale));
        }
        let rhs_est = match certified_est {
            Some(v) => v,
            None => {
                flags.push("no candidate met its bound".to_string());
                self.levels.last().map_or(0.0, |l| l.est)
            }
        };
        certs.push(Certificate::le("bicriteria", best.cost_alpha, factor * rhs_est).unscaled(scale));

        let ids = |v: &[usize]| v.iter().map(|&i| norm.facility_id(i).to_string()).collect::<Vec<_>>();
        let candidates = found
            .iter()
            .map(|c| CandidateSummary {
                c0: c.extended.c0 / scale,
                est: c.extended.est / scale,
                preselected: ids(&c.extended.f0),
                removed_clients: c.extended.removed.len(),
                objective: Some(c.cost_alpha / scale),
                fractional: Some(c.t),
                lp_value: Some(c.lp_value / scale),
                solution: ids(&c.solution),
            })
            .collect();
        let iterations = best
            .history
            .iter()
            .map(|&(action, j, objective)| IterationRecord {
                action,
                client: j.map(|j| norm.client_id(j).to_string()),
                objective: objective / scale,
            })
            .collect();
        Ok(SolveReport {
            problem: "knapsack".to_string(),
            tau,
            b: best.b,
            h: 1,
            solution: ids(&best.solution),
            solution_positions: best.solution.clone(),
            objective: best.cost / scale,
            objective_alpha: best.cost_alpha / scale,
            alpha,
            beta: factor,
            lp_value: best.lp_value / scale,
            iterations,
            final_levels: best.final_levels.iter().map(|&(j, l)| (norm.client_id(j).to_string(), l)).collect(),
            certificates: certs,
            candidates,
            flags,
        })
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Stats {
    levels: usize,
    generated: usize,
    infeasible: usize,
    pruned: usize,
}

/// Sequential driver: [`plan`] then [`KnapPlan::run`].
pub fn solve_knapmeddis(inst: &Instance, params: &KnapParams) -> Result<SolveReport> {
    let p = plan(inst, params)?;
    p.run(|p, exts| exts.iter().map(|e| p.evaluate(e)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::MetricSpace;

    fn line(fac: &[f64], cli: &[f64], r: f64, weights: Vec<f64>, budget: f64) -> Instance {
        let pts: Vec<f64> = fac.iter().chain(cli).copied().collect();
        let rows: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| f64::abs(a - b)).collect()).collect();
        let ids = (0..pts.len()).map(|p| format!("s{p}")).collect();
        Instance::new(
            ids,
            MetricSpace::from_rows(&rows).unwrap(),
            (0..fac.len()).collect(),
            (fac.len()..pts.len()).collect(),
            vec![r; cli.len()],
            Constraint::Knapsack { weights, budget },
        )
    }

    fn ext(inst: &Instance, est: f64) -> ExtendedInstance {
        ExtendedInstance {
            f0: Vec::new(),
            clients: (0..inst.n_clients()).collect(),
            removed: Vec::new(),
            rho: 0.5,
            delta: 2.0 / 3.0,
            est,
            c0: est,
        }
    }

    #[test]
    fn constants() {
        assert!((knapsack_alpha(1.9) - 31.7667).abs() < 1e-3);
        assert_eq!(theoretical_caps(0.5, 2.0 / 3.0), (2, 6));
        assert_eq!(theoretical_caps(1.0 / 3.0, 2.0 / 3.0), (3, 9));
        let (s, d) = (sigma(1.9), 2.0 / 3.0);
        assert!((eta(1.9, d) - (s + d)).abs() < 1e-9);
        assert!((1.0 + 1.0 / gamma(1.9, d) - (2.0 * s / d + 2.0)).abs() < 1e-9);
    }

    #[test]
    fn colocated_single_client() {
        let inst = line(&[0.0], &[0.0], 0.0, vec![1.0], 1.0);
        let e = enumerate_estimates(&inst, 0.1).unwrap();
        assert_eq!(e, vec![Estimate { c0: 0.0, est: 0.0 }]);
    }

    #[test]
    fn grid_for_four_clients() {
        let inst = line(&[0.0], &[1.0, 1.0, 1.0, 1.0], 0.0, vec![1.0], 1.0);
        let e = enumerate_estimates(&inst, 1.0).unwrap();
        let ests: Vec<f64> = e.iter().filter(|e| e.c0 == 1.0).map(|e| e.est).collect();
        assert_eq!(ests, vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn radius_self_term() {
        let inst = line(&[0.0], &[3.0, 5.0], 0.0, vec![1.0], 1.0);
        let r = compute_rj(&inst, &ext(&inst, 0.0), 0);
        assert_eq!(r.value, 0.0);
        assert!(!r.capped);
    }

    #[test]
    fn radius_isolated() {
        let inst = line(&[0.0], &[3.0, 500.0], 1.0, vec![1.0], 1.0);
        let e = ext(&inst, 4.0);
        let r = compute_rj(&inst, &e, 0);
        assert!((r.value - (1.0 / (1.0 / 3.0) + 2.0)).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn radius_jump_at_entry() {
        // second client enters at 3 / delta = 4.5 already over budget
        let inst = line(&[0.0], &[0.0, 3.0], 0.0, vec![1.0], 1.0);
        let mut e = ext(&inst, 0.0);
        e.delta = 2.0 / 3.0;
        e.rho = 0.5;
        e.est = 10.0; // budget 5: self term reaches 4.5 at R = 4.5, then jumps to 9
        let r = compute_rj(&inst, &e, 0);
        assert!((r.value - 4.5).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn zero_caps_single_instance() {
        let inst = line(&[0.0, 1.0, 2.0], &[0.5], 0.0, vec![1.0; 3], 3.0);
        let opts = SparsifyOptions { cap1: 0, cap2: 0, limit: 100, radii_from_f0: false };
        let v = sparsify_candidates(&inst, 0.5, 0.5, 1.0, 1.0, opts).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v[0].f0.is_empty() && v[0].clients == vec![0]);
    }

    #[test]
    fn one_cap_four_instances() {
        let inst = line(&[0.0, 1.0, 2.0], &[0.5], 0.0, vec![1.0; 3], 3.0);
        let opts = SparsifyOptions { cap1: 1, cap2: 0, limit: 100, radii_from_f0: false };
        let v = sparsify_candidates(&inst, 0.5, 0.5, 1.0, 1.0, opts).unwrap();
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn guard_reports_count() {
        let inst = line(&[0.0, 1.0, 2.0], &[0.5, 1.5], 0.0, vec![1.0; 3], 3.0);
        let opts = SparsifyOptions { cap1: 3, cap2: 0, limit: 5, radii_from_f0: false };
        match sparsify_candidates(&inst, 0.5, 0.5, 1.0, 1.0, opts) {
            Err(Error::GuardExceeded { count, limit, .. }) => assert_eq!((count, limit), (8, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_optimum() {
        let inst = line(&[0.0, 7.0], &[0.0, 0.0, 0.0], 0.0, vec![1.0, 1.0], 1.0);
        let rep = solve_knapmeddis(&inst, &KnapParams { rho: 0.5, ..Default::default() }).unwrap();
        assert_eq!(rep.objective, 0.0);
        assert_eq!(rep.solution, vec!["s0".to_string()]);
        assert!(rep.all_hold(), "{:?}", rep.certificates);
    }

    #[test]
    fn unit_weights_stay_within_budget() {
        let inst = line(&[0.0, 4.0, 9.0], &[1.0, 3.0, 8.0, 10.0], 0.5, vec![1.0; 3], 2.0);
        let e = ExtendedInstance { rho: 0.5, ..ext(&inst, 100.0) };
        let Evaluation::Candidate(c) = solve_extended(&inst, &e, 1.9).unwrap() else { panic!() };
        assert!(c.solution.len() <= 2 && c.t <= 2);
    }

    #[test]
    fn lighter_of_two_opens() {
        // facilities of weight 3 and 5, budget 4.2 = 0.4 * 3 + 0.6 * 5
        let mut inst = line(&[0.0, 10.0], &[0.0, 10.0], 0.0, vec![3.0, 5.0], 4.2);
        inst.client_weights = vec![1.0, 1.0];
        let rep = solve_knapmeddis(&inst, &KnapParams { rho: 0.5, ..Default::default() }).unwrap();
        assert!(rep.certificate("budget").unwrap().holds);
        assert!(rep.all_hold(), "{:?}", rep.certificates);
    }
}
