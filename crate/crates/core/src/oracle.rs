//! Exhaustive solvers for small instances.
//!
//! Nothing here calls into the solvers it is meant to check: costs are
//! re-evaluated from the raw distance matrix, and feasibility uses its own
//! rank computations.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::instance::{Constraint, Instance};
use crate::matroid::MatroidSpec;

/// Largest number of facility sets an oracle will look at.
pub const ORACLE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Facility positions, ascending.
    pub optimum: Vec<usize>,
    pub value: f64,
    /// Feasible sets examined.
    pub enumerated: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicriteriaCheck {
    pub opt: f64,
    pub opt_set: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn binomial_prefix(n: usize, k: usize) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for i in 0..=k.min(n) {
        if i > 0 {
            c = c * (n - i + 1) as u128 / i as u128;
        }
        total += c;
    }
    total - 1
}

/// Number of nonempty candidate sets the oracle would enumerate.
pub fn projected_count(inst: &Instance) -> u128 {
    let n = inst.n_facilities();
    match inst.constraint {
        Constraint::Cardinality { k } => binomial_prefix(n, k),
        _ if n >= 127 => u128::MAX,
        _ => (1u128 << n) - 1,
    }
}

fn guard(inst: &Instance, factor: u128) -> Result<()> {
    let count = projected_count(inst).saturating_mul(factor.max(1));
    if count > ORACLE_LIMIT {
        return Err(Error::GuardExceeded { what: "facility sets", count, limit: ORACLE_LIMIT });
    }
    Ok(())
}

/// Rank of a facility set, computed directly from the matroid description.
fn rank(m: &MatroidSpec, set: &[usize]) -> usize {
    match m {
        MatroidSpec::Uniform { rank } => set.len().min(*rank),
        MatroidSpec::Partition { parts, caps } => {
            let mut free = set.len();
            let mut r = 0;
            for (part, &cap) in parts.iter().zip(caps) {
                let inside = set.iter().filter(|e| part.contains(e)).count();
                free -= inside;
                r += inside.min(cap);
            }
            r + free
        }
        MatroidSpec::Explicit(e) => {
            let mask = set.iter().fold(0u32, |m, &i| m | 1 << i);
            e.table()[mask as usize] as usize
        }
    }
}

fn feasible(inst: &Instance, set: &[usize]) -> bool {
    match &inst.constraint {
        Constraint::Cardinality { k } => set.len() <= *k,
        Constraint::Matroid(m) => rank(m, set) == set.len(),
        Constraint::Knapsack { weights, budget } => set.iter().map(|&i| weights[i]).sum::<f64>() <= *budget + 1e-9,
    }
}

/// `sum_j w_j max(0, min_{i in set} d(i, j) - mult * r_j)`, straight from the matrix.
pub fn cost(inst: &Instance, set: &[usize], mult: f64) -> f64 {
    let mut total = 0.0;
    for (j, &site) in inst.clients.iter().enumerate() {
        let mut best = f64::INFINITY;
        for &i in set {
            let d = inst.metric.d(inst.facilities[i], site);
            if d < best {
                best = d;
            }
        }
        let v = best - mult * inst.discounts[j];
        if v > 0.0 {
            total += inst.client_weights[j] * v;
        }
    }
    total
}

/// Calls `visit` on every nonempty feasible set of facility positions,
/// ascending within each set, in lexicographic mask order.
pub fn for_each_feasible(inst: &Instance, mut visit: impl FnMut(&[usize])) -> Result<u64> {
    guard(inst, 1)?;
    let n = inst.n_facilities();
    let mut set = Vec::with_capacity(n);
    let mut count = 0;
    for mask in 1u64..1 << n {
        if let Constraint::Cardinality { k } = inst.constraint {
            if mask.count_ones() as usize > k {
                continue;
            }
        }
        set.clear();
        set.extend((0..n).filter(|&i| mask >> i & 1 == 1));
        if feasible(inst, &set) {
            count += 1;
            visit(&set);
        }
    }
    Ok(count)
}

/// Minimum discounted cost (multiplier 1) over all nonempty feasible sets.
/// Ties go to the first set in mask order.
pub fn brute_opt(inst: &Instance) -> Result<OracleResult> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    let enumerated = for_each_feasible(inst, |set| {
        let v = cost(inst, set, 1.0);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((set.to_vec(), v));
        }
    })?;
    let (optimum, value) = best.ok_or(Error::NoFeasibleCandidate)?;
    Ok(OracleResult { optimum, value, enumerated })
}

/// `cost(solution, alpha) <= beta * OPT + 1e-6`.
pub fn check_bicriteria(inst: &Instance, solution: &[usize], alpha: f64, beta: f64) -> Result<BicriteriaCheck> {
    let opt = brute_opt(inst)?;
    let lhs = cost(inst, solution, alpha);
    let rhs = beta * opt.value;
    Ok(BicriteriaCheck { opt: opt.value, opt_set: opt.optimum, lhs, rhs, holds: lhs <= rhs + 1e-6 })
}

/// A stochastic point: `(client position, probability)` pairs.
pub type PointDist = Vec<(usize, f64)>;

/// `E[max_v d(realized v, set)]` with an empty max read as 0, computed from
/// the distribution of the maximum: sorting the distinct distances
/// `d_1 < ... < d_m`, `P(max <= d_t) = prod_v P(v misses or lands within d_t)`.
pub fn expected_max(inst: &Instance, points: &[PointDist], set: &[usize]) -> f64 {
    let dist: Vec<f64> = (0..inst.n_clients())
        .map(|j| set.iter().map(|&i| inst.metric.d(inst.facilities[i], inst.clients[j])).fold(f64::INFINITY, f64::min))
        .collect();
    let mut levels: Vec<f64> = points.iter().flat_map(|p| p.iter().map(|&(j, _)| dist[j])).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let cdf = |x: f64| -> f64 {
        points
            .iter()
            .map(|p| 1.0 - p.iter().filter(|&&(j, _)| dist[j] > x).map(|&(_, q)| q).sum::<f64>())
            .product()
    };
    // E[M] = sum_t d_t (F(d_t) - F(d_{t-1})), with F(below all) = P(M = 0 or nothing realizes)
    let mut e = 0.0;
    let mut prev = cdf(-1.0);
    for &d in &levels {
        let f = cdf(d);
        e += d * (f - prev);
        prev = f;
    }
    e
}

/// Minimum of [`expected_max`] over all nonempty feasible sets.
pub fn brute_stochastic_opt(inst: &Instance, points: &[PointDist]) -> Result<OracleResult> {
    let outcomes: u128 = points.iter().map(|p| p.len() as u128 + 1).product();
    guard(inst, outcomes)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    let enumerated = for_each_feasible(inst, |set| {
        let v = expected_max(inst, points, set);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((set.to_vec(), v));
        }
    })?;
    let (optimum, value) = best.ok_or(Error::NoFeasibleCandidate)?;
    Ok(OracleResult { optimum, value, enumerated })
}

/// Largest `d(j, set)` over clients, for deterministic center objectives.
pub fn center_cost(inst: &Instance, set: &[usize], clients: &[usize]) -> f64 {
    clients
        .iter()
        .map(|&j| set.iter().map(|&i| inst.metric.d(inst.facilities[i], inst.clients[j])).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Facilities chosen by each feasible set, with their costs, sorted by cost.
pub fn ranked_sets(inst: &Instance, eval: impl Fn(&[usize]) -> f64) -> Result<Vec<(Vec<usize>, f64)>> {
    let mut out = Vec::new();
    for_each_feasible(inst, |set| out.push((set.to_vec(), eval(set))))?;
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

/// Mask of an ascending facility set, for compact comparisons in tests.
pub fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0, |m, &i| m | 1 << i)
}

#[doc(hidden)]
pub fn all_sets(n: usize) -> Vec<Vec<usize>> {
    (1u64..1 << n).map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::MetricSpace;
    use alloc::format;
    use alloc::vec;

    fn line(fac: &[f64], cli: &[f64], r: &[f64], c: Constraint) -> Instance {
        let pts: Vec<f64> = fac.iter().chain(cli).copied().collect();
        let rows: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| f64::abs(a - b)).collect()).collect();
        Instance::new(
            (0..pts.len()).map(|p| format!("s{p}")).collect(),
            MetricSpace::from_rows(&rows).unwrap(),
            (0..fac.len()).collect(),
            (fac.len()..pts.len()).collect(),
            r.to_vec(),
            c,
        )
    }

    #[test]
    fn unconstrained_uses_nearest() {
        let inst = line(&[0.0, 10.0], &[1.0, 9.0], &[0.0, 0.0], Constraint::Cardinality { k: 2 });
        let o = brute_opt(&inst).unwrap();
        assert_eq!(o.optimum, vec![0, 1]);
        assert_eq!(o.value, 2.0);
        assert_eq!(o.enumerated, 3);
    }

    #[test]
    fn single_feasible_singleton() {
        let inst = line(
            &[0.0, 10.0],
            &[9.0],
            &[0.0],
            Constraint::Knapsack { weights: vec![1.0, 5.0], budget: 2.0 },
        );
        let o = brute_opt(&inst).unwrap();
        assert_eq!(o.optimum, vec![0]);
        assert_eq!(o.value, 9.0);
    }

    #[test]
    fn self_comparison_holds_with_equality() {
        let inst = line(&[0.0, 4.0, 9.0], &[1.0, 5.0, 8.0], &[0.5, 0.0, 1.0], Constraint::Cardinality { k: 1 });
        let o = brute_opt(&inst).unwrap();
        let c = check_bicriteria(&inst, &o.optimum, 1.0, 1.0).unwrap();
        assert!(c.holds);
        assert_eq!(c.lhs, c.rhs);
    }

    #[test]
    fn zero_optimum_needs_zero_lhs() {
        let inst = line(&[0.0, 10.0], &[1.0, 9.0], &[1.0, 1.0], Constraint::Cardinality { k: 2 });
        assert!(check_bicriteria(&inst, &[0, 1], 2.0, 5.0).unwrap().holds);
        assert!(!check_bicriteria(&inst, &[0], 2.0, 5.0).unwrap().holds);
    }

    #[test]
    fn guard_refuses_large_enumeration() {
        let fac: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let inst = line(&fac, &[0.5], &[0.0], Constraint::Knapsack { weights: vec![1.0; 25], budget: 3.0 });
        assert!(matches!(brute_opt(&inst), Err(Error::GuardExceeded { .. })));
    }

    #[test]
    fn expected_max_basics() {
        let inst = line(&[0.0], &[4.0, 2.0], &[0.0, 0.0], Constraint::Cardinality { k: 1 });
        assert_eq!(expected_max(&inst, &[vec![(0, 1.0)]], &[0]), 4.0);
        assert_eq!(expected_max(&inst, &[vec![(0, 0.0)]], &[0]), 0.0);
        // two points: max is 4 unless both avoid client 0
        let e = expected_max(&inst, &[vec![(0, 0.5), (1, 0.5)], vec![(0, 0.5)]], &[0]);
        assert!((e - (4.0 * 0.75 + 2.0 * 0.25)).abs() < 1e-12, "{e}");
    }
}
