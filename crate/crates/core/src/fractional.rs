//! Natural LP relaxations and the post-processing applied to their optima:
//! distance-optimal repair and facility duplication.

use alloc::vec;
use alloc::vec::Vec;

use crate::discretize::DiscretizedMetric;
use crate::error::{Error, Result};
use crate::instance::{Constraint, Instance};
use crate::lp::{BasicOptimal, LinearProgram, Relation, Row};
use crate::math;

/// Values below this are treated as zero when reading LP solutions.
pub const SUPPORT_EPS: f64 = 1e-9;

/// Assignment `x[j][i]` (client position, facility position) and openings `y[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalSolution {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub objective: f64,
}

impl FractionalSolution {
    /// `sum_j w_j sum_i x_ij (c_ij - r_j)^+` over the clients with any mass.
    pub fn cost(&self, inst: &Instance) -> f64 {
        let mut total = 0.0;
        for (j, row) in self.x.iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                if x > 0.0 {
                    total += x * inst.client_weights[j] * math::pos(inst.fc(i, j) - inst.discounts[j]);
                }
            }
        }
        total
    }
}

/// Extra data turning the plain knapsack relaxation into the strengthened one
/// for an extended instance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackExtension<'a> {
    /// Pre-selected facility positions, forced open.
    pub f0: &'a [usize],
    /// Client positions kept in the relaxation.
    pub clients: &'a [usize],
    /// Connection radius per client position; only entries for `clients` are read.
    pub radius: &'a [f64],
    pub rho_est: f64,
}

/// A relaxation together with its variable layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalLp {
    pub lp: LinearProgram,
    /// Variable of `y_i`.
    pub y_var: Vec<usize>,
    /// Variable of `x_ij`, indexed `[j][i]`; `None` when eliminated.
    pub x_var: Vec<Vec<Option<usize>>>,
    /// Client positions carrying an assignment row.
    pub clients: Vec<usize>,
}

impl NaturalLp {
    pub fn solution(&self, opt: &BasicOptimal) -> FractionalSolution {
        let snap = |v: f64| {
            if v.abs() <= SUPPORT_EPS {
                0.0
            } else if (v - 1.0).abs() <= SUPPORT_EPS {
                1.0
            } else {
                v
            }
        };
        let y: Vec<f64> = self.y_var.iter().map(|&v| snap(opt.values[v])).collect();
        let x = self
            .x_var
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(i, v)| match v {
                        // never above the opening, so duplication sees clean thresholds
                        Some(v) => {
                            let x = snap(opt.values[*v]);
                            if (x - y[i]).abs() <= SUPPORT_EPS {
                                y[i]
                            } else {
                                x.min(y[i])
                            }
                        }
                        None => 0.0,
                    })
                    .collect()
            })
            .collect();
        FractionalSolution { x, y, objective: opt.objective }
    }
}

fn cost(inst: &Instance, i: usize, j: usize) -> f64 {
    inst.client_weights[j] * math::pos(inst.fc(i, j) - inst.discounts[j])
}

/// LP-k and its matroid and knapsack analogues: assignment rows, `x <= y`, and
/// the constraint family's rows over `y`.
pub fn build_natural_lp(inst: &Instance) -> Result<NaturalLp> {
    let clients: Vec<usize> = (0..inst.n_clients()).collect();
    build(inst, &clients, |_, _| true, None)
}

/// The strengthened knapsack relaxation for an extended instance: the plain
/// relaxation restricted to the kept clients, plus forced openings, eliminated
/// far or expensive pairs, and per-facility star-cost caps.
pub fn build_knapsack_lp(inst: &Instance, ext: &KnapsackExtension<'_>) -> Result<NaturalLp> {
    if !matches!(inst.constraint, Constraint::Knapsack { .. }) {
        return Err(Error::WrongConstraint { expected: "knapsack" });
    }
    let mut in_f0 = vec![false; inst.n_facilities()];
    for &i in ext.f0 {
        in_f0[i] = true;
    }
    let allowed = |i: usize, j: usize| {
        inst.fc(i, j) <= ext.radius[j] && (in_f0[i] || cost(inst, i, j) <= ext.rho_est)
    };
    build(inst, ext.clients, allowed, Some((&in_f0, ext.rho_est)))
}

fn build(
    inst: &Instance,
    clients: &[usize],
    allowed: impl Fn(usize, usize) -> bool,
    knap: Option<(&[bool], f64)>,
) -> Result<NaturalLp> {
    let nf = inst.n_facilities();
    let mut lp = LinearProgram::default();
    let y_var: Vec<usize> = (0..nf)
        .map(|i| {
            let forced = knap.is_some_and(|(f0, _)| f0[i]);
            lp.add_var(0.0, if forced { 1.0 } else { 0.0 }, 1.0)
        })
        .collect();
    let mut x_var = vec![vec![None; nf]; inst.n_clients()];
    for &j in clients {
        for i in 0..nf {
            if allowed(i, j) {
                x_var[j][i] = Some(lp.add_var(cost(inst, i, j), 0.0, 1.0));
            }
        }
    }
    for &j in clients {
        lp.push(Row::sum(x_var[j].iter().flatten().copied(), Relation::Eq, 1.0));
    }
    for &j in clients {
        for i in 0..nf {
            if let Some(v) = x_var[j][i] {
                lp.push(Row::new(vec![(v, 1.0), (y_var[i], -1.0)], Relation::Le, 0.0));
            }
        }
    }
    match &inst.constraint {
        Constraint::Cardinality { k } => {
            lp.push(Row::sum(y_var.iter().copied(), Relation::Le, *k as f64));
        }
        Constraint::Matroid(m) => {
            let copies: Vec<Vec<usize>> = y_var.iter().map(|&v| vec![v]).collect();
            for row in m.polytope_rows(&copies)? {
                lp.push(Row::sum(row.vars, Relation::Le, row.rhs));
            }
        }
        Constraint::Knapsack { weights, budget } => {
            let terms = y_var.iter().zip(weights).map(|(&v, &w)| (v, w)).collect();
            lp.push(Row::new(terms, Relation::Le, *budget));
        }
    }
    if let Some((f0, rho_est)) = knap {
        for i in 0..nf {
            if f0[i] {
                continue;
            }
            let mut terms: Vec<(usize, f64)> = clients
                .iter()
                .filter_map(|&j| x_var[j][i].map(|v| (v, cost(inst, i, j))))
                .filter(|&(_, c)| c > 0.0)
                .collect();
            if terms.is_empty() {
                continue;
            }
            terms.push((y_var[i], -rho_est));
            lp.push(Row::new(terms, Relation::Le, 0.0));
        }
    }
    Ok(NaturalLp { lp, y_var, x_var, clients: clients.to_vec() })
}

/// Facility positions ordered by `(c_ij, position)`.
fn by_distance(inst: &Instance, j: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.n_facilities()).collect();
    order.sort_by(|&a, &b| inst.fc(a, j).total_cmp(&inst.fc(b, j)).then(a.cmp(&b)));
    order
}

/// Refills each client's unit of assignment greedily onto its closest open
/// mass, so that every facility strictly closer than a used one is saturated.
pub fn make_distance_optimal(sol: &FractionalSolution, inst: &Instance) -> FractionalSolution {
    let mut out = sol.clone();
    for (j, row) in out.x.iter_mut().enumerate() {
        let demand: f64 = row.iter().sum();
        if demand <= SUPPORT_EPS {
            continue;
        }
        row.iter_mut().for_each(|v| *v = 0.0);
        let mut left = demand;
        for i in by_distance(inst, j) {
            if left <= 1e-12 {
                break;
            }
            let take = sol.y[i].min(left);
            row[i] = take;
            left -= take;
        }
    }
    out.objective = out.cost(inst);
    out
}

/// Co-located copies of facilities with per-copy openings, and each covered
/// client's outer ball expressed in copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Duplication {
    /// Original facility position of each copy.
    pub origin: Vec<usize>,
    pub y: Vec<f64>,
    /// Client positions, aligned with `balls`.
    pub clients: Vec<usize>,
    /// Outer ball of each client, as sorted copy indices.
    pub balls: Vec<Vec<usize>>,
}

impl Duplication {
    /// Copies of each original facility.
    pub fn copies(&self, n_facilities: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_facilities];
        for (c, &i) in self.origin.iter().enumerate() {
            out[i].push(c);
        }
        out
    }

    pub fn ball_mass(&self, b: usize) -> f64 {
        self.balls[b].iter().map(|&c| self.y[c]).sum()
    }

    /// `sum_j w_j (c_ij - r_j)^+` over the balls containing each copy.
    pub fn star_costs(&self, inst: &Instance) -> Vec<f64> {
        let mut star = vec![0.0; self.origin.len()];
        for (b, ball) in self.balls.iter().enumerate() {
            let j = self.clients[b];
            for &c in ball {
                star[c] += cost(inst, self.origin[c], j);
            }
        }
        star
    }

    /// Total opening per original facility.
    pub fn mass_per_facility(&self, n_facilities: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_facilities];
        for (c, &i) in self.origin.iter().enumerate() {
            out[i] += self.y[c];
        }
        out
    }
}

/// Splits each facility at the distinct assignment levels `x_ij` so that every
/// client is served by whole copies: copy `[t_{k-1}, t_k)` belongs to the ball
/// of every client with `x_ij >= t_k`.
pub fn duplicate_facilities(sol: &FractionalSolution, inst: &Instance) -> Duplication {
    let nf = inst.n_facilities();
    let clients: Vec<usize> = (0..sol.x.len()).filter(|&j| sol.x[j].iter().any(|&v| v > SUPPORT_EPS)).collect();
    let mut origin = Vec::new();
    let mut y = Vec::new();
    let mut balls = vec![Vec::new(); clients.len()];
    for i in 0..nf {
        if sol.y[i] <= SUPPORT_EPS {
            continue;
        }
        let mut cuts: Vec<f64> = clients.iter().map(|&j| sol.x[j][i]).filter(|&v| v > SUPPORT_EPS).collect();
        cuts.push(sol.y[i]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= SUPPORT_EPS);
        let first = origin.len();
        let mut prev = 0.0;
        for &t in &cuts {
            origin.push(i);
            y.push(t - prev);
            prev = t;
        }
        for (b, &j) in clients.iter().enumerate() {
            let x = sol.x[j][i];
            if x <= SUPPORT_EPS {
                continue;
            }
            let upto = cuts.iter().position(|&t| (t - x).abs() <= SUPPORT_EPS).unwrap_or(cuts.len() - 1);
            balls[b].extend(first..=first + upto);
        }
    }
    Duplication { origin, y, clients, balls }
}

/// Duplication that keeps every copy's star cost within `2 rho EST`: pairs
/// `(i, j)` are processed in order and each client takes the cheapest-star
/// copies of `i` summing to exactly `x_ij`, splitting the last one if needed.
/// Clients in `sol` with no assignment mass are skipped.
pub fn duplicate_star_balanced(sol: &FractionalSolution, inst: &Instance) -> Duplication {
    const EPS: f64 = 1e-12;
    let nf = inst.n_facilities();
    let clients: Vec<usize> = (0..sol.x.len()).filter(|&j| sol.x[j].iter().any(|&v| v > SUPPORT_EPS)).collect();
    let mut origin: Vec<usize> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    let mut star: Vec<f64> = Vec::new();
    let mut balls: Vec<Vec<usize>> = vec![Vec::new(); clients.len()];
    let mut copies: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for i in 0..nf {
        if sol.y[i] <= SUPPORT_EPS {
            continue;
        }
        let c = origin.len();
        origin.push(i);
        y.push(sol.y[i]);
        copies[i].push(c);
        let mut s = 0.0;
        for (b, &j) in clients.iter().enumerate() {
            if sol.x[j][i] > SUPPORT_EPS {
                balls[b].push(c);
                s += cost(inst, i, j);
            }
        }
        star.push(s);
    }
    for i in 0..nf {
        for (b, &j) in clients.iter().enumerate() {
            let x = sol.x[j][i];
            if x <= SUPPORT_EPS {
                continue;
            }
            let cij = cost(inst, i, j);
            balls[b].retain(|&c| origin[c] != i);
            for &c in &copies[i] {
                star[c] -= cij;
            }
            let mut order = copies[i].clone();
            order.sort_by(|&a, &b| star[a].total_cmp(&star[b]).then(a.cmp(&b)));
            let mut taken = 0.0;
            let mut chosen = Vec::new();
            for c in order {
                let need = x - taken;
                if need <= EPS {
                    break;
                }
                if y[c] <= need + EPS {
                    taken += y[c];
                    chosen.push(c);
                } else {
                    // split c: it keeps `need`, a fresh copy keeps the rest
                    let fresh = origin.len();
                    origin.push(i);
                    y.push(y[c] - need);
                    star.push(star[c]);
                    copies[i].push(fresh);
                    y[c] = need;
                    for ball in balls.iter_mut() {
                        if ball.contains(&c) {
                            ball.push(fresh);
                        }
                    }
                    taken += need;
                    chosen.push(c);
                }
            }
            for &c in &chosen {
                star[c] += cij;
            }
            balls[b].extend(chosen);
        }
    }
    for ball in &mut balls {
        ball.sort_unstable();
    }
    Duplication { origin, y, clients, balls }
}

/// Outer ball, radius level and inner ball of one client of the rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    /// Client position, or `None` for a virtual client pinning a facility.
    pub client: Option<usize>,
    pub outer: Vec<usize>,
    pub level: i32,
    pub inner: Vec<usize>,
}

/// Balls over a duplicated facility universe, ready for iterative rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSystem {
    pub origin: Vec<usize>,
    pub y: Vec<f64>,
    pub balls: Vec<Ball>,
    /// `chat[b][i]`: rounded distance from ball `b`'s client to facility position `i`.
    pub chat: Vec<Vec<f64>>,
}

impl BallSystem {
    /// Real-client balls at their minimal covering level, followed by one
    /// virtual ball at level -1 for each facility in `pinned`.
    pub fn new(dup: &Duplication, inst: &Instance, disc: &DiscretizedMetric, pinned: &[usize]) -> Self {
        let nf = inst.n_facilities();
        let mut balls = Vec::new();
        let mut chat = Vec::new();
        for (b, &j) in dup.clients.iter().enumerate() {
            let row: Vec<f64> = (0..nf).map(|i| disc.round(inst.fc(i, j))).collect();
            let level = dup.balls[b]
                .iter()
                .map(|&c| disc.level_of(inst.fc(dup.origin[c], j)))
                .max()
                .unwrap_or(-1);
            let outer = dup.balls[b].clone();
            let limit = disc.d(level - 1);
            let inner = outer.iter().copied().filter(|&c| row[dup.origin[c]] <= limit).collect();
            balls.push(Ball { client: Some(j), outer, level, inner });
            chat.push(row);
        }
        for &i in pinned {
            let outer: Vec<usize> = (0..dup.origin.len()).filter(|&c| dup.origin[c] == i).collect();
            let row = (0..nf).map(|i2| disc.round(inst.ff(i, i2))).collect();
            balls.push(Ball { client: None, outer, level: -1, inner: Vec::new() });
            chat.push(row);
        }
        BallSystem { origin: dup.origin.clone(), y: dup.y.clone(), balls, chat }
    }

    #[inline]
    pub fn chat_of(&self, b: usize, copy: usize) -> f64 {
        self.chat[b][self.origin[copy]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::MetricSpace;
    use crate::matroid::MatroidSpec;
    use alloc::string::{String, ToString};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    /// Facilities at 0 and 10 on a line, one client at 4.
    fn two_one() -> Instance {
        let pts = [0.0, 10.0, 4.0];
        let rows: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| f64::abs(a - b)).collect()).collect();
        Instance::new(
            ids(3),
            MetricSpace::from_rows(&rows).unwrap(),
            vec![0, 1],
            vec![2],
            vec![1.0],
            Constraint::Cardinality { k: 1 },
        )
    }

    #[test]
    fn lp_k_transcription() {
        let nat = build_natural_lp(&two_one()).unwrap();
        assert_eq!(nat.lp.n_vars(), 4);
        assert_eq!(nat.y_var, vec![0, 1]);
        assert_eq!(nat.x_var, vec![vec![Some(2), Some(3)]]);
        assert_eq!(nat.lp.objective, vec![0.0, 0.0, 3.0, 5.0]);
        assert_eq!(
            nat.lp.rows,
            vec![
                Row::sum([2, 3], Relation::Eq, 1.0),
                Row::new(vec![(2, 1.0), (0, -1.0)], Relation::Le, 0.0),
                Row::new(vec![(3, 1.0), (1, -1.0)], Relation::Le, 0.0),
                Row::sum([0, 1], Relation::Le, 1.0),
            ]
        );
        let s = nat.solution(&nat.lp.solve().unwrap().optimal().unwrap());
        assert_eq!(s.y, vec![1.0, 0.0]);
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn partition_rows_in_relaxation() {
        let mut inst = two_one();
        let pts = [0.0, 10.0, 20.0, 4.0];
        let rows: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| f64::abs(a - b)).collect()).collect();
        inst.ids = ids(4);
        inst.metric = MetricSpace::from_rows(&rows).unwrap();
        inst.facilities = vec![0, 1, 2];
        inst.clients = vec![3];
        inst.constraint =
            Constraint::Matroid(MatroidSpec::Partition { parts: vec![vec![0, 1], vec![2]], caps: vec![1, 1] });
        let nat = build_natural_lp(&inst).unwrap();
        let family: Vec<&Row> = nat.lp.rows.iter().skip(1 + 3).collect();
        assert_eq!(family, vec![&Row::sum([0, 1], Relation::Le, 1.0), &Row::sum([2], Relation::Le, 1.0)]);
    }

    #[test]
    fn water_filling_example() {
        let inst = two_one();
        let sol = FractionalSolution { x: vec![vec![0.4, 0.6]], y: vec![0.5, 0.5], objective: 0.0 };
        let fixed = make_distance_optimal(&sol, &inst);
        assert_eq!(fixed.x, vec![vec![0.5, 0.5]]);
        assert_eq!(make_distance_optimal(&fixed, &inst).x, fixed.x);
    }

    #[test]
    fn integral_input_needs_no_split() {
        let mut inst = two_one();
        inst.clients = vec![2, 2];
        inst.discounts = vec![0.0, 0.0];
        inst.client_weights = vec![1.0, 1.0];
        let sol = FractionalSolution { x: vec![vec![1.0, 0.0], vec![1.0, 0.0]], y: vec![1.0, 0.0], objective: 0.0 };
        let dup = duplicate_facilities(&sol, &inst);
        assert_eq!(dup.origin, vec![0]);
        assert_eq!(dup.balls, vec![vec![0], vec![0]]);
    }

    #[test]
    fn single_split() {
        let inst = two_one();
        let sol = FractionalSolution { x: vec![vec![0.3, 0.7]], y: vec![0.7, 0.7], objective: 0.0 };
        let dup = duplicate_facilities(&sol, &inst);
        assert_eq!(dup.origin, vec![0, 0, 1]);
        assert!((dup.y[0] - 0.3).abs() < 1e-12 && (dup.y[1] - 0.4).abs() < 1e-12);
        assert_eq!(dup.balls, vec![vec![0, 2]]);
        assert!((dup.ball_mass(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn star_balanced_without_fractional_assignment_is_identity() {
        let inst = two_one();
        let sol = FractionalSolution { x: vec![vec![1.0, 0.0]], y: vec![1.0, 0.0], objective: 0.0 };
        let dup = duplicate_star_balanced(&sol, &inst);
        assert_eq!(dup.origin, vec![0]);
        assert_eq!(dup.balls, vec![vec![0]]);
        assert_eq!(dup.star_costs(&inst), vec![3.0]);
    }
}
