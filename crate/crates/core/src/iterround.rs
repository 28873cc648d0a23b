//! Iterative rounding over ball systems, and the cardinality and matroid
//! median-with-discounts solvers built on it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::discretize::{self, DiscretizedMetric, PairInput};
use crate::error::{Error, Result};
use crate::fractional::{self, BallSystem};
use crate::instance::{Constraint, Instance};
use crate::lp::{LinearProgram, Relation, Row};
use crate::math;
use crate::matroid::MatroidSpec;
use crate::report::{Action, Certificate, IterationRecord, SolveReport};

/// `y(B_j) = 1` is detected with this slack.
pub const SHRINK_TOL: f64 = 1e-7;
/// Coordinates within this of 0 or 1 count as integral.
pub const INTEGRAL_TOL: f64 = 1e-7;
const MAX_ITERATIONS: usize = 100_000;

/// Facility constraint over copies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family<'a> {
    Cardinality(usize),
    Matroid(&'a MatroidSpec),
    Knapsack { weights: &'a [f64], budget: f64 },
}

impl<'a> Family<'a> {
    pub fn of(c: &'a Constraint) -> Self {
        match c {
            Constraint::Cardinality { k } => Family::Cardinality(*k),
            Constraint::Matroid(m) => Family::Matroid(m),
            Constraint::Knapsack { weights, budget } => Family::Knapsack { weights, budget: *budget },
        }
    }

    fn rows(&self, origin: &[usize], n_facilities: usize) -> Result<Vec<Row>> {
        let n = origin.len();
        Ok(match self {
            Family::Cardinality(k) => vec![Row::sum(0..n, Relation::Le, *k as f64)],
            Family::Knapsack { weights, budget } => {
                vec![Row::new(origin.iter().enumerate().map(|(c, &i)| (c, weights[i])).collect(), Relation::Le, *budget)]
            }
            Family::Matroid(m) => {
                let mut copies = vec![Vec::new(); n_facilities];
                for (c, &i) in origin.iter().enumerate() {
                    copies[i].push(c);
                }
                m.polytope_rows(&copies)?.into_iter().map(|r| Row::sum(r.vars, Relation::Le, r.rhs)).collect()
            }
        })
    }
}

/// Step `h` factors: `alpha = tau (3 tau^h - 1) / (tau^h - 1)` and
/// `beta = (3 tau^h - 1) / (tau^h - 1) * (tau - 1) / ln tau`.
pub fn factors(tau: f64, h: u8) -> (f64, f64) {
    let th = math::powi(tau, h as i32);
    let reach = (3.0 * th - 1.0) / (th - 1.0);
    (tau * reach, reach * discretize::stretch(tau))
}

/// `(alpha, beta)` of the cardinality solver.
pub fn kmed_factors(tau: f64) -> (f64, f64) {
    factors(tau, 2)
}

/// `(alpha', beta')` of the matroid solver.
pub fn matroid_factors(tau: f64) -> (f64, f64) {
    factors(tau, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    C0,
    C1,
    /// Virtual client: only ever in `C*`.
    Pin,
}

/// Mutable state of one rounding run. Balls are addressed by index into
/// `balls.balls`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub balls: BallSystem,
    pub disc: DiscretizedMetric,
    pub h: u8,
    class: Vec<Class>,
    pub cstar: Vec<usize>,
    weight: Vec<f64>,
    discount: Vec<f64>,
    /// Current vertex over copies.
    pub y: Vec<f64>,
    pub history: Vec<(Action, Option<usize>, f64)>,
    /// Every `update_cstar` call left the overlap discipline intact.
    pub cstar_ok: bool,
    /// Largest change of a moved client's contribution under the pre-move vertex.
    pub max_contribution_drift: f64,
}

impl RoundState {
    /// Real clients start in `C0`; virtual balls start in `C*`.
    pub fn new(balls: BallSystem, inst: &Instance, disc: DiscretizedMetric, h: u8) -> Self {
        let mut class = Vec::new();
        let mut weight = Vec::new();
        let mut discount = Vec::new();
        let mut cstar = Vec::new();
        for (b, ball) in balls.balls.iter().enumerate() {
            match ball.client {
                Some(j) => {
                    class.push(Class::C0);
                    weight.push(inst.client_weights[j]);
                    discount.push(inst.discounts[j]);
                }
                None => {
                    class.push(Class::Pin);
                    weight.push(1.0);
                    discount.push(0.0);
                    cstar.push(b);
                }
            }
        }
        let y = balls.y.clone();
        RoundState {
            balls,
            disc,
            h,
            class,
            cstar,
            weight,
            discount,
            y,
            history: Vec::new(),
            cstar_ok: true,
            max_contribution_drift: 0.0,
        }
    }

    pub fn in_c0(&self, b: usize) -> bool {
        self.class[b] == Class::C0
    }

    pub fn in_c1(&self, b: usize) -> bool {
        self.class[b] == Class::C1
    }

    pub fn level(&self, b: usize) -> i32 {
        self.balls.balls[b].level
    }

    fn tau(&self) -> f64 {
        self.disc.tau
    }

    fn term(&self, b: usize, value: f64) -> f64 {
        self.weight[b] * math::pos(value - self.tau() * self.discount[b])
    }

    /// Contribution of ball `b` to the auxiliary objective at `y`.
    pub fn contribution(&self, b: usize, y: &[f64]) -> f64 {
        let ball = &self.balls.balls[b];
        match self.class[b] {
            Class::Pin => 0.0,
            Class::C0 => ball.outer.iter().map(|&c| y[c] * self.term(b, self.balls.chat_of(b, c))).sum(),
            Class::C1 => {
                let mut s = 0.0;
                let mut mass = 0.0;
                for &c in &ball.inner {
                    s += y[c] * self.term(b, self.balls.chat_of(b, c));
                    mass += y[c];
                }
                s + (1.0 - mass) * self.term(b, self.disc.d(ball.level))
            }
        }
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        (0..self.class.len()).map(|b| self.contribution(b, y)).sum()
    }

    fn inner_of(&self, b: usize) -> Vec<usize> {
        let ball = &self.balls.balls[b];
        let limit = self.disc.d(ball.level - 1);
        ball.outer.iter().copied().filter(|&c| self.balls.chat_of(b, c) <= limit).collect()
    }

    fn overlap(&self, a: usize, b: usize) -> bool {
        let (x, y) = (&self.balls.balls[a].outer, &self.balls.balls[b].outer);
        let (mut p, mut q) = (0, 0);
        while p < x.len() && q < y.len() {
            match x[p].cmp(&y[q]) {
                core::cmp::Ordering::Less => p += 1,
                core::cmp::Ordering::Greater => q += 1,
                core::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    /// Adds `b` to `C*` unless another member at a level no higher overlaps
    /// it; on adding (or when `b` is already a member), evicts overlapping
    /// members at least `h` levels above it.
    pub fn update_cstar(&mut self, b: usize) {
        let lb = self.level(b);
        let member = self.cstar.contains(&b);
        let blocked = self.cstar.iter().any(|&o| o != b && self.level(o) <= lb && self.overlap(o, b));
        if member || !blocked {
            let h = self.h as i32;
            let evict: Vec<usize> = self
                .cstar
                .iter()
                .copied()
                .filter(|&o| o != b && self.level(o) >= lb + h && self.overlap(o, b))
                .collect();
            self.cstar.retain(|o| !evict.contains(o));
            if !member {
                self.cstar.push(b);
                self.cstar.sort_unstable();
            }
        }
        self.cstar_ok &= self.cstar_violations().is_empty();
    }

    /// Pairs of `C*` members with overlapping outer balls whose levels differ
    /// by `h` or more.
    pub fn cstar_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (p, &a) in self.cstar.iter().enumerate() {
            for &b in &self.cstar[p + 1..] {
                if (self.level(a) - self.level(b)).abs() >= self.h as i32 && self.overlap(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    fn promote(&mut self, b: usize, y: &[f64]) {
        let before = self.contribution(b, y);
        self.class[b] = Class::C1;
        self.balls.balls[b].inner = self.inner_of(b);
        self.note_drift(before, self.contribution(b, y));
        self.update_cstar(b);
    }

    fn shrink(&mut self, b: usize, y: &[f64]) {
        let before = self.contribution(b, y);
        let ball = &mut self.balls.balls[b];
        ball.level -= 1;
        ball.outer = core::mem::take(&mut ball.inner);
        self.balls.balls[b].inner = self.inner_of(b);
        self.note_drift(before, self.contribution(b, y));
        self.update_cstar(b);
    }

    fn note_drift(&mut self, before: f64, after: f64) {
        let d = (before - after).abs() / (1.0 + before.abs());
        self.max_contribution_drift = self.max_contribution_drift.max(d);
    }

    /// The auxiliary relaxation of the current state, with its constant term.
    pub fn auxiliary_lp(&self, family: Family<'_>, n_facilities: usize) -> Result<(LinearProgram, f64)> {
        let n = self.balls.origin.len();
        let mut lp = LinearProgram::unit_box(n);
        let mut constant = 0.0;
        for (b, ball) in self.balls.balls.iter().enumerate() {
            match self.class[b] {
                Class::C0 => {
                    for &c in &ball.outer {
                        lp.objective[c] += self.term(b, self.balls.chat_of(b, c));
                    }
                    lp.push(Row::sum(ball.outer.iter().copied(), Relation::Eq, 1.0));
                }
                Class::C1 => {
                    let edge = self.term(b, self.disc.d(ball.level));
                    constant += edge;
                    for &c in &ball.inner {
                        lp.objective[c] += self.term(b, self.balls.chat_of(b, c)) - edge;
                    }
                    if !ball.inner.is_empty() {
                        lp.push(Row::sum(ball.inner.iter().copied(), Relation::Le, 1.0));
                    }
                }
                Class::Pin => {}
            }
        }
        for &b in &self.cstar {
            lp.push(Row::sum(self.balls.balls[b].outer.iter().copied(), Relation::Eq, 1.0));
        }
        for row in family.rows(&self.balls.origin, n_facilities)? {
            lp.push(row);
        }
        Ok((lp, constant))
    }

    /// Copies strictly between 0 and 1 in the current vertex.
    pub fn fractional(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&c| self.y[c] > INTEGRAL_TOL && self.y[c] < 1.0 - INTEGRAL_TOL).collect()
    }

    /// `(3 tau^h - 1) / (tau^h - 1) * D_l` at the ball's current level.
    pub fn nearest_open_distance_bound(&self, b: usize) -> f64 {
        nearest_open_bound(self.disc, self.h, self.level(b))
    }

    /// Human-readable state for failure reports.
    pub fn dump(&self, inst: &Instance) -> String {
        let mut s = String::new();
        for c in self.fractional() {
            s += &format!("copy {c} of {} at y = {}\n", inst.facility_id(self.balls.origin[c]), self.y[c]);
        }
        for &b in &self.cstar {
            let who = match self.balls.balls[b].client {
                Some(j) => inst.client_id(j).to_string(),
                None => format!("pin {b}"),
            };
            s += &format!("C* {who}: level {} ball {:?}\n", self.level(b), self.balls.balls[b].outer);
        }
        s
    }
}

/// `(3 tau^h - 1) / (tau^h - 1) * D_level`.
pub fn nearest_open_bound(disc: DiscretizedMetric, h: u8, level: i32) -> f64 {
    let th = math::powi(disc.tau, h as i32);
    (3.0 * th - 1.0) / (th - 1.0) * disc.d(level).max(0.0)
}

/// Runs the rounding loop until no client can be promoted or shrunk. The
/// returned state holds the last vertex in `y`.
pub fn iter_round(mut state: RoundState, family: Family<'_>, n_facilities: usize) -> Result<RoundState> {
    for _ in 0..MAX_ITERATIONS {
        let (lp, constant) = state.auxiliary_lp(family, n_facilities)?;
        let vertex = lp
            .solve()?
            .optimal()
            .ok_or(Error::Infeasible("auxiliary rounding relaxation"))?;
        let objective = vertex.objective + constant;
        let y: Vec<f64> = vertex
            .values
            .iter()
            .map(|&v| if v < 1e-9 { 0.0 } else if v > 1.0 - 1e-9 { 1.0 } else { v })
            .collect();
        let next_c0 = (0..state.class.len()).find(|&b| state.in_c0(b));
        if let Some(b) = next_c0 {
            state.history.push((Action::Promote, Some(b), objective));
            state.promote(b, &y);
            state.y = y;
            continue;
        }
        let shrinkable = (0..state.class.len()).find(|&b| {
            state.in_c1(b)
                && !state.balls.balls[b].inner.is_empty()
                && state.balls.balls[b].inner.iter().map(|&c| y[c]).sum::<f64>() >= 1.0 - SHRINK_TOL
        });
        if let Some(b) = shrinkable {
            state.history.push((Action::Shrink, Some(b), objective));
            state.shrink(b, &y);
            state.y = y;
            continue;
        }
        state.history.push((Action::Stop, None, objective));
        state.y = y;
        return Ok(state);
    }
    Err(Error::GuardExceeded {
        what: "rounding iterations",
        count: MAX_ITERATIONS as u128 + 1,
        limit: MAX_ITERATIONS as u128,
    })
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau must exceed 1, got {tau}")))
    }
}

/// Normalized copy of `inst` after validation.
pub(crate) fn prepared(inst: &Instance) -> Result<Instance> {
    let norm = inst.normalize();
    let violations = norm.validate();
    if violations.is_empty() {
        Ok(norm)
    } else {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(Error::InvalidParameter(format!("invalid instance: {}", msgs.join("; "))))
    }
}

/// Support pairs of a duplicated solution, for offset selection.
pub(crate) fn pair_inputs(inst: &Instance, dup: &fractional::Duplication) -> Vec<PairInput> {
    let mut pairs = Vec::new();
    for (b, &j) in dup.clients.iter().enumerate() {
        for &c in &dup.balls[b] {
            pairs.push(PairInput {
                c: inst.fc(dup.origin[c], j),
                r: inst.discounts[j],
                mass: dup.y[c] * inst.client_weights[j],
            });
        }
    }
    pairs
}

/// Facility positions opened by an integral copy vector, co-located copies merged.
pub(crate) fn opened(origin: &[usize], y: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = origin.iter().zip(y).filter(|(_, &v)| v >= 0.5).map(|(&i, _)| i).collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub(crate) fn iteration_records(state: &RoundState, inst: &Instance, scale: f64) -> Vec<IterationRecord> {
    state
        .history
        .iter()
        .map(|&(action, b, objective)| IterationRecord {
            action,
            client: b.map(|b| match state.balls.balls[b].client {
                Some(j) => inst.client_id(j).to_string(),
                None => format!("pin-{b}"),
            }),
            objective: objective / scale,
        })
        .collect()
}

/// Largest increase between consecutive vertex objectives.
pub(crate) fn max_increase(state: &RoundState) -> f64 {
    state.history.windows(2).map(|w| w[1].2 - w[0].2).fold(0.0, f64::max)
}

/// Cardinality solver with step 2.
pub fn solve_kmeddis(inst: &Instance, tau: f64) -> Result<SolveReport> {
    if !matches!(inst.constraint, Constraint::Cardinality { .. }) {
        return Err(Error::WrongConstraint { expected: "cardinality" });
    }
    solve_median(inst, tau, 2)
}

/// Matroid solver with step 1.
pub fn solve_matmeddis(inst: &Instance, tau: f64) -> Result<SolveReport> {
    if !matches!(inst.constraint, Constraint::Matroid(_)) {
        return Err(Error::WrongConstraint { expected: "matroid" });
    }
    solve_median(inst, tau, 1)
}

/// Relaxation, distance-optimal repair, duplication, offset choice and
/// rounding with step `h`, for cardinality or matroid instances. The output
/// must be integral; a fractional vertex is reported as an error.
pub fn solve_median(inst: &Instance, tau: f64, h: u8) -> Result<SolveReport> {
    check_tau(tau)?;
    if !(1..=2).contains(&h) {
        return Err(Error::InvalidParameter(format!("step must be 1 or 2, got {h}")));
    }
    if matches!(inst.constraint, Constraint::Knapsack { .. }) {
        return Err(Error::WrongConstraint { expected: "cardinality or matroid" });
    }
    let norm = prepared(inst)?;
    let nf = norm.n_facilities();
    let nat = fractional::build_natural_lp(&norm)?;
    let opt = nat.lp.solve()?.optimal().ok_or(Error::Infeasible("natural relaxation"))?;
    let lp_value = opt.objective;
    let sol = fractional::make_distance_optimal(&nat.solution(&opt), &norm);
    let dup = fractional::duplicate_facilities(&sol, &norm);
    let (b, initial) = discretize::choose_offset(&pair_inputs(&norm, &dup), tau);
    let disc = DiscretizedMetric::new(tau, b);
    let balls = BallSystem::new(&dup, &norm, &disc, &[]);
    let state = iter_round(RoundState::new(balls, &norm, disc, h), Family::of(&norm.constraint), nf)?;

    let frac = state.fractional();
    if !frac.is_empty() {
        return Err(Error::NotIntegral { fractional: frac.len(), dump: state.dump(&norm) });
    }
    let chosen = opened(&state.balls.origin, &state.y);
    if !norm.constraint.admits(&chosen) {
        return Err(match norm.constraint {
            Constraint::Matroid(_) => Error::NotIndependent,
            _ => Error::Postcondition(format!("{} facilities opened", chosen.len())),
        });
    }
    let (alpha, beta) = factors(tau, h);
    let scale = norm.scale;
    let mut certs = Vec::new();
    certs.push(Certificate::le("discretization", initial, discretize::stretch(tau) * lp_value).unscaled(scale));
    certs.push(Certificate::le("objective-monotone", max_increase(&state), 0.0).unscaled(scale));
    let decay: f64 = (0..norm.n_clients())
        .map(|j| norm.client_weights[j] * math::pos(disc.d(state.level(j)) - tau * norm.discounts[j]))
        .sum();
    certs.push(Certificate::le("level-decay", decay, initial).unscaled(scale));
    certs.push(Certificate::le("contribution-preserved", state.max_contribution_drift, 0.0));
    certs.push(Certificate::check("cstar-discipline", state.cstar_ok));
    certs.push(Certificate::check("integral", true));
    certs.push(Certificate::check("feasible", true));
    for j in 0..norm.n_clients() {
        certs.push(
            Certificate::le(
                format!("distance-bound:{}", norm.client_id(j)),
                norm.dist_to_set(j, &chosen),
                state.nearest_open_distance_bound(j),
            )
            .unscaled(scale),
        );
    }
    let cost_alpha = norm.discounted_cost(&chosen, alpha)?;
    certs.push(Certificate::le("bicriteria", cost_alpha, beta * lp_value).unscaled(scale));

    Ok(SolveReport {
        problem: norm.constraint.kind().to_string(),
        tau,
        b,
        h,
        solution: chosen.iter().map(|&i| norm.facility_id(i).to_string()).collect(),
        objective: norm.discounted_cost(&chosen, 1.0)? / scale,
        objective_alpha: cost_alpha / scale,
        solution_positions: chosen,
        alpha,
        beta,
        lp_value: lp_value / scale,
        iterations: iteration_records(&state, &norm, scale),
        final_levels: (0..norm.n_clients()).map(|j| (norm.client_id(j).to_string(), state.level(j))).collect(),
        certificates: certs,
        candidates: Vec::new(),
        flags: Vec::new(),
    })
}
