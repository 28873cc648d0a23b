//! Dense two-phase simplex returning optimal *vertices*.
//!
//! The rounding algorithms depend on the optimum being a basic solution, so
//! the solver reports, next to the point, a certificate of `n_vars` linearly
//! independent tight constraints (rows or variable bounds) that pin it down.
//!
//! Variables are shifted to `z = x - lo` with an explicit upper-bound row
//! `z <= hi - lo`; equality rows enter the tableau as equalities. Pivoting
//! follows Bland's rule in both phases, which makes it cycle-free and
//! deterministic: the same program always yields the same vertex.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Feasibility tolerance used for the post-hoc check and tight-row detection.
pub const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// `sum terms (var, coeff)  rel  rhs`; terms are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub terms: Vec<(usize, f64)>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn new(terms: Vec<(usize, f64)>, rel: Relation, rhs: f64) -> Self {
        Self { terms, rel, rhs }
    }

    /// `sum_{v in vars} y_v  rel  rhs`.
    pub fn sum(vars: impl IntoIterator<Item = usize>, rel: Relation, rhs: f64) -> Self {
        Self { terms: vars.into_iter().map(|v| (v, 1.0)).collect(), rel, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v]).sum()
    }
}

/// Minimize `objective . x` subject to rows and finite variable bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// One tight constraint of a basis certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tight {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicOptimal {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Rows satisfied with equality (within [`FEAS_TOL`]).
    pub tight_rows: Vec<usize>,
    /// `n_vars` linearly independent tight constraints determining `values`.
    pub basis: Vec<Tight>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(BasicOptimal),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<BasicOptimal> {
        match self {
            LpOutcome::Optimal(b) => Some(b),
            _ => None,
        }
    }
}

impl LinearProgram {
    /// Program over `n` variables with bounds `[0, 1]` and zero objective.
    pub fn unit_box(n: usize) -> Self {
        Self { objective: vec![0.0; n], rows: Vec::new(), lower: vec![0.0; n], upper: vec![1.0; n] }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.objective.len() - 1
    }

    pub fn push(&mut self, row: Row) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    fn check(&self) -> Result<()> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::MalformedLp(format!(
                "{n} objective coefficients but {} lower and {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for k in 0..n {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::MalformedLp(format!("variable {k} has bounds [{lo}, {hi}]")));
            }
            if !self.objective[k].is_finite() {
                return Err(Error::MalformedLp(format!("variable {k} has a non-finite cost")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::MalformedLp(format!("row {r} has a non-finite right-hand side")));
            }
            if let Some(&(v, a)) = row.terms.iter().find(|&&(v, a)| v >= n || !a.is_finite()) {
                return Err(Error::MalformedLp(format!("row {r} has term ({v}, {a})")));
            }
        }
        Ok(())
    }

    /// Whether `x` satisfies every row and bound within `tol` (relative to the
    /// row's scale).
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        let bounds = (0..self.n_vars()).all(|k| x[k] >= self.lower[k] - tol && x[k] <= self.upper[k] + tol);
        bounds
            && self.rows.iter().all(|row| {
                let act = row.activity(x);
                let t = tol * (1.0 + row.rhs.abs());
                match row.rel {
                    Relation::Le => act <= row.rhs + t,
                    Relation::Ge => act >= row.rhs - t,
                    Relation::Eq => (act - row.rhs).abs() <= t,
                }
            })
    }

    /// Every constraint (row or bound) tight at `x` within `tol`.
    pub fn tight_set(&self, x: &[f64], tol: f64) -> Vec<Tight> {
        let mut out = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            if (row.activity(x) - row.rhs).abs() <= tol * (1.0 + row.rhs.abs()) {
                out.push(Tight::Row(r));
            }
        }
        for k in 0..self.n_vars() {
            if (x[k] - self.lower[k]).abs() <= tol {
                out.push(Tight::Lower(k));
            }
            if (x[k] - self.upper[k]).abs() <= tol {
                out.push(Tight::Upper(k));
            }
        }
        out
    }

    /// Rank of the coefficient vectors of `set`; `n_vars` for a vertex.
    pub fn rank_of(&self, set: &[Tight]) -> usize {
        let n = self.n_vars();
        let mut mat: Vec<Vec<f64>> = set
            .iter()
            .map(|t| {
                let mut v = vec![0.0; n];
                match *t {
                    Tight::Row(r) => {
                        for &(k, a) in &self.rows[r].terms {
                            v[k] += a;
                        }
                    }
                    Tight::Lower(k) | Tight::Upper(k) => v[k] = 1.0,
                }
                v
            })
            .collect();
        rank(&mut mat, 1e-9)
    }

    /// Rank of all constraints tight at `x`; equals `n_vars` iff `x` is a vertex.
    pub fn vertex_rank(&self, x: &[f64]) -> usize {
        self.rank_of(&self.tight_set(x, FEAS_TOL))
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        self.check()?;
        Simplex::build(self).run(self)
    }
}

/// Row rank by Gaussian elimination with partial pivoting.
fn rank(mat: &mut [Vec<f64>], tol: f64) -> usize {
    let rows = mat.len();
    if rows == 0 {
        return 0;
    }
    let cols = mat[0].len();
    for row in mat.iter_mut() {
        let norm = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (p, best) = (r..rows).map(|i| (i, mat[i][c].abs())).fold((r, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if best <= tol {
            continue;
        }
        mat.swap(r, p);
        let pivot_row = mat[r].clone();
        for row in mat.iter_mut().skip(r + 1) {
            let f = row[c] / pivot_row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row).skip(c) {
                    *v -= f * pv;
                }
            }
        }
        r += 1;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Origin {
    Row(usize),
    Upper(usize),
}

struct Simplex {
    m: usize,
    /// structural + slack + artificial columns
    ncols: usize,
    n: usize,
    first_art: usize,
    /// row-major, `ncols + 1` entries per row, last one is the rhs
    tab: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    origin: Vec<Origin>,
    /// original standard-form rows (after sign normalisation), for the final
    /// re-solve of the basic values
    a0: Vec<Vec<(usize, f64)>>,
    b0: Vec<f64>,
    slack_owner: Vec<Origin>,
    alive: Vec<bool>,
}

impl Simplex {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let mut a0: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut b0 = Vec::new();
        let mut origin = Vec::new();
        let mut slack: Vec<Option<f64>> = Vec::new();
        for (r, row) in lp.rows.iter().enumerate() {
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(row.terms.len());
            let mut shift = 0.0;
            for &(v, a) in &row.terms {
                shift += a * lp.lower[v];
                match terms.iter_mut().find(|t| t.0 == v) {
                    Some(t) => t.1 += a,
                    None => terms.push((v, a)),
                }
            }
            a0.push(terms);
            b0.push(row.rhs - shift);
            origin.push(Origin::Row(r));
            slack.push(match row.rel {
                Relation::Le => Some(1.0),
                Relation::Ge => Some(-1.0),
                Relation::Eq => None,
            });
        }
        for k in 0..n {
            a0.push(vec![(k, 1.0)]);
            b0.push(lp.upper[k] - lp.lower[k]);
            origin.push(Origin::Upper(k));
            slack.push(Some(1.0));
        }
        let m = a0.len();
        let n_slack = slack.iter().filter(|s| s.is_some()).count();
        let mut slack_col = vec![usize::MAX; m];
        let mut slack_owner = Vec::with_capacity(n_slack);
        let mut col = n;
        for i in 0..m {
            if slack[i].is_some() {
                slack_col[i] = col;
                slack_owner.push(origin[i]);
                col += 1;
            }
        }
        // sign-normalise so that every rhs is nonnegative
        for i in 0..m {
            if b0[i] < 0.0 {
                b0[i] = -b0[i];
                a0[i].iter_mut().for_each(|t| t.1 = -t.1);
                if let Some(s) = slack[i].as_mut() {
                    *s = -*s;
                }
            }
        }
        let needs_art: Vec<bool> = slack.iter().map(|s| *s != Some(1.0)).collect();
        let n_art = needs_art.iter().filter(|&&b| b).count();
        let first_art = n + n_slack;
        let ncols = first_art + n_art;
        let w = ncols + 1;
        let mut tab = vec![0.0; m * w];
        let mut basis = vec![0; m];
        let mut art = first_art;
        for i in 0..m {
            let row = &mut tab[i * w..(i + 1) * w];
            for &(v, a) in &a0[i] {
                row[v] += a;
            }
            if let Some(s) = slack[i] {
                row[slack_col[i]] = s;
                a0[i].push((slack_col[i], s));
            }
            row[ncols] = b0[i];
            if needs_art[i] {
                row[art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = slack_col[i];
            }
        }
        Simplex {
            m,
            ncols,
            n,
            first_art,
            tab,
            obj: vec![0.0; w],
            basis,
            origin,
            a0,
            b0,
            slack_owner,
            alive: vec![true; m],
        }
    }

    #[inline]
    fn w(&self) -> usize {
        self.ncols + 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.w();
        let p = self.tab[r * w + c];
        {
            let row = &mut self.tab[r * w..(r + 1) * w];
            row.iter_mut().for_each(|v| *v /= p);
            row[c] = 1.0;
        }
        let (before, rest) = self.tab.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Bland's rule iterations until optimal. `limit` excludes columns at or
    /// beyond it from entering. Returns false when unbounded.
    fn iterate(&mut self, limit: usize) -> bool {
        let w = self.w();
        loop {
            let Some(c) = (0..limit).find(|&j| self.obj[j] < -COST_TOL) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if !self.alive[i] {
                    continue;
                }
                let a = self.tab[i * w + c];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.tab[i * w + self.ncols] / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12 * (1.0 + br.abs())
                            || (ratio <= br + 1e-12 * (1.0 + br.abs()) && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let w = self.w();
        // phase 1: minimise the sum of artificials
        if self.first_art < self.ncols {
            self.obj.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..self.m {
                if self.basis[i] >= self.first_art {
                    for j in 0..w {
                        if j < self.first_art || j == self.ncols {
                            self.obj[j] -= self.tab[i * w + j];
                        }
                    }
                }
            }
            if !self.iterate(self.ncols) {
                return Err(Error::Unbounded("phase-one program"));
            }
            let infeas = -self.obj[self.ncols];
            let scale = 1.0 + self.b0.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            if infeas > FEAS_TOL * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // drive the remaining (zero-valued) artificials out of the basis
            for i in 0..self.m {
                if self.basis[i] < self.first_art {
                    continue;
                }
                let mut best = (usize::MAX, PIVOT_TOL);
                for j in 0..self.first_art {
                    let a = self.tab[i * w + j].abs();
                    if a > best.1 {
                        best = (j, a);
                    }
                }
                if best.0 == usize::MAX {
                    self.alive[i] = false;
                } else {
                    self.pivot(i, best.0);
                }
            }
        }
        // phase 2
        let cost = |j: usize| if j < self.n { lp.objective[j] } else { 0.0 };
        let mut obj = vec![0.0; w];
        for j in 0..self.first_art {
            obj[j] = cost(j);
        }
        for i in 0..self.m {
            if !self.alive[i] {
                continue;
            }
            let cb = cost(self.basis[i]);
            if cb != 0.0 {
                for j in 0..w {
                    if j < self.first_art || j == self.ncols {
                        obj[j] -= cb * self.tab[i * w + j];
                    }
                }
            }
        }
        self.obj = obj;
        if !self.iterate(self.first_art) {
            return Ok(LpOutcome::Unbounded);
        }
        self.finish(lp)
    }

    fn finish(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        let rows: Vec<usize> = (0..self.m).filter(|&i| self.alive[i]).collect();
        let basic: Vec<usize> = rows.iter().map(|&i| self.basis[i]).collect();
        let z_basic = self.resolve_basic(&rows, &basic).unwrap_or_else(|| {
            let w = self.w();
            rows.iter().map(|&i| self.tab[i * w + self.ncols]).collect()
        });
        let mut z = vec![0.0; self.n];
        let mut is_basic = vec![false; self.ncols];
        for (&col, &val) in basic.iter().zip(&z_basic) {
            is_basic[col] = true;
            if col < self.n {
                z[col] = val;
            }
        }
        let values: Vec<f64> = (0..self.n)
            .map(|k| {
                let span = lp.upper[k] - lp.lower[k];
                lp.lower[k] + z[k].clamp(0.0, span)
            })
            .collect();
        if !lp.is_feasible(&values, FEAS_TOL) {
            return Err(Error::Postcondition(format!(
                "simplex returned a point violating the program by more than {FEAS_TOL}"
            )));
        }
        let mut basis_cert = Vec::with_capacity(self.n);
        for k in 0..self.n {
            if !is_basic[k] {
                basis_cert.push(Tight::Lower(k));
            }
        }
        for (s, owner) in self.slack_owner.iter().enumerate() {
            if !is_basic[self.n + s] {
                basis_cert.push(match *owner {
                    Origin::Row(r) => Tight::Row(r),
                    Origin::Upper(k) => Tight::Upper(k),
                });
            }
        }
        for &i in &rows {
            if let Origin::Row(r) = self.origin[i] {
                if lp.rows[r].rel == Relation::Eq {
                    basis_cert.push(Tight::Row(r));
                }
            }
        }
        basis_cert.sort_unstable();
        let objective = values.iter().zip(&lp.objective).map(|(x, c)| x * c).sum();
        let tight_rows = lp
            .tight_set(&values, FEAS_TOL)
            .into_iter()
            .filter_map(|t| if let Tight::Row(r) = t { Some(r) } else { None })
            .collect();
        Ok(LpOutcome::Optimal(BasicOptimal { values, objective, tight_rows, basis: basis_cert }))
    }

    /// Solves `B z_B = b` from the original rows for accuracy.
    fn resolve_basic(&self, rows: &[usize], basic: &[usize]) -> Option<Vec<f64>> {
        let k = rows.len();
        let mut pos = vec![usize::MAX; self.ncols];
        for (p, &c) in basic.iter().enumerate() {
            pos[c] = p;
        }
        let mut mat = vec![0.0; k * (k + 1)];
        for (r, &i) in rows.iter().enumerate() {
            for &(c, a) in &self.a0[i] {
                if pos[c] != usize::MAX {
                    mat[r * (k + 1) + pos[c]] += a;
                }
            }
            mat[r * (k + 1) + k] = self.b0[i];
        }
        let w = k + 1;
        for c in 0..k {
            let mut p = c;
            for r in c + 1..k {
                if mat[r * w + c].abs() > mat[p * w + c].abs() {
                    p = r;
                }
            }
            if mat[p * w + c].abs() < 1e-12 {
                return None;
            }
            if p != c {
                for j in 0..w {
                    mat.swap(c * w + j, p * w + j);
                }
            }
            let pv = mat[c * w + c];
            for r in c + 1..k {
                let f = mat[r * w + c] / pv;
                if f != 0.0 {
                    for j in c..w {
                        mat[r * w + j] -= f * mat[c * w + j];
                    }
                }
            }
        }
        let mut x = vec![0.0; k];
        for c in (0..k).rev() {
            let mut s = mat[c * w + k];
            for j in c + 1..k {
                s -= mat[c * w + j] * x[j];
            }
            x[c] = s / mat[c * w + c];
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(lp: &LinearProgram) -> BasicOptimal {
        lp.solve().unwrap().optimal().expect("optimal")
    }

    #[test]
    fn single_variable_lower_row() {
        let mut lp = LinearProgram::default();
        lp.add_var(1.0, 0.0, 10.0);
        lp.push(Row::sum([0], Relation::Ge, 3.0));
        let s = opt(&lp);
        assert!((s.values[0] - 3.0).abs() < 1e-12);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert_eq!(s.basis, vec![Tight::Row(0)]);
    }

    #[test]
    fn unit_square_corner() {
        let mut lp = LinearProgram::unit_box(2);
        lp.objective = vec![1.0, 1.0];
        let s = opt(&lp);
        assert_eq!(s.values, vec![0.0, 0.0]);
        assert_eq!(s.basis, vec![Tight::Lower(0), Tight::Lower(1)]);
        assert_eq!(lp.vertex_rank(&s.values), 2);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut lp = LinearProgram::unit_box(2);
        lp.push(Row::sum([0, 1], Relation::Ge, 3.0));
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn equality_rows_and_redundancy() {
        // x + y = 1 twice, minimise -x
        let mut lp = LinearProgram::unit_box(2);
        lp.objective = vec![-1.0, 0.0];
        lp.push(Row::sum([0, 1], Relation::Eq, 1.0));
        lp.push(Row::sum([0, 1], Relation::Eq, 1.0));
        let s = opt(&lp);
        assert_eq!(s.values, vec![1.0, 0.0]);
        assert_eq!(s.basis.len(), 2);
        assert_eq!(lp.rank_of(&s.basis), 2);
    }

    #[test]
    fn shifted_bounds() {
        let mut lp = LinearProgram::default();
        lp.add_var(-1.0, -2.0, 5.0);
        lp.add_var(1.0, 1.0, 1.0);
        lp.push(Row::new(vec![(0, 1.0), (1, 1.0)], Relation::Le, 4.0));
        let s = opt(&lp);
        assert_eq!(s.values, vec![3.0, 1.0]);
        assert_eq!(lp.rank_of(&s.basis), 2);
    }

    #[test]
    fn malformed_bounds_are_rejected() {
        let mut lp = LinearProgram::default();
        lp.add_var(0.0, 0.0, f64::INFINITY);
        assert!(matches!(lp.solve(), Err(Error::MalformedLp(_))));
    }

    #[test]
    fn resolving_is_deterministic() {
        // degenerate: many optimal vertices
        let mut lp = LinearProgram::unit_box(4);
        lp.push(Row::sum(0..4, Relation::Eq, 2.0));
        assert_eq!(opt(&lp), opt(&lp));
    }
}
