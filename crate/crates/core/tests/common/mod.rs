//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use meddis_core::lp::{LinearProgram, Relation, Row};
use meddis_core::knapsack::ExtendedInstance;
use meddis_core::{Constraint, Instance, MetricSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `sum_j w_j (d(j, set) - mult r_j)^+` straight from the matrix.
pub fn cost(inst: &Instance, set: &[usize], mult: f64) -> f64 {
    (0..inst.n_clients())
        .map(|j| {
            let d = set
                .iter()
                .map(|&i| inst.metric.d(inst.facilities[i], inst.clients[j]))
                .fold(f64::INFINITY, f64::min);
            inst.client_weights[j] * (d - mult * inst.discounts[j]).max(0.0)
        })
        .sum()
}

/// Solve a square system by Gaussian elimination; `None` if singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum objective over all vertices: every choice of `n` constraints
/// (rows or bounds) held at equality, solved and filtered for feasibility.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.objective.len();
    let mut cons: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &lp.rows {
        let mut v = vec![0.0; n];
        for &(k, a) in &row.terms {
            v[k] += a;
        }
        cons.push((v, row.rhs));
    }
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        cons.push((e.clone(), lp.lower[k]));
        cons.push((e, lp.upper[k]));
    }
    let mut best: Option<f64> = None;
    let m = cons.len();
    let mut pick = Vec::new();
    fn rec(
        start: usize,
        m: usize,
        n: usize,
        pick: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if pick.len() == n {
            visit(pick);
            return;
        }
        for c in start..m {
            pick.push(c);
            rec(c + 1, m, n, pick, visit);
            pick.pop();
        }
    }
    rec(0, m, n, &mut pick, &mut |p| {
        let a = p.iter().map(|&c| cons[c].0.clone()).collect();
        let b = p.iter().map(|&c| cons[c].1).collect();
        let Some(x) = solve_square(a, b) else { return };
        let ok_bounds = (0..n).all(|k| x[k] >= lp.lower[k] - 1e-7 && x[k] <= lp.upper[k] + 1e-7);
        let ok_rows = lp.rows.iter().all(|row| {
            let act: f64 = row.terms.iter().map(|&(k, a)| a * x[k]).sum();
            let t = 1e-7 * (1.0 + row.rhs.abs());
            match row.rel {
                Relation::Le => act <= row.rhs + t,
                Relation::Ge => act >= row.rhs - t,
                Relation::Eq => (act - row.rhs).abs() <= t,
            }
        });
        if ok_bounds && ok_rows {
            let v: f64 = (0..n).map(|k| lp.objective[k] * x[k]).sum();
            if best.is_none_or(|b| v < b) {
                best = Some(v);
            }
        }
    });
    best
}

/// Random bounded LP with `n` variables and `m` rows of mixed relations.
pub fn random_lp(r: &mut impl Rng, n: usize, m: usize) -> LinearProgram {
    let mut lp = LinearProgram::default();
    for _ in 0..n {
        let lo = r.gen_range(-2i32..=0) as f64;
        let hi = lo + r.gen_range(1i32..=4) as f64;
        lp.add_var(r.gen_range(-5i32..=5) as f64, lo, hi);
    }
    for _ in 0..m {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for k in 0..n {
            if r.gen_bool(0.7) {
                terms.push((k, r.gen_range(-3i32..=3) as f64));
            }
        }
        let rel = match r.gen_range(0..5) {
            0 => Relation::Eq,
            1 | 2 => Relation::Ge,
            _ => Relation::Le,
        };
        lp.push(Row::new(terms, rel, r.gen_range(-4i32..=6) as f64));
    }
    lp
}

/// Rank of an edge set in a multigraph, by union-find.
pub fn graphic_rank(vertices: usize, edges: &[(usize, usize)], set: &[usize]) -> usize {
    let mut parent: Vec<usize> = (0..vertices).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut rank = 0;
    for &e in set {
        let (a, b) = (find(&mut parent, edges[e].0), find(&mut parent, edges[e].1));
        if a != b {
            parent[a] = b;
            rank += 1;
        }
    }
    rank
}

/// `E[max_i s_i X_i]` by walking all `2^n` outcomes.
pub fn bernoulli_max_brute(s: &[f64], p: &[f64]) -> f64 {
    let n = s.len();
    let mut e = 0.0;
    for mask in 0u32..1 << n {
        let mut prob = 1.0;
        let mut m: f64 = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                prob *= p[i];
                m = m.max(s[i]);
            } else {
                prob *= 1.0 - p[i];
            }
        }
        e += prob * m;
    }
    e
}

/// Rounded distance for offset `b`: `tau^(s + 1 + b)` when `b < u`, else
/// `tau^(s + b)`, writing `c = tau^(s + u)`; `c = 0` stays 0. Offsets within
/// 1e-12 of `u` count as landing on `c` itself.
pub fn rounded(c: f64, tau: f64, b: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let v = c.ln() / tau.ln();
    let s = v.floor();
    let u = v - s;
    if b < u - 1e-12 {
        tau.powf(s + 1.0 + b)
    } else {
        tau.powf(s + b)
    }
}

/// Clients in tight groups around a few cheap centers, plus heavy distractors.
pub fn planted(seed: u64) -> Instance {
    let mut r = rng(seed ^ 0x91a);
    let centers = r.gen_range(2..=3);
    let distractors = r.gen_range(1..=2);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut weights = Vec::new();
    let cs: Vec<(f64, f64)> = (0..centers).map(|_| (r.gen_range(0.0..30.0), r.gen_range(0.0..30.0))).collect();
    for &c in &cs {
        pts.push(c);
        weights.push(1.0);
    }
    for _ in 0..distractors {
        pts.push((r.gen_range(0.0..30.0), r.gen_range(0.0..30.0)));
        weights.push(r.gen_range(2..=3) as f64);
    }
    let nf = pts.len();
    let nc = r.gen_range(5..=8);
    for j in 0..nc {
        let c = cs[j % centers];
        pts.push((c.0 + r.gen_range(-2.0..2.0), c.1 + r.gen_range(-2.0..2.0)));
    }
    let discounts = (0..nc).map(|_| if r.gen_bool(0.5) { 0.0 } else { r.gen_range(0.0..1.0) }).collect();
    let ids = (0..nf).map(|i| format!("f{i}")).chain((0..nc).map(|j| format!("c{j}"))).collect();
    let inst = Instance::new(
        ids,
        MetricSpace::euclidean(&pts),
        (0..nf).collect(),
        (nf..nf + nc).collect(),
        discounts,
        Constraint::Knapsack { weights, budget: centers as f64 },
    );
    inst.normalize()
}

/// Sparsity and the removal bound for `ext` against `fstar`, straight from
/// the definitions with unit client weights.
pub fn sparse_against(inst: &Instance, ext: &ExtendedInstance, fstar: &[usize]) -> bool {
    let (rho_est, delta, est) = (ext.rho * ext.est, ext.delta, ext.est);
    let tol = 1e-9 * (1.0 + est);
    if !ext.f0.iter().all(|i| fstar.contains(i)) {
        return false;
    }
    let d = |p: usize, q: usize| inst.metric.d(p, q);
    let nearest = |p: usize| -> usize {
        *fstar.iter().min_by(|&&a, &&b| d(p, inst.facilities[a]).total_cmp(&d(p, inst.facilities[b])).then(a.cmp(&b))).unwrap()
    };
    let to_star = |p: usize| d(p, inst.facilities[nearest(p)]);
    for &i in fstar.iter().filter(|i| !ext.f0.contains(i)) {
        let s: f64 = ext
            .clients
            .iter()
            .filter(|&&j| nearest(inst.clients[j]) == i)
            .map(|&j| (d(inst.facilities[i], inst.clients[j]) - inst.discounts[j]).max(0.0))
            .sum();
        if s > rho_est + tol {
            return false;
        }
    }
    let sites = inst.facilities.iter().copied().chain(ext.clients.iter().map(|&j| inst.clients[j]));
    for p in sites {
        let cp = to_star(p);
        let s: f64 = ext
            .clients
            .iter()
            .filter(|&&j| d(inst.clients[j], p) <= delta * cp)
            .map(|&j| (cp - inst.discounts[j] / (1.0 - delta)).max(0.0))
            .sum();
        if s > rho_est + tol {
            return false;
        }
    }
    let k = (1.0 + delta) / (1.0 - delta);
    let removed: f64 = ext
        .removed
        .iter()
        .map(|&j| {
            let c = ext.f0.iter().map(|&i| d(inst.facilities[i], inst.clients[j])).fold(f64::INFINITY, f64::min);
            (c - k * inst.discounts[j]).max(0.0)
        })
        .sum::<f64>()
        / k;
    let kept: f64 = ext.clients.iter().map(|&j| (to_star(inst.clients[j]) - inst.discounts[j]).max(0.0)).sum();
    removed + kept <= est + tol
}
