//! Solver outputs checked against reference computations written here or in
//! `common`.

mod common;

use meddis_core::discretize::{self, PairInput};
use meddis_core::fractional::{make_distance_optimal, FractionalSolution};
use meddis_core::instance::{generate, GenConstraint, GenParams};
use meddis_core::iterround::solve_kmeddis;
use meddis_core::knapsack::{self, Evaluation, KnapParams, SparsifyOptions};
use meddis_core::oracle;
use meddis_core::stochastic::{self, EvalMode, StochParams, StochasticInstance, StochasticPoint};
use meddis_core::{Constraint, Instance, MetricSpace};
use rand::seq::SliceRandom;
use rand::Rng;

fn gen(seed: u64, constraint: GenConstraint, nf: usize, nc: usize) -> Instance {
    generate(&GenParams { n_facilities: nf, n_clients: nc, constraint, discount_scale: 0.5, seed })
}

fn stoch(seed: u64, points: usize, support: usize) -> StochasticInstance {
    let p = GenParams {
        n_facilities: 3 + (seed % 3) as usize,
        n_clients: 4 + (seed % 4) as usize,
        constraint: GenConstraint::Cardinality { k: 1 + (seed % 2) as usize },
        discount_scale: 0.0,
        seed,
    };
    stochastic::generate_stochastic(&p, points, support)
}

#[test]
fn generator_output_validates() {
    for seed in 0..1000u64 {
        let constraint = match seed % 5 {
            0 => GenConstraint::Cardinality { k: 2 },
            1 => GenConstraint::UniformMatroid { rank: 2 },
            2 => GenConstraint::PartitionMatroid { parts: 2, cap: 1 },
            3 => GenConstraint::GraphicMatroid { vertices: 4 },
            _ => GenConstraint::Knapsack { max_weight: 4, budget_fraction: 0.4 },
        };
        let inst = gen(seed, constraint, 2 + (seed % 6) as usize, 1 + (seed % 9) as usize);
        assert!(inst.validate().is_empty(), "seed {seed}: {:?}", inst.validate());
    }
}

#[test]
fn scaling_does_not_change_solutions() {
    for seed in 0..20u64 {
        let inst = gen(seed, GenConstraint::Cardinality { k: 1 + (seed % 3) as usize }, 5, 7);
        let factor = 0.05 + 0.4 * (seed as f64);
        let mut scaled = inst.clone();
        let rows: Vec<Vec<f64>> = inst.metric.rows().map(|r| r.iter().map(|d| d * factor).collect()).collect();
        scaled.metric = MetricSpace::from_rows(&rows).unwrap();
        scaled.discounts.iter_mut().for_each(|r| *r *= factor);
        let a = solve_kmeddis(&inst, 1.91).unwrap();
        let b = solve_kmeddis(&scaled, 1.91).unwrap();
        assert_eq!(a.solution_positions, b.solution_positions, "seed {seed}");
        assert!((b.objective - factor * a.objective).abs() <= 1e-9 * (1.0 + b.objective));
    }
}

#[test]
fn chosen_offset_matches_fine_grid() {
    let mut r = common::rng(11);
    for case in 0..20 {
        let tau: f64 = r.gen_range(1.3..2.5);
        let pairs: Vec<PairInput> = (0..r.gen_range(2..10))
            .map(|_| {
                let c: f64 = r.gen_range(1.0..40.0);
                PairInput { c, r: if r.gen_bool(0.4) { 0.0 } else { r.gen_range(0.0..c) }, mass: r.gen_range(0.1..1.0) }
            })
            .collect();
        let aux = |b: f64| -> f64 { pairs.iter().map(|p| p.mass * (common::rounded(p.c, tau, b) - tau * p.r).max(0.0)).sum() };
        let (b, v) = discretize::choose_offset(&pairs, tau);
        assert!((aux(b) - v).abs() <= 1e-9 * (1.0 + v), "case {case}: {} vs {v}", aux(b));
        let n = 100_000;
        let grid = (0..n).map(|t| aux(t as f64 / n as f64)).fold(f64::INFINITY, f64::min);
        assert!(grid >= v - 1e-9 * (1.0 + v), "case {case}: grid {grid} below {v}");
        // each rounded distance grows by at most tau^(spacing) just right of a breakpoint
        let step: f64 = pairs.iter().map(|p| p.mass * common::rounded(p.c, tau, b)).sum::<f64>() * (tau.powf(1.0 / n as f64) - 1.0);
        assert!(grid <= v + step + 1e-9, "case {case}: grid {grid} vs {v} + {step}");
    }
}

#[test]
fn repair_never_raises_cost() {
    let mut r = common::rng(5);
    for seed in 0..100u64 {
        let inst = gen(seed, GenConstraint::Cardinality { k: 2 }, 2 + (seed % 5) as usize, 1 + (seed % 7) as usize);
        let (nf, nc) = (inst.n_facilities(), inst.n_clients());
        let mut y: Vec<f64> = (0..nf).map(|_| r.gen_range(0.05..1.0)).collect();
        let total: f64 = y.iter().sum();
        if total < 1.0 {
            y.iter_mut().for_each(|v| *v = (*v / total).min(1.0));
        }
        let x = (0..nc)
            .map(|_| {
                let mut order: Vec<usize> = (0..nf).collect();
                order.shuffle(&mut r);
                let mut row = vec![0.0; nf];
                let mut left = 1.0;
                for i in order {
                    row[i] = y[i].min(left);
                    left -= row[i];
                }
                assert!(left <= 1e-12);
                row
            })
            .collect();
        let sol = FractionalSolution { x, y, objective: 0.0 };
        let before = sol.cost(&inst);
        let after = make_distance_optimal(&sol, &inst).cost(&inst);
        assert!(after <= before + 1e-9 * (1.0 + before), "seed {seed}: {after} > {before}");
    }
}

#[test]
fn strengthened_relaxation_is_bounded_on_sparse_instances() {
    let (rho, delta, tau) = (0.5, 2.0 / 3.0, 1.9);
    let caps = knapsack::theoretical_caps(rho, delta);
    let mut checked = 0;
    for seed in 0..10 {
        let inst = common::planted(seed);
        let best = oracle::brute_opt(&inst).unwrap();
        let est = best.value;
        let opts = SparsifyOptions { cap1: caps.0, cap2: caps.1, limit: 10_000_000, radii_from_f0: true };
        let exts = knapsack::sparsify_candidates(&inst, rho, delta, est, 0.0, opts).unwrap();
        for e in exts.iter().filter(|e| common::sparse_against(&inst, e, &best.optimum)).take(10) {
            let Evaluation::Candidate(c) = knapsack::solve_extended(&inst, e, tau).unwrap() else {
                panic!("seed {seed}: sparse instance has no relaxation solution");
            };
            let kept: f64 = e.clients.iter().map(|&j| (inst.dist_to_set(j, &best.optimum) - inst.discounts[j]).max(0.0)).sum();
            assert!(c.lp_value <= kept + 1e-6, "seed {seed}: relaxation {} above {kept}", c.lp_value);
            assert!(c.max_star <= 2.0 * rho * est + 1e-6, "seed {seed}: star {} above {}", c.max_star, 2.0 * rho * est);
            checked += 1;
        }
    }
    assert!(checked >= 10);
}

/// `E[max^power]` by walking every joint outcome with a mixed-radix counter.
fn moment_by_counting(s: &StochasticInstance, set: &[usize], power: i32) -> f64 {
    let inst = &s.base;
    let radix: Vec<usize> = s.points.iter().map(|p| p.dist.len() + 1).collect();
    let mut digits = vec![0usize; radix.len()];
    let mut e = 0.0;
    loop {
        let mut prob = 1.0;
        let mut m: f64 = 0.0;
        for (v, p) in s.points.iter().enumerate() {
            if digits[v] < p.dist.len() {
                let (j, q) = p.dist[digits[v]];
                prob *= q;
                m = m.max(inst.dist_to_set(j, set));
            } else {
                prob *= 1.0 - p.dist.iter().map(|d| d.1).sum::<f64>();
            }
        }
        e += prob * m.powi(power);
        let mut v = 0;
        while v < digits.len() {
            digits[v] += 1;
            if digits[v] < radix[v] {
                break;
            }
            digits[v] = 0;
            v += 1;
        }
        if v == digits.len() {
            return e;
        }
    }
}

fn points_of(s: &StochasticInstance) -> Vec<oracle::PointDist> {
    s.points.iter().map(|p| p.dist.clone()).collect()
}

#[test]
fn stochastic_oracle_matches_counting() {
    for seed in 0..50u64 {
        let s = stoch(seed, 1 + (seed % 4) as usize, 1 + (seed % 3) as usize);
        let Constraint::Cardinality { k } = s.base.constraint else { unreachable!() };
        let mut best = f64::INFINITY;
        for set in oracle::all_sets(s.base.n_facilities()).into_iter().filter(|t| t.len() <= k) {
            best = best.min(moment_by_counting(&s, &set, 1));
        }
        let got = oracle::brute_stochastic_opt(&s.base, &points_of(&s)).unwrap().value;
        assert!((got - best).abs() <= 1e-9 * (1.0 + best), "seed {seed}: {got} vs {best}");
    }
}

#[test]
fn monte_carlo_matches_exact_at_full_sample_count() {
    let samples = 100_000u64;
    for seed in 0..10u64 {
        let s = stoch(seed, 3, 2);
        let set = [0usize];
        let exact = stochastic::eval_expected_max(&s, &set, EvalMode::Exact).unwrap();
        let mc = stochastic::eval_expected_max(&s, &set, EvalMode::MonteCarlo { samples, seed }).unwrap();
        let second = moment_by_counting(&s, &set, 2);
        let sd = ((second - exact * exact).max(0.0) / samples as f64).sqrt();
        assert!((mc - exact).abs() <= 3.0 * sd + 1e-12, "seed {seed}: {mc} vs {exact} (sd {sd})");
    }
}

#[test]
fn monte_carlo_ranks_the_best_sets() {
    let samples = 100_000u64;
    let mut compared = 0;
    for seed in 0..8u64 {
        let s = stoch(seed, 4, 2);
        let pts = points_of(&s);
        let ranked = oracle::ranked_sets(&s.base, |set| oracle::expected_max(&s.base, &pts, set)).unwrap();
        let top: Vec<_> = ranked.iter().take(3).collect();
        let mc: Vec<f64> = top
            .iter()
            .map(|(set, _)| stochastic::eval_expected_max(&s, set, EvalMode::MonteCarlo { samples, seed }).unwrap())
            .collect();
        let spread = s.base.max_fc() / (samples as f64).sqrt();
        for a in 0..top.len() {
            for b in a + 1..top.len() {
                if top[b].1 - top[a].1 > 8.0 * spread {
                    assert!(mc[a] < mc[b], "seed {seed}: order of {:?} and {:?} flipped", top[a].0, top[b].0);
                    compared += 1;
                }
            }
        }
    }
    assert!(compared > 0);
}

#[test]
fn deterministic_points_reduce_to_center() {
    for seed in 0..20u64 {
        let mut s = stoch(seed, 1, 1);
        let nc = s.base.n_clients();
        let realized: Vec<usize> = (0..nc).filter(|j| j % 2 == 0).collect();
        s.points =
            realized.iter().map(|&j| StochasticPoint { id: format!("v{j}"), dist: vec![(j, 1.0)] }).collect();
        for set in oracle::all_sets(s.base.n_facilities()) {
            let e = stochastic::eval_expected_max(&s, &set, EvalMode::Exact).unwrap();
            let c = oracle::center_cost(&s.base, &set, &realized);
            assert!((e - c).abs() <= 1e-9 * (1.0 + c), "seed {seed}: {e} vs {c}");
        }
        let params = StochParams { tau: 1.91, epsilon: 0.1, knapsack: KnapParams::default(), eval: EvalMode::Exact };
        let rep = stochastic::solve_stochastic_center(&s, &params).unwrap();
        assert!(rep.all_hold(), "seed {seed}");
        let Constraint::Cardinality { k } = s.base.constraint else { unreachable!() };
        let opt = oracle::all_sets(s.base.n_facilities())
            .into_iter()
            .filter(|t| t.len() <= k)
            .map(|t| oracle::center_cost(&s.base, &t, &realized))
            .fold(f64::INFINITY, f64::min);
        let got = oracle::center_cost(&s.base, &rep.solution, &realized);
        assert!((got - rep.expected_max).abs() <= 1e-9 * (1.0 + got));
        assert!(got <= rep.constant * opt + 1e-9, "seed {seed}: {got} > {} * {opt}", rep.constant);
    }
}
