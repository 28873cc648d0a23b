//! JSON forms of solver reports.

use meddis_core::oracle::BicriteriaCheck;
use meddis_core::report::{CandidateSummary, Certificate};
use meddis_core::stochastic::StochasticReport;
use meddis_core::{Instance, SolveReport};
use serde_json::{json, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn certificates(certs: &[Certificate]) -> Value {
    certs.iter().map(|c| json!({"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "holds": c.holds})).collect()
}

fn candidate(c: &CandidateSummary) -> Value {
    json!({
        "c0": c.c0,
        "est": c.est,
        "preselected": c.preselected,
        "removedClients": c.removed_clients,
        "objective": c.objective,
        "fractional": c.fractional,
        "lpValue": c.lp_value,
        "solution": c.solution,
    })
}

/// `guarantee_beta` is the factor `verify` multiplies the optimum by; it
/// differs from `beta` only for knapsack, where it carries the estimate grid.
pub fn solve_report(rep: &SolveReport, config: &Value, guarantee_beta: f64) -> Value {
    json!({
        "version": VERSION,
        "config": config,
        "problem": rep.problem,
        "tau": rep.tau,
        "b": rep.b,
        "h": rep.h,
        "solution": rep.solution,
        "objective": rep.objective,
        "objectiveAlpha": rep.objective_alpha,
        "alpha": rep.alpha,
        "beta": rep.beta,
        "guaranteeBeta": guarantee_beta,
        "lpValue": rep.lp_value,
        "iterations": rep.iterations.iter().map(|it| json!({
            "action": it.action.as_str(),
            "client": it.client,
            "objective": it.objective,
        })).collect::<Vec<_>>(),
        "finalLevels": rep.final_levels.iter().map(|(id, l)| (id.clone(), json!(l))).collect::<serde_json::Map<_, _>>(),
        "certificates": certificates(&rep.certificates),
        "candidates": rep.candidates.iter().map(candidate).collect::<Vec<_>>(),
        "flags": rep.flags,
    })
}

pub fn check(inst: &Instance, chk: &BicriteriaCheck, alpha: f64, beta: f64) -> Value {
    json!({
        "opt": chk.opt,
        "optSet": chk.opt_set.iter().map(|&i| inst.facility_id(i)).collect::<Vec<_>>(),
        "lhs": chk.lhs,
        "rhs": chk.rhs,
        "holds": chk.holds,
        "alpha": alpha,
        "beta": beta,
    })
}

pub fn stochastic_report(rep: &StochasticReport, inst: &Instance, config: &Value) -> Value {
    json!({
        "version": VERSION,
        "config": config,
        "problem": format!("stochastic-{}", inst.constraint.kind()),
        "solution": rep.solution_ids,
        "expectedMax": rep.expected_max,
        "tStar": rep.t_star,
        "tFail": rep.t_fail,
        "alpha": rep.alpha,
        "beta": rep.beta,
        "epsilon": rep.epsilon,
        "constant": rep.constant,
        "lowerBound": rep.lower_bound,
        "probs": (0..inst.n_clients()).map(|j| (inst.client_id(j).to_string(), json!(rep.probs[j]))).collect::<serde_json::Map<_, _>>(),
        "sweep": rep.sweep.iter().map(|s| json!({"t": s.t, "costAlpha": s.cost_alpha, "passed": s.passed})).collect::<Vec<_>>(),
        "certificates": certificates(&rep.certificates),
        "flags": rep.flags,
        "inner": solve_report(&rep.inner, &Value::Null, rep.beta),
    })
}
