//! Subcommands. Each returns the process exit code: 0 when every certificate
//! holds, 2 when one fails (the report is still written), and input errors as
//! [`CliError`], which `main` maps to 1.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use meddis_core::instance::{generate, GenConstraint, GenParams};
use meddis_core::knapsack::{self, KnapParams};
use meddis_core::stochastic::{self, EvalMode, StochParams};
use meddis_core::{iterround, oracle, Constraint, Instance, SolveReport};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output;
use crate::schema::{InstanceFile, SchemaError};

#[derive(Debug)]
pub enum CliError {
    Io(PathBuf, std::io::Error),
    Schema(SchemaError),
    Solver(meddis_core::Error),
    Report(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Schema(e) => write!(f, "{e}"),
            CliError::Solver(e) => write!(f, "{e}"),
            CliError::Report(e) => write!(f, "bad report: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Schema(e)
    }
}

impl From<meddis_core::Error> for CliError {
    fn from(e: meddis_core::Error) -> Self {
        CliError::Solver(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "meddis", version, about = "Median clustering with discounts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance with the solver for its constraint family.
    Solve(SolveArgs),
    /// Write a random instance.
    Gen(GenArgs),
    /// Check a report's solution against the exhaustive optimum.
    Verify(VerifyArgs),
    /// Solve a stochastic center instance by the discount sweep.
    Stochastic(StochasticArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Discretization base; defaults to 1.91 (cardinality), 2.36 (matroid, 1.985 under `stochastic`), 1.9 (knapsack).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Level gap among overlapping clients; 2 for cardinality, 1 otherwise.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub step: Option<u8>,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub delta: f64,
    /// Estimate grid spacing (knapsack) and sweep step (stochastic).
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long)]
    pub cap1: Option<usize>,
    #[arg(long)]
    pub cap2: Option<usize>,
    #[arg(long, default_value_t = knapsack::DEFAULT_MAX_CANDIDATES)]
    pub max_candidates: u128,
    /// Stop the knapsack scan at the first certified estimate.
    #[arg(long)]
    pub early_stop: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Also compare against the exhaustive optimum.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Cardinality,
    Uniform,
    Partition,
    Graphic,
    Knapsack,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub facilities: usize,
    #[arg(long, default_value_t = 10)]
    pub clients: usize,
    #[arg(long, value_enum, default_value_t = GenKind::Cardinality)]
    pub constraint: GenKind,
    /// k for cardinality, rank for uniform, cap per part for partition.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub parts: usize,
    #[arg(long, default_value_t = 4)]
    pub vertices: usize,
    #[arg(long, default_value_t = 4)]
    pub max_weight: u32,
    #[arg(long, default_value_t = 0.4)]
    pub budget_fraction: f64,
    #[arg(long, default_value_t = 0.3)]
    pub discount_scale: f64,
    /// Number of stochastic points; 0 writes a deterministic instance.
    #[arg(long, default_value_t = 0)]
    pub points: usize,
    #[arg(long, default_value_t = 3)]
    pub max_support: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub instance: PathBuf,
    pub report: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StochasticArgs {
    pub instance: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Estimate the final expected maximum from this many samples instead of exactly.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also compare against the exhaustive optimum.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve(a) => solve(&a),
        Command::Gen(a) => gen(&a),
        Command::Verify(a) => verify(&a),
        Command::Stochastic(a) => stochastic(&a),
    }
}

fn read(path: &Path) -> Result<InstanceFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(InstanceFile::parse(&text)?)
}

fn emit(out: Option<&Path>, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports always serialize") + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(p.to_path_buf(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn default_tau(c: &Constraint) -> f64 {
    match c {
        Constraint::Cardinality { .. } => 1.91,
        Constraint::Matroid(_) => 2.36,
        Constraint::Knapsack { .. } => 1.9,
    }
}

fn knap_params(a: &SolverArgs, tau: f64) -> KnapParams {
    let base = KnapParams { tau, rho: a.rho, delta: a.delta, epsilon: a.epsilon, ..KnapParams::default() };
    let theory = knapsack::theoretical_caps(a.rho, a.delta);
    KnapParams {
        caps: (a.cap1.is_some() || a.cap2.is_some())
            .then(|| (a.cap1.unwrap_or(theory.0), a.cap2.unwrap_or(theory.1))),
        max_candidates: a.max_candidates,
        early_stop: a.early_stop,
        ..base
    }
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool")
}

fn solve_knapsack(inst: &Instance, params: &KnapParams, pool: &rayon::ThreadPool) -> meddis_core::Result<SolveReport> {
    let plan = knapsack::plan(inst, params)?;
    pool.install(|| plan.run(|p, exts| exts.par_iter().map(|e| p.evaluate(e)).collect()))
}

fn config(a: &SolverArgs, tau: f64, h: u8, kind: &str) -> Value {
    json!({
        "constraint": kind,
        "tau": tau,
        "step": h,
        "rho": a.rho,
        "delta": a.delta,
        "epsilon": a.epsilon,
        "cap1": a.cap1,
        "cap2": a.cap2,
        "maxCandidates": a.max_candidates.to_string(),
        "earlyStop": a.early_stop,
    })
}

fn solve(a: &SolveArgs) -> Result<i32, CliError> {
    let inst = read(&a.instance)?.to_instance()?;
    let tau = a.solver.tau.unwrap_or_else(|| default_tau(&inst.constraint));
    let (rep, h, guarantee_beta) = match inst.constraint {
        Constraint::Knapsack { .. } => {
            if a.solver.step.is_some_and(|h| h != 1) {
                return Err(CliError::Solver(meddis_core::Error::InvalidParameter(
                    "knapsack rounding uses step 1".to_string(),
                )));
            }
            let params = knap_params(&a.solver, tau);
            let rep = solve_knapsack(&inst, &params, &pool(a.solver.jobs))?;
            let gb = rep.beta * (1.0 + params.epsilon);
            (rep, 1, gb)
        }
        Constraint::Cardinality { .. } | Constraint::Matroid(_) => {
            let h = a.solver.step.unwrap_or(if matches!(inst.constraint, Constraint::Cardinality { .. }) { 2 } else { 1 });
            let rep = iterround::solve_median(&inst, tau, h)?;
            let b = rep.beta;
            (rep, h, b)
        }
    };
    let mut report = output::solve_report(&rep, &config(&a.solver, tau, h, inst.constraint.kind()), guarantee_beta);
    let mut ok = rep.all_hold();
    if a.oracle {
        let chk = oracle::check_bicriteria(&inst, &rep.solution_positions, rep.alpha, guarantee_beta)?;
        ok &= chk.holds;
        report["oracle"] = output::check(&inst, &chk, rep.alpha, guarantee_beta);
    }
    emit(a.out.as_deref(), &report)?;
    Ok(if ok { 0 } else { 2 })
}

fn gen(a: &GenArgs) -> Result<i32, CliError> {
    let constraint = match a.constraint {
        GenKind::Cardinality => GenConstraint::Cardinality { k: a.k },
        GenKind::Uniform => GenConstraint::UniformMatroid { rank: a.k },
        GenKind::Partition => GenConstraint::PartitionMatroid { parts: a.parts, cap: a.k },
        GenKind::Graphic => GenConstraint::GraphicMatroid { vertices: a.vertices },
        GenKind::Knapsack => GenConstraint::Knapsack { max_weight: a.max_weight, budget_fraction: a.budget_fraction },
    };
    let params = GenParams {
        n_facilities: a.facilities,
        n_clients: a.clients,
        constraint,
        discount_scale: if a.points > 0 { 0.0 } else { a.discount_scale },
        seed: a.seed,
    };
    let file = if a.points > 0 {
        InstanceFile::from_stochastic(&stochastic::generate_stochastic(&params, a.points, a.max_support))
    } else {
        InstanceFile::from_instance(&generate(&params))
    };
    let text = file.to_json() + "\n";
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(p.clone(), e))?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn verify(a: &VerifyArgs) -> Result<i32, CliError> {
    let inst = read(&a.instance)?.to_instance()?;
    let text = fs::read_to_string(&a.report).map_err(|e| CliError::Io(a.report.clone(), e))?;
    let report: Value = serde_json::from_str(&text).map_err(|e| CliError::Report(e.to_string()))?;
    let number = |key: &str| report[key].as_f64().ok_or_else(|| CliError::Report(format!("missing number {key:?}")));
    let alpha = number("alpha")?;
    let beta = report["guaranteeBeta"].as_f64().map_or_else(|| number("beta"), Ok)?;
    let ids = report["solution"].as_array().ok_or_else(|| CliError::Report("missing solution".to_string()))?;
    let mut solution = Vec::with_capacity(ids.len());
    for id in ids {
        let id = id.as_str().ok_or_else(|| CliError::Report("solution ids must be strings".to_string()))?;
        let i = (0..inst.n_facilities())
            .find(|&i| inst.facility_id(i) == id)
            .ok_or_else(|| CliError::Report(format!("unknown facility {id:?}")))?;
        solution.push(i);
    }
    if !inst.constraint.admits(&solution) {
        return Err(CliError::Report("solution violates the constraint".to_string()));
    }
    let chk = oracle::check_bicriteria(&inst, &solution, alpha, beta)?;
    emit(a.out.as_deref(), &output::check(&inst, &chk, alpha, beta))?;
    Ok(if chk.holds { 0 } else { 2 })
}

fn stochastic(a: &StochasticArgs) -> Result<i32, CliError> {
    let stoch = read(&a.instance)?.to_stochastic()?;
    let inst = &stoch.base;
    let tau = a.solver.tau.unwrap_or(match inst.constraint {
        Constraint::Matroid(_) => 1.985,
        _ => default_tau(&inst.constraint),
    });
    let params = StochParams {
        tau,
        epsilon: a.solver.epsilon,
        knapsack: knap_params(&a.solver, tau),
        eval: match a.samples {
            Some(samples) => EvalMode::MonteCarlo { samples, seed: a.seed },
            None => EvalMode::Exact,
        },
    };
    let pool = pool(a.solver.jobs);
    let rep = stochastic::solve_stochastic_center_with(&stoch, &params, |at| match at.constraint {
        Constraint::Knapsack { .. } => solve_knapsack(at, &KnapParams { tau, ..params.knapsack.clone() }, &pool),
        Constraint::Cardinality { .. } => iterround::solve_kmeddis(at, tau),
        Constraint::Matroid(_) => iterround::solve_matmeddis(at, tau),
    })?;
    let h = if matches!(inst.constraint, Constraint::Cardinality { .. }) { 2 } else { 1 };
    let mut report = output::stochastic_report(&rep, inst, &config(&a.solver, tau, h, inst.constraint.kind()));
    let mut ok = rep.all_hold();
    if a.oracle {
        let points: Vec<oracle::PointDist> = stoch.points.iter().map(|p| p.dist.clone()).collect();
        let best = oracle::brute_stochastic_opt(inst, &points)?;
        let bound = rep.constant * best.value;
        let holds = rep.expected_max <= bound + 1e-7 * (1.0 + bound);
        ok &= holds;
        report["oracle"] = json!({
            "opt": best.value,
            "optSet": best.optimum.iter().map(|&i| inst.facility_id(i)).collect::<Vec<_>>(),
            "lhs": rep.expected_max,
            "rhs": bound,
            "holds": holds,
        });
    }
    emit(a.out.as_deref(), &report)?;
    Ok(if ok { 0 } else { 2 })
}
