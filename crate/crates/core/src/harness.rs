//! Experiment orchestration over a [`Scenario`]: single runs, stepsize
//! sweeps, randomized multistarts and solve-count efficiency curves.
//!
//! Every operation is deterministic for a fixed scenario. Cells may run on a
//! rayon pool (`jobs > 1`); results are always returned in grid order.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::adjoint::{run_constrained, AdjointConfig, ConstrainedMethod, ConstrainedProblem};
use crate::anderson::CorrectionSign;
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::optim_unconstrained::{run_unconstrained, OptimizerConfig, StepSchedule, UnconstrainedMethod, DIVERGENCE_COST};
use crate::problems::benchmarks::benchmark;
use crate::problems::diffusion::DiffusionControlProblem;
use crate::problems::tomography::tomography_build;
use crate::problems::transport::Transport1DProblem;
use crate::scenario::{MethodName, ProblemName, Scenario, SplittingKind};
use crate::splitting::{make_residual_splitting, SplitGradientProblem};
use crate::trace::{fmt_opt, fmt_real, RunStatus, Trace};

/// A built problem with its starting point.
#[derive(Clone)]
pub enum Instance {
    Unconstrained {
        problem: Arc<dyn SplitGradientProblem>,
        x0: DenseVector,
        /// Start box for randomized restarts.
        init_box: Option<[(f64, f64); 2]>,
    },
    Constrained {
        problem: Arc<dyn ConstrainedProblem>,
        x0: DenseVector,
        theta0: DenseVector,
        /// Multiplier applied to `method.gamma` (`1/Δt` for diffusion).
        gamma_scale: f64,
    },
}

impl Instance {
    pub fn initial_cost(&self) -> f64 {
        match self {
            Instance::Unconstrained { problem, x0, .. } => problem.cost(x0).unwrap_or(f64::NAN),
            Instance::Constrained { problem, x0, theta0, .. } => problem.objective(x0, theta0),
        }
    }
}

pub fn build_instance(s: &Scenario) -> Result<Instance> {
    let params = &s.problem.parameters;
    Ok(match s.problem.name {
        name @ (ProblemName::Rastrigin | ProblemName::Rosenbrock | ProblemName::Beale) => {
            let bench = benchmark(name.benchmark().expect("benchmark problem"));
            let problem: Arc<dyn SplitGradientProblem> = match s.splitting() {
                SplittingKind::LinearlyImplicit => Arc::new(bench.linearly_implicit.clone()),
                SplittingKind::Avf => Arc::new(bench.avf(s.avf_order())),
            };
            let x0 = params.start.map_or_else(|| bench.reference_start(), |x| DenseVector::from_row_slice(&x));
            Instance::Unconstrained { problem, x0, init_box: Some(bench.init_box) }
        }
        ProblemName::Tomography => {
            let t = tomography_build(params.n_qubits.unwrap_or(6), params.n_operators.unwrap_or(500), s.problem.seed)?;
            let x0 = t.initial_state.clone();
            Instance::Unconstrained { problem: Arc::new(make_residual_splitting(t)?), x0, init_box: None }
        }
        ProblemName::Transport1d => {
            let p = Transport1DProblem::new(s.transport_config())?;
            let (nx, nt) = (p.state_dim(), p.param_dim());
            Instance::Constrained {
                problem: Arc::new(p),
                x0: DenseVector::zeros(nx),
                theta0: DenseVector::zeros(nt),
                gamma_scale: 1.0,
            }
        }
        ProblemName::Diffusion => {
            let p = DiffusionControlProblem::new(s.diffusion_config())?;
            let x0 = p.initial_chain();
            let theta0 = DenseVector::zeros(p.param_dim());
            let gamma_scale = 1.0 / p.dt();
            Instance::Constrained { problem: Arc::new(p), x0, theta0, gamma_scale }
        }
    })
}

pub fn optimizer_config(s: &Scenario, gamma: f64, c0: f64) -> OptimizerConfig {
    OptimizerConfig {
        gamma: StepSchedule::Constant(gamma),
        mu: s.method.mu,
        aa_depth: s.method.m,
        max_iters: s.run.max_iters,
        cost_tol: s.run.cost_tol,
        grad_tol: s.run.grad_tol,
        divergence_cost: s.divergence_cap(c0),
        aa_safeguard: s.method.aa_safeguard,
        inner: s.method.inner,
    }
}

pub fn adjoint_config(s: &Scenario, gamma: f64, j0: f64) -> AdjointConfig {
    AdjointConfig {
        gamma: StepSchedule::Constant(gamma),
        mu: s.method.mu,
        depth: s.method.m,
        eta: s.run.cost_tol,
        eps: s.run.constraint_tol,
        max_iters: s.run.max_iters,
        divergence_cost: s.divergence_cap(j0),
        sign: if s.method.additive_sign { CorrectionSign::Additive } else { CorrectionSign::Standard },
        inner_tol: s.method.inner_tol,
        max_inner: s.method.max_inner,
    }
}

/// Result of one trajectory.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: MethodName,
    pub gamma: f64,
    pub status: RunStatus,
    pub trace: Trace,
    /// Final unconstrained iterate, or the final `θ`.
    pub x: DenseVector,
    pub failure: Option<String>,
}

impl RunResult {
    pub fn final_cost(&self) -> f64 {
        self.trace.final_cost().unwrap_or(f64::NAN)
    }

    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// Runs `method` at stepsize `gamma` from the instance start, or from `x0`
/// when given (unconstrained only).
pub fn run_instance(
    s: &Scenario,
    inst: &Instance,
    method: MethodName,
    gamma: f64,
    x0: Option<&DenseVector>,
) -> Result<RunResult> {
    match (inst, method) {
        (Instance::Unconstrained { problem, x0: start, .. }, MethodName::Unconstrained(m)) => {
            let x0 = x0.unwrap_or(start);
            let cfg = optimizer_config(s, gamma, problem.cost(x0).unwrap_or(f64::NAN));
            let out = run_unconstrained(m, problem.as_ref(), x0, &cfg);
            Ok(RunResult { method, gamma, status: out.status, trace: out.trace, x: out.x, failure: out.failure })
        }
        (Instance::Constrained { problem, x0, theta0, gamma_scale }, MethodName::Constrained(m)) => {
            let cfg = adjoint_config(s, gamma * gamma_scale, problem.objective(x0, theta0));
            let out = run_constrained(m, problem.as_ref(), x0, theta0, &cfg);
            Ok(RunResult { method, gamma, status: out.status, trace: out.trace, x: out.theta, failure: out.failure })
        }
        _ => Err(Error::config("method.name", format!("`{method}` does not apply to problem `{}`", s.problem.name))),
    }
}

/// The `[method]` run of a scenario.
pub fn run_scenario(s: &Scenario) -> Result<RunResult> {
    let inst = build_instance(s)?;
    run_instance(s, &inst, s.method_name()?, s.method.gamma, None)
}

/// Maps `f` over `items` on a pool of `jobs` threads, preserving order.
pub fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Cost kept finite for tables: non-finite or huge values become the cap.
pub fn clamp_cost(c: f64) -> f64 {
    if c.is_finite() {
        c.min(DIVERGENCE_COST)
    } else {
        DIVERGENCE_COST
    }
}

// ---------------------------------------------------------------------------
// Sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub gamma: f64,
    pub final_cost: f64,
    pub status: RunStatus,
    pub iterations: usize,
}

/// Every `(method, γ)` cell of the experiment grid, run to `run.max_iters`.
pub fn sweep_stepsize(s: &Scenario, jobs: usize) -> Result<Vec<SweepRow>> {
    let inst = build_instance(s)?;
    let cells: Vec<(MethodName, f64)> =
        s.grid_methods()?.into_iter().flat_map(|m| s.grid_gammas().into_iter().map(move |g| (m, g))).collect();
    let rows = par_map(jobs, &cells, |&(m, g)| match run_instance(s, &inst, m, g, None) {
        Ok(r) => SweepRow {
            method: m.to_string(),
            gamma: g,
            final_cost: clamp_cost(r.final_cost()),
            status: r.status,
            iterations: r.iterations(),
        },
        Err(_) => SweepRow {
            method: m.to_string(),
            gamma: g,
            final_cost: DIVERGENCE_COST,
            status: RunStatus::Diverged,
            iterations: 0,
        },
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,gamma,final_cost,status,iterations\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.method, fmt_real(r.gamma), fmt_real(r.final_cost), r.status, r.iterations);
    }
    out
}

// ---------------------------------------------------------------------------
// Multistart

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartRow {
    pub method: String,
    pub restart: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub final_cost: f64,
    pub status: RunStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultistartSummary {
    pub method: String,
    pub gamma: f64,
    pub n_restarts: usize,
    pub mean_final_cost: f64,
    pub median_final_cost: f64,
    pub fraction_converged: f64,
    pub n_diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultistartResult {
    pub summary: Vec<MultistartSummary>,
    pub restarts: Vec<RestartRow>,
}

/// Start for restart `i`: uniform in the box, from seed `base + i`.
pub fn restart_start(base_seed: u64, index: usize, init_box: &[(f64, f64); 2]) -> (u64, DenseVector) {
    let seed = base_seed.wrapping_add(index as u64);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (seed, DenseVector::from_fn(2, |i, _| rng.gen_range(init_box[i].0..=init_box[i].1)))
}

/// Runs every grid method from `experiment.n_restarts` random starts at
/// `method.gamma`. Restarts are shared across methods.
pub fn multistart(s: &Scenario, jobs: usize) -> Result<MultistartResult> {
    let inst = build_instance(s)?;
    let Instance::Unconstrained { init_box: Some(init_box), .. } = &inst else {
        return Err(Error::config("problem.name", "multistart needs a benchmark problem with a start box"));
    };
    let methods = s.grid_methods()?;
    let n = s.n_restarts();
    let cells: Vec<(MethodName, usize)> = methods.iter().flat_map(|&m| (0..n).map(move |i| (m, i))).collect();
    let restarts = par_map(jobs, &cells, |&(m, i)| {
        let (seed, x0) = restart_start(s.problem.seed, i, init_box);
        let (final_cost, status, iterations) = match run_instance(s, &inst, m, s.method.gamma, Some(&x0)) {
            Ok(r) => (r.final_cost(), r.status, r.iterations()),
            Err(_) => (f64::NAN, RunStatus::Diverged, 0),
        };
        RestartRow {
            method: m.to_string(),
            restart: i,
            seed,
            x0: x0.iter().copied().collect(),
            final_cost,
            status,
            iterations,
        }
    });
    let summary = methods
        .iter()
        .map(|m| {
            let rows: Vec<&RestartRow> = restarts.iter().filter(|r| r.method == m.as_str()).collect();
            summarize(m.as_str(), s.method.gamma, &rows)
        })
        .collect();
    Ok(MultistartResult { summary, restarts })
}

fn summarize(method: &str, gamma: f64, rows: &[&RestartRow]) -> MultistartSummary {
    let mut costs: Vec<f64> = rows.iter().map(|r| clamp_cost(r.final_cost)).collect();
    costs.sort_by(f64::total_cmp);
    let n = costs.len();
    let median = if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        costs[n / 2]
    } else {
        0.5 * (costs[n / 2 - 1] + costs[n / 2])
    };
    MultistartSummary {
        method: method.to_string(),
        gamma,
        n_restarts: n,
        mean_final_cost: costs.iter().sum::<f64>() / n as f64,
        median_final_cost: median,
        fraction_converged: rows.iter().filter(|r| r.status == RunStatus::Converged).count() as f64 / n as f64,
        n_diverged: rows.iter().filter(|r| r.status == RunStatus::Diverged).count(),
    }
}

pub fn multistart_summary_csv(rows: &[MultistartSummary]) -> String {
    let mut out =
        String::from("method,gamma,n_restarts,mean_final_cost,median_final_cost,fraction_converged,n_diverged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            fmt_real(r.gamma),
            r.n_restarts,
            fmt_real(r.mean_final_cost),
            fmt_real(r.median_final_cost),
            fmt_real(r.fraction_converged),
            r.n_diverged
        );
    }
    out
}

pub fn multistart_restarts_csv(rows: &[RestartRow]) -> String {
    let mut out = String::from("method,restart,seed,x0_1,x0_2,final_cost,status,iterations\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.restart,
            r.seed,
            fmt_real(r.x0[0]),
            fmt_real(r.x0[1]),
            fmt_real(r.final_cost),
            r.status,
            r.iterations
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Efficiency

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub method: String,
    pub gamma: f64,
    pub iter: usize,
    pub cumulative_inner_solves: u64,
    pub relative_objective: f64,
    pub constraint_residual: Option<f64>,
}

/// `J/J⁰` against cumulative constraint-solver iterations for every
/// `(method, γ)` of the grid; `J⁰` is the objective at the initial state
/// and parameters.
pub fn efficiency_curve(s: &Scenario, jobs: usize) -> Result<Vec<EfficiencyRow>> {
    let inst = build_instance(s)?;
    if !matches!(inst, Instance::Constrained { .. }) {
        return Err(Error::config("problem.name", "efficiency curves need a constrained problem"));
    }
    let j0 = inst.initial_cost();
    let cells: Vec<(MethodName, f64)> =
        s.grid_methods()?.into_iter().flat_map(|m| s.grid_gammas().into_iter().map(move |g| (m, g))).collect();
    let runs = par_map(jobs, &cells, |&(m, g)| run_instance(s, &inst, m, g, None));
    let mut rows = Vec::new();
    for ((m, g), run) in cells.into_iter().zip(runs) {
        let Ok(run) = run else { continue };
        rows.extend(efficiency_rows(m, g, &run.trace, j0));
    }
    Ok(rows)
}

pub fn efficiency_rows(method: MethodName, gamma: f64, trace: &Trace, j0: f64) -> Vec<EfficiencyRow> {
    trace
        .records
        .iter()
        .map(|r| EfficiencyRow {
            method: method.to_string(),
            gamma,
            iter: r.iter,
            cumulative_inner_solves: r.cumulative_inner_solves,
            relative_objective: r.cost.unwrap_or(f64::NAN) / j0,
            constraint_residual: r.constraint_residual,
        })
        .collect()
}

pub fn efficiency_csv(rows: &[EfficiencyRow]) -> String {
    let mut out = String::from("method,gamma,iter,cumulative_inner_solves,relative_objective,constraint_residual\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            fmt_real(r.gamma),
            r.iter,
            r.cumulative_inner_solves,
            fmt_real(r.relative_objective),
            fmt_opt(r.constraint_residual)
        );
    }
    out
}

/// Manifest echoing the resolved scenario next to a command's outputs.
pub fn manifest_json(command: &str, s: &Scenario, outputs: &[String], summary: serde_json::Value) -> String {
    let v = serde_json::json!({
        "command": command,
        "scenario": s,
        "outputs": outputs,
        "summary": summary,
    });
    let mut text = serde_json::to_string_pretty(&v).expect("manifest serializes");
    text.push('\n');
    text
}

/// Constrained method names in a fixed order, for grids.
pub fn constrained_methods() -> Vec<MethodName> {
    ConstrainedMethod::ALL.into_iter().map(MethodName::Constrained).collect()
}

/// Unconstrained method names in a fixed order, for grids.
pub fn unconstrained_methods() -> Vec<MethodName> {
    UnconstrainedMethod::ALL.into_iter().map(MethodName::Unconstrained).collect()
}
