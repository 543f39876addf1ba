//! Equality-constrained optimization with split adjoint gradients.
//!
//! The constraint is given in fixed-point form `x = G(x; θ)` by one
//! iteration of a nonlinear solver, so `F(x; θ) = G(x; θ) − x`. The split
//! methods advance the solver by a single iteration per outer step; the
//! baselines converge it before every gradient evaluation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anderson::{AndersonWindow, CorrectionSign};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::optim_unconstrained::StepSchedule;
use crate::trace::{RunStatus, Trace};

/// A constrained problem `min J(x; θ)` subject to `x = G(x; θ)`.
///
/// State and parameter gradients use the Euclidean inner product. The
/// adjoint variable returned by [`adjoint_solve`](Self::adjoint_solve) may
/// live in any representation the problem likes, as long as
/// [`pair_df_dtheta`](Self::pair_df_dtheta) understands it.
pub trait ConstrainedProblem: Send + Sync {
    fn state_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// One solver iteration `G(x; θ)`.
    fn solver_iteration(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector;

    fn objective(&self, x: &DenseVector, theta: &DenseVector) -> f64;

    fn dj_dx(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector;

    /// Explicit dependence of `J` on `θ`.
    fn dj_dtheta(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector;

    /// Solves `D₁F(x; θ)* λ = rhs`.
    fn adjoint_solve(&self, x: &DenseVector, theta: &DenseVector, rhs: &DenseVector) -> Result<DenseVector>;

    /// `⟨λ, ∂F/∂θ⟩` as a vector in parameter space.
    fn pair_df_dtheta(&self, lambda: &DenseVector, x: &DenseVector, theta: &DenseVector) -> DenseVector;

    /// Problem-internal count of linear solves, if the problem tracks one.
    fn solve_count(&self) -> u64 {
        0
    }
}

impl<P: ConstrainedProblem + ?Sized> ConstrainedProblem for &P {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn solver_iteration(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        (**self).solver_iteration(x, theta)
    }
    fn objective(&self, x: &DenseVector, theta: &DenseVector) -> f64 {
        (**self).objective(x, theta)
    }
    fn dj_dx(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        (**self).dj_dx(x, theta)
    }
    fn dj_dtheta(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        (**self).dj_dtheta(x, theta)
    }
    fn adjoint_solve(&self, x: &DenseVector, theta: &DenseVector, rhs: &DenseVector) -> Result<DenseVector> {
        (**self).adjoint_solve(x, theta, rhs)
    }
    fn pair_df_dtheta(&self, lambda: &DenseVector, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        (**self).pair_df_dtheta(lambda, x, theta)
    }
    fn solve_count(&self) -> u64 {
        (**self).solve_count()
    }
}

/// Wraps a problem and negates its adjoint variable. Used to check that the
/// gradient tests catch a sign error.
#[derive(Debug, Clone)]
pub struct FlippedAdjoint<P>(pub P);

impl<P: ConstrainedProblem> ConstrainedProblem for FlippedAdjoint<P> {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    fn param_dim(&self) -> usize {
        self.0.param_dim()
    }
    fn solver_iteration(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        self.0.solver_iteration(x, theta)
    }
    fn objective(&self, x: &DenseVector, theta: &DenseVector) -> f64 {
        self.0.objective(x, theta)
    }
    fn dj_dx(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        self.0.dj_dx(x, theta)
    }
    fn dj_dtheta(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        self.0.dj_dtheta(x, theta)
    }
    fn adjoint_solve(&self, x: &DenseVector, theta: &DenseVector, rhs: &DenseVector) -> Result<DenseVector> {
        self.0.adjoint_solve(x, theta, rhs).map(|l| -l)
    }
    fn pair_df_dtheta(&self, lambda: &DenseVector, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        self.0.pair_df_dtheta(lambda, x, theta)
    }
    fn solve_count(&self) -> u64 {
        self.0.solve_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjGradResult {
    pub x_next: DenseVector,
    pub theta_next: DenseVector,
    /// `γ∇̃`, so that `theta_next = θ − scaled_gradient`.
    pub scaled_gradient: DenseVector,
}

/// `∂J/∂θ + ⟨λ, ∂F/∂θ⟩` with `D₁F* λ = −∂J/∂x`, all at `(x, θ)`.
pub fn classical_gradient<P: ConstrainedProblem + ?Sized>(p: &P, x: &DenseVector, theta: &DenseVector) -> Result<DenseVector> {
    let rhs = -p.dj_dx(x, theta);
    let lambda = p.adjoint_solve(x, theta, &rhs)?;
    Ok(p.dj_dtheta(x, theta) + p.pair_df_dtheta(&lambda, x, theta))
}

/// One solver iteration followed by the adjoint gradient at the new state.
pub fn ns_adj_gradient<P: ConstrainedProblem + ?Sized>(
    p: &P,
    x: &DenseVector,
    theta: &DenseVector,
    gamma: f64,
) -> Result<AdjGradResult> {
    let x_next = all_finite(p.solver_iteration(x, theta))?;
    let grad = all_finite(classical_gradient(p, &x_next, theta)?)?;
    let scaled_gradient = grad * gamma;
    let theta_next = theta - &scaled_gradient;
    Ok(AdjGradResult { x_next, theta_next, scaled_gradient })
}

/// Result of iterating `G` to a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSolve {
    pub x: DenseVector,
    /// Number of `G` evaluations.
    pub iterations: u64,
    /// `‖G(x_prev) − x_prev‖` at the last check.
    pub residual: f64,
}

/// Iterates `x ← G(x; θ)` until `‖G(x) − x‖ ≤ tol`, returning the last image.
pub fn solve_constraint<P: ConstrainedProblem + ?Sized>(
    p: &P,
    x0: &DenseVector,
    theta: &DenseVector,
    tol: f64,
    max_iters: usize,
) -> Result<ConstraintSolve> {
    let mut x = x0.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let gx = p.solver_iteration(&x, theta);
        residual = (&gx - &x).norm();
        x = gx;
        if !residual.is_finite() {
            return Err(Error::NonFiniteIterate);
        }
        if residual <= tol {
            return Ok(ConstraintSolve { x, iterations: it as u64, residual });
        }
    }
    Err(Error::InnerSolveFailure { iters: max_iters, tol, residual })
}

/// `J(x(θ); θ)` with `x(θ)` the converged constraint solution.
pub fn reduced_objective<P: ConstrainedProblem + ?Sized>(
    p: &P,
    x0: &DenseVector,
    theta: &DenseVector,
    tol: f64,
    max_iters: usize,
) -> Result<f64> {
    let s = solve_constraint(p, x0, theta, tol, max_iters)?;
    Ok(p.objective(&s.x, theta))
}

/// Central finite differences of [`reduced_objective`], warm-started from `x0`.
pub fn reduced_gradient_fd<P: ConstrainedProblem + ?Sized>(
    p: &P,
    x0: &DenseVector,
    theta: &DenseVector,
    h: f64,
    tol: f64,
    max_iters: usize,
) -> Result<DenseVector> {
    let mut g = DenseVector::zeros(theta.len());
    for i in 0..theta.len() {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[i] += h;
        tm[i] -= h;
        g[i] = (reduced_objective(p, x0, &tp, tol, max_iters)? - reduced_objective(p, x0, &tm, tol, max_iters)?) / (2.0 * h);
    }
    Ok(g)
}

/// Relative gap `‖a − b‖ / max(‖b‖, tiny)`.
pub fn relative_error(a: &DenseVector, b: &DenseVector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn all_finite(x: DenseVector) -> Result<DenseVector> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::NonFiniteIterate)
    }
}

// ---------------------------------------------------------------------------
// Optimizer loops

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstrainedMethod {
    NsAdjGd,
    NsAdjNag,
    NsAdjAa,
    AdjGd,
    AdjNag,
    AdjAa,
}

impl ConstrainedMethod {
    pub const ALL: [ConstrainedMethod; 6] =
        [Self::NsAdjGd, Self::NsAdjNag, Self::NsAdjAa, Self::AdjGd, Self::AdjNag, Self::AdjAa];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NsAdjGd => "ns-adj-gd",
            Self::NsAdjNag => "ns-adj-nag",
            Self::NsAdjAa => "ns-adj-aa",
            Self::AdjGd => "adj-gd",
            Self::AdjNag => "adj-nag",
            Self::AdjAa => "adj-aa",
        }
    }

    pub fn is_split(self) -> bool {
        matches!(self, Self::NsAdjGd | Self::NsAdjNag | Self::NsAdjAa)
    }

    fn variant(self) -> Variant {
        match self {
            Self::NsAdjGd | Self::AdjGd => Variant::Gd,
            Self::NsAdjNag | Self::AdjNag => Variant::Nag,
            Self::NsAdjAa | Self::AdjAa => Variant::Aa,
        }
    }
}

impl fmt::Display for ConstrainedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstrainedMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("method.name", format!("unknown constrained method `{s}`")))
    }
}

/// Outer update rule shared by the split methods and the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Gd,
    Nag,
    Aa,
}

#[derive(Debug, Clone)]
pub struct AdjointConfig {
    pub gamma: StepSchedule,
    pub mu: f64,
    /// Anderson depth `m`.
    pub depth: usize,
    /// Objective threshold `η`.
    pub eta: f64,
    /// Constraint residual threshold `ε`.
    pub eps: f64,
    pub max_iters: usize,
    /// Objective above which the run is declared diverged.
    pub divergence_cost: Option<f64>,
    pub sign: CorrectionSign,
    /// Baseline constraint tolerance `‖G(x) − x‖ ≤ inner_tol`.
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for AdjointConfig {
    fn default() -> Self {
        Self {
            gamma: StepSchedule::Constant(0.1),
            mu: 0.9,
            depth: 5,
            eta: 0.0,
            eps: 1e-6,
            max_iters: 1000,
            divergence_cost: None,
            sign: CorrectionSign::Standard,
            inner_tol: 1e-6,
            max_inner: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedOutcome {
    pub x: DenseVector,
    pub theta: DenseVector,
    pub status: RunStatus,
    pub trace: Trace,
    pub failure: Option<String>,
}

/// One gradient evaluation: the new state, `γ∇̃`, the constraint residual
/// to report, and the number of `G` calls spent.
struct Eval {
    x: DenseVector,
    scaled: DenseVector,
    residual: f64,
    solves: u64,
}

fn evaluate<P: ConstrainedProblem + ?Sized>(
    p: &P,
    split: bool,
    x: &DenseVector,
    theta: &DenseVector,
    gamma: f64,
    cfg: &AdjointConfig,
) -> Result<Eval> {
    if split {
        let r = ns_adj_gradient(p, x, theta, gamma)?;
        let residual = (&r.x_next - x).norm();
        Ok(Eval { x: r.x_next, scaled: r.scaled_gradient, residual, solves: 1 })
    } else {
        let s = solve_constraint(p, x, theta, cfg.inner_tol, cfg.max_inner)?;
        let grad = all_finite(classical_gradient(p, &s.x, theta)?)?;
        Ok(Eval { x: s.x, scaled: grad * gamma, residual: s.residual, solves: s.iterations })
    }
}

struct Run<'a, P: ?Sized> {
    p: &'a P,
    cfg: &'a AdjointConfig,
    trace: Trace,
}

impl<P: ConstrainedProblem + ?Sized> Run<'_, P> {
    /// Records `J(x; θ)` and reports whether the run should stop.
    fn record(&mut self, x: &DenseVector, theta: &DenseVector, grad_norm: f64, step: f64, residual: Option<f64>, solves: u64) -> Option<RunStatus> {
        let j = self.p.objective(x, theta);
        self.trace.push(Some(j), grad_norm, step, residual, solves);
        let bad = !j.is_finite()
            || self.cfg.divergence_cost.is_some_and(|cap| j > cap)
            || theta.iter().any(|t| !t.is_finite());
        if bad {
            return Some(RunStatus::Diverged);
        }
        match residual {
            Some(r) if j <= self.cfg.eta && r <= self.cfg.eps => Some(RunStatus::Converged),
            _ => None,
        }
    }
}

/// Runs any of the six constrained optimizers.
pub fn run_constrained<P: ConstrainedProblem + ?Sized>(
    method: ConstrainedMethod,
    p: &P,
    x0: &DenseVector,
    theta0: &DenseVector,
    cfg: &AdjointConfig,
) -> ConstrainedOutcome {
    let split = method.is_split();
    let mut run = Run { p, cfg, trace: Trace::new() };
    let mut x = x0.clone();
    let mut theta = theta0.clone();
    macro_rules! finish {
        ($status:expr, $failure:expr) => {
            return ConstrainedOutcome { x, theta, status: $status, trace: run.trace, failure: $failure }
        };
    }
    macro_rules! eval {
        ($x:expr, $theta:expr, $k:expr) => {
            match evaluate(p, split, $x, $theta, cfg.gamma.at($k), cfg) {
                Ok(e) => e,
                Err(Error::NonFiniteIterate) => finish!(RunStatus::Diverged, None),
                Err(e) => finish!(RunStatus::Diverged, Some(e.to_string())),
            }
        };
    }
    if let Some(status) = run.record(&x, &theta, 0.0, 0.0, None, 0) {
        finish!(status, None);
    }
    match method.variant() {
        Variant::Gd => {
            for k in 0..cfg.max_iters {
                let e = eval!(&x, &theta, k);
                let grad_norm = e.scaled.norm() / cfg.gamma.at(k);
                theta -= &e.scaled;
                x = e.x;
                if let Some(s) = run.record(&x, &theta, grad_norm, e.scaled.norm(), Some(e.residual), e.solves) {
                    finish!(s, None);
                }
            }
        }
        Variant::Nag => {
            let mut v = DenseVector::zeros(theta.len());
            for k in 0..cfg.max_iters {
                let look = &theta - &v * cfg.mu;
                let e = eval!(&x, &look, k);
                let grad_norm = e.scaled.norm() / cfg.gamma.at(k);
                v = &v * cfg.mu + &e.scaled;
                theta -= &v;
                x = e.x;
                if let Some(s) = run.record(&x, &theta, grad_norm, v.norm(), Some(e.residual), e.solves) {
                    finish!(s, None);
                }
            }
        }
        Variant::Aa => {
            if cfg.max_iters == 0 {
                finish!(RunStatus::MaxIters, None);
            }
            // bootstrap: the state of the second evaluation is discarded
            let e0 = eval!(&x, &theta, 0);
            let g0 = -&e0.scaled;
            let theta1 = &theta + &g0;
            let e1 = eval!(&e0.x, &theta1, 0);
            let mut g = -&e1.scaled;
            let mut window = AndersonWindow::new(cfg.depth, theta.len()).push(&theta, &theta1, &g0, &g);
            theta = theta1;
            x = e0.x;
            let grad_norm = g0.norm() / cfg.gamma.at(0);
            if let Some(s) = run.record(&x, &theta, grad_norm, g0.norm(), Some(e0.residual), e0.solves + e1.solves) {
                finish!(s, None);
            }
            let mut stalled = 0usize;
            for k in 1..cfg.max_iters {
                let next = match window.propose(&theta, &g, cfg.sign) {
                    Ok(t) if t.iter().all(|v| v.is_finite()) => t,
                    _ => {
                        window = window.cleared();
                        &theta + &g
                    }
                };
                let e = eval!(&x, &next, k);
                let g_next = -&e.scaled;
                if g_next.norm() >= g.norm() {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                let step = (&next - &theta).norm();
                window = window.push(&theta, &next, &g, &g_next).truncate_to(cfg.depth.min(k));
                if stalled >= 2 * cfg.depth.max(1) {
                    window = window.cleared();
                    stalled = 0;
                }
                let grad_norm = g_next.norm() / cfg.gamma.at(k);
                theta = next;
                g = g_next;
                x = e.x;
                if let Some(s) = run.record(&x, &theta, grad_norm, step, Some(e.residual), e.solves) {
                    finish!(s, None);
                }
            }
        }
    }
    finish!(RunStatus::MaxIters, None)
}

pub fn ns_adj_gd<P: ConstrainedProblem + ?Sized>(p: &P, x0: &DenseVector, theta0: &DenseVector, cfg: &AdjointConfig) -> ConstrainedOutcome {
    run_constrained(ConstrainedMethod::NsAdjGd, p, x0, theta0, cfg)
}

pub fn ns_adj_nag<P: ConstrainedProblem + ?Sized>(p: &P, x0: &DenseVector, theta0: &DenseVector, cfg: &AdjointConfig) -> ConstrainedOutcome {
    run_constrained(ConstrainedMethod::NsAdjNag, p, x0, theta0, cfg)
}

pub fn ns_adj_aa<P: ConstrainedProblem + ?Sized>(p: &P, x0: &DenseVector, theta0: &DenseVector, cfg: &AdjointConfig) -> ConstrainedOutcome {
    run_constrained(ConstrainedMethod::NsAdjAa, p, x0, theta0, cfg)
}

/// Full-solve baseline: the constraint is converged to `cfg.inner_tol`
/// before every classical adjoint gradient.
pub fn adj_baseline<P: ConstrainedProblem + ?Sized>(
    p: &P,
    variant: Variant,
    x0: &DenseVector,
    theta0: &DenseVector,
    cfg: &AdjointConfig,
) -> ConstrainedOutcome {
    let method = match variant {
        Variant::Gd => ConstrainedMethod::AdjGd,
        Variant::Nag => ConstrainedMethod::AdjNag,
        Variant::Aa => ConstrainedMethod::AdjAa,
    };
    run_constrained(method, p, x0, theta0, cfg)
}
