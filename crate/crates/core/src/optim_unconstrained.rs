//! Unconstrained descent: explicit baselines, the implicit split-gradient
//! steps, their single-Newton linearizations, and Anderson mixing of the
//! linearized operator.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, sum_to_one_least_squares, DenseMatrix, DenseVector, LinalgError};
use crate::splitting::SplitGradientProblem;
use crate::trace::{RunStatus, Trace};

#[derive(Clone)]
pub enum StepSchedule {
    Constant(f64),
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl StepSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Constant(g) => *g,
            StepSchedule::Custom(f) => f(k),
        }
    }
}

impl fmt::Debug for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::Constant(g) => write!(f, "Constant({g})"),
            StepSchedule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<f64> for StepSchedule {
    fn from(g: f64) -> Self {
        StepSchedule::Constant(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMode {
    /// One linear solve when the splitting is linearly implicit, Newton otherwise.
    DirectLinear,
    Newton,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerSolveConfig {
    pub mode: InnerMode,
    pub tol: f64,
    pub max_inner: usize,
    pub damping: f64,
}

impl Default for InnerSolveConfig {
    fn default() -> Self {
        Self { mode: InnerMode::DirectLinear, tol: 1e-10, max_inner: 50, damping: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub gamma: StepSchedule,
    pub mu: f64,
    pub aa_depth: usize,
    pub max_iters: usize,
    pub cost_tol: f64,
    pub grad_tol: f64,
    /// Cost above which a run is declared diverged; `None` keeps only the
    /// non-finite check.
    pub divergence_cost: Option<f64>,
    /// Reject Anderson proposals whose cost exceeds that of the plain step.
    pub aa_safeguard: bool,
    pub inner: InnerSolveConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            gamma: StepSchedule::Constant(0.1),
            mu: 0.9,
            aa_depth: 5,
            max_iters: 1000,
            cost_tol: 0.0,
            grad_tol: 0.0,
            divergence_cost: Some(DIVERGENCE_COST),
            aa_safeguard: true,
            inner: InnerSolveConfig::default(),
        }
    }
}

pub const DIVERGENCE_COST: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnconstrainedMethod {
    Gd,
    Nag,
    Nsgd,
    Nsnag,
    #[serde(rename = "nsgd-newton1")]
    NsgdNewton1,
    #[serde(rename = "nsnag-newton1")]
    NsnagNewton1,
    #[serde(rename = "aa-newton1")]
    AaNewton1,
    AaGd,
}

impl UnconstrainedMethod {
    pub const ALL: [UnconstrainedMethod; 8] = [
        Self::Gd,
        Self::Nag,
        Self::Nsgd,
        Self::Nsnag,
        Self::NsgdNewton1,
        Self::NsnagNewton1,
        Self::AaNewton1,
        Self::AaGd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::Nag => "nag",
            Self::Nsgd => "nsgd",
            Self::Nsnag => "nsnag",
            Self::NsgdNewton1 => "nsgd-newton1",
            Self::NsnagNewton1 => "nsnag-newton1",
            Self::AaNewton1 => "aa-newton1",
            Self::AaGd => "aa-gd",
        }
    }

    pub fn uses_momentum(self) -> bool {
        matches!(self, Self::Nag | Self::Nsnag | Self::NsnagNewton1)
    }
}

impl fmt::Display for UnconstrainedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnconstrainedMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("method.name", format!("unknown unconstrained method `{s}`")))
    }
}

fn finite(x: DenseVector) -> Result<DenseVector> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::NonFiniteIterate)
    }
}

// ---------------------------------------------------------------------------
// Steppers

pub fn gd_step<P: SplitGradientProblem + ?Sized>(p: &P, x: &DenseVector, gamma: f64) -> Result<DenseVector> {
    finite(x - p.grad(x) * gamma)
}

pub fn nag_step<P: SplitGradientProblem + ?Sized>(
    p: &P,
    x: &DenseVector,
    v: &DenseVector,
    gamma: f64,
    mu: f64,
) -> Result<(DenseVector, DenseVector)> {
    let look = x + v * mu;
    let next = finite(&look - p.grad(&look) * gamma)?;
    let vel = &next - x;
    Ok((next, vel))
}

/// Solves `y + γ∇̃C(z, y) = b` for `y`. Returns `y` and the number of linear
/// solves.
fn implicit_solve<P: SplitGradientProblem + ?Sized>(
    p: &P,
    z: &DenseVector,
    b: &DenseVector,
    gamma: f64,
    inner: &InnerSolveConfig,
) -> Result<(DenseVector, u64)> {
    let n = p.dim();
    if inner.mode == InnerMode::DirectLinear {
        if let Some((l, g)) = p.li_structure(z) {
            let m = DenseMatrix::identity(n, n) + l * gamma;
            let y = lu_solve(&m, &(b - g * gamma))?;
            return Ok((finite(y)?, 1));
        }
    }
    let residual = |y: &DenseVector| y + p.split_grad(z, y) * gamma - b;
    // With a potential, R(y) is the gradient of
    // E(y) = ½‖y − b‖² + γ Φ_z(y) and Newton is globalized on E.
    let energy = |y: &DenseVector| p.split_potential(z, y).map(|phi| 0.5 * (y - b).norm_squared() + gamma * phi);
    let tol = inner.tol * (1.0 + b.norm());
    let mut y = b.clone();
    let mut r = residual(&y);
    let mut rn = r.norm();
    let mut solves = 0;
    let mut iters = 0;
    if inner.mode != InnerMode::FixedPoint {
        while rn > tol && iters < inner.max_inner {
            iters += 1;
            let jac = DenseMatrix::identity(n, n) + p.d2_split_grad(z, &y) * gamma;
            let mut delta = match lu_solve(&jac, &(-&r)) {
                Ok(d) => d,
                Err(LinalgError::SingularMatrix { .. }) => -&r,
                Err(e) => return Err(e.into()),
            };
            solves += 1;
            let next = if let Some(e0) = energy(&y) {
                if delta.dot(&r) >= 0.0 {
                    delta = shifted_newton_direction(&jac, &r);
                }
                let slope = delta.dot(&r);
                let mut t = inner.damping;
                let mut found = None;
                while t >= 1e-12 {
                    let trial = &y + &delta * t;
                    match energy(&trial) {
                        Some(e1) if e1.is_finite() => {
                            let tr = residual(&trial);
                            let trn = tr.norm();
                            // Near the root E stalls at rounding level while
                            // the residual still contracts.
                            if e1 <= e0 + 1e-4 * t * slope || trn <= 0.5 * rn {
                                found = Some((trial, tr, trn));
                                break;
                            }
                            t *= 0.5;
                        }
                        _ => t *= 0.5,
                    }
                }
                found
            } else {
                // Halve the step on residual increase. When no damped step
                // decreases the residual, ‖R‖ is stuck near a local minimum
                // and the undamped step is taken to leave it.
                let mut t = inner.damping;
                let mut found = None;
                while t >= 1.0 / 1024.0 {
                    let trial = &y + &delta * t;
                    let tr = residual(&trial);
                    let trn = tr.norm();
                    if trn.is_finite() && trn < rn {
                        found = Some((trial, tr, trn));
                        break;
                    }
                    t *= 0.5;
                }
                found.or_else(|| {
                    let trial = &y + &delta * inner.damping;
                    let tr = residual(&trial);
                    let trn = tr.norm();
                    (trn.is_finite() && delta.norm() > f64::EPSILON * (1.0 + y.norm())).then_some((trial, tr, trn))
                })
            };
            let Some((trial, tr, trn)) = next else { break };
            y = trial;
            r = tr;
            rn = trn;
        }
    }
    // fixed-point fallback: y ← b − γ∇̃C(z, y)
    while rn > tol && iters < inner.max_inner {
        iters += 1;
        y = b - p.split_grad(z, &y) * gamma;
        r = residual(&y);
        rn = r.norm();
        if !rn.is_finite() {
            return Err(Error::NonFiniteIterate);
        }
    }
    if rn > tol {
        return Err(Error::InnerSolveFailure { iters, tol, residual: rn });
    }
    Ok((finite(y)?, solves))
}

/// Direction `−(H + τI)⁻¹ r` for the smallest tried shift `τ ≥ 0` that makes
/// the symmetric part of `H` positive definite.
fn shifted_newton_direction(h: &DenseMatrix, r: &DenseVector) -> DenseVector {
    let n = h.nrows();
    let sym = (h + h.transpose()) * 0.5;
    let scale = sym.amax().max(1.0);
    let mut tau = 0.0;
    for _ in 0..40 {
        let shifted = &sym + DenseMatrix::identity(n, n) * tau;
        if let Some(chol) = shifted.cholesky() {
            return -chol.solve(r);
        }
        tau = if tau == 0.0 { 1e-8 * scale } else { tau * 10.0 };
    }
    -r
}

pub fn nsgd_step<P: SplitGradientProblem + ?Sized>(
    p: &P,
    x: &DenseVector,
    gamma: f64,
    inner: &InnerSolveConfig,
) -> Result<(DenseVector, u64)> {
    implicit_solve(p, x, x, gamma, inner)
}

pub fn nsnag_step<P: SplitGradientProblem + ?Sized>(
    p: &P,
    x: &DenseVector,
    v: &DenseVector,
    gamma: f64,
    mu: f64,
    inner: &InnerSolveConfig,
) -> Result<(DenseVector, DenseVector, u64)> {
    let look = x + v * mu;
    let (next, solves) = implicit_solve(p, &look, &look, gamma, inner)?;
    let vel = &next - x;
    Ok((next, vel, solves))
}

pub fn nsgd_newton1_step<P: SplitGradientProblem + ?Sized>(
    p: &P,
    x: &DenseVector,
    gamma: f64,
) -> Result<DenseVector> {
    let n = p.dim();
    let m = DenseMatrix::identity(n, n) + p.d2_split_grad(x, x) * gamma;
    let d = lu_solve(&m, &p.grad(x))?;
    finite(x - d * gamma)
}

pub fn nsnag_newton1_step<P: SplitGradientProblem + ?Sized>(
    p: &P,
    x: &DenseVector,
    v: &DenseVector,
    gamma: f64,
    mu: f64,
) -> Result<(DenseVector, DenseVector)> {
    let look = x + v * mu;
    let next = nsgd_newton1_step(p, &look, gamma)?;
    let vel = &next - x;
    Ok((next, vel))
}

// ---------------------------------------------------------------------------
// Anderson mixing of a fixed-point operator

/// History of iterates `x` and operator values `G̃(x)` for sum-to-one
/// Anderson mixing. Holds at most `depth + 1` pairs.
#[derive(Debug, Clone)]
pub struct AndersonMixer {
    depth: usize,
    xs: VecDeque<DenseVector>,
    gxs: VecDeque<DenseVector>,
}

impl AndersonMixer {
    pub fn new(depth: usize) -> Self {
        Self { depth, xs: VecDeque::new(), gxs: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn clear(&mut self) {
        self.xs.clear();
        self.gxs.clear();
    }

    /// Records `(x, G̃(x))` and returns the mixed iterate `Σ ηᵢ G̃(xᵢ)` with
    /// the weights `η`.
    pub fn mix(&mut self, x: &DenseVector, gx: &DenseVector) -> (DenseVector, DenseVector) {
        self.xs.push_back(x.clone());
        self.gxs.push_back(gx.clone());
        while self.xs.len() > self.depth + 1 {
            self.xs.pop_front();
            self.gxs.pop_front();
        }
        let cols: Vec<DenseVector> = self.xs.iter().zip(&self.gxs).map(|(x, g)| g - x).collect();
        let residuals = DenseMatrix::from_columns(&cols);
        let eta = match sum_to_one_least_squares(&residuals) {
            Ok(eta) => eta,
            Err(_) => {
                // unusable window: keep only the newest pair
                self.xs.drain(..self.xs.len() - 1);
                self.gxs.drain(..self.gxs.len() - 1);
                return (gx.clone(), DenseVector::from_element(1, 1.0));
            }
        };
        let mut mixed = DenseVector::zeros(x.len());
        for (g, &w) in self.gxs.iter().zip(eta.iter()) {
            mixed += g * w;
        }
        (mixed, eta)
    }
}

/// Outcome of a generic Anderson fixed-point run.
#[derive(Debug, Clone)]
pub struct FixedPointRun {
    pub x: DenseVector,
    pub residual_norms: Vec<f64>,
    pub weight_sums: Vec<f64>,
}

/// Anderson-mixed iteration of `op` from `x0`, stopping when
/// `‖op(x) − x‖ ≤ tol` or after `max_iters` proposals.
pub fn anderson_fixed_point<F>(op: F, x0: &DenseVector, depth: usize, max_iters: usize, tol: f64) -> Result<FixedPointRun>
where
    F: Fn(&DenseVector) -> Result<DenseVector>,
{
    let mut mixer = AndersonMixer::new(depth);
    let mut x = x0.clone();
    let mut residual_norms = Vec::new();
    let mut weight_sums = Vec::new();
    for _ in 0..=max_iters {
        let gx = op(&x)?;
        let rn = (&gx - &x).norm();
        residual_norms.push(rn);
        if rn <= tol || residual_norms.len() > max_iters {
            break;
        }
        let (next, eta) = mixer.mix(&x, &gx);
        weight_sums.push(eta.sum());
        x = finite(next)?;
    }
    Ok(FixedPointRun { x, residual_norms, weight_sums })
}

// ---------------------------------------------------------------------------
// Driver

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub x: DenseVector,
    pub status: RunStatus,
    pub trace: Trace,
    /// Reason for an early stop other than plain divergence.
    pub failure: Option<String>,
}

struct Recorder<'a, P: ?Sized> {
    p: &'a P,
    cfg: &'a OptimizerConfig,
    trace: Trace,
}

enum Check {
    Continue,
    Stop(RunStatus),
}

impl<'a, P: SplitGradientProblem + ?Sized> Recorder<'a, P> {
    fn record(&mut self, x: &DenseVector, step_norm: f64, solves: u64) -> Check {
        let cost = self.p.cost(x);
        let grad_norm = self.p.grad(x).norm();
        self.trace.push(cost, grad_norm, step_norm, None, solves);
        let bad_cost = cost.is_some_and(|c| !c.is_finite() || self.cfg.divergence_cost.is_some_and(|cap| c > cap));
        if bad_cost || !grad_norm.is_finite() {
            return Check::Stop(RunStatus::Diverged);
        }
        if cost.is_some_and(|c| c <= self.cfg.cost_tol) || grad_norm <= self.cfg.grad_tol {
            return Check::Stop(RunStatus::Converged);
        }
        Check::Continue
    }
}

/// Cost used by the Anderson safeguard, treating non-finite or missing values
/// as unusable.
fn merit<P: SplitGradientProblem + ?Sized>(p: &P, x: &DenseVector) -> Option<f64> {
    p.cost(x).filter(|c| c.is_finite())
}

pub fn run_unconstrained<P: SplitGradientProblem + ?Sized>(
    method: UnconstrainedMethod,
    p: &P,
    x0: &DenseVector,
    cfg: &OptimizerConfig,
) -> RunOutcome {
    let mut rec = Recorder { p, cfg, trace: Trace::new() };
    let mut x = x0.clone();
    let mut v = DenseVector::zeros(x.len());
    let mut mixer = AndersonMixer::new(cfg.aa_depth);
    let finish = |rec: Recorder<'_, P>, x: DenseVector, status, failure| RunOutcome {
        x,
        status,
        trace: rec.trace,
        failure,
    };
    if let Check::Stop(status) = rec.record(&x, 0.0, 0) {
        return finish(rec, x, status, None);
    }
    for k in 0..cfg.max_iters {
        let gamma = cfg.gamma.at(k);
        let step: Result<(DenseVector, u64)> = match method {
            UnconstrainedMethod::Gd => gd_step(p, &x, gamma).map(|y| (y, 0)),
            UnconstrainedMethod::Nag => nag_step(p, &x, &v, gamma, cfg.mu).map(|(y, nv)| {
                v = nv;
                (y, 0)
            }),
            UnconstrainedMethod::Nsgd => nsgd_step(p, &x, gamma, &cfg.inner),
            UnconstrainedMethod::Nsnag => nsnag_step(p, &x, &v, gamma, cfg.mu, &cfg.inner).map(|(y, nv, s)| {
                v = nv;
                (y, s)
            }),
            UnconstrainedMethod::NsgdNewton1 => nsgd_newton1_step(p, &x, gamma).map(|y| (y, 1)),
            UnconstrainedMethod::NsnagNewton1 => nsnag_newton1_step(p, &x, &v, gamma, cfg.mu).map(|(y, nv)| {
                v = nv;
                (y, 1)
            }),
            UnconstrainedMethod::AaNewton1 | UnconstrainedMethod::AaGd => {
                let (plain, solves) = if method == UnconstrainedMethod::AaNewton1 {
                    match nsgd_newton1_step(p, &x, gamma) {
                        Ok(y) => (y, 1),
                        Err(e) => return failed(rec.trace, x, e),
                    }
                } else {
                    match gd_step(p, &x, gamma) {
                        Ok(y) => (y, 0),
                        Err(e) => return failed(rec.trace, x, e),
                    }
                };
                let (mixed, _) = mixer.mix(&x, &plain);
                let accept = mixed.iter().all(|t| t.is_finite())
                    && (!cfg.aa_safeguard
                        || match (merit(p, &mixed), merit(p, &plain)) {
                            (Some(a), Some(b)) => a <= b,
                            (None, Some(_)) => false,
                            _ => true,
                        });
                if accept {
                    Ok((mixed, solves))
                } else {
                    mixer.clear();
                    Ok((plain, solves))
                }
            }
        };
        let (next, solves) = match step {
            Ok(s) => s,
            Err(e) => return failed(rec.trace, x, e),
        };
        let step_norm = (&next - &x).norm();
        x = next;
        if let Check::Stop(status) = rec.record(&x, step_norm, solves) {
            return finish(rec, x, status, None);
        }
    }
    finish(rec, x, RunStatus::MaxIters, None)
}

fn failed(trace: Trace, x: DenseVector, e: Error) -> RunOutcome {
    let failure = match e {
        Error::NonFiniteIterate => None,
        other => Some(other.to_string()),
    };
    RunOutcome { x, status: RunStatus::Diverged, trace, failure }
}

/// Anderson-accelerated single-Newton splitting descent.
pub fn aa_newton1_run<P: SplitGradientProblem + ?Sized>(p: &P, x0: &DenseVector, cfg: &OptimizerConfig) -> RunOutcome {
    run_unconstrained(UnconstrainedMethod::AaNewton1, p, x0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::benchmarks::{benchmark, BenchmarkName};
    use crate::splitting::{make_linearly_implicit, make_residual_splitting, FnResidual, LinearlyImplicit};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::from_row_slice(xs)
    }

    /// C = ‖x‖² with the exact linear splitting L = 2I.
    fn bowl(n: usize) -> LinearlyImplicit {
        make_linearly_implicit(
            n,
            Arc::new(move |_| DenseMatrix::identity(n, n) * 2.0),
            Arc::new(move |_| DenseVector::zeros(n)),
        )
        .unwrap()
        .with_cost(Arc::new(|x: &DenseVector| x.norm_squared()))
    }

    /// C = ½‖x‖².
    fn half_bowl(n: usize) -> LinearlyImplicit {
        make_linearly_implicit(
            n,
            Arc::new(move |_| DenseMatrix::identity(n, n)),
            Arc::new(move |_| DenseVector::zeros(n)),
        )
        .unwrap()
        .with_cost(Arc::new(|x: &DenseVector| 0.5 * x.norm_squared()))
    }

    fn zero_split(n: usize) -> LinearlyImplicit {
        make_linearly_implicit(
            n,
            Arc::new(move |_| DenseMatrix::zeros(n, n)),
            Arc::new(move |_| DenseVector::zeros(n)),
        )
        .unwrap()
    }

    #[test]
    fn gd_examples() {
        assert_eq!(gd_step(&bowl(2), &v(&[1.0, 0.0]), 0.25).unwrap(), v(&[0.5, 0.0]));
        assert_eq!(gd_step(&bowl(2), &v(&[0.0, 0.0]), 0.25).unwrap(), v(&[0.0, 0.0]));
        let ras = benchmark(BenchmarkName::Rastrigin);
        let y = gd_step(&ras.linearly_implicit, &v(&[2.0, 2.0]), 0.1).unwrap();
        assert!((y - v(&[1.6, 1.6])).amax() < 1e-12);
    }

    #[test]
    fn gd_non_finite() {
        let p = make_linearly_implicit(
            1,
            Arc::new(|_| DenseMatrix::identity(1, 1)),
            Arc::new(|_| DenseVector::from_element(1, f64::NAN)),
        )
        .unwrap();
        assert_eq!(gd_step(&p, &v(&[1.0]), 0.1).unwrap_err(), Error::NonFiniteIterate);
    }

    #[test]
    fn nag_examples() {
        let p = half_bowl(1);
        let (x, vel) = nag_step(&p, &v(&[1.0]), &v(&[0.5]), 0.1, 0.9).unwrap();
        assert_relative_eq!(x[0], 1.305, epsilon = 1e-14);
        assert_relative_eq!(vel[0], 0.305, epsilon = 1e-14);
        let (x, vel) = nag_step(&p, &v(&[1.0]), &v(&[0.0]), 0.1, 0.9).unwrap();
        assert_eq!(x, gd_step(&p, &v(&[1.0]), 0.1).unwrap());
        assert_relative_eq!(vel[0], -0.1);
        let (x, _) = nag_step(&p, &v(&[1.0]), &v(&[3.0]), 0.1, 0.0).unwrap();
        assert_eq!(x, gd_step(&p, &v(&[1.0]), 0.1).unwrap());
    }

    #[test]
    fn nsgd_examples() {
        let inner = InnerSolveConfig::default();
        let (x, solves) = nsgd_step(&bowl(1), &v(&[1.0]), 0.5, &inner).unwrap();
        assert_relative_eq!(x[0], 0.5);
        assert_eq!(solves, 1);
        let (x, _) = nsgd_step(&zero_split(2), &v(&[1.0, -2.0]), 0.5, &inner).unwrap();
        assert_eq!(x, v(&[1.0, -2.0]));
    }

    /// Scalar root of `f` on `[lo, hi]` by bisection.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo).signum() == f(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn nsgd_rastrigin_against_root_finder() {
        let ras = benchmark(BenchmarkName::Rastrigin);
        let (x, _) = nsgd_step(&ras.linearly_implicit, &v(&[2.0, 2.0]), 0.1, &InnerSolveConfig::default()).unwrap();
        // y + 0.1 (L(2) y) − 2 = 0 with L(2) = 2 + 20π sin(4π)/2
        let l2 = 2.0 + 20.0 * std::f64::consts::PI * (4.0 * std::f64::consts::PI).sin() / 2.0;
        let root = bisect(|y| y + 0.1 * l2 * y - 2.0, 0.0, 3.0);
        assert!((x[0] - root).abs() < 1e-12 && (x[1] - root).abs() < 1e-12);
        assert!((x[0] - 2.0 / 1.2).abs() < 1e-12);
    }

    #[test]
    fn nsgd_newton_inner_matches_direct_linear() {
        let ras = benchmark(BenchmarkName::Rosenbrock);
        let x = v(&[-0.7, 1.4]);
        let direct = nsgd_step(&ras.linearly_implicit, &x, 0.3, &InnerSolveConfig::default()).unwrap();
        let newton = InnerSolveConfig { mode: InnerMode::Newton, ..Default::default() };
        let iterative = nsgd_step(&ras.linearly_implicit, &x, 0.3, &newton).unwrap();
        assert!((direct.0 - iterative.0).amax() < 1e-10);
    }

    #[test]
    fn nsgd_fixed_point_mode() {
        let p = bowl(1);
        let cfg = InnerSolveConfig { mode: InnerMode::FixedPoint, max_inner: 200, ..Default::default() };
        let (x, solves) = nsgd_step(&p, &v(&[1.0]), 0.2, &cfg).unwrap();
        assert_relative_eq!(x[0], 1.0 / 1.4, epsilon = 1e-9);
        assert_eq!(solves, 0);
        let bad = InnerSolveConfig { mode: InnerMode::FixedPoint, max_inner: 3, ..Default::default() };
        assert!(matches!(nsgd_step(&p, &v(&[1.0]), 0.2, &bad), Err(Error::InnerSolveFailure { .. })));
    }

    #[test]
    fn nsnag_examples() {
        let inner = InnerSolveConfig::default();
        let p = bowl(1);
        let (x, vel, _) = nsnag_step(&p, &v(&[1.0]), &v(&[0.0]), 0.5, 0.9, &inner).unwrap();
        assert_relative_eq!(x[0], 0.5);
        assert_relative_eq!(vel[0], -0.5);
        let (x, vel, _) = nsnag_step(&zero_split(1), &v(&[1.0]), &v(&[0.5]), 0.5, 0.9, &inner).unwrap();
        assert_relative_eq!(x[0], 1.45);
        assert_relative_eq!(vel[0], 0.45);
        let a = nsnag_step(&p, &v(&[1.0]), &v(&[0.7]), 0.5, 0.0, &inner).unwrap();
        assert_eq!(a.0, nsgd_step(&p, &v(&[1.0]), 0.5, &inner).unwrap().0);
    }

    #[test]
    fn newton1_examples() {
        // D₂ = 0: reduces to gradient descent
        let p = make_linearly_implicit(
            1,
            Arc::new(|_| DenseMatrix::zeros(1, 1)),
            Arc::new(|x: &DenseVector| x * 3.0),
        )
        .unwrap();
        assert_eq!(nsgd_newton1_step(&p, &v(&[2.0]), 0.1).unwrap(), gd_step(&p, &v(&[2.0]), 0.1).unwrap());
        // C = ½x⁴ with L(x) = 2x²: x⁺ = 1 − (1 + 2)⁻¹·2
        let quartic = make_linearly_implicit(
            1,
            Arc::new(|x: &DenseVector| DenseMatrix::from_element(1, 1, 2.0 * x[0] * x[0])),
            Arc::new(|_| DenseVector::zeros(1)),
        )
        .unwrap();
        assert_relative_eq!(nsgd_newton1_step(&quartic, &v(&[1.0]), 1.0).unwrap()[0], 1.0 / 3.0, epsilon = 1e-15);
        // cross-check against a finite-difference D₂
        let h = 1e-6;
        let fd = (quartic.split_grad(&v(&[1.0]), &v(&[1.0 + h])) - quartic.split_grad(&v(&[1.0]), &v(&[1.0 - h])))[0]
            / (2.0 * h);
        let fd_step = 1.0 - (1.0 + fd).recip() * quartic.grad(&v(&[1.0]))[0];
        assert_relative_eq!(fd_step, 1.0 / 3.0, epsilon = 1e-8);
    }

    pub(crate) fn random_nls(rng: &mut Xoshiro256PlusPlus, rows: usize, cols: usize) -> FnResidual {
        let a = DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
        let b = DenseVector::from_fn(rows, |_, _| rng.gen_range(-1.0..1.0));
        let a2 = a.clone();
        FnResidual {
            out_dim: rows,
            in_dim: cols,
            residual: Arc::new(move |x| (&a * x).map(|t| t + 0.3 * t.powi(3)) - &b),
            jacobian: Arc::new(move |x| {
                let z = &a2 * x;
                let mut j = a2.clone();
                for i in 0..rows {
                    for c in 0..cols {
                        j[(i, c)] *= 1.0 + 0.9 * z[i] * z[i];
                    }
                }
                j
            }),
        }
    }

    #[test]
    fn inertial_lm_direct_assembly() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(31);
        let r = random_nls(&mut rng, 6, 3);
        let p = make_residual_splitting(r.clone()).unwrap();
        let x = v(&[0.2, -0.1, 0.4]);
        let vel = v(&[0.05, 0.02, -0.03]);
        let (gamma, mu) = (0.7, 0.6);
        let (next, _) = nsnag_newton1_step(&p, &x, &vel, gamma, mu).unwrap();
        let look = &x + &vel * mu;
        let j = (r.jacobian)(&look);
        let m = j.tr_mul(&j) * gamma + DenseMatrix::identity(3, 3);
        let d = lu_solve(&m, &(-(j.tr_mul(&(r.residual)(&look))) * gamma)).unwrap();
        let direct = look + d;
        assert!((&next - &direct).norm() <= 1e-12 * direct.norm());
    }

    #[test]
    fn mu_zero_collapses_momentum_variants() {
        let bench = benchmark(BenchmarkName::Beale);
        let p = &bench.linearly_implicit;
        let x = v(&[1.0, 0.3]);
        let vel = v(&[0.2, -0.4]);
        let inner = InnerSolveConfig::default();
        assert_eq!(nag_step(p, &x, &vel, 0.01, 0.0).unwrap().0, gd_step(p, &x, 0.01).unwrap());
        assert_eq!(nsnag_step(p, &x, &vel, 0.1, 0.0, &inner).unwrap().0, nsgd_step(p, &x, 0.1, &inner).unwrap().0);
        assert_eq!(nsnag_newton1_step(p, &x, &vel, 0.1, 0.0).unwrap().0, nsgd_newton1_step(p, &x, 0.1).unwrap());
        assert_eq!(
            nsnag_newton1_step(p, &x, &DenseVector::zeros(2), 0.1, 0.9).unwrap().0,
            nsgd_newton1_step(p, &x, 0.1).unwrap()
        );
    }

    #[test]
    fn anderson_secant_on_scalar_contraction() {
        let run = anderson_fixed_point(|x| Ok(x * 0.5), &v(&[1.0]), 1, 10, 1e-14).unwrap();
        // first proposal is the plain step 0.5, the second (two-point secant) is exact
        assert_eq!(run.residual_norms.len(), 3);
        assert!(run.x[0].abs() < 1e-15);
    }

    #[test]
    fn anderson_identity_operator() {
        let p = half_bowl(2);
        let x0 = v(&[0.0, 0.0]);
        let run = anderson_fixed_point(|x| Ok(x.clone()), &v(&[3.0, -1.0]), 2, 5, 0.0).unwrap();
        assert_eq!(run.x, v(&[3.0, -1.0]));
        let cfg = OptimizerConfig::default();
        let out = aa_newton1_run(&p, &x0, &cfg);
        assert_eq!(out.status, RunStatus::Converged);
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn anderson_linear_map_in_r5() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(41);
        let raw = DenseMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let norm = raw.clone().singular_values().amax();
        let b_mat = raw * (0.8 / norm);
        let c = DenseVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let exact = lu_solve(&(DenseMatrix::identity(5, 5) - &b_mat), &c).unwrap();
        let op = |x: &DenseVector| Ok(&b_mat * x + &c);
        let run = anderson_fixed_point(op, &DenseVector::zeros(5), 5, 5 + 6, 1e-10).unwrap();
        assert!(*run.residual_norms.last().unwrap() <= 1e-10);
        assert!((run.x - exact).norm() < 1e-9);
        assert!(run.weight_sums.iter().all(|s| (s - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn run_converged_at_iteration_zero() {
        let p = half_bowl(3);
        for method in UnconstrainedMethod::ALL {
            let out = run_unconstrained(method, &p, &DenseVector::zeros(3), &OptimizerConfig::default());
            assert_eq!(out.status, RunStatus::Converged, "{method}");
            assert_eq!(out.trace.len(), 1);
        }
    }

    #[test]
    fn run_grad_tol_implies_stationarity() {
        let bench = benchmark(BenchmarkName::Rosenbrock);
        let cfg = OptimizerConfig { gamma: 0.05.into(), grad_tol: 1e-6, max_iters: 20000, ..Default::default() };
        for method in [UnconstrainedMethod::Nsgd, UnconstrainedMethod::NsgdNewton1, UnconstrainedMethod::AaNewton1] {
            let out = run_unconstrained(method, &bench.linearly_implicit, &v(&[-1.0, 1.5]), &cfg);
            if out.status == RunStatus::Converged {
                assert!(bench.linearly_implicit.grad(&out.x).norm() <= 1e-6, "{method}");
            }
        }
    }

    #[test]
    fn run_rastrigin_nsgd_vs_gd() {
        let bench = benchmark(BenchmarkName::Rastrigin);
        let x0 = bench.reference_start();
        let cfg = OptimizerConfig { gamma: 0.1.into(), max_iters: 4000, cost_tol: 1e-10, ..Default::default() };
        let ns = run_unconstrained(UnconstrainedMethod::Nsgd, &bench.linearly_implicit, &x0, &cfg);
        assert!(ns.trace.final_cost().unwrap() <= 1e-10);
        let cfg = OptimizerConfig { gamma: 0.1.into(), max_iters: 10000, ..Default::default() };
        let gd = run_unconstrained(UnconstrainedMethod::Gd, &bench.linearly_implicit, &x0, &cfg);
        assert!(gd.trace.final_cost().unwrap() >= 1.0);
    }

    #[test]
    fn divergence_status() {
        let bench = benchmark(BenchmarkName::Rastrigin);
        let cfg = OptimizerConfig { gamma: 2.0.into(), max_iters: 10000, ..Default::default() };
        let out = run_unconstrained(UnconstrainedMethod::Gd, &bench.linearly_implicit, &bench.reference_start(), &cfg);
        assert_eq!(out.status, RunStatus::Diverged);
    }

    #[test]
    fn avf_descent_is_monotone() {
        let bench = benchmark(BenchmarkName::Rosenbrock);
        let avf = bench.avf(8);
        for gamma in [0.1, 1.0, 10.0] {
            let cfg = OptimizerConfig { gamma: gamma.into(), max_iters: 200, ..Default::default() };
            let out = run_unconstrained(UnconstrainedMethod::Nsgd, &avf, &bench.reference_start(), &cfg);
            assert_ne!(out.status, RunStatus::Diverged, "γ = {gamma}: {:?}", out.failure);
            let costs = out.trace.costs();
            for w in costs.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "γ = {gamma}: {} → {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in UnconstrainedMethod::ALL {
            assert_eq!(m.as_str().parse::<UnconstrainedMethod>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn lm_equivalence(seed in 0u64..10_000, gamma in 0.01f64..10.0) {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
                let r = random_nls(&mut rng, 5, 3);
                let p = make_residual_splitting(r.clone()).unwrap();
                let x = DenseVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
                let ns = nsgd_newton1_step(&p, &x, gamma).unwrap();
                let j = (r.jacobian)(&x);
                let sigma = 1.0 / gamma;
                let m = j.tr_mul(&j) + DenseMatrix::identity(3, 3) * sigma;
                let lm = &x + lu_solve(&m, &(-j.tr_mul(&(r.residual)(&x)))).unwrap();
                prop_assert!((&ns - &lm).norm() <= 1e-12 * lm.norm().max(1e-300));
            }

            #[test]
            fn mixer_weights_sum_to_one(seed in 0u64..10_000, depth in 1usize..6) {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
                let mut mixer = AndersonMixer::new(depth);
                let mut x = DenseVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
                for _ in 0..12 {
                    // occasionally repeat a point to exercise degenerate windows
                    let gx = if rng.gen_bool(0.2) { x.clone() } else { x.map(|t| (t * 1.3).sin()) };
                    let (next, eta) = mixer.mix(&x, &gx);
                    prop_assert!((eta.sum() - 1.0).abs() <= 1e-12);
                    x = next;
                }
            }
        }
    }
}
