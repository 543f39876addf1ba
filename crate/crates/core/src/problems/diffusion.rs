//! Terminal-state control of the 1-D heat equation under backward Euler.
//!
//! `x_{n+1} − x_n = Δt (A x_{n+1} + f_{n+1})` on `n` interior nodes of
//! `[0, 1]` with zero Dirichlet data, `J = ‖x_N − x*‖²`, controls
//! `f_1 … f_N`. The state is the whole chain `[x_1; …; x_N]`.
//!
//! The solver iteration is the α-blended pass
//! `(I − ΔtA) x⁺_{n+1} = (1 − α) x⁺_n + α x_n + Δt f_{n+1}`, which is the
//! sequential solve for α = 0 and fully decoupled across steps for α = 1.
//! Its fixed points are exactly the backward Euler chains, so the adjoint
//! works with the equivalent constraint `Φ(θ) − x = 0`, `Φ` the exact
//! chain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::adjoint::ConstrainedProblem;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, LuFactorization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub n_nodes: usize,
    pub final_time: f64,
    pub n_steps: usize,
    pub alpha: f64,
    /// `x₀ = sin(k₀ π s)`.
    pub initial_wavenumber: f64,
    /// `x* = sin(k* π s)`.
    pub target_wavenumber: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self { n_nodes: 50, final_time: 1.0, n_steps: 100, alpha: 0.0, initial_wavenumber: 6.0, target_wavenumber: 2.0 }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::config("problem.n_nodes", "must be positive"));
        }
        if self.n_steps == 0 {
            return Err(Error::config("problem.n_steps", "must be positive"));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::config("problem.final_time", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("problem.alpha", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionControlProblem {
    cfg: DiffusionConfig,
    dt: f64,
    a: DenseMatrix,
    lu: LuFactorization,
    x0: DenseVector,
    target: DenseVector,
}

/// Second-order central differences with zero Dirichlet data.
pub fn dirichlet_laplacian(n: usize) -> DenseMatrix {
    let h = 1.0 / (n + 1) as f64;
    let s = 1.0 / (h * h);
    DenseMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0 * s,
        1 => s,
        _ => 0.0,
    })
}

impl DiffusionControlProblem {
    pub fn new(cfg: DiffusionConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_nodes;
        let h = 1.0 / (n + 1) as f64;
        let grid = |k: f64| DenseVector::from_fn(n, |i, _| (k * PI * (i + 1) as f64 * h).sin());
        let x0 = grid(cfg.initial_wavenumber);
        let target = grid(cfg.target_wavenumber);
        Self::with_data(cfg, x0, target)
    }

    pub fn with_data(cfg: DiffusionConfig, x0: DenseVector, target: DenseVector) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_nodes;
        if x0.len() != n || target.len() != n {
            return Err(Error::config("problem.n_nodes", "initial and target states must have n_nodes entries"));
        }
        let dt = cfg.final_time / cfg.n_steps as f64;
        let a = dirichlet_laplacian(n);
        let m = DenseMatrix::identity(n, n) - &a * dt;
        let lu = LuFactorization::new(&m).expect("I − ΔtA is nonsingular for a negative-definite A");
        Ok(Self { cfg, dt, a, lu, x0, target })
    }

    pub fn config(&self) -> &DiffusionConfig {
        &self.cfg
    }

    pub fn alpha(&self) -> f64 {
        self.cfg.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.cfg.alpha = alpha;
        self.cfg.validate()?;
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn laplacian(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn x0(&self) -> &DenseVector {
        &self.x0
    }

    pub fn target(&self) -> &DenseVector {
        &self.target
    }

    pub fn n_nodes(&self) -> usize {
        self.cfg.n_nodes
    }

    pub fn n_steps(&self) -> usize {
        self.cfg.n_steps
    }

    fn block(v: &DenseVector, k: usize, n: usize) -> DenseVector {
        v.rows(k * n, n).into_owned()
    }

    /// `x_N` from a chain.
    pub fn terminal(&self, chain: &DenseVector) -> DenseVector {
        Self::block(chain, self.cfg.n_steps - 1, self.cfg.n_nodes)
    }

    /// One α-blended pass over the chain.
    pub fn diffusion_forward_split(&self, prev: &DenseVector, forces: &DenseVector, alpha: f64) -> DenseVector {
        let (n, steps) = (self.cfg.n_nodes, self.cfg.n_steps);
        let mut next = DenseVector::zeros(n * steps);
        let mut cur = self.x0.clone();
        for k in 0..steps {
            let old = if k == 0 { self.x0.clone() } else { Self::block(prev, k - 1, n) };
            let rhs = &cur * (1.0 - alpha) + old * alpha + Self::block(forces, k, n) * self.dt;
            cur = self.lu.solve(&rhs).expect("factorization is nonsingular");
            next.rows_mut(k * n, n).copy_from(&cur);
        }
        next
    }

    /// Sequential backward Euler chain for the given forces.
    pub fn exact_chain(&self, forces: &DenseVector) -> DenseVector {
        self.diffusion_forward_split(forces, forces, 0.0)
    }

    /// `‖x_N − x*‖²` of a chain.
    pub fn terminal_cost(&self, chain: &DenseVector) -> f64 {
        (self.terminal(chain) - &self.target).norm_squared()
    }

    /// Objective of the exact chain driven by `forces`.
    pub fn true_objective(&self, forces: &DenseVector) -> f64 {
        self.terminal_cost(&self.exact_chain(forces))
    }

    /// Backward recursion from `λ_N = 2(x_N − x*)` with
    /// `(I − ΔtA)ᵀ λ_n = λ_{n+1}`; returns `λ_0 … λ_N`.
    pub fn diffusion_adjoint(&self, x_n: &DenseVector) -> Vec<DenseVector> {
        let steps = self.cfg.n_steps;
        let mut lam = vec![DenseVector::zeros(self.cfg.n_nodes); steps + 1];
        lam[steps] = (x_n - &self.target) * 2.0;
        for k in (0..steps).rev() {
            lam[k] = self.lu.solve_transpose(&lam[k + 1]).expect("factorization is nonsingular");
        }
        lam
    }

    /// `∇_{f_n} J = Δt λ_{n−1}`, stacked over `n = 1 … N`.
    pub fn force_gradient(&self, x_n: &DenseVector) -> DenseVector {
        let lam = self.diffusion_adjoint(x_n);
        let n = self.cfg.n_nodes;
        let mut g = DenseVector::zeros(n * self.cfg.n_steps);
        for k in 0..self.cfg.n_steps {
            g.rows_mut(k * n, n).copy_from(&(&lam[k] * self.dt));
        }
        g
    }

    /// Starting chain: the exact chain without forcing.
    pub fn initial_chain(&self) -> DenseVector {
        self.exact_chain(&DenseVector::zeros(self.param_dim()))
    }
}

impl ConstrainedProblem for DiffusionControlProblem {
    fn state_dim(&self) -> usize {
        self.cfg.n_nodes * self.cfg.n_steps
    }

    fn param_dim(&self) -> usize {
        self.state_dim()
    }

    fn solver_iteration(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        self.diffusion_forward_split(x, theta, self.cfg.alpha)
    }

    fn objective(&self, x: &DenseVector, _theta: &DenseVector) -> f64 {
        self.terminal_cost(x)
    }

    fn dj_dx(&self, x: &DenseVector, _theta: &DenseVector) -> DenseVector {
        let n = self.cfg.n_nodes;
        let mut g = DenseVector::zeros(x.len());
        g.rows_mut(x.len() - n, n).copy_from(&((self.terminal(x) - &self.target) * 2.0));
        g
    }

    fn dj_dtheta(&self, _x: &DenseVector, theta: &DenseVector) -> DenseVector {
        DenseVector::zeros(theta.len())
    }

    /// `D₁F = −I` for `F = Φ(θ) − x`.
    fn adjoint_solve(&self, _x: &DenseVector, _theta: &DenseVector, rhs: &DenseVector) -> Result<DenseVector> {
        Ok(-rhs)
    }

    /// `(∂Φ/∂θ)ᵀ λ` by the backward recursion
    /// `(I − ΔtA)ᵀ μ_n = λ_n + μ_{n+1}`, `∇_{f_n} = Δt μ_n`.
    fn pair_df_dtheta(&self, lambda: &DenseVector, _x: &DenseVector, _theta: &DenseVector) -> DenseVector {
        let n = self.cfg.n_nodes;
        let mut out = DenseVector::zeros(lambda.len());
        let mut carry = DenseVector::zeros(n);
        for k in (0..self.cfg.n_steps).rev() {
            carry = self.lu.solve_transpose(&(Self::block(lambda, k, n) + &carry)).expect("factorization is nonsingular");
            out.rows_mut(k * n, n).copy_from(&(&carry * self.dt));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::{
        adj_baseline, classical_gradient, ns_adj_aa, ns_adj_gd, ns_adj_gradient, reduced_gradient_fd, relative_error,
        AdjointConfig, Variant,
    };
    use crate::trace::RunStatus;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn small(alpha: f64) -> DiffusionControlProblem {
        DiffusionControlProblem::new(DiffusionConfig { n_nodes: 8, n_steps: 10, alpha, ..Default::default() }).unwrap()
    }

    fn random_forces(p: &DiffusionControlProblem, seed: u64) -> DenseVector {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        DenseVector::from_fn(p.param_dim(), |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Straight-line backward Euler with an explicit inverse.
    fn reference_chain(p: &DiffusionControlProblem, f: &DenseVector) -> Vec<DenseVector> {
        let n = p.n_nodes();
        let m = DenseMatrix::identity(n, n) - p.laplacian() * p.dt();
        let minv = m.try_inverse().unwrap();
        let mut xs = vec![p.x0().clone()];
        for k in 0..p.n_steps() {
            let next = &minv * (xs[k].clone() + f.rows(k * n, n) * p.dt());
            xs.push(next);
        }
        xs
    }

    #[test]
    fn laplacian_is_symmetric_negative_definite() {
        let a = dirichlet_laplacian(6);
        assert_eq!(a, a.transpose());
        assert!(a.clone().symmetric_eigenvalues().iter().all(|&l| l < 0.0));
    }

    #[test]
    fn sequential_pass_matches_reference() {
        let p = small(0.0);
        let f = random_forces(&p, 1);
        let chain = p.diffusion_forward_split(&DenseVector::zeros(p.state_dim()), &f, 0.0);
        let reference = reference_chain(&p, &f);
        for k in 0..p.n_steps() {
            let blk = chain.rows(k * 8, 8);
            assert!((blk - &reference[k + 1]).amax() <= 1e-12);
        }
    }

    #[test]
    fn unforced_zero_start_stays_zero() {
        let cfg = DiffusionConfig { n_nodes: 8, n_steps: 10, ..Default::default() };
        let p = DiffusionControlProblem::with_data(cfg, DenseVector::zeros(8), DenseVector::zeros(8)).unwrap();
        for alpha in [0.0, 0.5, 1.0] {
            let out = p.diffusion_forward_split(&DenseVector::zeros(80), &DenseVector::zeros(80), alpha);
            assert_eq!(out.amax(), 0.0);
        }
    }

    #[test]
    fn exact_chain_is_a_fixed_point_of_every_blend() {
        let p = small(1.0);
        let f = random_forces(&p, 2);
        let exact = p.exact_chain(&f);
        for alpha in [0.5, 1.0] {
            let next = p.diffusion_forward_split(&exact, &f, alpha);
            assert!((next - &exact).amax() <= 1e-12);
        }
    }

    #[test]
    fn one_step_scalar_hand_check() {
        let cfg = DiffusionConfig { n_nodes: 1, n_steps: 1, final_time: 1.0, ..Default::default() };
        let p = DiffusionControlProblem::with_data(cfg, DenseVector::from_element(1, 1.0), DenseVector::from_element(1, 0.25))
            .unwrap();
        // A = −2/h² with h = ½, so I − ΔtA = 9
        let f = DenseVector::from_element(1, 0.5);
        let x1 = p.exact_chain(&f);
        assert!((x1[0] - 1.5 / 9.0).abs() < 1e-15);
        let lam = p.diffusion_adjoint(&x1);
        assert!((lam[1][0] - 2.0 * (x1[0] - 0.25)).abs() < 1e-15);
        let g = p.force_gradient(&x1);
        assert!((g[0] - lam[1][0] / 9.0).abs() < 1e-15);
    }

    #[test]
    fn on_target_gives_zero_gradient() {
        let p = small(0.0);
        let lam = p.diffusion_adjoint(&p.target().clone());
        assert!(lam.iter().all(|l| l.amax() == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for alpha in [0.0, 0.5, 1.0] {
            let p = small(alpha);
            let f = random_forces(&p, 3) * 0.1;
            let x = p.exact_chain(&f);
            let g = classical_gradient(&p, &x, &f).unwrap();
            assert!(relative_error(&g, &p.force_gradient(&p.terminal(&x))) <= 1e-12);
            let fd = reduced_gradient_fd(&p, &p.initial_chain(), &f, 1e-6, 1e-13, 1000).unwrap();
            assert!(relative_error(&g, &fd) <= 1e-6, "α = {alpha}: {}", relative_error(&g, &fd));
        }
    }

    #[test]
    fn split_step_with_zero_alpha_is_the_classical_step() {
        let p = small(0.0);
        let f = random_forces(&p, 4) * 0.1;
        let gamma = 0.7;
        let r = ns_adj_gradient(&p, &p.initial_chain(), &f, gamma).unwrap();
        // independent arithmetic: reference chain, then backward recursion with an inverse
        let xs = reference_chain(&p, &f);
        let n = p.n_nodes();
        let m = DenseMatrix::identity(n, n) - p.laplacian() * p.dt();
        let mt_inv = m.transpose().try_inverse().unwrap();
        let mut lam = (&xs[p.n_steps()] - p.target()) * 2.0;
        let mut expected = f.clone();
        for k in (0..p.n_steps()).rev() {
            lam = &mt_inv * lam;
            let blk = f.rows(k * n, n) - &lam * (gamma * p.dt());
            expected.rows_mut(k * n, n).copy_from(&blk);
        }
        assert!((r.theta_next - expected).amax() <= 1e-12);
    }

    #[test]
    fn zero_alpha_split_descent_matches_baseline_trace() {
        let p = small(0.0);
        let cfg = AdjointConfig { gamma: (10.0 / p.dt()).into(), max_iters: 60, eps: 0.0, ..Default::default() };
        let x0 = p.initial_chain();
        let t0 = DenseVector::zeros(p.param_dim());
        let ns = ns_adj_gd(&p, &x0, &t0, &cfg);
        let base = adj_baseline(&p, Variant::Gd, &x0, &t0, &cfg);
        for (a, b) in ns.trace.records.iter().zip(&base.trace.records) {
            assert!((a.cost.unwrap() - b.cost.unwrap()).abs() <= 1e-10);
        }
        assert!(ns.trace.final_cost().unwrap() < 1e-3 * ns.trace.first().unwrap().cost.unwrap());
    }

    #[test]
    fn anderson_reaches_the_same_stationary_value() {
        let p = small(0.5);
        let x0 = p.initial_chain();
        let t0 = DenseVector::zeros(p.param_dim());
        let cfg = AdjointConfig { gamma: (10.0 / p.dt()).into(), max_iters: 2000, eps: 1e-12, eta: 1e-14, ..Default::default() };
        let gd = ns_adj_gd(&p, &x0, &t0, &cfg);
        let aa = ns_adj_aa(&p, &x0, &t0, &cfg);
        assert_eq!(gd.status, RunStatus::Converged);
        let (jg, ja) = (gd.trace.final_cost().unwrap(), aa.trace.final_cost().unwrap());
        assert!((jg - ja).abs() <= 1e-8, "{jg} vs {ja}");
    }
}
