//! Source optimization for one-group slab transport with flux-dependent
//! scattering.
//!
//! `μ ∂ψ/∂x + σ_t ψ = ½ σ_s(φ) φ + q` on `[0, L]`, `φ = Σ_d w_d ψ_d`,
//! `σ_s(φ) = σ_s0 + α φ²`, discretized with diamond differences over
//! Gauss–Legendre angles. The state and the source are stored angle-major:
//! entry `d·n_cells + i` is angle `d`, cell `i`.
//!
//! One solver iteration is a transport sweep with the scattering source
//! frozen at the incoming state. The objective is
//! `J = ½ Σ h w_d (ψ − ψ_tar)²`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::adjoint::ConstrainedProblem;
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::splitting::gauss_legendre;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Transport1DConfig {
    pub n_cells: usize,
    pub n_angles: usize,
    pub length: f64,
    pub sigma_t: f64,
    pub sigma_s0: f64,
    pub alpha_scatter: f64,
    /// Isotropic inflow at both faces.
    pub inflow: f64,
    pub adjoint_tol: f64,
    pub adjoint_max_iters: usize,
}

impl Default for Transport1DConfig {
    fn default() -> Self {
        Self {
            n_cells: 64,
            n_angles: 8,
            length: 1.0,
            sigma_t: 2.0,
            sigma_s0: 1.0,
            alpha_scatter: 0.02,
            inflow: 0.5,
            adjoint_tol: 1e-10,
            adjoint_max_iters: 10_000,
        }
    }
}

impl Transport1DConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::config("problem.n_cells", "must be positive"));
        }
        if self.n_angles == 0 || self.n_angles % 2 != 0 {
            return Err(Error::config("problem.n_angles", "must be a positive even integer"));
        }
        for (path, v) in [("problem.length", self.length), ("problem.sigma_t", self.sigma_t)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(path, "must be positive and finite"));
            }
        }
        if !(self.sigma_s0 >= 0.0 && self.sigma_s0 < self.sigma_t) {
            return Err(Error::config("problem.sigma_s0", "must lie in [0, sigma_t)"));
        }
        if !(self.alpha_scatter >= 0.0) {
            return Err(Error::config("problem.alpha_scatter", "must be non-negative"));
        }
        if !(self.adjoint_tol > 0.0) {
            return Err(Error::config("problem.adjoint_tol", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Transport1DProblem {
    cfg: Transport1DConfig,
    mu: Vec<f64>,
    weights: Vec<f64>,
    h: f64,
    target: DenseVector,
    forward_sweeps: AtomicU64,
    adjoint_sweeps: AtomicU64,
}

impl Clone for Transport1DProblem {
    fn clone(&self) -> Self {
        Self {
            cfg: self.cfg.clone(),
            mu: self.mu.clone(),
            weights: self.weights.clone(),
            h: self.h,
            target: self.target.clone(),
            forward_sweeps: AtomicU64::new(self.forward_sweeps()),
            adjoint_sweeps: AtomicU64::new(self.adjoint_sweeps()),
        }
    }
}

/// Smooth, mildly anisotropic source whose solution serves as the target.
pub fn reference_source(x: f64, mu: f64) -> f64 {
    0.5 + 0.5 * (PI * x).sin() + 0.25 * mu * (PI * x).cos()
}

impl Transport1DProblem {
    /// Builds the problem with the target taken as the converged state for
    /// [`reference_source`].
    pub fn new(cfg: Transport1DConfig) -> Result<Self> {
        let mut p = Self::with_target(cfg, None)?;
        let q_ref = p.source_from_fn(reference_source);
        let tar = p.solve_state(&q_ref, 1e-12, 100_000)?;
        p.target = tar;
        p.reset_counters();
        Ok(p)
    }

    /// Builds the problem with a given target (zero if `None`).
    pub fn with_target(cfg: Transport1DConfig, target: Option<DenseVector>) -> Result<Self> {
        cfg.validate()?;
        let (mu, weights) = gauss_legendre(cfg.n_angles);
        let n = cfg.n_cells * cfg.n_angles;
        let target = target.unwrap_or_else(|| DenseVector::zeros(n));
        if target.len() != n {
            return Err(Error::config("problem.target", format!("expected {n} entries, found {}", target.len())));
        }
        let h = cfg.length / cfg.n_cells as f64;
        Ok(Self {
            cfg,
            mu,
            weights,
            h,
            target,
            forward_sweeps: AtomicU64::new(0),
            adjoint_sweeps: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &Transport1DConfig {
        &self.cfg
    }

    pub fn n_cells(&self) -> usize {
        self.cfg.n_cells
    }

    pub fn n_angles(&self) -> usize {
        self.cfg.n_angles
    }

    pub fn cell_width(&self) -> f64 {
        self.h
    }

    pub fn angles(&self) -> &[f64] {
        &self.mu
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Replaces the angular weights, keeping the nodes.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), self.mu.len());
        self.weights = weights;
        self
    }

    pub fn target(&self) -> &DenseVector {
        &self.target
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        (0..self.cfg.n_cells).map(|i| (i as f64 + 0.5) * self.h).collect()
    }

    /// Samples `f(x_i, μ_d)` in the state layout.
    pub fn source_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> DenseVector {
        let nc = self.cfg.n_cells;
        let xs = self.cell_centers();
        DenseVector::from_fn(nc * self.cfg.n_angles, |k, _| f(xs[k % nc], self.mu[k / nc]))
    }

    pub fn forward_sweeps(&self) -> u64 {
        self.forward_sweeps.load(Ordering::Relaxed)
    }

    pub fn adjoint_sweeps(&self) -> u64 {
        self.adjoint_sweeps.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.forward_sweeps.store(0, Ordering::Relaxed);
        self.adjoint_sweeps.store(0, Ordering::Relaxed);
    }

    /// `φ_i = Σ_d w_d ψ_{d,i}`.
    pub fn scalar_flux(&self, psi: &DenseVector) -> Vec<f64> {
        let nc = self.cfg.n_cells;
        let mut phi = vec![0.0; nc];
        for (d, w) in self.weights.iter().enumerate() {
            for (i, p) in phi.iter_mut().enumerate() {
                *p += w * psi[d * nc + i];
            }
        }
        phi
    }

    pub fn sigma_s(&self, phi: f64) -> f64 {
        self.cfg.sigma_s0 + self.cfg.alpha_scatter * phi * phi
    }

    /// Derivative of `σ_s(φ) φ` in `φ`.
    pub fn sigma_s_adjoint(&self, phi: f64) -> f64 {
        self.cfg.sigma_s0 + 3.0 * self.cfg.alpha_scatter * phi * phi
    }

    /// Diamond-difference sweep of angle `d` in direction `sign(dir)` with
    /// entry value `entry`; returns the cell averages and the exit value.
    fn sweep_angle(&self, dir: f64, src: &[f64], entry: f64, out: &mut [f64]) -> f64 {
        let nc = self.cfg.n_cells;
        let a = dir.abs() / self.h;
        let denom = 2.0 * a + self.cfg.sigma_t;
        let mut e = entry;
        let mut step = |i: usize| {
            let c = (src[i] + 2.0 * a * e) / denom;
            out[i] = c;
            e = 2.0 * c - e;
        };
        if dir > 0.0 {
            (0..nc).for_each(&mut step);
        } else {
            (0..nc).rev().for_each(&mut step);
        }
        e
    }

    /// One transport solve of `μ ∂ψ/∂x + σ_t ψ = source` with per-angle entry
    /// values. Counts as one sweep. Returns the angular flux and per-angle
    /// exit values.
    pub fn sweep_with_exits(&self, source: &DenseVector, inflow: &[f64]) -> (DenseVector, Vec<f64>) {
        self.forward_sweeps.fetch_add(1, Ordering::Relaxed);
        let nc = self.cfg.n_cells;
        let mut psi = DenseVector::zeros(source.len());
        let mut exits = vec![0.0; self.mu.len()];
        for (d, &m) in self.mu.iter().enumerate() {
            let r = d * nc..(d + 1) * nc;
            exits[d] = self.sweep_angle(m, &source.as_slice()[r.clone()], inflow[d], &mut psi.as_mut_slice()[r]);
        }
        (psi, exits)
    }

    pub fn sweep(&self, source: &DenseVector, inflow: &[f64]) -> DenseVector {
        self.sweep_with_exits(source, inflow).0
    }

    /// Reverse-direction sweep with zero entry values: the transpose of the
    /// zero-inflow forward sweep.
    pub fn adjoint_sweep(&self, source: &DenseVector) -> DenseVector {
        self.adjoint_sweeps.fetch_add(1, Ordering::Relaxed);
        let nc = self.cfg.n_cells;
        let mut p = DenseVector::zeros(source.len());
        for (d, &m) in self.mu.iter().enumerate() {
            let r = d * nc..(d + 1) * nc;
            self.sweep_angle(-m, &source.as_slice()[r.clone()], 0.0, &mut p.as_mut_slice()[r]);
        }
        p
    }

    pub fn inflow(&self) -> Vec<f64> {
        vec![self.cfg.inflow; self.mu.len()]
    }

    /// `½ σ(φ_i) · v_i` broadcast over angles.
    fn broadcast(&self, v: impl Fn(usize) -> f64) -> DenseVector {
        let nc = self.cfg.n_cells;
        DenseVector::from_fn(nc * self.mu.len(), |k, _| 0.5 * v(k % nc))
    }

    /// Frozen-scattering sweep: `G(ψ; q)`.
    pub fn transport1d_solver_iteration(&self, psi: &DenseVector, q: &DenseVector) -> DenseVector {
        let phi = self.scalar_flux(psi);
        let src = self.broadcast(|i| self.sigma_s(phi[i]) * phi[i]) + q;
        self.sweep(&src, &self.inflow())
    }

    /// Iterates [`Self::transport1d_solver_iteration`] from zero.
    pub fn solve_state(&self, q: &DenseVector, tol: f64, max_iters: usize) -> Result<DenseVector> {
        let mut psi = DenseVector::zeros(q.len());
        for _ in 0..max_iters {
            let next = self.transport1d_solver_iteration(&psi, q);
            let r = (&next - &psi).norm();
            psi = next;
            if !r.is_finite() {
                return Err(Error::NonFiniteIterate);
            }
            if r <= tol {
                return Ok(psi);
            }
        }
        Err(Error::InnerSolveFailure { iters: max_iters, tol, residual: f64::NAN })
    }

    /// `h w_d` in the state layout.
    pub fn mass(&self) -> DenseVector {
        let nc = self.cfg.n_cells;
        DenseVector::from_fn(nc * self.mu.len(), |k, _| self.h * self.weights[k / nc])
    }

    /// Adjoint flux `p_ψ` for a Euclidean right-hand side: source iteration of
    /// reverse sweeps with scattering `σ̃_s = σ_s0 + 3αφ²` and source
    /// `M⁻¹ rhs`, where `M = h w_d`.
    pub fn transport1d_adjoint_solve(&self, psi: &DenseVector, rhs: &DenseVector) -> Result<DenseVector> {
        let phi = self.scalar_flux(psi);
        let sig: Vec<f64> = phi.iter().map(|&f| self.sigma_s_adjoint(f)).collect();
        let forcing = rhs.component_div(&self.mass());
        let mut p = DenseVector::zeros(rhs.len());
        if forcing.iter().all(|&v| v == 0.0) {
            return Ok(p);
        }
        let mut residual = f64::INFINITY;
        for _ in 0..self.cfg.adjoint_max_iters {
            let phi_p = self.scalar_flux(&p);
            let src = self.broadcast(|i| sig[i] * phi_p[i]) + &forcing;
            let next = self.adjoint_sweep(&src);
            residual = (&next - &p).norm();
            p = next;
            if !residual.is_finite() {
                return Err(Error::NonFiniteIterate);
            }
            if residual <= self.cfg.adjoint_tol {
                return Ok(p);
            }
        }
        Err(Error::InnerSolveFailure { iters: self.cfg.adjoint_max_iters, tol: self.cfg.adjoint_tol, residual })
    }

    /// Parameter gradient from the adjoint flux: `−h w_d p_ψ`.
    pub fn transport1d_gradient_pairing(&self, p_psi: &DenseVector) -> DenseVector {
        -p_psi.component_mul(&self.mass())
    }
}

impl ConstrainedProblem for Transport1DProblem {
    fn state_dim(&self) -> usize {
        self.cfg.n_cells * self.mu.len()
    }

    fn param_dim(&self) -> usize {
        self.state_dim()
    }

    fn solver_iteration(&self, x: &DenseVector, theta: &DenseVector) -> DenseVector {
        self.transport1d_solver_iteration(x, theta)
    }

    fn objective(&self, x: &DenseVector, _theta: &DenseVector) -> f64 {
        let d = x - &self.target;
        0.5 * d.component_mul(&d).dot(&self.mass())
    }

    fn dj_dx(&self, x: &DenseVector, _theta: &DenseVector) -> DenseVector {
        (x - &self.target).component_mul(&self.mass())
    }

    fn dj_dtheta(&self, _x: &DenseVector, theta: &DenseVector) -> DenseVector {
        DenseVector::zeros(theta.len())
    }

    fn adjoint_solve(&self, x: &DenseVector, _theta: &DenseVector, rhs: &DenseVector) -> Result<DenseVector> {
        self.transport1d_adjoint_solve(x, rhs)
    }

    fn pair_df_dtheta(&self, lambda: &DenseVector, _x: &DenseVector, _theta: &DenseVector) -> DenseVector {
        self.transport1d_gradient_pairing(lambda)
    }

    fn solve_count(&self) -> u64 {
        self.forward_sweeps()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::{classical_gradient, reduced_gradient_fd, relative_error, solve_constraint};
    use crate::linalg::{lu_solve, DenseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn small(n_cells: usize, n_angles: usize) -> Transport1DConfig {
        Transport1DConfig { n_cells, n_angles, ..Default::default() }
    }

    fn pure_absorber(n_cells: usize) -> Transport1DProblem {
        let cfg = Transport1DConfig { sigma_s0: 0.0, alpha_scatter: 0.0, ..small(n_cells, 4) };
        Transport1DProblem::with_target(cfg, None).unwrap()
    }

    #[test]
    fn weights_sum_to_two() {
        let p = Transport1DProblem::with_target(small(4, 8), None).unwrap();
        assert!((p.weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_data_gives_zero_flux() {
        let p = Transport1DProblem::with_target(small(8, 4), None).unwrap();
        let psi = p.sweep(&DenseVector::zeros(32), &[0.0; 4]);
        assert_eq!(psi.amax(), 0.0);
    }

    fn attenuation_error(n_cells: usize) -> f64 {
        let p = pure_absorber(n_cells);
        let inflow: Vec<f64> = p.angles().iter().map(|&m| if m > 0.0 { 1.0 } else { 0.0 }).collect();
        let psi = p.sweep(&DenseVector::zeros(n_cells * 4), &inflow);
        let xs = p.cell_centers();
        let mut err: f64 = 0.0;
        for (d, &m) in p.angles().iter().enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                let exact = if m > 0.0 { (-2.0 * x / m).exp() } else { 0.0 };
                err = err.max((psi[d * n_cells + i] - exact).abs());
            }
        }
        err
    }

    #[test]
    fn attenuation_is_second_order() {
        let (e1, e2) = (attenuation_error(64), attenuation_error(128));
        assert!(e1 < 5e-3, "{e1}");
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    fn mms_error(n_cells: usize) -> f64 {
        // ψ = 1 + sin(πx) + ½ μ x, with σ_s = 0 and q = μ ψ_x + σ_t ψ
        let p = pure_absorber(n_cells);
        let exact = |x: f64, m: f64| 1.0 + (PI * x).sin() + 0.5 * m * x;
        let q = p.source_from_fn(|x, m| m * (PI * (PI * x).cos() + 0.5 * m) + 2.0 * exact(x, m));
        let inflow: Vec<f64> = p.angles().iter().map(|&m| if m > 0.0 { exact(0.0, m) } else { exact(1.0, m) }).collect();
        let psi = p.sweep(&q, &inflow);
        (psi - p.source_from_fn(exact)).amax()
    }

    #[test]
    fn manufactured_solution_converges() {
        let (e1, e2) = (mms_error(32), mms_error(64));
        assert!(e1 < 1e-2);
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn no_scattering_makes_one_iteration_exact() {
        let p = pure_absorber(16);
        let q = p.source_from_fn(reference_source);
        let once = p.transport1d_solver_iteration(&DenseVector::from_element(64, 3.0), &q);
        assert!((p.transport1d_solver_iteration(&once, &q) - &once).amax() == 0.0);
    }

    #[test]
    fn linear_problem_balances_particles() {
        let cfg = Transport1DConfig { alpha_scatter: 0.0, ..small(32, 8) };
        let p = Transport1DProblem::with_target(cfg.clone(), None).unwrap();
        let q = p.source_from_fn(reference_source);
        let psi = p.solve_state(&q, 1e-14, 10_000).unwrap();
        let phi = p.scalar_flux(&psi);
        let src = p.broadcast(|i| cfg.sigma_s0 * phi[i]) + &q;
        let (again, exits) = p.sweep_with_exits(&src, &p.inflow());
        assert!((again - &psi).amax() < 1e-13);
        let h = p.cell_width();
        let absorption: f64 = phi.iter().map(|f| h * (cfg.sigma_t - cfg.sigma_s0) * f).sum();
        let (mut leak, mut inflow) = (0.0, 0.0);
        for (d, (&m, &w)) in p.angles().iter().zip(p.weights()).enumerate() {
            leak += w * m.abs() * exits[d];
            inflow += w * m.abs() * cfg.inflow;
        }
        let source: f64 = q.dot(&p.mass());
        let lhs = absorption + leak;
        let rhs = source + inflow;
        assert!((lhs - rhs).abs() <= 1e-8 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn source_iteration_contracts() {
        let p = Transport1DProblem::new(small(32, 8)).unwrap();
        let q = p.source_from_fn(reference_source);
        let mut psi = DenseVector::zeros(256);
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let next = p.transport1d_solver_iteration(&psi, &q);
            let r = (&next - &psi).norm();
            assert!(r < last);
            last = r;
            psi = next;
        }
    }

    #[test]
    fn fixed_point_satisfies_the_nonlinear_equation() {
        let p = Transport1DProblem::new(small(16, 4)).unwrap();
        let q = p.source_from_fn(|x, _| 1.0 + x);
        let s = solve_constraint(&p, &DenseVector::zeros(64), &q, 1e-12, 10_000).unwrap();
        assert!(s.residual <= 1e-12);
        assert!((p.solver_iteration(&s.x, &q) - &s.x).norm() <= 1e-12);
    }

    #[test]
    fn counters_track_sweeps() {
        let p = Transport1DProblem::new(small(8, 4)).unwrap();
        assert_eq!(p.forward_sweeps(), 0);
        let x = DenseVector::zeros(32);
        for _ in 0..3 {
            p.solver_iteration(&x, &x);
        }
        assert_eq!(p.solve_count(), 3);
        let before = p.adjoint_sweeps();
        p.adjoint_solve(&x, &x, &DenseVector::from_element(32, 1.0)).unwrap();
        assert!(p.adjoint_sweeps() > before);
        assert_eq!(p.solve_count(), 3);
    }

    /// Dense `D₁F` and `∂F/∂q` by applying the affine maps to unit vectors.
    fn assemble(p: &Transport1DProblem, psi: &DenseVector) -> (DenseMatrix, DenseMatrix) {
        let n = psi.len();
        let zero_in = vec![0.0; p.n_angles()];
        let phi = p.scalar_flux(psi);
        let mut d1f = DenseMatrix::zeros(n, n);
        let mut tinv = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DenseVector::zeros(n);
            e[j] = 1.0;
            let phi_e = p.scalar_flux(&e);
            let ds = p.broadcast(|i| p.sigma_s_adjoint(phi[i]) * phi_e[i]);
            d1f.set_column(j, &(p.sweep(&ds, &zero_in) - &e));
            tinv.set_column(j, &p.sweep(&e, &zero_in));
        }
        (d1f, tinv)
    }

    #[test]
    fn reverse_sweep_is_the_transpose() {
        let p = Transport1DProblem::new(small(4, 2)).unwrap();
        let (_, tinv) = assemble(&p, &DenseVector::zeros(8));
        let mut adj = DenseMatrix::zeros(8, 8);
        for j in 0..8 {
            let mut e = DenseVector::zeros(8);
            e[j] = 1.0;
            adj.set_column(j, &p.adjoint_sweep(&e));
        }
        assert!((adj - tinv.transpose()).amax() <= 1e-14);
    }

    #[test]
    fn adjoint_matches_dense_transpose() {
        let cfg = Transport1DConfig { adjoint_tol: 1e-14, ..small(4, 2) };
        let p = Transport1DProblem::new(cfg).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(31);
        let psi = DenseVector::from_fn(8, |_, _| rng.gen_range(0.5..2.0));
        let rhs = DenseVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let (d1f, tinv) = assemble(&p, &psi);
        let lambda = lu_solve(&d1f.transpose(), &rhs).unwrap();
        let dense_pair = tinv.transpose() * &lambda;
        let p_psi = p.adjoint_solve(&psi, &psi, &rhs).unwrap();
        let pair = p.pair_df_dtheta(&p_psi, &psi, &psi);
        assert!((&pair - &dense_pair).amax() <= 1e-10 * dense_pair.amax().max(1.0));
        // ⟨λ, D₁F u⟩ = ⟨D₁Fᵀ λ, u⟩ for a random u
        let u = DenseVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        assert!((lambda.dot(&(&d1f * &u)) - rhs.dot(&u)).abs() <= 1e-10);
        assert_eq!(p.adjoint_solve(&psi, &psi, &DenseVector::zeros(8)).unwrap().amax(), 0.0);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let p = Transport1DProblem::new(small(8, 4)).unwrap();
        let q = p.source_from_fn(|x, m| 0.3 + 0.2 * x + 0.1 * m);
        let sol = solve_constraint(&p, &DenseVector::zeros(32), &q, 1e-13, 100_000).unwrap();
        let grad = classical_gradient(&p, &sol.x, &q).unwrap();
        let fd = reduced_gradient_fd(&p, &sol.x, &q, 1e-5, 1e-13, 100_000).unwrap();
        assert!(relative_error(&grad, &fd) <= 1e-4, "{}", relative_error(&grad, &fd));
    }

    #[test]
    fn pairing_is_linear_in_the_weights() {
        let p = Transport1DProblem::new(small(4, 4)).unwrap();
        let lam = DenseVector::from_fn(16, |k, _| (k as f64).sin());
        let doubled = p.clone().with_weights(p.weights().iter().map(|w| 2.0 * w).collect());
        let a = p.transport1d_gradient_pairing(&lam);
        assert!((doubled.transport1d_gradient_pairing(&lam) - &a * 2.0).amax() <= 1e-15);
        assert_eq!(p.transport1d_gradient_pairing(&DenseVector::zeros(16)).amax(), 0.0);
    }

    #[test]
    fn scattering_stays_subcritical_on_the_target() {
        let p = Transport1DProblem::new(Transport1DConfig::default()).unwrap();
        let phi = p.scalar_flux(p.target());
        assert!(phi.iter().all(|&f| p.sigma_s(f) < p.config().sigma_t));
    }

    #[test]
    fn bad_configs_name_their_field() {
        let e = Transport1DConfig { n_angles: 3, ..Default::default() }.validate().unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "problem.n_angles"));
        let e = Transport1DConfig { sigma_s0: 2.5, ..Default::default() }.validate().unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "problem.sigma_s0"));
    }
}
