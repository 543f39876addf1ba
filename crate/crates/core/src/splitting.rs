//! Split gradients `∇̃C(x, y)` with `∇̃C(x, x) = ∇C(x)`.
//!
//! The first slot is the "frozen" argument and the second is the one treated
//! implicitly by the descent schemes. Three families are provided:
//! linearly-implicit splittings `L(x) y + g(x)`, the average vector field
//! discrete gradient, and the Jacobian/residual splitting of nonlinear least
//! squares.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, LinalgError};

pub type ScalarMap = Arc<dyn Fn(&DenseVector) -> f64 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&DenseVector) -> DenseVector + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&DenseVector) -> DenseMatrix + Send + Sync>;

/// Default Gauss–Legendre order for [`make_avf`].
pub const DEFAULT_AVF_ORDER: usize = 8;

pub trait SplitGradientProblem: Send + Sync {
    fn dim(&self) -> usize;

    /// `C(x)`, or `None` for gradient-only problems.
    fn cost(&self, x: &DenseVector) -> Option<f64>;

    fn grad(&self, x: &DenseVector) -> DenseVector;

    fn split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseVector;

    /// Derivative of `split_grad` in its second argument.
    fn d2_split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix;

    /// `(L(x), g(x))` when the splitting is linearly implicit.
    fn li_structure(&self, _x: &DenseVector) -> Option<(DenseMatrix, DenseVector)> {
        None
    }

    /// A scalar `Φ_x(y)` with `∇_y Φ_x(y) = split_grad(x, y)`, when one is
    /// known. Implicit steps use it as a merit function.
    fn split_potential(&self, _x: &DenseVector, _y: &DenseVector) -> Option<f64> {
        None
    }
}

impl<P: SplitGradientProblem + ?Sized> SplitGradientProblem for Arc<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn cost(&self, x: &DenseVector) -> Option<f64> {
        (**self).cost(x)
    }
    fn grad(&self, x: &DenseVector) -> DenseVector {
        (**self).grad(x)
    }
    fn split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseVector {
        (**self).split_grad(x, y)
    }
    fn d2_split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix {
        (**self).d2_split_grad(x, y)
    }
    fn li_structure(&self, x: &DenseVector) -> Option<(DenseMatrix, DenseVector)> {
        (**self).li_structure(x)
    }
    fn split_potential(&self, x: &DenseVector, y: &DenseVector) -> Option<f64> {
        (**self).split_potential(x, y)
    }
}

/// Largest deviation of `split_grad(x, x)` from `grad(x)`, relative to
/// `1 + ‖grad(x)‖`.
pub fn consistency_error<P: SplitGradientProblem + ?Sized>(p: &P, x: &DenseVector) -> f64 {
    let g = p.grad(x);
    (p.split_grad(x, x) - &g).norm() / (1.0 + g.norm())
}

// ---------------------------------------------------------------------------
// Linearly implicit

#[derive(Clone)]
pub struct LinearlyImplicit {
    dim: usize,
    l: MatrixMap,
    g: VectorMap,
    cost: Option<ScalarMap>,
}

/// Splitting `∇̃C(x, y) = L(x) y + g(x)`.
///
/// The shapes are checked once at the origin.
pub fn make_linearly_implicit(dim: usize, l: MatrixMap, g: VectorMap) -> Result<LinearlyImplicit> {
    let probe = DenseVector::zeros(dim);
    let lm = l(&probe);
    if lm.nrows() != dim || lm.ncols() != dim {
        return Err(LinalgError::DimensionMismatch {
            expected: dim,
            found: if lm.nrows() != dim { lm.nrows() } else { lm.ncols() },
        }
        .into());
    }
    let gv = g(&probe);
    if gv.len() != dim {
        return Err(LinalgError::DimensionMismatch { expected: dim, found: gv.len() }.into());
    }
    Ok(LinearlyImplicit { dim, l, g, cost: None })
}

impl LinearlyImplicit {
    pub fn with_cost(mut self, cost: ScalarMap) -> Self {
        self.cost = Some(cost);
        self
    }
}

impl SplitGradientProblem for LinearlyImplicit {
    fn dim(&self) -> usize {
        self.dim
    }
    fn cost(&self, x: &DenseVector) -> Option<f64> {
        self.cost.as_ref().map(|c| c(x))
    }
    fn grad(&self, x: &DenseVector) -> DenseVector {
        self.split_grad(x, x)
    }
    fn split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseVector {
        (self.l)(x) * y + (self.g)(x)
    }
    fn d2_split_grad(&self, x: &DenseVector, _y: &DenseVector) -> DenseMatrix {
        (self.l)(x)
    }
    fn li_structure(&self, x: &DenseVector) -> Option<(DenseMatrix, DenseVector)> {
        Some(((self.l)(x), (self.g)(x)))
    }
}

// ---------------------------------------------------------------------------
// Average vector field

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; accurate to a few ulps for
/// the orders used here (≤ 64).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n and P_{n-1} by the three-term recurrence
            let (mut p_prev, mut p) = (1.0, z);
            for k in 2..=n {
                let next = ((2 * k - 1) as f64 * z * p - (k - 1) as f64 * p_prev) / k as f64;
                p_prev = p;
                p = next;
            }
            dp = n as f64 * (z * p - p_prev) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(order: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(order);
    (
        nodes.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights.iter().map(|w| 0.5 * w).collect(),
    )
}

#[derive(Clone)]
pub struct Avf {
    dim: usize,
    grad: VectorMap,
    cost: Option<ScalarMap>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Average vector field discrete gradient `∫₀¹ ∇C(ξx + (1−ξ)y) dξ`.
pub fn make_avf(dim: usize, grad: VectorMap, quad_order: usize) -> Result<Avf> {
    if quad_order == 0 {
        return Err(Error::config("quad_order", "must be at least 1"));
    }
    let (nodes, weights) = gauss_legendre_unit(quad_order);
    Ok(Avf { dim, grad, cost: None, nodes, weights })
}

impl Avf {
    pub fn with_cost(mut self, cost: ScalarMap) -> Self {
        self.cost = Some(cost);
        self
    }

    pub fn quad_order(&self) -> usize {
        self.nodes.len()
    }
}

impl SplitGradientProblem for Avf {
    fn dim(&self) -> usize {
        self.dim
    }
    fn cost(&self, x: &DenseVector) -> Option<f64> {
        self.cost.as_ref().map(|c| c(x))
    }
    fn grad(&self, x: &DenseVector) -> DenseVector {
        (self.grad)(x)
    }
    fn split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseVector {
        let mut acc = DenseVector::zeros(self.dim);
        for (&xi, &w) in self.nodes.iter().zip(&self.weights) {
            let point = x * xi + y * (1.0 - xi);
            acc += (self.grad)(&point) * w;
        }
        acc
    }
    fn d2_split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix {
        let h = 1e-6 * (1.0 + y.norm());
        let mut jac = DenseMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += h;
            ym[j] -= h;
            let col = (self.split_grad(x, &yp) - self.split_grad(x, &ym)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        jac
    }
    /// `Φ_x(y) = ∫₀¹ (C(x + s(y − x)) − C(x)) / s ds` on the same nodes as the
    /// average, so its gradient is exactly the discrete average.
    fn split_potential(&self, x: &DenseVector, y: &DenseVector) -> Option<f64> {
        let cost = self.cost.as_ref()?;
        let base = cost(x);
        let d = y - x;
        let mut acc = 0.0;
        for (&xi, &w) in self.nodes.iter().zip(&self.weights) {
            let s = 1.0 - xi;
            acc += w * (cost(&(x + &d * s)) - base) / s;
        }
        Some(acc)
    }
}

// ---------------------------------------------------------------------------
// Nonlinear least squares

/// Residual `r(x) = f(x) − v` with Jacobian `𝕁(x)`.
pub trait ResidualProblem: Send + Sync {
    fn out_dim(&self) -> usize;
    fn in_dim(&self) -> usize;
    fn residual(&self, x: &DenseVector) -> DenseVector;
    fn jacobian(&self, x: &DenseVector) -> DenseMatrix;
}

/// A [`ResidualProblem`] built from closures.
#[derive(Clone)]
pub struct FnResidual {
    pub out_dim: usize,
    pub in_dim: usize,
    pub residual: VectorMap,
    pub jacobian: MatrixMap,
}

impl ResidualProblem for FnResidual {
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn residual(&self, x: &DenseVector) -> DenseVector {
        (self.residual)(x)
    }
    fn jacobian(&self, x: &DenseVector) -> DenseMatrix {
        (self.jacobian)(x)
    }
}

#[derive(Clone)]
pub struct ResidualSplitting<R> {
    residual: R,
}

/// Splitting `∇̃C(x, y) = 𝕁(x)ᵀ r(y)` of `C = ½‖r‖²`.
pub fn make_residual_splitting<R: ResidualProblem>(p: R) -> Result<ResidualSplitting<R>> {
    let probe = DenseVector::zeros(p.in_dim());
    let r = p.residual(&probe);
    if r.len() != p.out_dim() {
        return Err(LinalgError::DimensionMismatch { expected: p.out_dim(), found: r.len() }.into());
    }
    let j = p.jacobian(&probe);
    if j.nrows() != p.out_dim() || j.ncols() != p.in_dim() {
        return Err(LinalgError::DimensionMismatch { expected: p.out_dim(), found: j.nrows() }.into());
    }
    Ok(ResidualSplitting { residual: p })
}

impl<R: ResidualProblem> ResidualSplitting<R> {
    pub fn inner(&self) -> &R {
        &self.residual
    }
}

impl<R: ResidualProblem> SplitGradientProblem for ResidualSplitting<R> {
    fn dim(&self) -> usize {
        self.residual.in_dim()
    }
    fn cost(&self, x: &DenseVector) -> Option<f64> {
        Some(0.5 * self.residual.residual(x).norm_squared())
    }
    fn grad(&self, x: &DenseVector) -> DenseVector {
        self.residual.jacobian(x).tr_mul(&self.residual.residual(x))
    }
    fn split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseVector {
        self.residual.jacobian(x).tr_mul(&self.residual.residual(y))
    }
    fn d2_split_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix {
        let jx = self.residual.jacobian(x);
        if x == y {
            jx.tr_mul(&jx)
        } else {
            jx.tr_mul(&self.residual.jacobian(y))
        }
    }
}
