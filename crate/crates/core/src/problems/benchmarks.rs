//! Two-dimensional nonconvex test functions with linearly-implicit splittings.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::splitting::{
    consistency_error, make_avf, make_linearly_implicit, Avf, LinearlyImplicit, MatrixMap,
    ScalarMap, SplitGradientProblem, VectorMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkName {
    Rastrigin,
    Rosenbrock,
    Beale,
}

impl BenchmarkName {
    pub const ALL: [BenchmarkName; 3] = [Self::Rastrigin, Self::Rosenbrock, Self::Beale];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rastrigin => "rastrigin",
            Self::Rosenbrock => "rosenbrock",
            Self::Beale => "beale",
        }
    }
}

impl fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

#[derive(Clone)]
pub struct BenchmarkSpec {
    pub name: BenchmarkName,
    pub cost: ScalarMap,
    pub grad: VectorMap,
    pub linearly_implicit: LinearlyImplicit,
    /// Box `[lo, hi]` per coordinate for randomized starts.
    pub init_box: [(f64, f64); 2],
    /// Fixed start used for single-trajectory experiments.
    pub reference_start: [f64; 2],
}

impl BenchmarkSpec {
    /// Average vector field splitting of the same cost.
    pub fn avf(&self, quad_order: usize) -> Avf {
        make_avf(2, self.grad.clone(), quad_order)
            .expect("quadrature order is positive")
            .with_cost(self.cost.clone())
    }

    pub fn reference_start(&self) -> DenseVector {
        DenseVector::from_row_slice(&self.reference_start)
    }
}

impl fmt::Debug for BenchmarkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkSpec").field("name", &self.name).finish_non_exhaustive()
    }
}

/// `sin(2πt)/t` with its limit `2π` near zero.
fn sinc_ratio(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        2.0 * PI
    } else {
        (2.0 * PI * t).sin() / t
    }
}

pub fn rastrigin_cost(x: &DenseVector) -> f64 {
    20.0 + x.iter().map(|t| t * t - 10.0 * (2.0 * PI * t).cos()).sum::<f64>()
}

pub fn rastrigin_grad(x: &DenseVector) -> DenseVector {
    x.map(|t| 2.0 * t + 20.0 * PI * (2.0 * PI * t).sin())
}

pub fn rosenbrock_cost(x: &DenseVector) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

pub fn rosenbrock_grad(x: &DenseVector) -> DenseVector {
    let (a, b) = (x[0], x[1]);
    DenseVector::from_row_slice(&[-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
}

pub fn beale_cost(x: &DenseVector) -> f64 {
    let (a, b) = (x[0], x[1]);
    (1.5 - a + a * b).powi(2) + (2.25 - a + a * b * b).powi(2) + (2.625 - a + a * b.powi(3)).powi(2)
}

fn beale_p(b: f64) -> f64 {
    b.powi(6) + b.powi(4) - 2.0 * b.powi(3) - b * b - 2.0 * b + 3.0
}

fn beale_q(b: f64) -> f64 {
    b.powi(5) + (2.0 / 3.0) * b.powi(3) - b * b - b / 3.0 - 1.0 / 3.0
}

/// Gradient derived directly from [`beale_cost`].
pub fn beale_grad(x: &DenseVector) -> DenseVector {
    let (a, b) = (x[0], x[1]);
    DenseVector::from_row_slice(&[
        2.0 * a * beale_p(b) + 5.25 * b.powi(3) + 4.5 * b * b + 3.0 * b - 12.75,
        6.0 * a * (a * beale_q(b) + 2.625 * b * b + 1.5 * b + 0.5),
    ])
}

fn rastrigin_split() -> (MatrixMap, VectorMap) {
    (
        Arc::new(|x: &DenseVector| DenseMatrix::from_diagonal(&x.map(|t| 2.0 + 20.0 * PI * sinc_ratio(t)))),
        Arc::new(|x: &DenseVector| DenseVector::zeros(x.len())),
    )
}

fn rosenbrock_split() -> (MatrixMap, VectorMap) {
    (
        Arc::new(|x: &DenseVector| {
            DenseMatrix::from_row_slice(2, 2, &[400.0 * x[0] * x[0], 0.0, -200.0 * x[0], 200.0])
        }),
        Arc::new(|x: &DenseVector| {
            DenseVector::from_row_slice(&[2.0 * (-200.0 * x[0] * x[1] + x[0] - 1.0), 0.0])
        }),
    )
}

/// Leading monomials of each gradient component are linearized in the
/// second slot; the constant and pure-`x₁` remainders stay explicit.
fn beale_split() -> (MatrixMap, VectorMap) {
    (
        Arc::new(|x: &DenseVector| {
            let (a, b) = (x[0], x[1]);
            DenseMatrix::from_row_slice(
                2,
                2,
                &[
                    2.0 * beale_p(b),
                    5.25 * b * b + 4.5 * b + 3.0,
                    6.0 * (a * beale_q(b) + 2.625 * b * b),
                    9.0 * a,
                ],
            )
        }),
        Arc::new(|x: &DenseVector| DenseVector::from_row_slice(&[-12.75, 3.0 * x[0]])),
    )
}

/// Builds a benchmark and checks the splitting against the gradient at
/// randomized points in its start box.
pub fn build_benchmark(name: BenchmarkName) -> Result<BenchmarkSpec> {
    let (cost, grad, (l, g), init_box, reference_start): (ScalarMap, VectorMap, _, _, _) = match name {
        BenchmarkName::Rastrigin => (
            Arc::new(rastrigin_cost),
            Arc::new(rastrigin_grad),
            rastrigin_split(),
            [(0.0, 3.0), (0.0, 3.0)],
            [2.0, 2.0],
        ),
        BenchmarkName::Rosenbrock => (
            Arc::new(rosenbrock_cost),
            Arc::new(rosenbrock_grad),
            rosenbrock_split(),
            [(-2.0, 2.0), (-1.0, 3.0)],
            [10.0, 5.0],
        ),
        BenchmarkName::Beale => (
            Arc::new(beale_cost),
            Arc::new(beale_grad),
            beale_split(),
            [(-4.0, 4.0), (-4.0, 4.0)],
            [-2.0, 2.0],
        ),
    };
    let linearly_implicit = make_linearly_implicit(2, l, g)?.with_cost(cost.clone());
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x5eed);
    for _ in 0..100 {
        let x = DenseVector::from_fn(2, |i, _| rng.gen_range(init_box[i].0..=init_box[i].1));
        let mismatch = consistency_error(&linearly_implicit, &x).max(
            (linearly_implicit.grad(&x) - grad(&x)).norm() / (1.0 + grad(&x).norm()),
        );
        if !(mismatch <= 1e-8) {
            return Err(Error::InconsistentSplitting { point: x.iter().copied().collect(), mismatch });
        }
    }
    Ok(BenchmarkSpec { name, cost, grad, linearly_implicit, init_box, reference_start })
}

pub fn benchmark(name: BenchmarkName) -> BenchmarkSpec {
    build_benchmark(name).expect("built-in splittings are consistent")
}

pub fn benchmark_by_name(name: &str) -> Result<BenchmarkSpec> {
    build_benchmark(name.parse()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::from_row_slice(xs)
    }

    fn fd_grad(c: &ScalarMap, x: &DenseVector) -> DenseVector {
        let h = 1e-6;
        DenseVector::from_fn(x.len(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (c(&xp) - c(&xm)) / (2.0 * h)
        })
    }

    #[test]
    fn global_minima_are_zero() {
        assert!(rastrigin_cost(&v(&[0.0, 0.0])).abs() < 1e-14);
        assert_eq!(rosenbrock_cost(&v(&[1.0, 1.0])), 0.0);
        assert_eq!(rosenbrock_grad(&v(&[1.0, 1.0])).amax(), 0.0);
        assert!(beale_cost(&v(&[3.0, 0.5])).abs() < 1e-14);
        assert!(beale_grad(&v(&[3.0, 0.5])).amax() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(12);
        for name in BenchmarkName::ALL {
            let bench = benchmark(name);
            for _ in 0..50 {
                let x = DenseVector::from_fn(2, |i, _| rng.gen_range(bench.init_box[i].0..bench.init_box[i].1));
                let fd = fd_grad(&bench.cost, &x);
                let g = (bench.grad)(&x);
                assert!((&fd - &g).norm() <= 1e-6 * (1.0 + g.norm()), "{name}: {fd} vs {g}");
            }
        }
    }

    #[test]
    fn costs_are_nonnegative() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(13);
        for name in BenchmarkName::ALL {
            let bench = benchmark(name);
            for _ in 0..200 {
                let x = DenseVector::from_fn(2, |_, _| rng.gen_range(-5.0..5.0));
                assert!((bench.cost)(&x) >= -1e-12);
            }
        }
    }

    #[test]
    fn rastrigin_removable_singularity() {
        let bench = benchmark(BenchmarkName::Rastrigin);
        let (l, _) = bench.linearly_implicit.li_structure(&v(&[0.0, 1e-9])).unwrap();
        assert_relative_eq!(l[(0, 0)], 2.0 + 40.0 * PI * PI);
        assert_relative_eq!(l[(1, 1)], 2.0 + 40.0 * PI * PI, max_relative = 1e-12);
        let near = bench.linearly_implicit.li_structure(&v(&[2e-8, 0.0])).unwrap().0;
        assert_relative_eq!(near[(0, 0)], 2.0 + 40.0 * PI * PI, max_relative = 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for name in BenchmarkName::ALL {
            assert_eq!(name.as_str().parse::<BenchmarkName>().unwrap(), name);
        }
        assert!(matches!(benchmark_by_name("ackley"), Err(Error::UnknownBenchmark(_))));
    }
}
