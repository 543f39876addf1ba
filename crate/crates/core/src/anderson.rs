//! Difference-form Anderson acceleration for parameter fixed points
//! `θ ↦ θ + g(θ)`.
//!
//! The window stores iterate differences `S` and residual differences `G`
//! with an incrementally updated QR factorization of `G`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::linalg::{DenseMatrix, DenseVector, LinalgError, QrFactorization};

/// Sign of the correction term in the proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionSign {
    /// `θ + g − (S + G)ξ`, the usual type-II update.
    #[default]
    Standard,
    /// `θ + g + (S + G)ξ`.
    Additive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AndersonWindow {
    depth: usize,
    s: VecDeque<DenseVector>,
    g: VecDeque<DenseVector>,
    qr: QrFactorization,
}

impl AndersonWindow {
    pub fn new(depth: usize, dim: usize) -> Self {
        Self { depth, s: VecDeque::new(), g: VecDeque::new(), qr: QrFactorization::empty(dim) }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn qr(&self) -> &QrFactorization {
        &self.qr
    }

    pub fn s_matrix(&self) -> DenseMatrix {
        columns(&self.s, self.qr.rows())
    }

    pub fn g_matrix(&self) -> DenseMatrix {
        columns(&self.g, self.qr.rows())
    }

    pub fn cleared(&self) -> Self {
        Self::new(self.depth, self.qr.rows())
    }

    /// Drops the oldest columns until at most `width` remain.
    pub fn truncate_to(&self, width: usize) -> Self {
        let mut w = self.clone();
        while w.width() > width {
            w = w.drop_oldest();
        }
        w
    }

    fn drop_oldest(mut self) -> Self {
        self.s.pop_front();
        self.g.pop_front();
        self.qr = match self.qr.drop_first_column() {
            Ok(qr) => qr,
            Err(_) => QrFactorization::empty(self.qr.rows()),
        };
        self
    }

    /// Appends `θ_new − θ_prev` and `g_new − g_prev`, then drops the oldest
    /// pair if the window exceeds its depth. A dependent residual difference
    /// evicts the oldest columns until it can be appended, or is discarded
    /// when even the empty window cannot take it.
    pub fn push(&self, theta_prev: &DenseVector, theta_new: &DenseVector, g_prev: &DenseVector, g_new: &DenseVector) -> Self {
        let ds = theta_new - theta_prev;
        let dg = g_new - g_prev;
        let mut w = self.clone();
        loop {
            match w.qr.append_column(&dg) {
                Ok(qr) => {
                    w.qr = qr;
                    w.s.push_back(ds);
                    w.g.push_back(dg);
                    break;
                }
                Err(_) if !w.is_empty() => w = w.drop_oldest(),
                Err(_) => break,
            }
        }
        w.truncate_to(w.depth)
    }

    /// Anderson proposal from the current iterate and residual.
    ///
    /// An empty window gives the plain step `θ + g`.
    pub fn propose(&self, theta: &DenseVector, g: &DenseVector, sign: CorrectionSign) -> Result<DenseVector, LinalgError> {
        if self.is_empty() {
            return Ok(theta + g);
        }
        let xi = self.qr.least_squares(g)?;
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::DegenerateWindow);
        }
        let mut correction = DenseVector::zeros(theta.len());
        for ((s, gcol), &c) in self.s.iter().zip(&self.g).zip(xi.iter()) {
            correction += (s + gcol) * c;
        }
        Ok(match sign {
            CorrectionSign::Standard => theta + g - correction,
            CorrectionSign::Additive => theta + g + correction,
        })
    }
}

fn columns(cols: &VecDeque<DenseVector>, rows: usize) -> DenseMatrix {
    if cols.is_empty() {
        DenseMatrix::zeros(rows, 0)
    } else {
        let v: Vec<DenseVector> = cols.iter().cloned().collect();
        DenseMatrix::from_columns(&v)
    }
}

/// Free-function form of [`AndersonWindow::propose`] with the standard sign.
pub fn aa_propose(w: &AndersonWindow, theta: &DenseVector, g: &DenseVector) -> Result<DenseVector, LinalgError> {
    w.propose(theta, g, CorrectionSign::Standard)
}

/// Free-function form of [`AndersonWindow::push`].
pub fn aa_push(
    w: &AndersonWindow,
    theta_prev: &DenseVector,
    theta_new: &DenseVector,
    g_prev: &DenseVector,
    g_new: &DenseVector,
) -> AndersonWindow {
    w.push(theta_prev, theta_new, g_prev, g_new)
}

/// Runs Anderson-accelerated iteration of `θ ↦ θ + g(θ)` for `proposals`
/// steps and returns the residual norms, starting with `‖g(θ₀)‖`.
pub fn accelerate<F>(residual: F, theta0: &DenseVector, depth: usize, proposals: usize, sign: CorrectionSign) -> (DenseVector, Vec<f64>)
where
    F: Fn(&DenseVector) -> DenseVector,
{
    let mut w = AndersonWindow::new(depth, theta0.len());
    let mut theta = theta0.clone();
    let mut g = residual(&theta);
    let mut norms = vec![g.norm()];
    for _ in 0..proposals {
        let next = match w.propose(&theta, &g, sign) {
            Ok(t) => t,
            Err(_) => {
                w = w.cleared();
                &theta + &g
            }
        };
        let g_next = residual(&next);
        w = w.push(&theta, &next, &g, &g_next);
        theta = next;
        g = g_next;
        norms.push(g.norm());
    }
    (theta, norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_solve;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::from_row_slice(xs)
    }

    fn affine(seed: u64, n: usize) -> (DenseMatrix, DenseVector) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let a = DenseMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.0 } + rng.gen_range(-0.4..0.4));
        let b = DenseVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        (a, b)
    }

    #[test]
    fn empty_window_is_plain_step() {
        let w = AndersonWindow::new(3, 2);
        let t = aa_propose(&w, &v(&[1.0, 2.0]), &v(&[0.1, -0.1])).unwrap();
        assert_eq!(t, v(&[1.1, 1.9]));
    }

    #[test]
    fn zero_residual_keeps_theta() {
        let w = AndersonWindow::new(3, 2).push(&v(&[0.0, 0.0]), &v(&[1.0, 0.5]), &v(&[0.3, 0.1]), &v(&[-0.2, 0.4]));
        let theta = v(&[2.0, -1.0]);
        assert_eq!(aa_propose(&w, &theta, &DenseVector::zeros(2)).unwrap(), theta);
    }

    #[test]
    fn push_caps_the_window() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        let depth = 3;
        let mut w = AndersonWindow::new(depth, 6);
        let mut pushed = Vec::new();
        for k in 0..(depth + 1) {
            let a = DenseVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let b = DenseVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let z = DenseVector::zeros(6);
            w = aa_push(&w, &z, &a, &z, &b);
            pushed.push(b);
            assert_eq!(w.width(), (k + 1).min(depth));
        }
        let g = w.g_matrix();
        for (j, col) in pushed[1..].iter().enumerate() {
            assert!((g.column(j) - col).amax() < 1e-15);
        }
        assert!((w.qr().reconstruct() - &g).amax() <= 1e-10);
    }

    #[test]
    fn dependent_push_evicts_oldest() {
        let z = DenseVector::zeros(2);
        let w = AndersonWindow::new(3, 2)
            .push(&z, &v(&[1.0, 0.0]), &z, &v(&[1.0, 0.0]))
            .push(&z, &v(&[0.0, 1.0]), &z, &v(&[1.0, 1.0]));
        assert_eq!(w.width(), 2);
        // a third column in R² is always dependent
        let w = w.push(&z, &v(&[1.0, 1.0]), &z, &v(&[0.0, 1.0]));
        assert_eq!(w.width(), 2);
        assert!((w.qr().reconstruct() - w.g_matrix()).amax() <= 1e-12);
        assert!((w.g_matrix().column(1) - v(&[0.0, 1.0])).amax() == 0.0);
    }

    #[test]
    fn linear_residual_solved_once_window_spans() {
        let (a, b) = affine(5, 4);
        let exact = lu_solve(&a, &b).unwrap();
        // g(θ) = ω(b − Aθ) so that θ + g is a contraction
        let omega = 0.3;
        let (theta, norms) = accelerate(|t| (&b - &a * t) * omega, &DenseVector::zeros(4), 4, 5, CorrectionSign::Standard);
        assert!((theta - &exact).norm() <= 1e-9 * exact.norm());
        assert!(norms.last().unwrap() / norms[0] <= 1e-8);
    }

    #[test]
    fn additive_sign_loses_exactness() {
        let (a, b) = affine(5, 4);
        let omega = 0.3;
        let (_, norms) = accelerate(|t| (&b - &a * t) * omega, &DenseVector::zeros(4), 4, 5, CorrectionSign::Additive);
        assert!(norms.last().unwrap() / norms[0] > 1e-8);
    }

    #[test]
    fn depth_zero_reduces_to_plain_iteration() {
        let (a, b) = affine(9, 3);
        let omega = 0.2;
        let res = |t: &DenseVector| (&b - &a * t) * omega;
        let (theta, _) = accelerate(res, &DenseVector::zeros(3), 0, 25, CorrectionSign::Standard);
        let mut plain = DenseVector::zeros(3);
        for _ in 0..25 {
            plain = &plain + res(&plain);
        }
        assert!((theta - &plain).norm() <= 1e-15 * plain.norm());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn qr_tracks_residual_differences(seed in 0u64..5000, depth in 1usize..6, pushes in 1usize..12) {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
                let mut w = AndersonWindow::new(depth, 7);
                let mut theta = DenseVector::zeros(7);
                let mut g = DenseVector::from_fn(7, |_, _| rng.gen_range(-1.0..1.0));
                for _ in 0..pushes {
                    let t2 = DenseVector::from_fn(7, |_, _| rng.gen_range(-1.0..1.0));
                    let g2 = DenseVector::from_fn(7, |_, _| rng.gen_range(-1.0..1.0));
                    w = w.push(&theta, &t2, &g, &g2);
                    theta = t2;
                    g = g2;
                    prop_assert!(w.width() <= depth);
                    prop_assert_eq!(w.s_matrix().ncols(), w.g_matrix().ncols());
                    prop_assert!((w.qr().reconstruct() - w.g_matrix()).amax() <= 1e-10);
                }
            }
        }
    }
}
