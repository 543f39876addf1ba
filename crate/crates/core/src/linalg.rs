//! Small dense linear algebra used by the steppers and the Anderson engines.
//!
//! Everything here is sized for windows of a few dozen columns and state
//! vectors of a few thousand entries, so plain dense kernels are used
//! throughout. Factorizations are value types: the update routines consume a
//! reference and hand back a new factorization.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type DenseVector = DVector<f64>;
pub type DenseMatrix = DMatrix<f64>;

/// Relative pivot threshold for [`lu_solve`].
pub const PIVOT_TOL: f64 = 1e-14;
/// Relative residual threshold below which an appended column is rejected.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("appended column is numerically dependent on the window")]
    RankCollapse,
    #[error("factorization window is empty")]
    EmptyWindow,
    #[error("reduced least-squares system is rank deficient")]
    DegenerateWindow,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

fn check_len(expected: usize, found: usize) -> Result<(), LinalgError> {
    if expected == found {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, found })
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
///
/// Reused wherever the same matrix is solved against many right-hand sides
/// (the backward Euler chain, Newton inner loops).
#[derive(Debug, Clone, PartialEq)]
pub struct LuFactorization {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactorization {
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        let n = a.nrows();
        check_len(n, a.ncols())?;
        let threshold = PIVOT_TOL * a.amax();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut pivot = -1.0;
            for i in k..n {
                let v = lu[(i, k)].abs();
                if v > pivot {
                    pivot = v;
                    p = i;
                }
            }
            if !(pivot > threshold) {
                return Err(LinalgError::SingularMatrix { column: k, pivot });
            }
            if p != k {
                lu.swap_rows(k, p);
                perm.swap(k, p);
            }
            let diag = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / diag;
                lu[(i, k)] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    let ukj = lu[(k, j)];
                    lu[(i, j)] -= factor * ukj;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DenseVector) -> Result<DenseVector, LinalgError> {
        let n = self.dim();
        check_len(n, b.len())?;
        let mut x = DenseVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &DenseVector) -> Result<DenseVector, LinalgError> {
        let n = self.dim();
        check_len(n, b.len())?;
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, then Lᵀ w = z, then x = Pᵀ w.
        let mut z = b.clone();
        for i in 0..n {
            let mut acc = z[i];
            for j in 0..i {
                acc -= self.lu[(j, i)] * z[j];
            }
            z[i] = acc / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in (i + 1)..n {
                acc -= self.lu[(j, i)] * z[j];
            }
            z[i] = acc;
        }
        let mut x = DenseVector::zeros(n);
        for i in 0..n {
            x[self.perm[i]] = z[i];
        }
        Ok(x)
    }
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, LinalgError> {
    check_len(a.nrows(), b.len())?;
    LuFactorization::new(a)?.solve(b)
}

/// Thin QR factorization `M = Q R` of a tall matrix that grows and shrinks
/// one column at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactorization {
    q: DenseMatrix,
    r: DenseMatrix,
}

impl QrFactorization {
    /// Empty factorization for matrices with `rows` rows.
    pub fn empty(rows: usize) -> Self {
        Self {
            q: DenseMatrix::zeros(rows, 0),
            r: DenseMatrix::zeros(0, 0),
        }
    }

    /// Factors `m` column by column.
    pub fn from_columns(m: &DenseMatrix) -> Result<Self, LinalgError> {
        let mut f = Self::empty(m.nrows());
        for col in m.column_iter() {
            f = f.append_column(&col.into_owned())?;
        }
        Ok(f)
    }

    pub fn rows(&self) -> usize {
        self.q.nrows()
    }

    /// Number of factored columns.
    pub fn width(&self) -> usize {
        self.r.ncols()
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn r(&self) -> &DenseMatrix {
        &self.r
    }

    /// The factored matrix `Q R`.
    pub fn reconstruct(&self) -> DenseMatrix {
        &self.q * &self.r
    }

    /// Factorization of `[M, col]`.
    ///
    /// The new column is orthogonalized against `Q` with two passes of
    /// classical Gram-Schmidt, which keeps `QᵀQ = I` to working precision.
    pub fn append_column(&self, col: &DenseVector) -> Result<Self, LinalgError> {
        self.append_column_with_floor(col, 0.0)
    }

    /// As [`append_column`](Self::append_column), also rejecting the column
    /// when its projected residual is at most `floor`.
    pub fn append_column_with_floor(&self, col: &DenseVector, floor: f64) -> Result<Self, LinalgError> {
        let n = self.rows();
        check_len(n, col.len())?;
        let k = self.width();
        let col_norm = col.norm();
        let mut w = col.clone();
        let mut h = DenseVector::zeros(k);
        for _ in 0..2 {
            let proj = self.q.tr_mul(&w);
            w -= &self.q * &proj;
            h += proj;
        }
        let rho = w.norm();
        if col_norm == 0.0 || rho <= (RANK_TOL * col_norm).max(floor) || k >= n {
            return Err(LinalgError::RankCollapse);
        }
        let mut q = self.q.clone().insert_column(k, 0.0);
        q.set_column(k, &(w / rho));
        let mut r = self.r.clone().insert_row(k, 0.0).insert_column(k, 0.0);
        for i in 0..k {
            r[(i, k)] = h[i];
        }
        r[(k, k)] = rho;
        Ok(Self { q, r })
    }

    /// Factorization of `M` with its first column removed.
    ///
    /// Deleting the first column leaves `R` upper Hessenberg; Givens rotations
    /// restore the triangle and the same rotations are applied to `Q`.
    pub fn drop_first_column(&self) -> Result<Self, LinalgError> {
        let k = self.width();
        if k == 0 {
            return Err(LinalgError::EmptyWindow);
        }
        let mut r = self.r.clone().remove_column(0);
        let mut q = self.q.clone();
        for j in 0..(k - 1) {
            let a = r[(j, j)];
            let b = r[(j + 1, j)];
            let rad = a.hypot(b);
            if rad == 0.0 {
                continue;
            }
            let (c, s) = (a / rad, b / rad);
            for col in j..(k - 1) {
                let top = r[(j, col)];
                let bot = r[(j + 1, col)];
                r[(j, col)] = c * top + s * bot;
                r[(j + 1, col)] = -s * top + c * bot;
            }
            r[(j + 1, j)] = 0.0;
            for row in 0..q.nrows() {
                let left = q[(row, j)];
                let right = q[(row, j + 1)];
                q[(row, j)] = c * left + s * right;
                q[(row, j + 1)] = -s * left + c * right;
            }
        }
        Ok(Self {
            q: q.remove_column(k - 1),
            r: r.remove_row(k - 1),
        })
    }

    /// Least-squares solution of `M ξ = b`.
    pub fn least_squares(&self, b: &DenseVector) -> Result<DenseVector, LinalgError> {
        check_len(self.rows(), b.len())?;
        let k = self.width();
        if k == 0 {
            return Err(LinalgError::EmptyWindow);
        }
        let mut xi = self.q.tr_mul(b);
        for i in (0..k).rev() {
            let mut acc = xi[i];
            for j in (i + 1)..k {
                acc -= self.r[(i, j)] * xi[j];
            }
            xi[i] = acc / self.r[(i, i)];
        }
        Ok(xi)
    }
}

/// Minimizes `‖G η‖` subject to `Σ η = 1`.
///
/// The constraint is eliminated with `η₀ = 1 − Σ_{i≥1} ηᵢ`, which leaves the
/// unconstrained problem `min ‖g₀ + Σ ηᵢ (gᵢ − g₀)‖`. Difference columns that
/// are numerically dependent on the ones before them get a zero weight, so a
/// window with repeated residuals degrades to a shorter window instead of
/// failing. The same happens to the weakest column whenever the weights grow
/// so large that `|Σ η − 1| ≤ 1e-12` cannot be held in floating point.
/// [`LinalgError::DegenerateWindow`] is reserved for inputs that no
/// shortening can rescue (non-finite entries).
pub fn sum_to_one_least_squares(g: &DenseMatrix) -> Result<DenseVector, LinalgError> {
    let cols = g.ncols();
    if cols == 0 {
        return Err(LinalgError::EmptyWindow);
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::DegenerateWindow);
    }
    if cols == 1 {
        return Ok(DenseVector::from_element(1, 1.0));
    }
    let base = g.column(0).into_owned();
    // Differences at rounding level of the largest residual carry no
    // information and would only inflate the weights.
    let scale = g.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let floor = RANK_TOL * scale;
    let mut candidates: Vec<usize> = (1..cols).collect();
    loop {
        let mut qr = QrFactorization::empty(g.nrows());
        let mut kept = Vec::with_capacity(candidates.len());
        for &i in &candidates {
            let diff = g.column(i) - &base;
            match qr.append_column_with_floor(&diff, floor) {
                Ok(next) => {
                    qr = next;
                    kept.push(i);
                }
                Err(LinalgError::RankCollapse) => {}
                Err(e) => return Err(e),
            }
        }
        let mut eta = DenseVector::zeros(cols);
        if kept.is_empty() {
            eta[0] = 1.0;
            return Ok(eta);
        }
        let zeta = qr.least_squares(&(-&base))?;
        for (&i, &z) in kept.iter().zip(zeta.iter()) {
            eta[i] = z;
        }
        // η₀ last, so the weights sum to one up to rounding of the sum itself.
        eta[0] = 1.0 - eta.iter().sum::<f64>();
        for _ in 0..2 {
            eta[0] += 1.0 - eta.iter().sum::<f64>();
        }
        if (eta.sum() - 1.0).abs() <= 1e-12 {
            return Ok(eta);
        }
        // Weights too large for the constraint to hold in floating point:
        // the window is nearly dependent. Drop its weakest direction.
        let r = qr.r();
        let weakest = (0..kept.len())
            .min_by(|&a, &b| r[(a, a)].abs().total_cmp(&r[(b, b)].abs()))
            .expect("kept is non-empty");
        candidates.retain(|&i| i != kept[weakest]);
    }
}
