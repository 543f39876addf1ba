//! Pure-state tomography from Pauli expectation values as nonlinear least
//! squares.
//!
//! A state `Ψ ∈ C^D`, `D = 2^n`, is stored as the real vector `[Re Ψ; Im Ψ]`.
//! Qubit 0 is the most significant bit of a basis index, matching the
//! Kronecker order `σ_{j₁} ⊗ … ⊗ σ_{jₙ}`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::splitting::ResidualProblem;

/// A tensor product of single-qubit Paulis, `jᵢ ∈ {0, 1, 2, 3}` for
/// `I, X, Y, Z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliWord {
    letters: Vec<u8>,
    x_mask: usize,
    sign_mask: usize,
    y_count: u32,
}

impl PauliWord {
    pub fn new(letters: Vec<u8>) -> Self {
        let n = letters.len();
        let mut x_mask = 0;
        let mut sign_mask = 0;
        let mut y_count = 0;
        for (q, &j) in letters.iter().enumerate() {
            assert!(j < 4, "Pauli letter out of range");
            let bit = 1usize << (n - 1 - q);
            if j == 1 || j == 2 {
                x_mask |= bit;
            }
            if j == 2 || j == 3 {
                sign_mask |= bit;
            }
            if j == 2 {
                y_count += 1;
            }
        }
        Self { letters, x_mask, sign_mask, y_count }
    }

    /// The word whose base-4 digits, most significant first, are the letters.
    pub fn from_index(index: usize, n_qubits: usize) -> Self {
        Self::new((0..n_qubits).map(|q| ((index >> (2 * (n_qubits - 1 - q))) & 3) as u8).collect())
    }

    pub fn letters(&self) -> &[u8] {
        &self.letters
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    /// `A|k⟩ = i^{#Y} (−1)^{|k ∧ s|} |k ⊕ x⟩`; returns `(Re AΨ, Im AΨ)`.
    pub fn apply(&self, re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = re.len();
        let mut out_re = vec![0.0; d];
        let mut out_im = vec![0.0; d];
        for k in 0..d {
            let sign = if (k & self.sign_mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let (a, b) = (sign * re[k], sign * im[k]);
            // multiply by i^{#Y}
            let (a, b) = match self.y_count % 4 {
                0 => (a, b),
                1 => (-b, a),
                2 => (-a, -b),
                _ => (b, -a),
            };
            let t = k ^ self.x_mask;
            out_re[t] = a;
            out_im[t] = b;
        }
        (out_re, out_im)
    }

    /// `⟨Ψ|A|Ψ⟩`, real since `A` is Hermitian.
    pub fn expectation(&self, re: &[f64], im: &[f64]) -> f64 {
        let (ar, ai) = self.apply(re, im);
        re.iter().zip(im).zip(ar.iter().zip(&ai)).map(|((r, i), (a, b))| r * a + i * b).sum()
    }
}

#[derive(Debug, Clone)]
pub struct TomographyProblem {
    pub n_qubits: usize,
    pub operators: Vec<PauliWord>,
    pub targets: Vec<f64>,
    /// The state that generated `targets`, as `[Re; Im]`.
    pub prepared_state: DenseVector,
    /// Random unit start, independent of the prepared state.
    pub initial_state: DenseVector,
    pub rng_seed: u64,
}

fn random_unit_state(rng: &mut Xoshiro256PlusPlus, d: usize) -> DenseVector {
    let mut z = DenseVector::from_fn(2 * d, |_, _| StandardNormal.sample(rng));
    let n = z.norm();
    z /= n;
    z
}

/// Random target state, `n_operators` distinct random Pauli words, and
/// their exact expectation values.
pub fn tomography_build(n_qubits: usize, n_operators: usize, seed: u64) -> Result<TomographyProblem> {
    let available = 1usize << (2 * n_qubits);
    if n_operators == 0 || n_operators > available {
        return Err(Error::TooManyOperators { requested: n_operators, available });
    }
    let d = 1usize << n_qubits;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let prepared_state = random_unit_state(&mut rng, d);
    let mut indices = sample(&mut rng, available, n_operators).into_vec();
    indices.sort_unstable();
    let operators: Vec<PauliWord> = indices.into_iter().map(|i| PauliWord::from_index(i, n_qubits)).collect();
    let (re, im) = split(&prepared_state);
    let targets = operators.iter().map(|w| w.expectation(re, im)).collect();
    let mut start_rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let initial_state = random_unit_state(&mut start_rng, d);
    Ok(TomographyProblem { n_qubits, operators, targets, prepared_state, initial_state, rng_seed: seed })
}

fn split(z: &DenseVector) -> (&[f64], &[f64]) {
    z.as_slice().split_at(z.len() / 2)
}

impl TomographyProblem {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }
}

impl ResidualProblem for TomographyProblem {
    fn out_dim(&self) -> usize {
        self.operators.len()
    }

    fn in_dim(&self) -> usize {
        2 * self.dim()
    }

    fn residual(&self, z: &DenseVector) -> DenseVector {
        let (re, im) = split(z);
        DenseVector::from_iterator(
            self.operators.len(),
            self.operators.iter().zip(&self.targets).map(|(w, a)| w.expectation(re, im) - a),
        )
    }

    /// Row `i` is `2 [Re AᵢΨ; Im AᵢΨ]ᵀ`.
    fn jacobian(&self, z: &DenseVector) -> DenseMatrix {
        let (re, im) = split(z);
        let d = self.dim();
        let mut jac = DenseMatrix::zeros(self.operators.len(), 2 * d);
        for (i, w) in self.operators.iter().enumerate() {
            let (ar, ai) = w.apply(re, im);
            for k in 0..d {
                jac[(i, k)] = 2.0 * ar[k];
                jac[(i, d + k)] = 2.0 * ai[k];
            }
        }
        jac
    }
}

/// `|⟨Ψ|Φ⟩|² / (‖Ψ‖²‖Φ‖²)` for pure states in `[Re; Im]` form.
pub fn fidelity(psi: &DenseVector, phi: &DenseVector) -> Result<f64> {
    let (n1, n2) = (psi.norm_squared(), phi.norm_squared());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroState);
    }
    let (ar, ai) = split(psi);
    let (br, bi) = split(phi);
    // ⟨a|b⟩ = Σ conj(a) b
    let mut re = 0.0;
    let mut im = 0.0;
    for k in 0..ar.len() {
        re += ar[k] * br[k] + ai[k] * bi[k];
        im += ar[k] * bi[k] - ai[k] * br[k];
    }
    Ok(((re * re + im * im) / (n1 * n2)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitting::{make_residual_splitting, SplitGradientProblem};
    use nalgebra::{Complex, DMatrix, DVector};

    type C = Complex<f64>;

    fn pauli(j: u8) -> DMatrix<C> {
        let (z, o, i) = (C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 1.0));
        match j {
            0 => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
            1 => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
            2 => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
            _ => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        }
    }

    fn dense(word: &PauliWord) -> DMatrix<C> {
        word.letters().iter().fold(DMatrix::from_element(1, 1, C::new(1.0, 0.0)), |m, &j| m.kronecker(&pauli(j)))
    }

    fn complex(z: &DenseVector) -> DVector<C> {
        let d = z.len() / 2;
        DVector::from_fn(d, |k, _| C::new(z[k], z[d + k]))
    }

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::from_row_slice(xs)
    }

    #[test]
    fn eigenstate_and_identity() {
        let zero = v(&[1.0, 0.0, 0.0, 0.0]);
        let (re, im) = split(&zero);
        assert_eq!(PauliWord::new(vec![3]).expectation(re, im), 1.0);
        let p = tomography_build(1, 4, 3).unwrap();
        let (re, im) = split(&p.prepared_state);
        assert!((PauliWord::new(vec![0]).expectation(re, im) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_free_matches_kronecker() {
        for seed in 0..4 {
            let p = tomography_build(2, 16, seed).unwrap();
            let psi = complex(&p.prepared_state);
            for (w, a) in p.operators.iter().zip(&p.targets) {
                let dense_val = (psi.adjoint() * dense(w) * &psi)[(0, 0)];
                assert!((dense_val.re - a).abs() <= 1e-12);
                assert!(dense_val.im.abs() <= 1e-12);
                let (ar, ai) = w.apply(split(&p.prepared_state).0, split(&p.prepared_state).1);
                let ap = dense(w) * &psi;
                for k in 0..4 {
                    assert!((ap[k].re - ar[k]).abs() <= 1e-12 && (ap[k].im - ai[k]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn operators_are_distinct_and_bounded() {
        let p = tomography_build(3, 64, 1).unwrap();
        let mut seen: Vec<&[u8]> = p.operators.iter().map(|w| w.letters()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 64);
        assert!(matches!(tomography_build(2, 17, 0), Err(Error::TooManyOperators { requested: 17, available: 16 })));
        assert!(matches!(tomography_build(2, 0, 0), Err(Error::TooManyOperators { .. })));
    }

    #[test]
    fn prepared_state_has_zero_cost() {
        let p = tomography_build(4, 100, 9).unwrap();
        assert!((p.prepared_state.norm() - 1.0).abs() < 1e-14);
        assert!((p.initial_state.norm() - 1.0).abs() < 1e-14);
        let s = make_residual_splitting(p.clone()).unwrap();
        assert!(s.cost(&p.prepared_state).unwrap() <= 1e-20);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = tomography_build(2, 10, 4).unwrap();
        let z = p.initial_state.clone();
        let jac = p.jacobian(&z);
        let h = 1e-6;
        for k in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fd = (p.residual(&zp) - p.residual(&zm)) / (2.0 * h);
            assert!((fd - jac.column(k)).amax() <= 1e-8);
        }
    }

    #[test]
    fn fidelity_cases() {
        let zero = v(&[1.0, 0.0, 0.0, 0.0]);
        let plus = v(&[1.0, 1.0, 0.0, 0.0]) / 2f64.sqrt();
        let one = v(&[0.0, 1.0, 0.0, 0.0]);
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&zero, &one).unwrap(), 0.0);
        assert!((fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-15);
        // global phase does not matter
        let phased = v(&[0.0, 0.0, 1.0, 0.0]);
        assert!((fidelity(&zero, &phased).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&zero, &DenseVector::zeros(4)), Err(Error::ZeroState));
    }

    #[test]
    fn construction_is_reproducible() {
        let a = tomography_build(3, 20, 42).unwrap();
        let b = tomography_build(3, 20, 42).unwrap();
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.initial_state, b.initial_state);
        assert_ne!(a.initial_state, a.prepared_state);
    }
}
