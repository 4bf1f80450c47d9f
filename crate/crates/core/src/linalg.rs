//! Small dense-matrix helpers shared by the state, mode and phase-space code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest entry of `|m - m^†|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Trace norm `‖m‖₁` of a Hermitian matrix.
pub fn trace_norm(m: &CMatrix) -> f64 {
    eigh(m).0.iter().map(|v| v.abs()).sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Matrix function of a Hermitian matrix through its spectral decomposition.
pub fn hermitian_fn(m: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let (values, vectors) = eigh(m);
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(values.len(), values.iter().map(|&v| f(v))));
    &vectors * diag * vectors.adjoint()
}

/// Orthonormal Hermitian operator basis of dimension `d²` under the
/// Hilbert-Schmidt inner product: diagonal units, then symmetric and
/// antisymmetric off-diagonal pairs.
pub fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(d * d);
    for k in 0..d {
        let mut m = CMatrix::zeros(d, d);
        m[(k, k)] = c(1.0);
        basis.push(m);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in (j + 1)..d {
            let mut sym = CMatrix::zeros(d, d);
            sym[(j, k)] = c(s);
            sym[(k, j)] = c(s);
            basis.push(sym);
            let mut asym = CMatrix::zeros(d, d);
            asym[(j, k)] = Complex64::new(0.0, -s);
            asym[(k, j)] = Complex64::new(0.0, s);
            basis.push(asym);
        }
    }
    basis
}

pub fn check_square(m: &CMatrix, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{what} is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    Ok(m.nrows())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        let b = hermitian_basis(3);
        assert_eq!(b.len(), 9);
        for (i, x) in b.iter().enumerate() {
            assert!(hermiticity_defect(x) < 1e-15);
            for (j, y) in b.iter().enumerate() {
                let ip = trace(&(x * y)).re;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-14, "{i},{j}: {ip}");
            }
        }
    }

    #[test]
    fn eigh_reconstructs() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2.0), Complex64::new(0.5, 0.3), Complex64::new(0.5, -0.3), c(-1.0)]);
        let (vals, vecs) = eigh(&m);
        assert!(vals[0] < vals[1]);
        let diag = CMatrix::from_diagonal(&CVector::from_vec(vals.iter().map(|&v| c(v)).collect()));
        let back = &vecs * diag * vecs.adjoint();
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn kron_shape_and_values() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let b = CMatrix::identity(2, 2);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k[(2, 0)], c(3.0));
        assert_eq!(k[(3, 1)], c(3.0));
        assert_eq!(k[(2, 1)], c(0.0));
    }
}
