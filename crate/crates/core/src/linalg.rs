//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

/// Haar-distributed unitary via QR of a Ginibre matrix with the phase of
/// R's diagonal folded back into Q.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let qr = complex_gaussian(n, n, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 {
            d / norm
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order (columns of the returned unitary permuted to match).
pub fn hermitian_eigen_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Hermitian part `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `V diag(d) V^H` for real `d`.
pub fn unitary_sandwich(v: &CMatrix, d: &[f64]) -> CMatrix {
    let diag = CMatrix::from_diagonal(&DVector::from_iterator(
        d.len(),
        d.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    v * diag * v.adjoint()
}

/// Principal square root of a Hermitian PSD matrix.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen_desc(&hermitian_part(m));
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    unitary_sandwich(&vectors, &roots)
}

/// Frobenius norm of `U^H U - I`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - CMatrix::identity(n, n)).norm()
}

/// Natural-log determinant of a Hermitian positive-definite matrix.
pub fn ln_det_hpd(m: &CMatrix) -> Result<f64> {
    let h = hermitian_part(m);
    match h.clone().cholesky() {
        Some(ch) => Ok(ch.l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum()),
        None => {
            let (values, _) = hermitian_eigen_desc(&h);
            Err(Error::Singular {
                min_eigenvalue: values.last().copied().unwrap_or(0.0),
            })
        }
    }
}

/// Real trace of a square complex matrix.
pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Rectangular `rows x cols` matrix with `d` on the leading diagonal.
pub fn rect_diag(rows: usize, cols: usize, d: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    for (k, &v) in d.iter().enumerate().take(rows.min(cols)) {
        m[(k, k)] = Complex64::new(v, 0.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            assert!(unitarity_residual(&haar_unitary(n, &mut rng)) < 1e-12);
        }
    }

    #[test]
    fn eigen_sorted_descending_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = complex_gaussian(4, 4, &mut rng);
        let h = &g * g.adjoint();
        let (values, vectors) = hermitian_eigen_desc(&h);
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = unitary_sandwich(&vectors, &values);
        assert!((rebuilt - &h).norm() < 1e-10 * h.norm());
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = complex_gaussian(3, 3, &mut rng);
        let h = &g * g.adjoint();
        let s = psd_sqrt(&h);
        assert!((&s * &s - &h).norm() < 1e-10 * h.norm());
    }

    #[test]
    fn ln_det_of_diagonal() {
        let m = CMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ]));
        assert!((ln_det_hpd(&m).unwrap() - 6f64.ln()).abs() < 1e-14);
        assert!(ln_det_hpd(&CMatrix::zeros(2, 2)).is_err());
    }
}
