//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{IsacError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Cholesky factorization of a Hermitian positive-definite matrix with its log-determinant.
pub struct HermitianFactor {
    chol: Cholesky<C64, Dyn>,
    log_det: f64,
}

impl HermitianFactor {
    pub fn new(m: &CMatrix, what: &str) -> Result<Self> {
        let chol =
            Cholesky::new(m.clone()).ok_or_else(|| IsacError::Numeric(format!("{what} is not positive definite")))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(IsacError::Numeric(format!("{what} has non-finite log-determinant")));
        }
        Ok(Self { chol, log_det })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &CVector) -> CVector {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> CMatrix {
        self.chol.inverse()
    }
}

/// `‖A Aᴴ − I‖_F`, the distance of a row-orthonormal candidate from the Stiefel manifold.
pub fn orthonormality_residual(a: &CMatrix) -> f64 {
    let mut g = a * a.adjoint();
    for i in 0..g.nrows() {
        g[(i, i)] -= C64::new(1.0, 0.0);
    }
    g.norm()
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).camax()
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are real.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// `F` with `F Fᴴ = M` for Hermitian PSD `M`; eigenvalues below zero are clamped.
/// Returns the factor and the smallest eigenvalue seen.
pub fn psd_factor(m: &CMatrix) -> (CMatrix, f64) {
    let (vals, vecs) = hermitian_eigen(m);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut f = vecs;
    for (j, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    (f, min)
}

/// Neumaier-compensated sum, order-stable for reproducible Monte Carlo accumulation.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Random unitary matrix from the QR factorization of a complex Gaussian matrix.
pub fn random_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| crate::rng::complex_normal(rng, 1.0));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    // Fix the phases so the distribution is Haar.
    let mut u = q;
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let ph = d / d.norm();
            u.column_mut(j).apply(|x| *x *= ph);
        }
    }
    u
}

pub fn real_matrix(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn factor_log_det_matches_determinant() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), C64::new(3.0, 0.0)],
        );
        let f = HermitianFactor::new(&m, "m").unwrap();
        let det = m.determinant().re;
        assert!((f.log_det() - det.ln()).abs() < 1e-14);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = RngStream::new(3).rng();
        let u = random_unitary(5, &mut rng);
        assert!(orthonormality_residual(&u) < 1e-12);
    }

    #[test]
    fn compensated_sum_is_exact_on_cancellation() {
        assert_eq!(stable_sum([1e16, 1.0, -1e16]), 1.0);
    }
}
