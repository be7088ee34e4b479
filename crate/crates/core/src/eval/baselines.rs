//! Reference pilots: DFT rows, eigen-pilots and random orthogonal pilots.

use std::f64::consts::PI;

use crate::array::{GmmUserModel, PilotMatrix};
use crate::error::{IsacError, Result};
use crate::linalg::{hermitian_eigen, CMatrix, C64};
use crate::optim::project_stiefel;

/// First `L` rows of the unitary `N_t`-point DFT matrix.
pub fn dft_pilot(l: usize, n_tx: usize) -> Result<PilotMatrix> {
    if l == 0 || l >= n_tx {
        return Err(IsacError::Dimension(format!("DFT pilot needs 1 <= L < N_t, got L={l}, N_t={n_tx}")));
    }
    let s = 1.0 / (n_tx as f64).sqrt();
    let m = CMatrix::from_fn(l, n_tx, |r, c| C64::from_polar(s, -2.0 * PI * ((r * c) % n_tx) as f64 / n_tx as f64));
    PilotMatrix::new(m)
}

/// Rows are the conjugated top-`L` eigenvectors of the pooled second moment `Σ_k E[h_k h_kᴴ] / K`,
/// so the pilot observes the strongest channel directions.
pub fn eigen_pilot(users: &[GmmUserModel], l: usize) -> Result<PilotMatrix> {
    let first = users.first().ok_or_else(|| IsacError::InvalidParameter("need at least one user".into()))?;
    let n = first.dim();
    if l == 0 || l >= n {
        return Err(IsacError::Dimension(format!("eigen pilot needs 1 <= L < N_t, got L={l}, N_t={n}")));
    }
    let mut pooled = CMatrix::zeros(n, n);
    for u in users {
        pooled += u.second_moment();
    }
    let pooled = (&pooled + pooled.adjoint()) * C64::new(0.5 / users.len() as f64, 0.0);
    let (vals, vecs) = hermitian_eigen(&pooled);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let rows = CMatrix::from_fn(l, n, |r, c| vecs[(c, order[r])].conj());
    project_stiefel(&rows)
}
