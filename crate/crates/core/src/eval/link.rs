//! Zero-forcing precoded 64-QAM downlink with estimated channels.

use rand::Rng;
use rayon::prelude::*;

use crate::array::{sample_channel, simulate_pilot_rx, GmmUserModel};
use crate::error::{IsacError, Result};
use crate::eval::estimation::GmmMmse;
use crate::eval::qam::{qam64_demap, qam64_map};
use crate::linalg::{CMatrix, CVector, C64};
use crate::rng::{complex_normal, RngStream};

/// `W = Ĥᴴ (Ĥ Ĥᴴ)⁻¹` with unit-norm columns, for a `K × N_t` estimate with `K ≤ N_t`.
pub fn zf_precode(channel_estimates: &CMatrix) -> Result<CMatrix> {
    let (k, n) = channel_estimates.shape();
    if k == 0 || k > n {
        return Err(IsacError::Dimension(format!("ZF needs 1 <= K <= N_t, got {k} x {n}")));
    }
    let sv = channel_estimates.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= 1e-10 * max {
        return Err(IsacError::Singular(min));
    }
    let gram = channel_estimates * channel_estimates.adjoint();
    let inv =
        gram.try_inverse().ok_or_else(|| IsacError::Numeric("channel Gram matrix could not be inverted".into()))?;
    let mut w = channel_estimates.adjoint() * inv;
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        col.unscale_mut(norm);
    }
    Ok(w)
}

/// Channel knowledge used for precoding and equalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Csi {
    /// GMM-MMSE estimates from the pilot observations.
    Estimated,
    /// True channels.
    Perfect,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SerPoint {
    pub snr_db: f64,
    pub ser: f64,
    pub errors: u64,
    pub symbols: u64,
}

/// Noise variance at a given SNR: each precoded stream has unit power, so `N_0 = 10^(−SNR/10)`.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Symbol error rate of ZF-precoded 64-QAM per SNR point.
///
/// Each block of `block_len` symbols per user shares one channel draw and one pilot phase. All SNR
/// points reuse the same channels, symbols and unit-variance noise draws. Receiver `k` divides by
/// its estimated effective gain `ĥ_kᵀ w_k` before the hard decision.
pub fn ser_experiment(
    pilot: &CMatrix,
    users: &[GmmUserModel],
    snr_grid_db: &[f64],
    n_symbols: usize,
    block_len: usize,
    stream: &RngStream,
) -> Result<Vec<SerPoint>> {
    ser_experiment_with(pilot, users, snr_grid_db, n_symbols, block_len, Csi::Estimated, stream)
}

pub fn ser_experiment_with(
    pilot: &CMatrix,
    users: &[GmmUserModel],
    snr_grid_db: &[f64],
    n_symbols: usize,
    block_len: usize,
    csi: Csi,
    stream: &RngStream,
) -> Result<Vec<SerPoint>> {
    if users.is_empty() || block_len == 0 || n_symbols == 0 {
        return Err(IsacError::InvalidParameter("need users, a positive block length and symbols".into()));
    }
    let k = users.len();
    let estimators = users.iter().map(|u| GmmMmse::new(pilot, u)).collect::<Result<Vec<_>>>()?;
    let n_blocks = n_symbols.div_ceil(block_len * k);
    let noise_std: Vec<f64> = snr_grid_db.iter().map(|&s| noise_variance(s).sqrt()).collect();
    let per_block = (0..n_blocks)
        .into_par_iter()
        .map(|b| -> Result<Vec<u64>> {
            let mut rng = stream.substream(b as u64).rng();
            let n_tx = pilot.ncols();
            let mut h = CMatrix::zeros(k, n_tx);
            let mut h_est = CMatrix::zeros(k, n_tx);
            for (i, (u, e)) in users.iter().zip(&estimators).enumerate() {
                let hi = sample_channel(u, &mut rng);
                let y = simulate_pilot_rx(pilot, &hi, u.noise_std(), &mut rng)?;
                let est: CVector = match csi {
                    Csi::Estimated => e.estimate(&y),
                    Csi::Perfect => hi.clone(),
                };
                h.row_mut(i).copy_from(&hi.transpose());
                h_est.row_mut(i).copy_from(&est.transpose());
            }
            let w = zf_precode(&h_est)?;
            let eff = &h * &w;
            let gains: Vec<C64> = (0..k).map(|i| (h_est.row(i) * w.column(i))[(0, 0)]).collect();
            let mut errors = vec![0u64; noise_std.len()];
            for _ in 0..block_len {
                let labels: Vec<u8> = (0..k).map(|_| rng.random_range(0..64u8)).collect();
                let s = CVector::from_iterator(k, labels.iter().map(|&l| qam64_map(l)));
                let noise: Vec<C64> = (0..k).map(|_| complex_normal(&mut rng, 1.0)).collect();
                let clean = &eff * &s;
                for (e, sd) in errors.iter_mut().zip(&noise_std) {
                    for i in 0..k {
                        let r = clean[i] + noise[i] * *sd;
                        if qam64_demap(r / gains[i]) != labels[i] {
                            *e += 1;
                        }
                    }
                }
            }
            Ok(errors)
        })
        .collect::<Result<Vec<_>>>()?;
    let symbols = (n_blocks * block_len * k) as u64;
    Ok(snr_grid_db
        .iter()
        .enumerate()
        .map(|(j, &snr_db)| {
            let errors: u64 = per_block.iter().map(|e| e[j]).sum();
            SerPoint { snr_db, ser: errors as f64 / symbols as f64, errors, symbols }
        })
        .collect())
}
