//! GMM-MMSE channel estimation and NMSE experiments.

use rayon::prelude::*;

use crate::array::{sample_channel, simulate_pilot_rx, GmmUserModel};
use crate::error::{IsacError, Result};
use crate::linalg::{log_sum_exp, stable_sum, CMatrix, CVector, HermitianFactor, C64, ZERO};
use crate::rng::RngStream;

struct Component {
    factor: HermitianFactor,
    mean: CVector,
    pilot_mean: CVector,
    /// `R Φᴴ Σ⁻¹`
    gain: CMatrix,
    log_weight: f64,
}

/// MMSE estimator for one pilot and one GMM prior, with per-component factorizations cached.
pub struct GmmMmse {
    components: Vec<Component>,
    n_obs: usize,
}

impl GmmMmse {
    pub fn new(pilot: &CMatrix, model: &GmmUserModel) -> Result<Self> {
        if pilot.ncols() != model.dim() {
            return Err(IsacError::Dimension(format!(
                "pilot has {} columns, model dimension is {}",
                pilot.ncols(),
                model.dim()
            )));
        }
        let l = pilot.nrows();
        let var = model.noise_std() * model.noise_std();
        let mut components = Vec::with_capacity(model.n_components());
        for ((&alpha, mu), r) in model.weights().iter().zip(model.means()).zip(model.covariances()) {
            if alpha <= 0.0 {
                continue;
            }
            let pr = pilot * r;
            let mut sigma = &pr * pilot.adjoint();
            for i in 0..l {
                sigma[(i, i)] += var;
            }
            let factor = HermitianFactor::new(&sigma, "pilot-domain covariance")?;
            let gain = factor.solve(&pr).adjoint();
            components.push(Component {
                log_weight: alpha.ln() - factor.log_det(),
                pilot_mean: pilot * mu,
                mean: mu.clone(),
                gain,
                factor,
            });
        }
        Ok(Self { components, n_obs: l })
    }

    /// Estimate together with the posterior component probabilities (zero-weight components omitted).
    pub fn estimate_with_responsibilities(&self, y: &CVector) -> (CVector, Vec<f64>) {
        assert_eq!(y.len(), self.n_obs, "observation length");
        let mut logs = Vec::with_capacity(self.components.len());
        let mut resid = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let e = y - &c.pilot_mean;
            let quad = e.dotc(&c.factor.solve_vec(&e)).re;
            logs.push(c.log_weight - quad);
            resid.push(e);
        }
        let lse = log_sum_exp(&logs);
        let resp: Vec<f64> = logs.iter().map(|t| (t - lse).exp()).collect();
        let n = self.components[0].mean.len();
        let mut h = CVector::from_element(n, ZERO);
        for ((c, e), &p) in self.components.iter().zip(&resid).zip(&resp) {
            if p == 0.0 {
                continue;
            }
            let local = &c.mean + &c.gain * e;
            h.axpy(C64::new(p, 0.0), &local, C64::new(1.0, 0.0));
        }
        (h, resp)
    }

    pub fn estimate(&self, y: &CVector) -> CVector {
        self.estimate_with_responsibilities(y).0
    }
}

/// Posterior-mean channel estimate `Σ_n p_n (μ_n + R_n Φᴴ Σ_n⁻¹ (y − Φ μ_n))`.
pub fn gmm_mmse_estimate(y: &CVector, pilot: &CMatrix, model: &GmmUserModel) -> Result<CVector> {
    if y.len() != pilot.nrows() {
        return Err(IsacError::Dimension(format!(
            "observation has {} entries, pilot has {} rows",
            y.len(),
            pilot.nrows()
        )));
    }
    Ok(GmmMmse::new(pilot, model)?.estimate(y))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NmseResult {
    pub per_user: Vec<f64>,
    pub pooled: f64,
    /// Trials dropped because the sampled channel had zero norm.
    pub skipped: usize,
}

/// Average of `‖h − ĥ‖² / ‖h‖²` over trials, per user and pooled.
pub fn nmse_experiment(
    pilot: &CMatrix,
    users: &[GmmUserModel],
    n_trials: usize,
    stream: &RngStream,
) -> Result<NmseResult> {
    if n_trials == 0 {
        return Err(IsacError::InvalidParameter("n_trials must be positive".into()));
    }
    let mut per_user = Vec::with_capacity(users.len());
    let mut pooled = Vec::new();
    let mut skipped = 0;
    for (k, user) in users.iter().enumerate() {
        let est = GmmMmse::new(pilot, user)?;
        let user_stream = stream.substream(k as u64);
        let ratios: Vec<Option<f64>> = (0..n_trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = user_stream.substream(t as u64).rng();
                let h = sample_channel(user, &mut rng);
                let y = simulate_pilot_rx(pilot, &h, user.noise_std(), &mut rng).expect("dimensions checked");
                let energy = h.norm_squared();
                (energy > 0.0).then(|| (&h - est.estimate(&y)).norm_squared() / energy)
            })
            .collect();
        let kept: Vec<f64> = ratios.iter().flatten().copied().collect();
        skipped += n_trials - kept.len();
        if kept.is_empty() {
            return Err(IsacError::Numeric(format!("every channel draw for user {k} had zero norm")));
        }
        per_user.push(stable_sum(kept.iter().copied()) / kept.len() as f64);
        pooled.extend(kept);
    }
    let pooled = stable_sum(pooled.iter().copied()) / pooled.len() as f64;
    Ok(NmseResult { per_user, pooled, skipped })
}
