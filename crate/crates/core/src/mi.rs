//! Mutual-information objectives and related diagnostics. All values are in nats.

use rayon::prelude::*;

use crate::array::{sample_channel, simulate_pilot_rx, GmmUserModel, SensingScene};
use crate::error::{IsacError, Result};
use crate::eval::estimation::GmmMmse;
use crate::linalg::{hermitian_eigen, log_sum_exp, stable_sum, CMatrix, CVector, HermitianFactor, C64, ZERO};
use crate::rng::RngStream;

/// Which sensing-MI expression the scalarized objective uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SensingFormula {
    /// Diagonal approximation of the clutter Gram matrix.
    #[default]
    Approx,
    /// Exact log-determinant through a Woodbury solve.
    Exact,
}

/// `ρ · Σ_k w_k M_k^comm + (1 − ρ) · M^sense`.
#[derive(Clone, Debug)]
pub struct IsacObjective {
    rho: f64,
    user_weights: Vec<f64>,
    users: Vec<GmmUserModel>,
    scene: SensingScene,
    sensing: SensingFormula,
}

impl IsacObjective {
    pub fn new(rho: f64, user_weights: Vec<f64>, users: Vec<GmmUserModel>, scene: SensingScene) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(IsacError::InvalidParameter(format!("rho must lie in [0, 1], got {rho}")));
        }
        if users.is_empty() || users.len() != user_weights.len() {
            return Err(IsacError::Dimension(format!("{} users but {} user weights", users.len(), user_weights.len())));
        }
        if user_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(IsacError::InvalidParameter("user weights must be nonnegative".into()));
        }
        let total: f64 = user_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(IsacError::InvalidParameter(format!("user weights sum to {total}, not 1")));
        }
        let n = scene.geometry.n_tx;
        if users.iter().any(|u| u.dim() != n) {
            return Err(IsacError::Dimension(format!("every user model must have dimension {n}")));
        }
        Ok(Self { rho, user_weights, users, scene, sensing: SensingFormula::Approx })
    }

    /// Equal user weights.
    pub fn uniform(rho: f64, users: Vec<GmmUserModel>, scene: SensingScene) -> Result<Self> {
        let k = users.len().max(1);
        Self::new(rho, vec![1.0 / k as f64; users.len()], users, scene)
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        let mut o = Self::new(rho, self.user_weights.clone(), self.users.clone(), self.scene.clone())?;
        o.sensing = self.sensing;
        Ok(o)
    }

    pub fn with_sensing_formula(mut self, sensing: SensingFormula) -> Self {
        self.sensing = sensing;
        self
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn user_weights(&self) -> &[f64] {
        &self.user_weights
    }

    pub fn users(&self) -> &[GmmUserModel] {
        &self.users
    }

    pub fn scene(&self) -> &SensingScene {
        &self.scene
    }

    pub fn sensing_formula(&self) -> SensingFormula {
        self.sensing
    }

    pub fn n_tx(&self) -> usize {
        self.scene.geometry.n_tx
    }
}

/// Objective and its two components at one pilot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub comm: f64,
    pub sense: f64,
}

fn check_pilot(pilot: &CMatrix, n_tx: usize) -> Result<()> {
    if pilot.ncols() != n_tx || pilot.nrows() == 0 {
        return Err(IsacError::Dimension(format!(
            "pilot is {} x {}, expected L x {n_tx}",
            pilot.nrows(),
            pilot.ncols()
        )));
    }
    Ok(())
}

/// Communication surrogate of one user, optionally with its gradient `∂M/∂Φ*`.
pub(crate) fn comm_eval(pilot: &CMatrix, model: &GmmUserModel, want_grad: bool) -> Result<(f64, Option<CMatrix>)> {
    check_pilot(pilot, model.dim())?;
    let l = pilot.nrows();
    let var = model.noise_std() * model.noise_std();
    let prior_mean = model.prior_mean();
    let mut log_terms = Vec::with_capacity(model.n_components());
    let mut parts = Vec::new();
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
        let mu_bar = &prior_mean - mu;
        let v = pilot * &mu_bar;
        let u = factor.solve_vec(&v);
        let beta = v.dotc(&u).re;
        log_terms.push(alpha.ln() - beta - factor.log_det());
        if want_grad {
            parts.push((factor, pr, mu_bar, u));
        }
    }
    let lse = log_sum_exp(&log_terms);
    let cnst = -(l as f64) * var.ln() - l as f64;
    let value = -lse + cnst;
    if !value.is_finite() {
        return Err(IsacError::Numeric("communication surrogate is not finite".into()));
    }
    if !want_grad {
        return Ok((value, None));
    }
    let mut grad = CMatrix::from_element(l, pilot.ncols(), ZERO);
    for (t, (factor, pr, mu_bar, u)) in log_terms.iter().zip(parts) {
        let p = (t - lse).exp();
        if p < 1e-20 {
            continue;
        }
        // Σ⁻¹ΦR + u μ̄ᴴ − u uᴴ ΦR
        let mut g = factor.solve(&pr);
        g += &u * mu_bar.adjoint();
        let uh_pr = u.adjoint() * &pr;
        g -= &u * uh_pr;
        grad += g * C64::new(p, 0.0);
    }
    Ok((value, Some(grad)))
}

/// Taylor-linearized MI between one user's received pilots and its channel.
pub fn comm_mi_user(pilot: &CMatrix, model: &GmmUserModel) -> Result<f64> {
    comm_eval(pilot, model, false).map(|(v, _)| v)
}

/// `Σ_k w_k M_k^comm`.
pub fn comm_mi_weighted(pilot: &CMatrix, objective: &IsacObjective) -> Result<f64> {
    let mut values = Vec::with_capacity(objective.users.len());
    for (w, u) in objective.user_weights.iter().zip(&objective.users) {
        values.push(w * comm_mi_user(pilot, u)?);
    }
    Ok(stable_sum(values))
}

/// `vec(a_r(θ) (Φ a_t(θ))ᵀ)`, column-major, so index `r + N_r·l` holds `a_r[r]·(Φa_t)[l]`.
pub fn sensing_mu(pilot: &CMatrix, geometry: &crate::array::ArrayGeometry, theta_deg: f64) -> Result<CVector> {
    check_pilot(pilot, geometry.n_tx)?;
    let ar = geometry.rx_steering(theta_deg);
    let b = pilot * geometry.tx_steering(theta_deg);
    let nr = geometry.n_rx;
    Ok(CVector::from_fn(nr * pilot.nrows(), |idx, _| ar[idx % nr] * b[idx / nr]))
}

/// Inner products of the sensing vectors `μ_0 … μ_Q` in factored form.
pub(crate) struct SensingGram {
    /// Transmit steering vectors as columns, target first.
    pub a_tx: CMatrix,
    /// Receive-steering inner products `c_ij = a_r(θ_i)ᴴ a_r(θ_j)`.
    pub c_rx: CMatrix,
    /// `K_ij = μ_iᴴ μ_j`.
    pub gram: CMatrix,
    pub nu: Vec<f64>,
    pub var: f64,
}

impl SensingGram {
    pub fn new(pilot: &CMatrix, scene: &SensingScene) -> Result<Self> {
        let g = &scene.geometry;
        check_pilot(pilot, g.n_tx)?;
        let angles: Vec<f64> = scene.angles().collect();
        let q1 = angles.len();
        let a_tx = CMatrix::from_fn(g.n_tx, q1, |m, i| g.tx_steering(angles[i])[m]);
        let a_rx = CMatrix::from_fn(g.n_rx, q1, |m, i| g.rx_steering(angles[i])[m]);
        let c_rx = a_rx.adjoint() * &a_rx;
        let b = pilot * &a_tx;
        let bb = b.adjoint() * &b;
        let gram = c_rx.component_mul(&bb);
        let nu = std::iter::once(scene.target_power).chain(scene.clutter.iter().map(|c| c.power)).collect();
        Ok(Self { a_tx, c_rx, gram, nu, var: scene.radar_noise_std * scene.radar_noise_std })
    }

    fn q(&self) -> usize {
        self.nu.len() - 1
    }

    /// `μ_0ᴴ C⁻¹ μ_0` with `C = Σ ν_i μ_i μ_iᴴ + σ² I`, plus the sensitivities to each `K_ij`.
    fn whitened_target_energy(&self, want_grad: bool) -> Result<(f64, Option<CMatrix>)> {
        let q = self.q();
        let s2 = self.var;
        let s = s2.sqrt();
        let k00 = self.gram[(0, 0)].re;
        if q == 0 {
            let w = want_grad.then(|| {
                let mut w = CMatrix::from_element(1, 1, ZERO);
                w[(0, 0)] = C64::new(1.0 / s2, 0.0);
                w
            });
            return Ok((k00 / s2, w));
        }
        let sq: Vec<f64> = self.nu[1..].iter().map(|v| v.sqrt()).collect();
        let mut smat = CMatrix::from_fn(q, q, |i, j| self.gram[(i + 1, j + 1)] * (sq[i] * sq[j] / s2));
        for i in 0..q {
            smat[(i, i)] += C64::new(1.0, 0.0);
        }
        let v = CVector::from_fn(q, |i, _| self.gram[(i + 1, 0)] * (sq[i] / s));
        let factor = HermitianFactor::new(&smat, "clutter Gram matrix")?;
        let y = factor.solve_vec(&v);
        let quad = v.dotc(&y).re;
        let energy = ((k00 - quad) / s2).max(0.0);
        if !want_grad {
            return Ok((energy, None));
        }
        let mut w = CMatrix::from_element(q + 1, q + 1, ZERO);
        w[(0, 0)] = C64::new(1.0 / s2, 0.0);
        for i in 0..q {
            let yr = y[i].conj();
            w[(i + 1, 0)] = -yr * (sq[i] / (s * s2));
            w[(0, i + 1)] = -y[i] * (sq[i] / (s * s2));
            for j in 0..q {
                w[(i + 1, j + 1)] = yr * y[j] * (sq[i] * sq[j] / (s2 * s2));
            }
        }
        Ok((energy, Some(w)))
    }

    /// Exact sensing MI and `∂f/∂K`.
    pub fn exact(&self, want_grad: bool) -> Result<(f64, Option<CMatrix>)> {
        let nu0 = self.nu[0];
        let (energy, w) = self.whitened_target_energy(want_grad)?;
        let x = nu0 * energy;
        let scale = nu0 / (1.0 + x);
        Ok((x.ln_1p(), w.map(|w| w * C64::new(scale, 0.0))))
    }

    /// Diagonal-approximation sensing MI and `∂f/∂K`.
    pub fn approx(&self, want_grad: bool) -> Result<(f64, Option<CMatrix>)> {
        let q = self.q();
        let s = self.nu[0] / self.var;
        let k = &self.gram;
        let mut terms = Vec::with_capacity(q + 1);
        terms.push(s * k[(0, 0)].re);
        for i in 1..=q {
            let d = self.var + self.nu[i] * k[(i, i)].re;
            terms.push(-s * self.nu[i] * k[(0, i)].norm_sqr() / d);
        }
        let x = stable_sum(terms);
        if !(1.0 + x > 0.0) {
            return Err(IsacError::Domain(1.0 + x));
        }
        let value = x.ln_1p();
        if !want_grad {
            return Ok((value, None));
        }
        let outer = 1.0 / (1.0 + x);
        let mut w = CMatrix::from_element(q + 1, q + 1, ZERO);
        w[(0, 0)] = C64::new(s * outer, 0.0);
        for i in 1..=q {
            let nu = self.nu[i];
            let d = self.var + nu * k[(i, i)].re;
            w[(0, i)] = -k[(i, 0)] * (s * nu / d * outer);
            w[(i, 0)] = -k[(0, i)] * (s * nu / d * outer);
            w[(i, i)] = C64::new(s * nu * nu * k[(0, i)].norm_sqr() / (d * d) * outer, 0.0);
        }
        Ok((value, Some(w)))
    }

    /// Chain `∂f/∂K_ij` through `K_ij = c_ij (Φa_i)ᴴ(Φa_j)`: `Φ A (W∘C)ᵀ Aᴴ`.
    pub fn pilot_gradient(&self, pilot: &CMatrix, w: &CMatrix) -> CMatrix {
        let x = w.component_mul(&self.c_rx);
        pilot * (&self.a_tx * x.transpose() * self.a_tx.adjoint())
    }
}

/// `ln(1 + ν_0 μ_0ᴴ (Σ ν_i μ_i μ_iᴴ + σ_r² I)⁻¹ μ_0)`.
pub fn sensing_mi_exact(pilot: &CMatrix, scene: &SensingScene) -> Result<f64> {
    SensingGram::new(pilot, scene)?.exact(false).map(|(v, _)| v)
}

/// Sensing MI with the clutter Gram matrix replaced by its diagonal. Exact for `Q ≤ 1`.
pub fn sensing_mi_approx(pilot: &CMatrix, scene: &SensingScene) -> Result<f64> {
    SensingGram::new(pilot, scene)?.approx(false).map(|(v, _)| v)
}

pub(crate) fn sensing_eval(
    pilot: &CMatrix,
    scene: &SensingScene,
    formula: SensingFormula,
    want_grad: bool,
) -> Result<(f64, Option<CMatrix>)> {
    let gram = SensingGram::new(pilot, scene)?;
    let (v, w) = match formula {
        SensingFormula::Approx => gram.approx(want_grad)?,
        SensingFormula::Exact => gram.exact(want_grad)?,
    };
    Ok((v, w.map(|w| gram.pilot_gradient(pilot, &w))))
}

/// Sensing MI under the objective's configured formula.
pub fn sensing_mi(pilot: &CMatrix, objective: &IsacObjective) -> Result<f64> {
    sensing_eval(pilot, &objective.scene, objective.sensing, false).map(|(v, _)| v)
}

/// Objective with its components.
pub fn evaluate(pilot: &CMatrix, objective: &IsacObjective) -> Result<Evaluation> {
    let comm = comm_mi_weighted(pilot, objective)?;
    let sense = sensing_mi(pilot, objective)?;
    Ok(Evaluation { objective: objective.rho * comm + (1.0 - objective.rho) * sense, comm, sense })
}

/// `ρ · M^comm + (1 − ρ) · M^sense`.
pub fn isac_objective(pilot: &CMatrix, objective: &IsacObjective) -> Result<f64> {
    evaluate(pilot, objective).map(|e| e.objective)
}

/// Detection-exponent quantities: `(kl, g)` with `g = x/(1+x)` and `kl = ln(1+x) − g`.
pub fn sense_kl_and_g(pilot: &CMatrix, scene: &SensingScene) -> Result<(f64, f64)> {
    let gram = SensingGram::new(pilot, scene)?;
    let (energy, _) = gram.whitened_target_energy(false)?;
    let x = gram.nu[0] * energy;
    let g = x / (1.0 + x);
    Ok((x.ln_1p() - g, g))
}

/// `ln det(I + A) − tr(I − (I + A)⁻¹)` with `A = C^{-1/2} R_dd C^{-1/2}`, by dense eigendecomposition.
pub fn sense_kl_direct(pilot: &CMatrix, scene: &SensingScene) -> Result<f64> {
    let g = &scene.geometry;
    let mu0 = sensing_mu(pilot, g, scene.target_angle_deg)?;
    let n = mu0.len();
    let mut c = CMatrix::identity(n, n) * C64::new(scene.radar_noise_std.powi(2), 0.0);
    for cl in &scene.clutter {
        let mu = sensing_mu(pilot, g, cl.angle_deg)?;
        c += &mu * mu.adjoint() * C64::new(cl.power, 0.0);
    }
    let (vals, vecs) = hermitian_eigen(&c);
    if vals.iter().any(|&v| !(v > 0.0)) {
        return Err(IsacError::Numeric("interference covariance is not positive definite".into()));
    }
    let mut inv_sqrt = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        inv_sqrt.column_mut(j).scale_mut(1.0 / v.sqrt());
    }
    let inv_sqrt = &inv_sqrt * vecs.adjoint();
    let rdd = &mu0 * mu0.adjoint() * C64::new(scene.target_power, 0.0);
    let a = &inv_sqrt * rdd * &inv_sqrt;
    let a = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let (lam, _) = hermitian_eigen(&a);
    Ok(stable_sum(lam.iter().map(|&l| {
        let l = l.max(0.0);
        l.ln_1p() - l / (1.0 + l)
    })))
}

/// `ln det R − N_t ln(tr_mse / N_t)`: prior entropy minus the Gaussian maximum-entropy error bound,
/// with the common `N_t ln(πe)` terms cancelled. Only single-component priors have a closed form.
pub fn comm_mi_lower_bound_gaussian(pilot: &CMatrix, model: &GmmUserModel, trace_mse: f64) -> Result<f64> {
    check_pilot(pilot, model.dim())?;
    if model.n_components() != 1 {
        return Err(IsacError::UnsupportedModel(format!(
            "lower bound needs a single Gaussian component, model has {}",
            model.n_components()
        )));
    }
    if !(trace_mse > 0.0) {
        return Err(IsacError::InvalidParameter(format!("trace_mse must be positive, got {trace_mse}")));
    }
    let n = model.dim() as f64;
    let prior = HermitianFactor::new(&model.covariances()[0], "prior covariance")?;
    Ok(prior.log_det() - n * (trace_mse / n).ln())
}

/// Monte Carlo estimate of the training-aware worst-case capacity bound (nats per channel use).
pub fn c_worst_estimate(
    pilot: &CMatrix,
    users: &[GmmUserModel],
    block_len: usize,
    trials: usize,
    stream: &RngStream,
) -> Result<f64> {
    if trials == 0 {
        return Err(IsacError::InvalidParameter("trials must be positive".into()));
    }
    if block_len == 0 {
        return Err(IsacError::InvalidParameter("block length must be positive".into()));
    }
    if users.is_empty() {
        return Err(IsacError::InvalidParameter("need at least one user".into()));
    }
    let estimators = users.iter().map(|u| GmmMmse::new(pilot, u)).collect::<Result<Vec<_>>>()?;
    let n_tx = pilot.ncols();
    let k = users.len();
    // One row of estimates per trial, plus error and channel energies.
    let per_trial: Vec<(CMatrix, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.substream(t as u64).rng();
            let mut est = CMatrix::from_element(k, n_tx, ZERO);
            let mut err = Vec::with_capacity(k);
            let mut energy = Vec::with_capacity(k);
            for (i, (u, e)) in users.iter().zip(&estimators).enumerate() {
                let h = sample_channel(u, &mut rng);
                let y = simulate_pilot_rx(pilot, &h, u.noise_std(), &mut rng).expect("dimensions checked");
                let hh = e.estimate(&y);
                err.push((&h - &hh).norm_squared());
                energy.push(h.norm_squared());
                est.row_mut(i).copy_from(&hh.transpose());
            }
            (est, stable_sum(err), stable_sum(energy))
        })
        .collect();
    let err = stable_sum(per_trial.iter().map(|p| p.1));
    let energy = stable_sum(per_trial.iter().map(|p| p.2));
    if !(energy > 0.0) {
        return Err(IsacError::Numeric("sampled channels have zero energy".into()));
    }
    let err_var = (err / energy).min(1.0);
    let est_var = 1.0 - err_var;
    let eff = est_var / (1.0 + err_var);
    let est_power = stable_sum(per_trial.iter().map(|p| p.0.norm_squared())) / (trials * k * n_tx) as f64;
    if !(est_power > 0.0) {
        return Ok(0.0);
    }
    let prefactor = block_len as f64 / (block_len + pilot.nrows()) as f64;
    let mut rates = Vec::with_capacity(trials);
    for (est, _, _) in &per_trial {
        let hbar = est / C64::new(est_power.sqrt(), 0.0);
        let mut m = hbar.conjugate() * hbar.transpose() * C64::new(eff / n_tx as f64, 0.0);
        for i in 0..k {
            m[(i, i)] += C64::new(1.0, 0.0);
        }
        let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        rates.push(HermitianFactor::new(&m, "capacity matrix")?.log_det());
    }
    Ok(prefactor * stable_sum(rates) / trials as f64)
}

/// `σ²_est / (1 + σ²_err)` with `σ²_est = 1 − σ²_err`.
pub fn effective_snr(err_var: f64) -> f64 {
    (1.0 - err_var) / (1.0 + err_var)
}
