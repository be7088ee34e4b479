//! Array geometry, steering vectors, the GMM channel prior and pilot-phase reception.

use std::f64::consts::PI;
use std::ops::Deref;

use rand::Rng;

use crate::error::{IsacError, Result};
use crate::linalg::{hermitian_defect, orthonormality_residual, psd_factor, CMatrix, CVector, C64, ZERO};
use crate::rng::complex_normal;

/// Feasibility tolerance on `‖ΦΦᴴ − I‖_F`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Uniform linear transmit and receive arrays. Spacings are in wavelengths.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    pub spacing_tx: f64,
    pub spacing_rx: f64,
}

impl ArrayGeometry {
    pub fn new(n_tx: usize, n_rx: usize, spacing_tx: f64, spacing_rx: f64) -> Result<Self> {
        if n_tx == 0 || n_rx == 0 {
            return Err(IsacError::InvalidParameter("array sizes must be at least 1".into()));
        }
        if !(spacing_tx > 0.0 && spacing_rx > 0.0) {
            return Err(IsacError::InvalidParameter("antenna spacings must be positive".into()));
        }
        Ok(Self { n_tx, n_rx, spacing_tx, spacing_rx })
    }

    /// Half-wavelength spacing on both arrays.
    pub fn half_wavelength(n_tx: usize, n_rx: usize) -> Result<Self> {
        Self::new(n_tx, n_rx, 0.5, 0.5)
    }

    pub fn tx_steering(&self, theta_deg: f64) -> CVector {
        steering_vector(self.n_tx, self.spacing_tx, theta_deg)
    }

    pub fn rx_steering(&self, theta_deg: f64) -> CVector {
        steering_vector(self.n_rx, self.spacing_rx, theta_deg)
    }
}

/// ULA response: entry `m` is `exp(j 2π d m sin θ)`.
pub fn steering_vector(n: usize, spacing_wavelengths: f64, theta_deg: f64) -> CVector {
    let phase = 2.0 * PI * spacing_wavelengths * theta_deg.to_radians().sin();
    CVector::from_fn(n, |m, _| C64::from_polar(1.0, phase * m as f64))
}

/// Laplacian angular activation probabilities sampled on `grid_deg`, normalized to sum to one.
pub fn laplacian_weights(mean_aoa_deg: f64, spread_deg: f64, grid_deg: &[f64]) -> Result<Vec<f64>> {
    if !(spread_deg > 0.0) {
        return Err(IsacError::InvalidParameter(format!("azimuth spread must be positive, got {spread_deg}")));
    }
    if grid_deg.is_empty() {
        return Err(IsacError::InvalidParameter("angle grid is empty".into()));
    }
    let scale = 1.0 / (2f64.sqrt() * spread_deg);
    let raw: Vec<f64> =
        grid_deg.iter().map(|&t| scale * (-(2f64.sqrt()) * (t - mean_aoa_deg).abs() / spread_deg).exp()).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(IsacError::Numeric("Laplacian weights underflowed on the whole grid".into()));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `∫ a(θ) aᴴ(θ) dθ` over `[lo, hi]` degrees by the midpoint rule; the measure is in radians.
pub fn region_covariance(
    geometry: &ArrayGeometry,
    region_lo_deg: f64,
    region_hi_deg: f64,
    quadrature_points: usize,
) -> Result<CMatrix> {
    if !(region_lo_deg < region_hi_deg) {
        return Err(IsacError::InvalidRegion { lo: region_lo_deg, hi: region_hi_deg });
    }
    if quadrature_points == 0 {
        return Err(IsacError::InvalidParameter("quadrature needs at least one point".into()));
    }
    let n = geometry.n_tx;
    let step_deg = (region_hi_deg - region_lo_deg) / quadrature_points as f64;
    let w = step_deg.to_radians();
    let mut r = CMatrix::from_element(n, n, ZERO);
    for q in 0..quadrature_points {
        let a = geometry.tx_steering(region_lo_deg + (q as f64 + 0.5) * step_deg);
        for j in 0..n {
            let aj = a[j].conj();
            for i in 0..=j {
                r[(i, j)] += a[i] * aj * w;
            }
        }
    }
    for j in 0..n {
        r[(j, j)].im = 0.0;
        for i in 0..j {
            r[(j, i)] = r[(i, j)].conj();
        }
    }
    Ok(r)
}

/// How component means are chosen. The means are not part of the angular-region construction,
/// so they are an explicit modelling choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeanPolicy {
    Zero,
    /// `μ_n = scale · a(θ_n)` at the region centre.
    Steering {
        scale: f64,
    },
}

impl Default for MeanPolicy {
    fn default() -> Self {
        MeanPolicy::Steering { scale: 1.0 }
    }
}

impl std::fmt::Display for MeanPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeanPolicy::Zero => write!(f, "zero"),
            MeanPolicy::Steering { scale } => write!(f, "steering(scale={scale})"),
        }
    }
}

/// Gaussian-mixture prior of one user's channel plus that user's noise level.
#[derive(Clone, Debug)]
pub struct GmmUserModel {
    weights: Vec<f64>,
    means: Vec<CVector>,
    covariances: Vec<CMatrix>,
    factors: Vec<CMatrix>,
    noise_std: f64,
    pub mean_aoa_deg: f64,
    pub azimuth_spread_deg: f64,
}

impl GmmUserModel {
    pub fn new(weights: Vec<f64>, means: Vec<CVector>, covariances: Vec<CMatrix>, noise_std: f64) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(IsacError::Dimension(format!(
                "mixture has {} weights, {} means, {} covariances",
                k,
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(IsacError::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(IsacError::InvalidParameter(format!("mixture weights sum to {total}, not 1")));
        }
        if !(noise_std > 0.0) {
            return Err(IsacError::InvalidParameter(format!("noise_std must be positive, got {noise_std}")));
        }
        let n = means[0].len();
        let mut factors = Vec::with_capacity(k);
        for (i, (mu, r)) in means.iter().zip(&covariances).enumerate() {
            if mu.len() != n || r.nrows() != n || r.ncols() != n {
                return Err(IsacError::Dimension(format!("component {i} does not match dimension {n}")));
            }
            if hermitian_defect(r) > 1e-12 {
                return Err(IsacError::InvalidParameter(format!("covariance {i} is not Hermitian")));
            }
            let (f, min_eig) = psd_factor(r);
            if min_eig < -1e-10 {
                return Err(IsacError::InvalidParameter(format!(
                    "covariance {i} is not PSD (min eigenvalue {min_eig:e})"
                )));
            }
            factors.push(f);
        }
        Ok(Self {
            weights,
            means,
            covariances,
            factors,
            noise_std,
            mean_aoa_deg: f64::NAN,
            azimuth_spread_deg: f64::NAN,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[CVector] {
        &self.means
    }

    pub fn covariances(&self) -> &[CMatrix] {
        &self.covariances
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Same prior, different noise level.
    pub fn with_noise_std(&self, noise_std: f64) -> Result<Self> {
        if !(noise_std > 0.0) {
            return Err(IsacError::InvalidParameter(format!("noise_std must be positive, got {noise_std}")));
        }
        let mut m = self.clone();
        m.noise_std = noise_std;
        Ok(m)
    }

    /// `Σ_n α_n μ_n`.
    pub fn prior_mean(&self) -> CVector {
        let mut m = CVector::from_element(self.dim(), ZERO);
        for (w, mu) in self.weights.iter().zip(&self.means) {
            m.axpy(C64::new(*w, 0.0), mu, C64::new(1.0, 0.0));
        }
        m
    }

    /// `E[h hᴴ] = Σ_n α_n (R_n + μ_n μ_nᴴ)`.
    pub fn second_moment(&self) -> CMatrix {
        let n = self.dim();
        let mut s = CMatrix::from_element(n, n, ZERO);
        for ((w, mu), r) in self.weights.iter().zip(&self.means).zip(&self.covariances) {
            let wc = C64::new(*w, 0.0);
            s += (r + mu * mu.adjoint()) * wc;
        }
        s
    }
}

/// Partition `[-90°, 90°]` into `n_components` equal regions, one mixture component per region.
pub fn build_user_model(
    geometry: &ArrayGeometry,
    mean_aoa_deg: f64,
    spread_deg: f64,
    n_components: usize,
    noise_std: f64,
    mean_policy: MeanPolicy,
    quadrature_points: usize,
) -> Result<GmmUserModel> {
    if n_components == 0 {
        return Err(IsacError::InvalidParameter("need at least one mixture component".into()));
    }
    let (edges, centers) = region_partition(n_components);
    let weights = laplacian_weights(mean_aoa_deg, spread_deg, &centers)?;
    let mut covariances = Vec::with_capacity(n_components);
    let mut means = Vec::with_capacity(n_components);
    for (n, &c) in centers.iter().enumerate() {
        covariances.push(region_covariance(geometry, edges[n], edges[n + 1], quadrature_points)?);
        means.push(match mean_policy {
            MeanPolicy::Zero => CVector::from_element(geometry.n_tx, ZERO),
            MeanPolicy::Steering { scale } => geometry.tx_steering(c) * C64::new(scale, 0.0),
        });
    }
    let mut model = GmmUserModel::new(weights, means, covariances, noise_std)?;
    model.mean_aoa_deg = mean_aoa_deg;
    model.azimuth_spread_deg = spread_deg;
    Ok(model)
}

/// Region edges (`n + 1` values) and centres over `[-90°, 90°]`.
pub fn region_partition(n_components: usize) -> (Vec<f64>, Vec<f64>) {
    let width = 180.0 / n_components as f64;
    let edges: Vec<f64> = (0..=n_components).map(|i| -90.0 + width * i as f64).collect();
    let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    (edges, centers)
}

/// Draw a channel: pick a component by weight, then `h = μ_n + F_n w` with `F_n F_nᴴ = R_n`.
pub fn sample_channel<R: Rng + ?Sized>(model: &GmmUserModel, rng: &mut R) -> CVector {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut idx = model.n_components() - 1;
    for (i, w) in model.weights.iter().enumerate() {
        acc += w;
        if u < acc {
            idx = i;
            break;
        }
    }
    let n = model.dim();
    let w = CVector::from_fn(n, |_, _| complex_normal(rng, 1.0));
    &model.means[idx] + &model.factors[idx] * w
}

/// `y = Φ h + n` with `n ~ CN(0, σ² I)`.
pub fn simulate_pilot_rx<R: Rng + ?Sized>(
    pilot: &CMatrix,
    channel: &CVector,
    noise_std: f64,
    rng: &mut R,
) -> Result<CVector> {
    if pilot.ncols() != channel.len() {
        return Err(IsacError::Dimension(format!(
            "pilot has {} columns, channel has {} entries",
            pilot.ncols(),
            channel.len()
        )));
    }
    let mut y = pilot * channel;
    if noise_std > 0.0 {
        let var = noise_std * noise_std;
        for v in y.iter_mut() {
            *v += complex_normal(rng, var);
        }
    }
    Ok(y)
}

/// Radar clutter source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clutter {
    pub angle_deg: f64,
    pub power: f64,
}

/// Monostatic radar scene: one target look direction, `Q` clutter sources, white noise.
#[derive(Clone, Debug)]
pub struct SensingScene {
    pub target_angle_deg: f64,
    pub target_power: f64,
    pub clutter: Vec<Clutter>,
    pub radar_noise_std: f64,
    pub geometry: ArrayGeometry,
}

impl SensingScene {
    pub fn new(
        geometry: ArrayGeometry,
        target_angle_deg: f64,
        target_power: f64,
        clutter: Vec<Clutter>,
        radar_noise_std: f64,
    ) -> Result<Self> {
        if !(target_power >= 0.0) || clutter.iter().any(|c| !(c.power >= 0.0)) {
            return Err(IsacError::InvalidParameter("target and clutter powers must be nonnegative".into()));
        }
        if !(radar_noise_std > 0.0) {
            return Err(IsacError::InvalidParameter("radar noise std must be positive".into()));
        }
        Ok(Self { target_angle_deg, target_power, clutter, radar_noise_std, geometry })
    }

    /// Angles `θ_0, θ_1, …, θ_Q` with the target first.
    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.target_angle_deg).chain(self.clutter.iter().map(|c| c.angle_deg))
    }

    pub fn with_target_power(&self, power: f64) -> Self {
        let mut s = self.clone();
        s.target_power = power;
        s
    }
}

/// A row-orthonormal `L × N_t` pilot matrix with `L < N_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotMatrix(CMatrix);

impl PilotMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() >= entries.ncols() {
            return Err(IsacError::Dimension(format!(
                "pilot must be L x N_t with 1 <= L < N_t, got {} x {}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let res = orthonormality_residual(&entries);
        if !(res <= FEASIBILITY_TOL) {
            return Err(IsacError::InvalidParameter(format!("pilot rows are not orthonormal (residual {res:e})")));
        }
        Ok(Self(entries))
    }

    /// Wrap without checking feasibility; callers guarantee the invariant.
    pub(crate) fn new_unchecked(entries: CMatrix) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn n_tx(&self) -> usize {
        self.0.ncols()
    }

    pub fn residual(&self) -> f64 {
        orthonormality_residual(&self.0)
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }
}

impl Deref for PilotMatrix {
    type Target = CMatrix;

    fn deref(&self) -> &CMatrix {
        &self.0
    }
}
