//! Radar frame simulation, the whitened matched detector and empirical ROC curves.

use rayon::prelude::*;

use crate::array::SensingScene;
use crate::error::{IsacError, Result};
use crate::linalg::{CMatrix, CVector, HermitianFactor, C64};
use crate::mi::sensing_mu;
use crate::rng::{complex_normal, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    /// Clutter and noise only.
    H0,
    /// Target present.
    H1,
}

/// Paired detector outputs of one trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionTrial {
    pub statistic_h0: f64,
    pub statistic_h1: f64,
}

/// Sensing vectors of one pilot/scene pair: target first, then clutter.
pub struct RadarModel {
    mus: Vec<CVector>,
    powers: Vec<f64>,
    noise_std: f64,
}

impl RadarModel {
    pub fn new(pilot: &CMatrix, scene: &SensingScene) -> Result<Self> {
        let mus = scene.angles().map(|t| sensing_mu(pilot, &scene.geometry, t)).collect::<Result<Vec<_>>>()?;
        let powers = std::iter::once(scene.target_power).chain(scene.clutter.iter().map(|c| c.power)).collect();
        Ok(Self { mus, powers, noise_std: scene.radar_noise_std })
    }

    pub fn dim(&self) -> usize {
        self.mus[0].len()
    }

    /// `[γ_0 μ_0] + Σ γ_i μ_i + n` with Swerling-I gains `γ_i ~ CN(0, ν_i)`.
    pub fn frame<R: rand::Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R) -> CVector {
        let n = self.dim();
        let var = self.noise_std * self.noise_std;
        let mut y = CVector::from_fn(n, |_, _| complex_normal(rng, var));
        let skip = usize::from(hypothesis == Hypothesis::H0);
        for (mu, &p) in self.mus.iter().zip(&self.powers).skip(skip) {
            let g = complex_normal(rng, p);
            y.axpy(g, mu, C64::new(1.0, 0.0));
        }
        y
    }
}

pub fn simulate_radar_frame<R: rand::Rng + ?Sized>(
    pilot: &CMatrix,
    scene: &SensingScene,
    hypothesis: Hypothesis,
    rng: &mut R,
) -> Result<CVector> {
    Ok(RadarModel::new(pilot, scene)?.frame(hypothesis, rng))
}

/// `T = |μ_0ᴴ C⁻¹ y|²` with `C = Σ_{i≥1} ν_i μ_i μ_iᴴ + σ_r² I` built from the true scene.
pub struct Detector {
    filter: CVector,
    /// `μ_0ᴴ C⁻¹ μ_0`; under H0, `T / norm` is Exp(1).
    pub norm: f64,
}

impl Detector {
    pub fn new(pilot: &CMatrix, scene: &SensingScene) -> Result<Self> {
        let model = RadarModel::new(pilot, scene)?;
        Self::from_model(&model)
    }

    pub fn from_model(model: &RadarModel) -> Result<Self> {
        let n = model.dim();
        let var = model.noise_std * model.noise_std;
        let mut c = CMatrix::identity(n, n) * C64::new(var, 0.0);
        for (mu, &p) in model.mus.iter().zip(&model.powers).skip(1) {
            c += mu * mu.adjoint() * C64::new(p, 0.0);
        }
        let factor = HermitianFactor::new(&c, "interference covariance")?;
        let filter = factor.solve_vec(&model.mus[0]);
        let norm = model.mus[0].dotc(&filter).re;
        Ok(Self { filter, norm })
    }

    pub fn statistic(&self, y: &CVector) -> f64 {
        self.filter.dotc(y).norm_sqr()
    }
}

pub fn detector_statistic(y: &CVector, pilot: &CMatrix, scene: &SensingScene) -> Result<f64> {
    let d = Detector::new(pilot, scene)?;
    if y.len() != d.filter.len() {
        return Err(IsacError::Dimension(format!("frame has {} entries, expected {}", y.len(), d.filter.len())));
    }
    Ok(d.statistic(y))
}

/// H0 and H1 statistics per trial from disjoint substreams of `stream`.
pub fn detection_trials(
    pilot: &CMatrix,
    scene: &SensingScene,
    n_trials: usize,
    stream: &RngStream,
) -> Result<Vec<DetectionTrial>> {
    let model = RadarModel::new(pilot, scene)?;
    let det = Detector::from_model(&model)?;
    let h0 = stream.labeled("h0");
    let h1 = stream.labeled("h1");
    Ok((0..n_trials)
        .into_par_iter()
        .map(|t| {
            let y0 = model.frame(Hypothesis::H0, &mut h0.substream(t as u64).rng());
            let y1 = model.frame(Hypothesis::H1, &mut h1.substream(t as u64).rng());
            DetectionTrial { statistic_h0: det.statistic(&y0), statistic_h1: det.statistic(&y1) }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    /// Requested false-alarm probability.
    pub target_p_fa: f64,
    /// Achieved empirical false-alarm rate.
    pub p_fa: f64,
    pub p_d: f64,
    pub threshold: f64,
    /// The target is below the `1/n_trials` resolution.
    pub under_resolved: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Build from paired statistics. Thresholds are H0 order statistics.
    pub fn from_trials(trials: &[DetectionTrial], p_fa_grid: &[f64]) -> Result<Self> {
        let n = trials.len();
        if n == 0 {
            return Err(IsacError::InvalidParameter("need at least one trial".into()));
        }
        if let Some(p) = p_fa_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(IsacError::InvalidParameter(format!("p_fa must lie in [0, 1], got {p}")));
        }
        let mut h0: Vec<f64> = trials.iter().map(|t| t.statistic_h0).collect();
        let mut h1: Vec<f64> = trials.iter().map(|t| t.statistic_h1).collect();
        h0.sort_by(f64::total_cmp);
        h1.sort_by(f64::total_cmp);
        let mut grid = p_fa_grid.to_vec();
        grid.sort_by(f64::total_cmp);
        let points = grid
            .into_iter()
            .map(|target| {
                let k = ((target * n as f64).floor() as usize).min(n);
                let threshold = if k >= n { f64::NEG_INFINITY } else { h0[n - 1 - k] };
                let above0 = n - h0.partition_point(|&x| x <= threshold);
                let above1 = n - h1.partition_point(|&x| x <= threshold);
                RocPoint {
                    target_p_fa: target,
                    p_fa: above0 as f64 / n as f64,
                    p_d: above1 as f64 / n as f64,
                    threshold,
                    under_resolved: target < 1.0 / n as f64,
                }
            })
            .collect();
        Ok(Self { points })
    }

    /// Detection probability at the grid point closest to `p_fa`.
    pub fn p_d_at(&self, p_fa: f64) -> Option<f64> {
        self.points
            .iter()
            .min_by(|a, b| (a.target_p_fa - p_fa).abs().total_cmp(&(b.target_p_fa - p_fa).abs()))
            .map(|p| p.p_d)
    }
}

pub fn roc_curve(
    pilot: &CMatrix,
    scene: &SensingScene,
    n_trials: usize,
    p_fa_grid: &[f64],
    stream: &RngStream,
) -> Result<RocCurve> {
    if n_trials == 0 {
        return Err(IsacError::InvalidParameter("n_trials must be positive".into()));
    }
    RocCurve::from_trials(&detection_trials(pilot, scene, n_trials, stream)?, p_fa_grid)
}

/// Two-sided Kolmogorov–Smirnov distance between a sample and the Exp(1) law.
pub fn ks_exponential(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-x).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
