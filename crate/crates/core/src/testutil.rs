//! Random instances shared by unit tests.

use rand::Rng;

use crate::array::{ArrayGeometry, Clutter, GmmUserModel, SensingScene};
use crate::linalg::{random_unitary, CMatrix, CVector};
use crate::rng::{complex_normal, RngStream};

pub fn random_pilot(l: usize, n: usize, seed: u64) -> CMatrix {
    let mut rng = RngStream::new(seed).labeled("pilot").rng();
    random_unitary(n, &mut rng).rows(0, l).into_owned()
}

/// Mixture with random means and random low-rank-plus-ridge covariances.
pub fn random_model(n: usize, comps: usize, noise: f64, seed: u64) -> GmmUserModel {
    let mut rng = RngStream::new(seed).labeled("model").rng();
    let raw: Vec<f64> = (0..comps).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let fix: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - fix;
    let means = (0..comps).map(|_| CVector::from_fn(n, |_, _| complex_normal(&mut rng, 1.0))).collect();
    let covs = (0..comps)
        .map(|_| {
            let a = CMatrix::from_fn(n, 2, |_, _| complex_normal(&mut rng, 1.0));
            let r = &a * a.adjoint() + CMatrix::identity(n, n) * crate::linalg::C64::new(0.05, 0.0);
            (&r + r.adjoint()) * crate::linalg::C64::new(0.5, 0.0)
        })
        .collect();
    GmmUserModel::new(weights, means, covs, noise).unwrap()
}

pub fn random_scene(n_tx: usize, n_rx: usize, q: usize, seed: u64) -> SensingScene {
    let mut rng = RngStream::new(seed).labeled("scene").rng();
    let g = ArrayGeometry::half_wavelength(n_tx, n_rx).unwrap();
    let target = rng.random_range(-60.0..60.0);
    let clutter = (0..q)
        .map(|_| Clutter { angle_deg: rng.random_range(-80.0..80.0), power: rng.random_range(0.2..2.0) })
        .collect();
    SensingScene::new(g, target, rng.random_range(0.5..2.0), clutter, 1.0).unwrap()
}
