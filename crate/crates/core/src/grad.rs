//! Wirtinger gradients `∂f/∂Φ*` of the objectives and a finite-difference checker.
//!
//! For a real function `f` the derivative along a perturbation `E` is `2·Re⟨∂f/∂Φ*, E⟩`,
//! with `⟨A, B⟩ = tr(Aᴴ B)`.

use rayon::prelude::*;

use crate::array::{GmmUserModel, SensingScene};
use crate::error::{IsacError, Result};
use crate::linalg::{stable_sum, CMatrix, C64, ZERO};
use crate::mi::{comm_eval, sensing_eval, Evaluation, IsacObjective, SensingFormula};

fn ensure_finite(g: CMatrix, what: &str) -> Result<CMatrix> {
    if g.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(g)
    } else {
        Err(IsacError::Numeric(format!("{what} gradient has non-finite entries")))
    }
}

pub fn grad_comm_mi_user(pilot: &CMatrix, model: &GmmUserModel) -> Result<CMatrix> {
    let (_, g) = comm_eval(pilot, model, true)?;
    ensure_finite(g.expect("gradient requested"), "communication")
}

/// Gradient of the diagonal-approximation sensing MI.
pub fn grad_sensing_mi(pilot: &CMatrix, scene: &SensingScene) -> Result<CMatrix> {
    let (_, g) = sensing_eval(pilot, scene, SensingFormula::Approx, true)?;
    ensure_finite(g.expect("gradient requested"), "sensing")
}

/// Gradient of the exact sensing MI.
pub fn grad_sensing_mi_exact(pilot: &CMatrix, scene: &SensingScene) -> Result<CMatrix> {
    let (_, g) = sensing_eval(pilot, scene, SensingFormula::Exact, true)?;
    ensure_finite(g.expect("gradient requested"), "sensing")
}

/// Value, components and gradient of the scalarized objective from one pass.
pub fn evaluate_with_gradient(pilot: &CMatrix, objective: &IsacObjective) -> Result<(Evaluation, CMatrix)> {
    let rho = objective.rho();
    let mut comm_vals = Vec::with_capacity(objective.users().len());
    let mut grad = CMatrix::from_element(pilot.nrows(), pilot.ncols(), ZERO);
    for (w, user) in objective.user_weights().iter().zip(objective.users()) {
        let need = rho > 0.0 && *w > 0.0;
        let (v, g) = comm_eval(pilot, user, need)?;
        comm_vals.push(w * v);
        if let Some(g) = g {
            grad += g * C64::new(rho * w, 0.0);
        }
    }
    let comm = stable_sum(comm_vals);
    let (sense, g) = sensing_eval(pilot, objective.scene(), objective.sensing_formula(), rho < 1.0)?;
    if let Some(g) = g {
        grad += g * C64::new(1.0 - rho, 0.0);
    }
    let eval = Evaluation { objective: rho * comm + (1.0 - rho) * sense, comm, sense };
    Ok((eval, ensure_finite(grad, "objective")?))
}

/// `ρ Σ_k w_k ∇M_k^comm + (1 − ρ) ∇M^sense`.
pub fn grad_isac(pilot: &CMatrix, objective: &IsacObjective) -> Result<CMatrix> {
    evaluate_with_gradient(pilot, objective).map(|(_, g)| g)
}

/// Default relative step for [`finite_diff_check`]. Large enough that rounding noise stays
/// far below small partial derivatives; the fourth-order stencil keeps truncation error tiny.
pub const FD_STEP: f64 = 1e-4;

/// Largest per-coordinate relative error between the analytic directional derivatives and
/// fourth-order central differences over every real and imaginary coordinate of `pilot`.
///
/// The step on each coordinate is `step · max(1, |Φ_ij|)`.
pub fn finite_diff_check<F, G>(objective_fn: F, gradient_fn: G, pilot: &CMatrix, step: f64) -> Result<f64>
where
    F: Fn(&CMatrix) -> Result<f64> + Sync,
    G: Fn(&CMatrix) -> Result<CMatrix>,
{
    if !(step > 0.0) {
        return Err(IsacError::InvalidParameter(format!("finite-difference step must be positive, got {step}")));
    }
    let grad = gradient_fn(pilot)?;
    if grad.shape() != pilot.shape() {
        return Err(IsacError::Dimension("gradient shape differs from pilot shape".into()));
    }
    let (rows, cols) = pilot.shape();
    let coords: Vec<(usize, usize, bool)> =
        (0..cols).flat_map(|j| (0..rows).flat_map(move |i| [(i, j, false), (i, j, true)])).collect();
    let errors = coords
        .par_iter()
        .map(|&(i, j, imag)| {
            let h = step * pilot[(i, j)].norm().max(1.0);
            let dir = if imag { C64::new(0.0, 1.0) } else { C64::new(1.0, 0.0) };
            let at = |t: f64| {
                let mut p = pilot.clone();
                p[(i, j)] += dir * t;
                objective_fn(&p)
            };
            let numeric = (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h);
            let g = grad[(i, j)];
            let analytic = 2.0 * if imag { g.im } else { g.re };
            Ok((analytic - numeric).abs() / numeric.abs().max(1e-12))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errors.into_iter().fold(0.0, f64::max))
}
