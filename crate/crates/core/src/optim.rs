//! Projected gradient ascent on the Stiefel manifold, ρ-sweeps and Pareto filtering.

use rayon::prelude::*;

use crate::array::PilotMatrix;
use crate::error::{IsacError, Result};
use crate::grad::evaluate_with_gradient;
use crate::linalg::{orthonormality_residual, CMatrix, C64};
use crate::mi::{evaluate, IsacObjective};
use crate::rng::{complex_normal, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the relative objective change across `window` iterations drops below this; 0 disables.
    pub rel_tol: f64,
    pub window: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { step_size: 0.1, max_iters: 200, rel_tol: 1e-8, window: 10, seed: 0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(IsacError::InvalidParameter(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(IsacError::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(IsacError::InvalidParameter(format!("rel_tol must be nonnegative, got {}", self.rel_tol)));
        }
        if self.window == 0 {
            return Err(IsacError::InvalidParameter("window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub comm: f64,
    pub sense: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizationTrace {
    /// Iteration 0 is the initializer.
    pub records: Vec<IterationRecord>,
    pub pilots: Vec<PilotMatrix>,
    pub final_pilot: PilotMatrix,
}

impl OptimizationTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace always holds the initial point")
    }

    /// Number of ascent steps taken.
    pub fn iterations(&self) -> usize {
        self.last().iter
    }
}

/// Closest row-orthonormal matrix in Frobenius norm: `U Vᴴ` from the thin SVD `Z = U Λ Vᴴ`.
pub fn project_stiefel(z: &CMatrix) -> Result<PilotMatrix> {
    let (l, n) = z.shape();
    if l == 0 || l >= n {
        return Err(IsacError::Dimension(format!("projection needs 1 <= L < N_t, got {l} x {n}")));
    }
    if z.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(IsacError::Numeric("cannot project a matrix with non-finite entries".into()));
    }
    let svd = z.clone().svd(true, true);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-12) {
        return Err(IsacError::Singular(smin));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᴴ");
    Ok(PilotMatrix::new_unchecked(u * v_t))
}

/// Complex Gaussian `L × N_t` matrix projected onto the manifold.
pub fn random_stiefel(l: usize, n_tx: usize, stream: &RngStream) -> Result<PilotMatrix> {
    if l == 0 || l >= n_tx {
        return Err(IsacError::Dimension(format!("random pilot needs 1 <= L < N_t, got L={l}, N_t={n_tx}")));
    }
    let mut rng = stream.rng();
    let z = CMatrix::from_fn(l, n_tx, |_, _| complex_normal(&mut rng, 1.0));
    project_stiefel(&z)
}

fn record(iter: usize, eval: crate::mi::Evaluation, pilot: &CMatrix) -> IterationRecord {
    IterationRecord {
        iter,
        objective: eval.objective,
        comm: eval.comm,
        sense: eval.sense,
        residual: orthonormality_residual(pilot),
    }
}

fn at(iter: usize) -> impl Fn(IsacError) -> IsacError {
    move |e| IsacError::AtIteration { iter, source: Box::new(e) }
}

/// `Z = Φ + γ ∇M`, `Φ ← π(Z)` until the iteration budget or the windowed stop rule.
pub fn optimize_pgd(
    init: &PilotMatrix,
    objective: &IsacObjective,
    config: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    config.validate()?;
    if init.ncols() != objective.n_tx() {
        return Err(IsacError::Dimension(format!(
            "pilot has {} columns, scenario has {} antennas",
            init.ncols(),
            objective.n_tx()
        )));
    }
    let mut phi = init.clone();
    let (mut eval, mut grad) = evaluate_with_gradient(&phi, objective).map_err(at(0))?;
    let mut records = vec![record(0, eval, &phi)];
    let mut pilots = vec![phi.clone()];
    for t in 1..=config.max_iters {
        if grad.iter().any(|g| *g != C64::new(0.0, 0.0)) {
            let z = phi.as_matrix() + grad * C64::new(config.step_size, 0.0);
            phi = project_stiefel(&z).map_err(at(t))?;
        }
        (eval, grad) = evaluate_with_gradient(&phi, objective).map_err(at(t))?;
        records.push(record(t, eval, &phi));
        pilots.push(phi.clone());
        if config.rel_tol > 0.0 && t >= config.window {
            let old = records[t - config.window].objective;
            let change = (eval.objective - old).abs() / eval.objective.abs().max(1e-12);
            if change < config.rel_tol {
                break;
            }
        }
    }
    Ok(OptimizationTrace { records, pilots, final_pilot: phi })
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub rho: f64,
    pub comm: f64,
    pub sense: f64,
    pub objective: f64,
    pub iters: usize,
    pub residual: f64,
    pub pilot: PilotMatrix,
}

/// One optimization per ρ from a shared initializer; results in input order.
pub fn rho_sweep(
    template: &IsacObjective,
    rho_values: &[f64],
    shared_init: &PilotMatrix,
    config: &OptimizerConfig,
) -> Result<Vec<SweepPoint>> {
    if let Some(r) = rho_values.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(IsacError::InvalidParameter(format!("rho must lie in [0, 1], got {r}")));
    }
    rho_values
        .par_iter()
        .map(|&rho| {
            let obj = template.with_rho(rho)?;
            let trace = optimize_pgd(shared_init, &obj, config)?;
            let last = trace.last().clone();
            Ok(SweepPoint {
                rho,
                comm: last.comm,
                sense: last.sense,
                objective: last.objective,
                iters: last.iter,
                residual: last.residual,
                pilot: trace.final_pilot,
            })
        })
        .collect()
}

fn dominates(b: (f64, f64), a: (f64, f64)) -> bool {
    b.0 >= a.0 && b.1 >= a.1 && (b.0 > a.0 || b.1 > a.1)
}

/// Indices of points not dominated by any other point, in input order.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len()).filter(|&i| !points.iter().any(|&p| dominates(p, points[i]))).collect()
}

/// Non-dominated subset of `(sense, comm)` pairs, in input order.
pub fn pareto_filter(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pareto_indices(points).into_iter().map(|i| points[i]).collect()
}

/// `(sense, comm)` MI pairs of `n_samples` random feasible pilots.
pub fn sample_feasible_cloud(
    n_samples: usize,
    l: usize,
    objective: &IsacObjective,
    stream: &RngStream,
) -> Result<Vec<(f64, f64)>> {
    if n_samples == 0 {
        return Err(IsacError::InvalidParameter("n_samples must be at least 1".into()));
    }
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let phi = random_stiefel(l, objective.n_tx(), &stream.substream(i as u64))?;
            let e = evaluate(&phi, objective)?;
            Ok((e.sense, e.comm))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mi::comm_mi_user;
    use crate::testutil::{random_model, random_scene};
    use proptest::prelude::*;

    #[test]
    fn random_stiefel_properties() {
        let a = random_stiefel(3, 7, &RngStream::new(1)).unwrap();
        let b = random_stiefel(3, 7, &RngStream::new(2)).unwrap();
        assert!(a.residual() <= 1e-10);
        assert!((a.as_matrix() - b.as_matrix()).norm() > 0.0);
        assert!(random_stiefel(7, 7, &RngStream::new(1)).is_err());

        let draws = 2000;
        let s = RngStream::new(3);
        let mut energy = vec![0.0; 7];
        for i in 0..draws {
            let p = random_stiefel(3, 7, &s.substream(i)).unwrap();
            for (j, e) in energy.iter_mut().enumerate() {
                *e += p.column(j).norm_squared();
            }
        }
        for e in energy {
            let avg = e / draws as f64;
            assert!((avg - 3.0 / 7.0).abs() / (3.0 / 7.0) <= 0.05, "{avg}");
        }
    }

    #[test]
    fn projection_fixed_point_and_scale() {
        let x = random_stiefel(3, 6, &RngStream::new(4)).unwrap();
        assert!((project_stiefel(&x).unwrap().as_matrix() - x.as_matrix()).norm() < 1e-12);
        let scaled = x.as_matrix() * C64::new(3.7, 0.0);
        assert!((project_stiefel(&scaled).unwrap().as_matrix() - x.as_matrix()).norm() < 1e-12);
        let mut low = CMatrix::zeros(3, 6);
        low[(0, 0)] = C64::new(1.0, 0.0);
        assert!(matches!(project_stiefel(&low), Err(IsacError::Singular(_))));
    }

    #[test]
    fn projection_beats_random_samples() {
        let mut rng = RngStream::new(5).rng();
        let z = CMatrix::from_fn(2, 4, |_, _| complex_normal(&mut rng, 1.0));
        let best = (project_stiefel(&z).unwrap().as_matrix() - &z).norm();
        let s = RngStream::new(6);
        for i in 0..10_000 {
            let p = random_stiefel(2, 4, &s.substream(i)).unwrap();
            assert!((p.as_matrix() - &z).norm() >= best - 1e-12);
        }
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto_filter(&[(1.0, 2.0), (2.0, 1.0)]), vec![(1.0, 2.0), (2.0, 1.0)]);
        assert_eq!(pareto_filter(&[(1.0, 1.0), (2.0, 2.0)]), vec![(2.0, 2.0)]);
        assert_eq!(pareto_filter(&[(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (0.5, 0.5)]), vec![(1.0, 2.0), (2.0, 1.0)]);
        assert_eq!(pareto_filter(&[(1.0, 1.0), (1.0, 1.0)]).len(), 2);
    }

    fn small_objective(rho: f64, seed: u64) -> IsacObjective {
        let users = vec![random_model(6, 3, 0.5, seed)];
        IsacObjective::uniform(rho, users, random_scene(6, 3, 2, seed)).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let users = vec![random_model(6, 3, 0.5, 1)];
        let scene = random_scene(6, 3, 2, 1).with_target_power(0.0);
        let obj = IsacObjective::uniform(0.0, users, scene).unwrap();
        let init = random_stiefel(3, 6, &RngStream::new(1)).unwrap();
        let cfg = OptimizerConfig { max_iters: 20, ..Default::default() };
        let trace = optimize_pgd(&init, &obj, &cfg).unwrap();
        assert_eq!(trace.final_pilot, init);
        assert!(trace.records.iter().all(|r| r.objective == trace.records[0].objective));
    }

    #[test]
    fn comm_ascent_over_run() {
        let obj = small_objective(1.0, 2);
        let init = random_stiefel(3, 6, &RngStream::new(2)).unwrap();
        let trace = optimize_pgd(&init, &obj, &OptimizerConfig::default()).unwrap();
        let start = comm_mi_user(&init, &obj.users()[0]).unwrap();
        assert!(trace.last().comm >= start - 1e-9);
        assert!(trace.records.iter().all(|r| r.residual <= 1e-8));
    }

    #[test]
    fn optimizer_is_deterministic() {
        let obj = small_objective(0.5, 3);
        let init = random_stiefel(3, 6, &RngStream::new(3)).unwrap();
        let cfg = OptimizerConfig { max_iters: 30, ..Default::default() };
        let a = optimize_pgd(&init, &obj, &cfg).unwrap();
        let b = optimize_pgd(&init, &obj, &cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_pilot, b.final_pilot);
    }

    #[test]
    fn sweep_reports_each_rho() {
        let obj = small_objective(0.5, 4);
        let init = random_stiefel(3, 6, &RngStream::new(4)).unwrap();
        let cfg = OptimizerConfig { max_iters: 40, ..Default::default() };
        let pts = rho_sweep(&obj, &[0.0, 1.0], &init, &cfg).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].rho, 0.0);
        assert_eq!(pts[1].rho, 1.0);
        assert!(rho_sweep(&obj, &[1.2], &init, &cfg).is_err());
        let rhos: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let cfg = OptimizerConfig { max_iters: 3, ..Default::default() };
        assert_eq!(rho_sweep(&obj, &rhos, &init, &cfg).unwrap().len(), 21);
    }

    #[test]
    fn cloud_points_are_finite() {
        let obj = small_objective(0.5, 5);
        let cloud = sample_feasible_cloud(50, 3, &obj, &RngStream::new(5)).unwrap();
        assert_eq!(cloud.len(), 50);
        assert!(cloud.iter().all(|(s, c)| s.is_finite() && c.is_finite()));
        let one = sample_feasible_cloud(1, 3, &obj, &RngStream::new(5)).unwrap();
        assert_eq!(pareto_filter(&one), one);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn projection_is_idempotent(seed in 0u64..100_000) {
            let mut rng = RngStream::new(seed).rng();
            let z = CMatrix::from_fn(3, 5, |_, _| complex_normal(&mut rng, 1.0));
            let p = project_stiefel(&z).unwrap();
            prop_assert!(p.residual() <= 1e-10);
            let pp = project_stiefel(&p).unwrap();
            prop_assert!((pp.as_matrix() - p.as_matrix()).norm() <= 1e-12);
        }

        #[test]
        fn pareto_output_matches_brute_force(pts in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 0..30)) {
            let kept = pareto_indices(&pts);
            for i in 0..pts.len() {
                let dominated = pts.iter().any(|&p| p.0 >= pts[i].0 && p.1 >= pts[i].1 && p != pts[i]);
                prop_assert_eq!(kept.contains(&i), !dominated);
            }
            for &i in &kept {
                for &j in &kept {
                    prop_assert!(!dominates(pts[j], pts[i]));
                }
            }
        }
    }
}
