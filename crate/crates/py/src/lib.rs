//! Python bindings. Matrices cross the boundary as lists of rows of `complex`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::isacpilot::array::{self as arr, MeanPolicy, PilotMatrix};
use ::isacpilot::error::IsacError;
use ::isacpilot::eval::{baselines, estimation, radar};
use ::isacpilot::experiment::{self, RunOptions, Task};
use ::isacpilot::grad;
use ::isacpilot::linalg::CMatrix;
use ::isacpilot::mi::{self, SensingFormula};
use ::isacpilot::optim::{self, OptimizerConfig};
use ::isacpilot::rng::RngStream;

type Rows = Vec<Vec<Complex64>>;
/// `(rho, comm, sense, objective, iters)`
type SweepRow = (f64, f64, f64, f64, usize);

fn err(e: IsacError) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_matrix(rows: &Rows) -> PyResult<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("matrix must be a non-empty list of equal-length rows"));
    }
    Ok(CMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_rows(m: &CMatrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn to_pilot(rows: &Rows) -> PyResult<PilotMatrix> {
    PilotMatrix::new(to_matrix(rows)?).map_err(err)
}

#[pyclass(name = "ArrayGeometry", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGeometry(arr::ArrayGeometry);

#[pymethods]
impl PyGeometry {
    #[new]
    #[pyo3(signature = (n_tx, n_rx, spacing_tx = 0.5, spacing_rx = 0.5))]
    fn new(n_tx: usize, n_rx: usize, spacing_tx: f64, spacing_rx: f64) -> PyResult<Self> {
        arr::ArrayGeometry::new(n_tx, n_rx, spacing_tx, spacing_rx).map(Self).map_err(err)
    }

    #[getter]
    fn n_tx(&self) -> usize {
        self.0.n_tx
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.0.n_rx
    }

    fn tx_steering(&self, theta_deg: f64) -> Vec<Complex64> {
        self.0.tx_steering(theta_deg).iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!("ArrayGeometry(n_tx={}, n_rx={})", self.0.n_tx, self.0.n_rx)
    }
}

#[pyclass(name = "UserModel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyUser(arr::GmmUserModel);

#[pymethods]
impl PyUser {
    /// Angular-region GMM prior for one user.
    #[staticmethod]
    #[pyo3(signature = (geometry, mean_aoa_deg, azimuth_spread_deg, n_components, noise_std,
                        mean_policy = "steering", mean_scale = 1.0, quadrature_points = 8))]
    #[allow(clippy::too_many_arguments)]
    fn build(
        geometry: &PyGeometry,
        mean_aoa_deg: f64,
        azimuth_spread_deg: f64,
        n_components: usize,
        noise_std: f64,
        mean_policy: &str,
        mean_scale: f64,
        quadrature_points: usize,
    ) -> PyResult<Self> {
        let policy = match mean_policy {
            "zero" => MeanPolicy::Zero,
            "steering" => MeanPolicy::Steering { scale: mean_scale },
            other => return Err(PyValueError::new_err(format!("unknown mean policy `{other}`"))),
        };
        arr::build_user_model(
            &geometry.0,
            mean_aoa_deg,
            azimuth_spread_deg,
            n_components,
            noise_std,
            policy,
            quadrature_points,
        )
        .map(Self)
        .map_err(err)
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.0.n_components()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn noise_std(&self) -> f64 {
        self.0.noise_std()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "UserModel(dim={}, n_components={}, noise_std={})",
            self.0.dim(),
            self.0.n_components(),
            self.0.noise_std()
        )
    }
}

#[pyclass(name = "SensingScene", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyScene(arr::SensingScene);

#[pymethods]
impl PyScene {
    #[new]
    #[pyo3(signature = (geometry, target_angle_deg, target_power, radar_noise_std, clutter = Vec::new()))]
    fn new(
        geometry: &PyGeometry,
        target_angle_deg: f64,
        target_power: f64,
        radar_noise_std: f64,
        clutter: Vec<(f64, f64)>,
    ) -> PyResult<Self> {
        let clutter = clutter.into_iter().map(|(angle_deg, power)| arr::Clutter { angle_deg, power }).collect();
        arr::SensingScene::new(geometry.0.clone(), target_angle_deg, target_power, clutter, radar_noise_std)
            .map(Self)
            .map_err(err)
    }
}

#[pyclass(name = "IsacObjective", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyObjective(mi::IsacObjective);

#[pymethods]
impl PyObjective {
    #[new]
    #[pyo3(signature = (rho, users, scene, weights = None, sensing_formula = "approx"))]
    fn new(
        rho: f64,
        users: Vec<PyRef<'_, PyUser>>,
        scene: &PyScene,
        weights: Option<Vec<f64>>,
        sensing_formula: &str,
    ) -> PyResult<Self> {
        let users: Vec<_> = users.iter().map(|u| u.0.clone()).collect();
        let weights = weights.unwrap_or_else(|| vec![1.0 / users.len().max(1) as f64; users.len()]);
        let formula = match sensing_formula {
            "approx" => SensingFormula::Approx,
            "exact" => SensingFormula::Exact,
            other => return Err(PyValueError::new_err(format!("unknown sensing formula `{other}`"))),
        };
        mi::IsacObjective::new(rho, weights, users, scene.0.clone())
            .map(|o| Self(o.with_sensing_formula(formula)))
            .map_err(err)
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.0.rho()
    }

    fn with_rho(&self, rho: f64) -> PyResult<Self> {
        self.0.with_rho(rho).map(Self).map_err(err)
    }

    /// Objective, weighted comm MI and sensing MI, in nats.
    fn evaluate<'py>(&self, py: Python<'py>, pilot: Rows) -> PyResult<Bound<'py, PyDict>> {
        let e = mi::evaluate(&to_matrix(&pilot)?, &self.0).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("objective", e.objective)?;
        d.set_item("comm", e.comm)?;
        d.set_item("sense", e.sense)?;
        Ok(d)
    }

    /// Wirtinger gradient with respect to the conjugate pilot.
    fn gradient(&self, pilot: Rows) -> PyResult<Rows> {
        grad::grad_isac(&to_matrix(&pilot)?, &self.0).map(|g| to_rows(&g)).map_err(err)
    }
}

#[pyfunction]
fn comm_mi_user(pilot: Rows, user: &PyUser) -> PyResult<f64> {
    mi::comm_mi_user(&to_matrix(&pilot)?, &user.0).map_err(err)
}

#[pyfunction]
fn sensing_mi_exact(pilot: Rows, scene: &PyScene) -> PyResult<f64> {
    mi::sensing_mi_exact(&to_matrix(&pilot)?, &scene.0).map_err(err)
}

#[pyfunction]
fn sensing_mi_approx(pilot: Rows, scene: &PyScene) -> PyResult<f64> {
    mi::sensing_mi_approx(&to_matrix(&pilot)?, &scene.0).map_err(err)
}

#[pyfunction]
fn sense_kl_and_g(pilot: Rows, scene: &PyScene) -> PyResult<(f64, f64)> {
    mi::sense_kl_and_g(&to_matrix(&pilot)?, &scene.0).map_err(err)
}

#[pyfunction]
fn random_stiefel(l: usize, n_tx: usize, seed: u64) -> PyResult<Rows> {
    optim::random_stiefel(l, n_tx, &RngStream::new(seed)).map(|p| to_rows(&p)).map_err(err)
}

#[pyfunction]
fn project_stiefel(z: Rows) -> PyResult<Rows> {
    optim::project_stiefel(&to_matrix(&z)?).map(|p| to_rows(&p)).map_err(err)
}

#[pyfunction]
fn orthonormality_residual(pilot: Rows) -> PyResult<f64> {
    Ok(::isacpilot::linalg::orthonormality_residual(&to_matrix(&pilot)?))
}

#[pyfunction]
fn dft_pilot(l: usize, n_tx: usize) -> PyResult<Rows> {
    baselines::dft_pilot(l, n_tx).map(|p| to_rows(&p)).map_err(err)
}

#[pyfunction]
fn eigen_pilot(users: Vec<PyRef<'_, PyUser>>, l: usize) -> PyResult<Rows> {
    let users: Vec<_> = users.iter().map(|u| u.0.clone()).collect();
    baselines::eigen_pilot(&users, l).map(|p| to_rows(&p)).map_err(err)
}

fn optimizer_config(step_size: f64, max_iters: usize, rel_tol: f64, window: usize) -> OptimizerConfig {
    OptimizerConfig { step_size, max_iters, rel_tol, window, seed: 0 }
}

/// Projected gradient ascent. Returns the final pilot and per-iteration records
/// `(iter, objective, comm, sense, residual)` in nats.
#[pyfunction]
#[pyo3(signature = (init, objective, step_size = 0.1, max_iters = 200, rel_tol = 1e-8, window = 10))]
fn optimize<'py>(
    py: Python<'py>,
    init: Rows,
    objective: &PyObjective,
    step_size: f64,
    max_iters: usize,
    rel_tol: f64,
    window: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let init = to_pilot(&init)?;
    let cfg = optimizer_config(step_size, max_iters, rel_tol, window);
    let obj = objective.0.clone();
    let trace = py.detach(|| optim::optimize_pgd(&init, &obj, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    let records: Vec<(usize, f64, f64, f64, f64)> =
        trace.records.iter().map(|r| (r.iter, r.objective, r.comm, r.sense, r.residual)).collect();
    d.set_item("records", records)?;
    d.set_item("pilot", to_rows(&trace.final_pilot))?;
    Ok(d)
}

/// One optimization per ρ from a shared initializer: `[(rho, comm, sense, objective, iters)]`.
#[pyfunction]
#[pyo3(signature = (objective, rhos, init, step_size = 0.1, max_iters = 200))]
fn rho_sweep(
    py: Python<'_>,
    objective: &PyObjective,
    rhos: Vec<f64>,
    init: Rows,
    step_size: f64,
    max_iters: usize,
) -> PyResult<Vec<SweepRow>> {
    let init = to_pilot(&init)?;
    let cfg = optimizer_config(step_size, max_iters, 1e-8, 10);
    let obj = objective.0.clone();
    let pts = py.detach(|| optim::rho_sweep(&obj, &rhos, &init, &cfg)).map_err(err)?;
    Ok(pts.into_iter().map(|p| (p.rho, p.comm, p.sense, p.objective, p.iters)).collect())
}

#[pyfunction]
fn pareto_indices(points: Vec<(f64, f64)>) -> Vec<usize> {
    optim::pareto_indices(&points)
}

/// Pooled NMSE of GMM-MMSE estimation over `trials` draws per user.
#[pyfunction]
fn nmse(py: Python<'_>, pilot: Rows, users: Vec<PyRef<'_, PyUser>>, trials: usize, seed: u64) -> PyResult<f64> {
    let pilot = to_matrix(&pilot)?;
    let users: Vec<_> = users.iter().map(|u| u.0.clone()).collect();
    py.detach(|| estimation::nmse_experiment(&pilot, &users, trials, &RngStream::new(seed)))
        .map(|r| r.pooled)
        .map_err(err)
}

/// Empirical ROC: `[(p_fa, p_d)]` at the requested false-alarm rates.
#[pyfunction]
fn roc(
    py: Python<'_>,
    pilot: Rows,
    scene: &PyScene,
    trials: usize,
    p_fa: Vec<f64>,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let pilot = to_matrix(&pilot)?;
    let scene = scene.0.clone();
    let curve = py.detach(|| radar::roc_curve(&pilot, &scene, trials, &p_fa, &RngStream::new(seed))).map_err(err)?;
    Ok(curve.points.iter().map(|p| (p.p_fa, p.p_d)).collect())
}

/// Run a config file as the command-line tool would; returns the summary line.
#[pyfunction]
#[pyo3(signature = (task, config, out, seed = None))]
fn run_config(py: Python<'_>, task: &str, config: PathBuf, out: PathBuf, seed: Option<u64>) -> PyResult<String> {
    let task = match task {
        "optimize" => Task::Optimize,
        "sweep" => Task::Sweep,
        "pareto-cloud" => Task::ParetoCloud,
        "roc" => Task::Roc,
        "nmse" => Task::Nmse,
        "ser" => Task::Ser,
        "gradcheck" => Task::Gradcheck,
        "diagnostics" => Task::Diagnostics,
        other => return Err(PyValueError::new_err(format!("unknown task `{other}`"))),
    };
    let opts = RunOptions { task, config_path: config, seed, out: Some(out) };
    py.detach(|| experiment::run_config(&opts)).map(|s| s.line).map_err(|e| match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        3 => PyArithmeticError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    })
}

#[pymodule]
#[pyo3(name = "isacpilot")]
fn isacpilot_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyUser>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyObjective>()?;
    m.add_function(wrap_pyfunction!(comm_mi_user, m)?)?;
    m.add_function(wrap_pyfunction!(sensing_mi_exact, m)?)?;
    m.add_function(wrap_pyfunction!(sensing_mi_approx, m)?)?;
    m.add_function(wrap_pyfunction!(sense_kl_and_g, m)?)?;
    m.add_function(wrap_pyfunction!(random_stiefel, m)?)?;
    m.add_function(wrap_pyfunction!(project_stiefel, m)?)?;
    m.add_function(wrap_pyfunction!(orthonormality_residual, m)?)?;
    m.add_function(wrap_pyfunction!(dft_pilot, m)?)?;
    m.add_function(wrap_pyfunction!(eigen_pilot, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(rho_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_indices, m)?)?;
    m.add_function(wrap_pyfunction!(nmse, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
