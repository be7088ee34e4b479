//! Strict TOML experiment configuration.

use serde::Deserialize;

use crate::array::{build_user_model, ArrayGeometry, Clutter, GmmUserModel, MeanPolicy, SensingScene};
use crate::error::{IsacError, Result};
use crate::grad::FD_STEP;
use crate::mi::{IsacObjective, SensingFormula};
use crate::optim::OptimizerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Optimize,
    Sweep,
    ParetoCloud,
    Roc,
    Nmse,
    Ser,
    Gradcheck,
    Diagnostics,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Optimize => "optimize",
            Task::Sweep => "sweep",
            Task::ParetoCloud => "pareto-cloud",
            Task::Roc => "roc",
            Task::Nmse => "nmse",
            Task::Ser => "ser",
            Task::Gradcheck => "gradcheck",
            Task::Diagnostics => "diagnostics",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present it must match the task given on the command line.
    pub task: Option<Task>,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub output: Option<String>,
    /// Carrier frequency, recorded in output metadata only.
    pub carrier_ghz: Option<f64>,
    pub array: ArraySection,
    #[serde(default)]
    pub channel: ChannelSection,
    pub users: Vec<UserSection>,
    pub scene: SceneSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    pub optimize: Option<OptimizeSection>,
    pub sweep: Option<SweepSection>,
    pub cloud: Option<CloudSection>,
    pub roc: Option<RocSection>,
    pub nmse: Option<NmseSection>,
    pub ser: Option<SerSection>,
    pub gradcheck: Option<GradcheckSection>,
    pub diagnostics: Option<DiagnosticsSection>,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub n_tx: usize,
    pub n_rx: usize,
    #[serde(default = "half")]
    pub spacing_tx: f64,
    #[serde(default = "half")]
    pub spacing_rx: f64,
    pub pilot_len: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanPolicyName {
    Zero,
    #[default]
    Steering,
}

fn default_components() -> usize {
    180
}

fn default_quadrature() -> usize {
    8
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default = "default_components")]
    pub n_components: usize,
    #[serde(default)]
    pub mean_policy: MeanPolicyName,
    #[serde(default = "one")]
    pub mean_scale: f64,
    #[serde(default = "default_quadrature")]
    pub quadrature_points: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            n_components: default_components(),
            mean_policy: MeanPolicyName::Steering,
            mean_scale: 1.0,
            quadrature_points: default_quadrature(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSection {
    pub mean_aoa_deg: f64,
    pub azimuth_spread_deg: f64,
    pub noise_std: f64,
    /// Scalarization weight; all users default to `1/K`.
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterSection {
    pub angle_deg: f64,
    pub power: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaName {
    #[default]
    Approx,
    Exact,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub target_angle_deg: f64,
    pub target_power: f64,
    pub radar_noise_std: f64,
    #[serde(default)]
    pub clutter: Vec<ClutterSection>,
    #[serde(default)]
    pub sensing_formula: FormulaName,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_step() -> f64 {
    0.1
}

fn default_iters() -> usize {
    200
}

fn default_rel_tol() -> f64 {
    1e-8
}

fn default_window() -> usize {
    10
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { step_size: 0.1, max_iters: 200, rel_tol: 1e-8, window: 10 }
    }
}

fn random_init() -> String {
    "random".into()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub rho: f64,
    #[serde(default = "random_init")]
    pub init: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub rho: Vec<f64>,
    #[serde(default = "random_init")]
    pub init: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSection {
    pub samples: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RocSection {
    pub trials: usize,
    pub p_fa: Vec<f64>,
    pub pilots: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmseSection {
    pub trials: usize,
    pub pilots: Vec<String>,
}

fn default_block() -> usize {
    100
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerSection {
    pub symbols: usize,
    #[serde(default = "default_block")]
    pub block_len: usize,
    pub snr_db: Vec<f64>,
    pub pilots: Vec<String>,
}

fn default_fd_step() -> f64 {
    FD_STEP
}

fn default_tolerance() -> f64 {
    1e-5
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    pub instances: usize,
    #[serde(default = "default_fd_step")]
    pub step: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "half")]
    pub rho: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Number of random orthogonal pilots to evaluate.
    pub pilots: usize,
    pub trials: usize,
    #[serde(default = "default_block")]
    pub block_len: usize,
}

/// A pilot named in a config: a baseline or the optimizer output at some ρ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PilotSpec {
    Random,
    Dft,
    Eigen,
    Optimized { rho: f64 },
}

impl PilotSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "random" => Ok(Self::Random),
            "dft" => Ok(Self::Dft),
            "eigen" => Ok(Self::Eigen),
            other => {
                let rho = other.strip_prefix("rho=").and_then(|r| r.trim().parse::<f64>().ok()).ok_or_else(|| {
                    IsacError::InvalidParameter(format!(
                        "unknown pilot `{other}` (expected random, dft, eigen or rho=<value>)"
                    ))
                })?;
                if !(0.0..=1.0).contains(&rho) {
                    return Err(IsacError::InvalidParameter(format!("pilot rho must lie in [0, 1], got {rho}")));
                }
                Ok(Self::Optimized { rho })
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Random => "random".into(),
            Self::Dft => "dft".into(),
            Self::Eigen => "eigen".into(),
            Self::Optimized { rho } => format!("rho={rho}"),
        }
    }
}

/// Everything built from the scenario part of a config.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub users: Vec<GmmUserModel>,
    pub scene: SensingScene,
    pub pilot_len: usize,
    pub mean_policy: MeanPolicy,
    /// Objective at ρ = 0.5; tasks swap ρ as needed.
    pub objective: IsacObjective,
    pub optimizer: OptimizerConfig,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(IsacError::InvalidParameter(msg()))
    }
}

fn check_rhos(rhos: &[f64], what: &str) -> Result<()> {
    check(!rhos.is_empty(), || format!("{what}: rho list is empty"))?;
    for r in rhos {
        check((0.0..=1.0).contains(r), || format!("{what}: rho must lie in [0, 1], got {r}"))?;
    }
    Ok(())
}

fn check_init(spec: &str, what: &str) -> Result<()> {
    match PilotSpec::parse(spec)? {
        PilotSpec::Optimized { .. } => {
            Err(IsacError::InvalidParameter(format!("{what}: init must be random, dft or eigen, got `{spec}`")))
        }
        _ => Ok(()),
    }
}

fn check_pilots(pilots: &[String], what: &str) -> Result<()> {
    check(!pilots.is_empty(), || format!("{what}: pilot list is empty"))?;
    pilots.iter().try_for_each(|p| PilotSpec::parse(p).map(|_| ()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Check the section for `task` and its values.
    pub fn validate_for(&self, task: Task) -> Result<()> {
        if let Some(t) = self.task {
            check(t == task, || format!("config declares task `{}` but `{}` was requested", t.name(), task.name()))?;
        }
        let missing =
            |name: &str| IsacError::InvalidParameter(format!("task `{}` needs a [{name}] section", task.name()));
        match task {
            Task::Optimize => {
                let s = self.optimize.as_ref().ok_or_else(|| missing("optimize"))?;
                check_rhos(&[s.rho], "optimize")?;
                check_init(&s.init, "optimize")?;
            }
            Task::Sweep => {
                let s = self.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
                check_rhos(&s.rho, "sweep")?;
                check_init(&s.init, "sweep")?;
            }
            Task::ParetoCloud => {
                let c = self.cloud.as_ref().ok_or_else(|| missing("cloud"))?;
                check(c.samples >= 1, || "cloud: samples must be at least 1".into())?;
                if let Some(s) = &self.sweep {
                    check_rhos(&s.rho, "sweep")?;
                    check_init(&s.init, "sweep")?;
                }
            }
            Task::Roc => {
                let s = self.roc.as_ref().ok_or_else(|| missing("roc"))?;
                check(s.trials >= 1, || "roc: trials must be at least 1".into())?;
                check(!s.p_fa.is_empty(), || "roc: p_fa grid is empty".into())?;
                for p in &s.p_fa {
                    check((0.0..=1.0).contains(p), || format!("roc: p_fa must lie in [0, 1], got {p}"))?;
                }
                check_pilots(&s.pilots, "roc")?;
            }
            Task::Nmse => {
                let s = self.nmse.as_ref().ok_or_else(|| missing("nmse"))?;
                check(s.trials >= 1, || "nmse: trials must be at least 1".into())?;
                check_pilots(&s.pilots, "nmse")?;
            }
            Task::Ser => {
                let s = self.ser.as_ref().ok_or_else(|| missing("ser"))?;
                check(s.symbols >= 1 && s.block_len >= 1, || "ser: symbols and block_len must be positive".into())?;
                check(!s.snr_db.is_empty(), || "ser: snr_db grid is empty".into())?;
                check(s.snr_db.iter().all(|v| v.is_finite()), || "ser: snr_db values must be finite".into())?;
                check(self.users.len() <= self.array.n_tx, || "ser: zero-forcing needs K <= n_tx".into())?;
                check_pilots(&s.pilots, "ser")?;
            }
            Task::Gradcheck => {
                let s = self.gradcheck.as_ref().ok_or_else(|| missing("gradcheck"))?;
                check(s.instances >= 1, || "gradcheck: instances must be at least 1".into())?;
                check(s.step > 0.0 && s.tolerance > 0.0, || "gradcheck: step and tolerance must be positive".into())?;
                check_rhos(&[s.rho], "gradcheck")?;
            }
            Task::Diagnostics => {
                let s = self.diagnostics.as_ref().ok_or_else(|| missing("diagnostics"))?;
                check(s.pilots >= 1 && s.trials >= 1 && s.block_len >= 1, || {
                    "diagnostics: pilots, trials and block_len must be positive".into()
                })?;
            }
        }
        Ok(())
    }

    pub fn mean_policy(&self) -> MeanPolicy {
        match self.channel.mean_policy {
            MeanPolicyName::Zero => MeanPolicy::Zero,
            MeanPolicyName::Steering => MeanPolicy::Steering { scale: self.channel.mean_scale },
        }
    }

    pub fn build_scenario(&self) -> Result<Scenario> {
        let a = &self.array;
        let geometry = ArrayGeometry::new(a.n_tx, a.n_rx, a.spacing_tx, a.spacing_rx)?;
        check(a.pilot_len >= 1 && a.pilot_len < a.n_tx, || {
            format!("array: pilot_len must satisfy 1 <= L < n_tx, got L={} n_tx={}", a.pilot_len, a.n_tx)
        })?;
        check(!self.users.is_empty(), || "at least one [[users]] entry is required".into())?;
        let c = &self.channel;
        check(c.n_components >= 1, || "channel: n_components must be at least 1".into())?;
        check(c.quadrature_points >= 1, || "channel: quadrature_points must be at least 1".into())?;
        check(c.mean_scale.is_finite(), || "channel: mean_scale must be finite".into())?;
        let policy = self.mean_policy();
        let users = self
            .users
            .iter()
            .map(|u| {
                build_user_model(
                    &geometry,
                    u.mean_aoa_deg,
                    u.azimuth_spread_deg,
                    c.n_components,
                    u.noise_std,
                    policy,
                    c.quadrature_points,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = match self.users.iter().map(|u| u.weight).collect::<Option<Vec<f64>>>() {
            Some(w) => {
                let total: f64 = w.iter().sum();
                check(w.iter().all(|&x| x >= 0.0) && (total - 1.0).abs() <= 1e-9, || {
                    format!("user weights must be nonnegative and sum to 1, got sum {total}")
                })?;
                w.iter().map(|x| x / total).collect()
            }
            None => {
                check(self.users.iter().all(|u| u.weight.is_none()), || {
                    "give a weight for every user or for none".into()
                })?;
                vec![1.0 / self.users.len() as f64; self.users.len()]
            }
        };
        let s = &self.scene;
        let clutter = s.clutter.iter().map(|c| Clutter { angle_deg: c.angle_deg, power: c.power }).collect();
        let scene =
            SensingScene::new(geometry.clone(), s.target_angle_deg, s.target_power, clutter, s.radar_noise_std)?;
        let formula = match s.sensing_formula {
            FormulaName::Approx => SensingFormula::Approx,
            FormulaName::Exact => SensingFormula::Exact,
        };
        let objective = IsacObjective::new(0.5, weights, users.clone(), scene.clone())?.with_sensing_formula(formula);
        let o = &self.optimizer;
        let optimizer = OptimizerConfig {
            step_size: o.step_size,
            max_iters: o.max_iters,
            rel_tol: o.rel_tol,
            window: o.window,
            seed: self.seed,
        };
        optimizer.validate()?;
        Ok(Scenario { geometry, users, scene, pilot_len: a.pilot_len, mean_policy: policy, objective, optimizer })
    }
}
