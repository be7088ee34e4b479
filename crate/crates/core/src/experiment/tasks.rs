//! Task runners. Each returns the complete set of tables for one task.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use super::config::{ExperimentConfig, PilotSpec, Scenario, Task};
use super::table::{Cell, ResultTable};
use crate::array::PilotMatrix;
use crate::error::{IsacError, Result};
use crate::eval::baselines::{dft_pilot, eigen_pilot};
use crate::eval::estimation::nmse_experiment;
use crate::eval::link::ser_experiment;
use crate::eval::radar::roc_curve;
use crate::grad::{finite_diff_check, grad_comm_mi_user, grad_isac, grad_sensing_mi, grad_sensing_mi_exact};
use crate::mi::{
    c_worst_estimate, comm_mi_user, comm_mi_weighted, evaluate, isac_objective, sense_kl_and_g, sensing_mi,
    SensingFormula,
};
use crate::optim::{optimize_pgd, pareto_indices, random_stiefel, sample_feasible_cloud, OptimizationTrace};
use crate::rng::RngStream;

pub struct TaskContext<'a> {
    pub task: Task,
    pub config: &'a ExperimentConfig,
    pub scenario: &'a Scenario,
    pub seed: u64,
    pub config_hash: &'a str,
}

pub struct TaskOutput {
    pub tables: Vec<ResultTable>,
    pub summary: String,
    /// Set when a check ran to completion but did not pass.
    pub failure: Option<String>,
}

fn bits(nats: f64) -> f64 {
    nats / LN_2
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

impl TaskContext<'_> {
    fn master(&self) -> RngStream {
        RngStream::new(self.seed)
    }

    fn table(&self, name: &str, columns: &[&str]) -> ResultTable {
        let mut t = ResultTable::new(name, columns);
        t.meta("isacpilot", env!("CARGO_PKG_VERSION"))
            .meta("task", self.task.name())
            .meta("config_sha256", self.config_hash)
            .meta("seed", self.seed)
            .meta("units", "MI in bits (internal nats divided by ln 2); angles in degrees")
            .meta("mean_policy", self.scenario.mean_policy);
        if let Some(f) = self.config.carrier_ghz {
            t.meta("carrier_ghz", format!("{f} (metadata only)"));
        }
        t
    }

    /// Random orthogonal initializer shared by every optimization and the "random" baseline.
    fn random_init(&self) -> Result<PilotMatrix> {
        random_stiefel(self.scenario.pilot_len, self.scenario.geometry.n_tx, &self.master().labeled("init"))
    }

    fn optimize_from(&self, init: &PilotMatrix, rho: f64) -> Result<OptimizationTrace> {
        let obj = self.scenario.objective.with_rho(rho)?;
        optimize_pgd(init, &obj, &self.scenario.optimizer)
    }

    fn baseline(&self, spec: PilotSpec) -> Result<PilotMatrix> {
        let s = self.scenario;
        match spec {
            PilotSpec::Random => self.random_init(),
            PilotSpec::Dft => dft_pilot(s.pilot_len, s.geometry.n_tx),
            PilotSpec::Eigen => eigen_pilot(&s.users, s.pilot_len),
            PilotSpec::Optimized { .. } => {
                Err(IsacError::InvalidParameter("an optimized pilot cannot be used as an initializer".into()))
            }
        }
    }

    /// Resolve a list of pilot specs; optimized entries start from the random initializer.
    fn resolve_pilots(&self, specs: &[String]) -> Result<Vec<(PilotSpec, PilotMatrix)>> {
        let parsed = specs.iter().map(|s| PilotSpec::parse(s)).collect::<Result<Vec<_>>>()?;
        let init = self.random_init()?;
        parsed
            .par_iter()
            .map(|&spec| match spec {
                PilotSpec::Optimized { rho } => Ok((spec, self.optimize_from(&init, rho)?.final_pilot)),
                other => Ok((other, self.baseline(other)?)),
            })
            .collect()
    }

    fn pilot_ids(t: &mut ResultTable, pilots: &[(PilotSpec, PilotMatrix)]) {
        let ids: Vec<String> = pilots.iter().enumerate().map(|(i, (s, _))| format!("{i}={}", s.label())).collect();
        t.meta("pilot_id", ids.join(" "));
    }
}

pub fn run_task(ctx: &TaskContext) -> Result<TaskOutput> {
    match ctx.task {
        Task::Optimize => run_optimize(ctx),
        Task::Sweep => run_sweep(ctx),
        Task::ParetoCloud => run_cloud(ctx),
        Task::Roc => run_roc(ctx),
        Task::Nmse => run_nmse(ctx),
        Task::Ser => run_ser(ctx),
        Task::Gradcheck => run_gradcheck(ctx),
        Task::Diagnostics => run_diagnostics(ctx),
    }
}

fn ok(tables: Vec<ResultTable>, summary: String) -> Result<TaskOutput> {
    Ok(TaskOutput { tables, summary, failure: None })
}

fn pilot_table(ctx: &TaskContext, name: &str, pilot: &PilotMatrix) -> ResultTable {
    let mut t = ctx.table(name, &["row", "col", "re", "im"]);
    for i in 0..pilot.nrows() {
        for j in 0..pilot.ncols() {
            let v = pilot[(i, j)];
            t.push(vec![i.into(), j.into(), v.re.into(), v.im.into()]);
        }
    }
    t
}

const TRACE_COLUMNS: [&str; 5] = ["iter", "objective_bits", "comm_mi_bits", "sense_mi_bits", "residual"];

fn push_trace(t: &mut ResultTable, trace: &OptimizationTrace, prefix: Vec<Cell>) {
    for r in &trace.records {
        let mut row = prefix.clone();
        row.extend::<[Cell; 5]>([
            r.iter.into(),
            bits(r.objective).into(),
            bits(r.comm).into(),
            bits(r.sense).into(),
            r.residual.into(),
        ]);
        t.push(row);
    }
}

fn run_optimize(ctx: &TaskContext) -> Result<TaskOutput> {
    let sec = ctx.config.optimize.as_ref().expect("validated");
    let init = ctx.baseline(PilotSpec::parse(&sec.init)?)?;
    let trace = ctx.optimize_from(&init, sec.rho)?;
    let mut t = ctx.table("trace.csv", &TRACE_COLUMNS);
    t.meta("rho", sec.rho).meta("init", &sec.init).meta("step_size", ctx.scenario.optimizer.step_size);
    push_trace(&mut t, &trace, vec![]);
    let last = trace.last();
    let summary = format!(
        "optimize: rho={} iters={} objective={:.6} bits comm={:.6} bits sense={:.6} bits residual={:.3e}",
        sec.rho,
        last.iter,
        bits(last.objective),
        bits(last.comm),
        bits(last.sense),
        last.residual
    );
    let pilot = pilot_table(ctx, "pilot.csv", &trace.final_pilot);
    ok(vec![t, pilot], summary)
}

pub const FRONTIER_COLUMNS: [&str; 6] = ["rho", "comm_mi_bits", "sense_mi_bits", "objective_bits", "iters", "residual"];

fn sweep_traces(ctx: &TaskContext) -> Result<(Vec<f64>, Vec<OptimizationTrace>)> {
    let sec = ctx.config.sweep.as_ref().expect("validated");
    let init = ctx.baseline(PilotSpec::parse(&sec.init)?)?;
    let traces = sec.rho.par_iter().map(|&rho| ctx.optimize_from(&init, rho)).collect::<Result<Vec<_>>>()?;
    Ok((sec.rho.clone(), traces))
}

fn frontier_table(ctx: &TaskContext, rhos: &[f64], traces: &[OptimizationTrace]) -> ResultTable {
    let mut t = ctx.table("frontier.csv", &FRONTIER_COLUMNS);
    for (rho, trace) in rhos.iter().zip(traces) {
        let r = trace.last();
        t.push(vec![
            (*rho).into(),
            bits(r.comm).into(),
            bits(r.sense).into(),
            bits(r.objective).into(),
            r.iter.into(),
            r.residual.into(),
        ]);
    }
    t
}

fn run_sweep(ctx: &TaskContext) -> Result<TaskOutput> {
    let (rhos, traces) = sweep_traces(ctx)?;
    let frontier = frontier_table(ctx, &rhos, &traces);
    let mut cols = vec!["rho"];
    cols.extend(TRACE_COLUMNS);
    let mut paths = ctx.table("paths.csv", &cols);
    for (rho, trace) in rhos.iter().zip(&traces) {
        push_trace(&mut paths, trace, vec![(*rho).into()]);
    }
    let summary = format!("sweep: {} rho values, max residual {:.3e}", rhos.len(), {
        traces.iter().map(|t| t.last().residual).fold(0.0, f64::max)
    });
    ok(vec![frontier, paths], summary)
}

fn run_cloud(ctx: &TaskContext) -> Result<TaskOutput> {
    let sec = ctx.config.cloud.as_ref().expect("validated");
    let obj = &ctx.scenario.objective;
    let cloud = sample_feasible_cloud(sec.samples, ctx.scenario.pilot_len, obj, &ctx.master().labeled("cloud"))?;
    let front: std::collections::BTreeSet<usize> = pareto_indices(&cloud).into_iter().collect();
    let mut t = ctx.table("cloud.csv", &["sample", "sense_mi_bits", "comm_mi_bits", "on_frontier"]);
    for (i, (s, c)) in cloud.iter().enumerate() {
        t.push(vec![i.into(), bits(*s).into(), bits(*c).into(), usize::from(front.contains(&i)).into()]);
    }
    let mut tables = vec![t];
    let mut summary = format!("pareto-cloud: {} samples, {} on the cloud frontier", cloud.len(), front.len());
    if ctx.config.sweep.is_some() {
        let (rhos, traces) = sweep_traces(ctx)?;
        let mut f = frontier_table(ctx, &rhos, &traces);
        f.columns.push("dominated_by_cloud".into());
        let mut dominated = 0;
        for (row, trace) in f.rows.iter_mut().zip(&traces) {
            let p = (trace.last().sense, trace.last().comm);
            let d = cloud.iter().any(|&q| q.0 >= p.0 && q.1 >= p.1 && (q.0 > p.0 || q.1 > p.1));
            dominated += usize::from(d);
            row.push(usize::from(d).into());
        }
        summary.push_str(&format!("; {dominated} of {} sweep endpoints dominated", rhos.len()));
        tables.push(f);
    }
    ok(tables, summary)
}

fn run_roc(ctx: &TaskContext) -> Result<TaskOutput> {
    let sec = ctx.config.roc.as_ref().expect("validated");
    let pilots = ctx.resolve_pilots(&sec.pilots)?;
    let stream = ctx.master().labeled("trials");
    let scene = &ctx.scenario.scene;
    let curves =
        pilots.iter().map(|(_, p)| roc_curve(p, scene, sec.trials, &sec.p_fa, &stream)).collect::<Result<Vec<_>>>()?;
    let mut t = ctx.table("roc.csv", &["pilot_id", "target_p_fa", "p_fa", "p_d", "threshold", "under_resolved"]);
    TaskContext::pilot_ids(&mut t, &pilots);
    t.meta("trials", format!("{} per hypothesis, paired H0/H1", sec.trials))
        .meta("detector", "whitened matched quadratic form with clairvoyant clutter covariance");
    for (i, c) in curves.iter().enumerate() {
        for p in &c.points {
            t.push(vec![
                i.into(),
                p.target_p_fa.into(),
                p.p_fa.into(),
                p.p_d.into(),
                p.threshold.into(),
                usize::from(p.under_resolved).into(),
            ]);
        }
    }
    // Report the grid point nearest 1e-2.
    let probe = *sec.p_fa.iter().min_by(|a, b| (*a - 1e-2).abs().total_cmp(&(*b - 1e-2).abs())).expect("validated");
    let parts: Vec<String> = pilots
        .iter()
        .zip(&curves)
        .map(|((s, _), c)| format!("{}={:.4}", s.label(), c.p_d_at(probe).unwrap_or(f64::NAN)))
        .collect();
    ok(vec![t], format!("roc: P_d at p_fa={probe}: {}", parts.join(", ")))
}

fn run_nmse(ctx: &TaskContext) -> Result<TaskOutput> {
    let sec = ctx.config.nmse.as_ref().expect("validated");
    let pilots = ctx.resolve_pilots(&sec.pilots)?;
    let stream = ctx.master().labeled("trials");
    let users = &ctx.scenario.users;
    let results =
        pilots.iter().map(|(_, p)| nmse_experiment(p, users, sec.trials, &stream)).collect::<Result<Vec<_>>>()?;
    let mut t = ctx.table("nmse.csv", &["pilot_id", "user", "nmse", "nmse_db", "skipped"]);
    TaskContext::pilot_ids(&mut t, &pilots);
    t.meta("user", "index k, or -1 for the pooled value").meta("trials", sec.trials);
    for (i, r) in results.iter().enumerate() {
        for (k, v) in r.per_user.iter().enumerate() {
            t.push(vec![i.into(), (k as i64).into(), (*v).into(), (10.0 * v.log10()).into(), 0usize.into()]);
        }
        t.push(vec![i.into(), (-1i64).into(), r.pooled.into(), (10.0 * r.pooled.log10()).into(), r.skipped.into()]);
    }
    let parts: Vec<String> = pilots
        .iter()
        .zip(&results)
        .map(|((s, _), r)| format!("{}={:.2} dB", s.label(), 10.0 * r.pooled.log10()))
        .collect();
    ok(vec![t], format!("nmse: pooled {}", parts.join(", ")))
}

fn run_ser(ctx: &TaskContext) -> Result<TaskOutput> {
    let sec = ctx.config.ser.as_ref().expect("validated");
    let pilots = ctx.resolve_pilots(&sec.pilots)?;
    let stream = ctx.master().labeled("trials");
    let users = &ctx.scenario.users;
    let results = pilots
        .iter()
        .map(|(_, p)| ser_experiment(p, users, &sec.snr_db, sec.symbols, sec.block_len, &stream))
        .collect::<Result<Vec<_>>>()?;
    let mut t = ctx.table("ser.csv", &["pilot_id", "snr_db", "ser", "errors", "symbols"]);
    TaskContext::pilot_ids(&mut t, &pilots);
    t.meta("snr", "per-user SNR with unit-norm ZF columns and unit-energy 64-QAM; noise variance = 10^(-snr_db/10)")
        .meta("block_len", format!("{} symbols per user per channel draw", sec.block_len))
        .meta("csi", "GMM-MMSE estimates from the pilot; receiver equalizes by the estimated gain");
    for (i, pts) in results.iter().enumerate() {
        for p in pts {
            t.push(vec![i.into(), p.snr_db.into(), p.ser.into(), (p.errors as i64).into(), (p.symbols as i64).into()]);
        }
    }
    let mid = sec.snr_db[sec.snr_db.len() / 2];
    let parts: Vec<String> = pilots
        .iter()
        .zip(&results)
        .map(|((s, _), pts)| {
            let p = pts.iter().find(|p| p.snr_db == mid).expect("grid point");
            format!("{}={:.3e}", s.label(), p.ser)
        })
        .collect();
    ok(vec![t], format!("ser at {mid} dB: {}", parts.join(", ")))
}

fn run_gradcheck(ctx: &TaskContext) -> Result<TaskOutput> {
    let sec = ctx.config.gradcheck.as_ref().expect("validated");
    let s = ctx.scenario;
    let obj = s.objective.with_rho(sec.rho)?;
    let scene = obj.scene().clone();
    let formula = obj.sensing_formula();
    let stream = ctx.master().labeled("gradcheck");
    let mut t = ctx.table("gradcheck.csv", &["instance", "comm_max_rel_err", "sense_max_rel_err", "isac_max_rel_err"]);
    t.meta("rho", sec.rho)
        .meta("fd_step", sec.step)
        .meta("tolerance", sec.tolerance)
        .meta("comm_max_rel_err", "maximum over users");
    let mut worst: f64 = 0.0;
    for i in 0..sec.instances {
        let phi = random_stiefel(s.pilot_len, s.geometry.n_tx, &stream.substream(i as u64))?;
        let mut comm: f64 = 0.0;
        for u in &s.users {
            let e = finite_diff_check(|p| comm_mi_user(p, u), |p| grad_comm_mi_user(p, u), &phi, sec.step)?;
            comm = comm.max(e);
        }
        let sense = finite_diff_check(
            |p| sensing_mi(p, &obj),
            |p| match formula {
                SensingFormula::Approx => grad_sensing_mi(p, &scene),
                SensingFormula::Exact => grad_sensing_mi_exact(p, &scene),
            },
            &phi,
            sec.step,
        )?;
        let isac = finite_diff_check(|p| isac_objective(p, &obj), |p| grad_isac(p, &obj), &phi, sec.step)?;
        worst = worst.max(comm).max(sense).max(isac);
        t.push(vec![i.into(), comm.into(), sense.into(), isac.into()]);
    }
    let summary = format!(
        "gradcheck: {} instances, max relative error {worst:.3e} (tolerance {:.1e})",
        sec.instances, sec.tolerance
    );
    let failure = (worst > sec.tolerance)
        .then(|| format!("max relative error {worst:.3e} exceeds tolerance {:.1e}", sec.tolerance));
    Ok(TaskOutput { tables: vec![t], summary, failure })
}

fn run_diagnostics(ctx: &TaskContext) -> Result<TaskOutput> {
    let sec = ctx.config.diagnostics.as_ref().expect("validated");
    let s = ctx.scenario;
    let obj = &s.objective;
    let pilots_stream = ctx.master().labeled("diagnostics");
    let trials = ctx.master().labeled("trials");
    let rows = (0..sec.pilots)
        .into_par_iter()
        .map(|i| -> Result<[f64; 5]> {
            let phi = random_stiefel(s.pilot_len, s.geometry.n_tx, &pilots_stream.substream(i as u64))?;
            let e = evaluate(&phi, obj)?;
            let cw = c_worst_estimate(&phi, &s.users, sec.block_len, sec.trials, &trials)?;
            let (kl, g) = sense_kl_and_g(&phi, &s.scene)?;
            Ok([comm_mi_weighted(&phi, obj)?, cw, e.sense, kl, g])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t =
        ctx.table("diagnostics.csv", &["pilot", "comm_mi_bits", "c_worst_bits", "sense_mi_bits", "kl_nats", "stein_g"]);
    let comm: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let cw: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let rho_s = if rows.len() > 1 { spearman(&comm, &cw) } else { f64::NAN };
    t.meta("block_len", sec.block_len)
        .meta("trials", sec.trials)
        .meta("spearman_comm_vs_c_worst", format!("{rho_s:.16e}"));
    for (i, r) in rows.iter().enumerate() {
        t.push(vec![i.into(), bits(r[0]).into(), bits(r[1]).into(), bits(r[2]).into(), r[3].into(), r[4].into()]);
    }
    ok(vec![t], format!("diagnostics: {} pilots, Spearman(comm MI, c_worst) = {rho_s:.3}", rows.len()))
}

/// Median of a slice; NaN for an empty one.
pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
