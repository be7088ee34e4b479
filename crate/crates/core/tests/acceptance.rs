//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use isacpilot::array::{build_user_model, ArrayGeometry, Clutter, GmmUserModel, MeanPolicy, PilotMatrix, SensingScene};
use isacpilot::eval::baselines::{dft_pilot, eigen_pilot};
use isacpilot::eval::estimation::{nmse_experiment, GmmMmse};
use isacpilot::eval::link::ser_experiment;
use isacpilot::eval::radar::{detection_trials, ks_critical_1pct, ks_exponential, Detector, RocCurve};
use isacpilot::experiment::{median, spearman};
use isacpilot::grad::{finite_diff_check, grad_comm_mi_user, grad_isac, grad_sensing_mi, FD_STEP};
use isacpilot::linalg::{random_unitary, CMatrix, CVector, C64};
use isacpilot::mi::{
    c_worst_estimate, comm_mi_user, comm_mi_weighted, isac_objective, sense_kl_and_g, sense_kl_direct,
    sensing_mi_approx, sensing_mi_exact, IsacObjective,
};
use isacpilot::optim::{
    optimize_pgd, pareto_indices, random_stiefel, rho_sweep, sample_feasible_cloud, OptimizerConfig, SweepPoint,
};
use isacpilot::rng::{complex_normal, RngStream};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn user(g: &ArrayGeometry, aoa: f64, spread: f64, comps: usize, noise: f64) -> GmmUserModel {
    build_user_model(g, aoa, spread, comps, noise, MeanPolicy::default(), 8).unwrap()
}

fn random_scene(g: &ArrayGeometry, q: usize, rng: &mut impl Rng) -> SensingScene {
    let clutter = (0..q)
        .map(|_| Clutter { angle_deg: rng.random_range(-80.0..80.0), power: rng.random_range(0.2..2.0) })
        .collect();
    SensingScene::new(g.clone(), rng.random_range(-60.0..60.0), rng.random_range(0.5..2.0), clutter, 1.0).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let s = RngStream::new(seed);
        let mut rng = s.labeled("instance").rng();
        let g = ArrayGeometry::half_wavelength(8, 4).unwrap();
        let users: Vec<_> = (0..2)
            .map(|_| {
                user(&g, rng.random_range(-70.0..70.0), rng.random_range(3.0..15.0), 5, rng.random_range(0.1..0.5))
            })
            .collect();
        let scene = random_scene(&g, 2, &mut rng);
        let obj = IsacObjective::uniform(rng.random_range(0.0..1.0), users.clone(), scene.clone()).unwrap();
        let phi = random_stiefel(3, 8, &s.labeled("pilot")).unwrap();
        for u in &users {
            worst = worst
                .max(finite_diff_check(|p| comm_mi_user(p, u), |p| grad_comm_mi_user(p, u), &phi, FD_STEP).unwrap());
        }
        worst = worst.max(
            finite_diff_check(|p| sensing_mi_approx(p, &scene), |p| grad_sensing_mi(p, &scene), &phi, FD_STEP).unwrap(),
        );
        worst =
            worst.max(finite_diff_check(|p| isac_objective(p, &obj), |p| grad_isac(p, &obj), &phi, FD_STEP).unwrap());
    }
    (worst <= 1e-5, format!("max relative error {worst:.2e} over 20 instances"))
}

/// Single user at 70°, target at 60°, no clutter.
fn detection_scenario(rho: f64) -> (ArrayGeometry, IsacObjective) {
    let g = ArrayGeometry::half_wavelength(20, 5).unwrap();
    let users = vec![user(&g, 70.0, 6.0, 180, 0.1)];
    let scene = SensingScene::new(g.clone(), 60.0, 1.0, vec![], 2.0).unwrap();
    (g, IsacObjective::uniform(rho, users, scene).unwrap())
}

fn criterion_2() -> Outcome {
    let (_, obj) = detection_scenario(0.5);
    let cfg = OptimizerConfig { rel_tol: 0.0, max_iters: 200, ..Default::default() };
    let init = random_stiefel(9, 20, &RngStream::new(1).labeled("init")).unwrap();
    let trace = optimize_pgd(&init, &obj, &cfg).unwrap();
    let worst = trace.pilots.iter().map(PilotMatrix::residual).fold(0.0, f64::max);
    let n = trace.pilots.len();
    (worst <= 1e-8 && n == 201, format!("{n} iterates, max ||ΦΦᴴ−I||_F = {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for q in [0, 1] {
        for seed in 0..10 {
            let mut rng = RngStream::new(seed).labeled("scene").rng();
            let g = ArrayGeometry::half_wavelength(8, 4).unwrap();
            let scene = random_scene(&g, q, &mut rng);
            let phi = random_stiefel(3, 8, &RngStream::new(seed)).unwrap();
            let (a, e) = (sensing_mi_approx(&phi, &scene).unwrap(), sensing_mi_exact(&phi, &scene).unwrap());
            worst = worst.max((a - e).abs());
        }
    }
    let mut better = 0;
    for seed in 0..20 {
        let mut rng = RngStream::new(seed).labeled("q2").rng();
        let target = rng.random_range(-60.0..60.0);
        let clutter: Vec<_> = (0..2)
            .map(|_| Clutter { angle_deg: rng.random_range(-80.0..80.0), power: rng.random_range(0.2..2.0) })
            .collect();
        let phi = random_stiefel(3, 8, &RngStream::new(seed).labeled("pilot")).unwrap();
        let gap = |n_rx: usize| {
            let g = ArrayGeometry::half_wavelength(8, n_rx).unwrap();
            let scene = SensingScene::new(g, target, 1.0, clutter.clone(), 1.0).unwrap();
            (sensing_mi_approx(&phi, &scene).unwrap() - sensing_mi_exact(&phi, &scene).unwrap()).abs()
        };
        better += usize::from(gap(64) < gap(4));
    }
    (worst <= 1e-10 && better >= 18, format!("Q<=1 max gap {worst:.1e}; Q=2 gap shrinks with N_r in {better}/20 seeds"))
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let s = RngStream::new(seed);
        let mut rng = s.labeled("instance").rng();
        let g = ArrayGeometry::half_wavelength(8, 4).unwrap();
        let users = vec![user(&g, 30.0, 8.0, 6, 0.2), user(&g, -40.0, 5.0, 6, 0.3)];
        let scene = random_scene(&g, 2, &mut rng);
        let obj = IsacObjective::uniform(0.5, users, scene.clone()).unwrap();
        let phi = random_stiefel(3, 8, &s.labeled("pilot")).unwrap();
        let u = random_unitary(3, &mut rng);
        let rot = &u * phi.as_matrix();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
        worst = worst
            .max(rel(comm_mi_weighted(&phi, &obj).unwrap(), comm_mi_weighted(&rot, &obj).unwrap()))
            .max(rel(sensing_mi_exact(&phi, &scene).unwrap(), sensing_mi_exact(&rot, &scene).unwrap()))
            .max(rel(sensing_mi_approx(&phi, &scene).unwrap(), sensing_mi_approx(&rot, &scene).unwrap()));
    }
    (worst <= 1e-9, format!("max relative change {worst:.1e} over 20 seeds"))
}

/// Two users at ±50°, target broadside.
fn sweep_scenario() -> IsacObjective {
    let g = ArrayGeometry::half_wavelength(12, 4).unwrap();
    let users = vec![user(&g, 50.0, 6.0, 180, 0.1), user(&g, -50.0, 6.0, 180, 0.1)];
    let scene = SensingScene::new(g, 0.0, 1.0, vec![], 2.0).unwrap();
    IsacObjective::uniform(0.5, users, scene).unwrap()
}

const RHOS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Ten seeds of the sweep, shared by the ordering and dominance criteria.
fn sweeps() -> &'static [Vec<SweepPoint>] {
    static RUNS: OnceLock<Vec<Vec<SweepPoint>>> = OnceLock::new();
    RUNS.get_or_init(|| sweeps_uncached(10))
}

fn sweeps_uncached(n: u64) -> Vec<Vec<SweepPoint>> {
    let obj = sweep_scenario();
    (0..n)
        .map(|seed| {
            let init = random_stiefel(4, 12, &RngStream::new(seed).labeled("init")).unwrap();
            rho_sweep(&obj, &RHOS, &init, &OptimizerConfig::default()).unwrap()
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let runs = &sweeps()[..5];
    let med = |f: fn(&SweepPoint) -> f64| -> Vec<f64> {
        (0..RHOS.len()).map(|i| median(&runs.iter().map(|r| f(&r[i])).collect::<Vec<_>>())).collect()
    };
    let comm = med(|p| p.comm);
    let sense = med(|p| p.sense);
    let comm_up = comm.windows(2).all(|w| w[1] >= w[0]);
    let sense_down = sense.windows(2).all(|w| w[1] <= w[0]);
    let gaps = comm[4] - comm[0] > 0.0 && sense[0] - sense[4] > 0.0;
    let kept = runs
        .iter()
        .filter(|r| pareto_indices(&r.iter().map(|p| (p.sense, p.comm)).collect::<Vec<_>>()).len() == RHOS.len())
        .count();
    (
        comm_up && sense_down && gaps && kept >= 4,
        format!(
            "median comm {:.3}..{:.3} nats, sense {:.3}..{:.3} nats, monotone={}, all endpoints kept in {kept}/5 seeds",
            comm[0],
            comm[4],
            sense[0],
            sense[4],
            comm_up && sense_down
        ),
    )
}

fn criterion_6() -> Outcome {
    let runs = sweeps();
    let obj = sweep_scenario();
    let mut good = 0;
    for (seed, run) in runs.iter().enumerate() {
        let cloud = sample_feasible_cloud(1000, 4, &obj, &RngStream::new(seed as u64).labeled("cloud")).unwrap();
        let undominated =
            run.iter().all(|p| !cloud.iter().any(|&(s, c)| s >= p.sense && c >= p.comm && (s > p.sense || c > p.comm)));
        good += usize::from(undominated);
    }
    (good * 10 >= 9 * runs.len(), format!("all endpoints undominated in {good}/{} seeds", runs.len()))
}

fn criterion_7() -> Outcome {
    let (_, obj) = detection_scenario(0.8);
    let scene = obj.scene().clone();
    let mut wins = 0;
    let mut diffs = Vec::new();
    let mut ks_ok = true;
    for seed in 0..10 {
        let s = RngStream::new(seed);
        let init = random_stiefel(9, 20, &s.labeled("init")).unwrap();
        let opt = optimize_pgd(&init, &obj, &OptimizerConfig::default()).unwrap().final_pilot;
        let trials = s.labeled("trials");
        let a = detection_trials(&opt, &scene, 100_000, &trials).unwrap();
        let b = detection_trials(&init, &scene, 100_000, &trials).unwrap();
        let pd = |t| RocCurve::from_trials(t, &[1e-2]).unwrap().points[0].p_d;
        let d = pd(&a) - pd(&b);
        wins += usize::from(d >= 0.02);
        diffs.push(d);
        if seed == 0 {
            let norm = Detector::new(&init, &scene).unwrap().norm;
            let x: Vec<f64> = b.iter().map(|t| t.statistic_h0 / norm).collect();
            ks_ok = ks_exponential(&x) < ks_critical_1pct(x.len());
        }
    }
    (
        wins >= 9 && ks_ok,
        format!("P_d gain >= 0.02 in {wins}/10 seeds (median gain {:.3}); Q=0 KS test passed={ks_ok}", median(&diffs)),
    )
}

fn criterion_8() -> Outcome {
    let g = ArrayGeometry::half_wavelength(16, 4).unwrap();
    let users = vec![user(&g, 70.0, 20.0, 180, 0.3)];
    let scene = SensingScene::new(g, -20.0, 1.0, vec![], 2.0).unwrap();
    let obj = IsacObjective::uniform(1.0, users.clone(), scene).unwrap();
    let eig = eigen_pilot(&users, 6).unwrap();
    let dft = dft_pilot(6, 16).unwrap();
    let mut res = vec![Vec::new(); 4];
    for seed in 0..10 {
        let s = RngStream::new(seed);
        let init = random_stiefel(6, 16, &s.labeled("init")).unwrap();
        let opt = optimize_pgd(&init, &obj, &OptimizerConfig::default()).unwrap().final_pilot;
        for (i, p) in [&opt, &init, &eig, &dft].into_iter().enumerate() {
            res[i].push(nmse_experiment(p, &users, 1000, &s.labeled("trials")).unwrap().pooled);
        }
    }
    let m: Vec<f64> = res.iter().map(|r| median(r)).collect();
    let db = |x: f64| 10.0 * x.log10();
    (
        m[0] <= m[1] && m[0] <= m[2] && m[3] >= m[1] && m[3] >= m[2],
        format!(
            "median NMSE optimized {:.2} dB, random {:.2} dB, eigen {:.2} dB, DFT {:.2} dB",
            db(m[0]),
            db(m[1]),
            db(m[2]),
            db(m[3])
        ),
    )
}

fn criterion_9() -> Outcome {
    let g = ArrayGeometry::half_wavelength(16, 4).unwrap();
    let users: Vec<_> = [70.0, 23.0, -23.0, -70.0].iter().map(|&a| user(&g, a, 6.0, 180, 0.3)).collect();
    let scene = SensingScene::new(g, -20.0, 1.0, vec![], 2.0).unwrap();
    let obj = IsacObjective::uniform(1.0, users.clone(), scene).unwrap();
    let (mut o, mut r) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let s = RngStream::new(seed);
        let init = random_stiefel(6, 16, &s.labeled("init")).unwrap();
        let opt = optimize_pgd(&init, &obj, &OptimizerConfig::default()).unwrap().final_pilot;
        o.push(ser_experiment(&opt, &users, &[20.0], 100_000, 100, &s.labeled("trials")).unwrap()[0].ser);
        r.push(ser_experiment(&init, &users, &[20.0], 100_000, 100, &s.labeled("trials")).unwrap()[0].ser);
    }
    let (mo, mr) = (median(&o), median(&r));
    (mo < mr, format!("median SER at 20 dB: optimized {mo:.3e}, random {mr:.3e}"))
}

fn criterion_10() -> Outcome {
    let (_, obj) = detection_scenario(0.5);
    let mut spread_max: f64 = 0.0;
    let mut fast = 0;
    for seed in 0..5 {
        let init = random_stiefel(9, 20, &RngStream::new(seed).labeled("init")).unwrap();
        let slow = OptimizerConfig { step_size: 0.1, rel_tol: 0.0, ..Default::default() };
        let f: Vec<f64> = optimize_pgd(&init, &obj, &slow).unwrap().records.iter().map(|r| r.objective).collect();
        let tail = &f[f.len() - 20..];
        let hi = tail.iter().cloned().fold(f64::MIN, f64::max);
        let lo = tail.iter().cloned().fold(f64::MAX, f64::min);
        spread_max = spread_max.max((hi - lo) / f[200].abs());
        let quick = OptimizerConfig { step_size: 0.5, rel_tol: 0.0, ..Default::default() };
        let f: Vec<f64> = optimize_pgd(&init, &obj, &quick).unwrap().records.iter().map(|r| r.objective).collect();
        fast += usize::from((f[60] - f[200]).abs() <= 1e-3 * f[200].abs());
    }
    (
        spread_max <= 1e-4 && fast >= 4,
        format!(
            "step 0.1 final-20 spread {spread_max:.1e} (worst of 5); step 0.5 settled by iter 60 in {fast}/5 seeds"
        ),
    )
}

fn criterion_11() -> Outcome {
    let g = ArrayGeometry::half_wavelength(8, 1).unwrap();
    let single = user(&g, 25.0, 10.0, 1, 0.2);
    let mixture = user(&g, 25.0, 10.0, 180, 0.2);
    let phi = random_stiefel(3, 8, &RngStream::new(3)).unwrap();
    let mut rng = RngStream::new(4).rng();
    let (mu, r) = (&single.means()[0], &single.covariances()[0]);
    let sigma = phi.as_matrix() * r * phi.adjoint() + CMatrix::identity(3, 3) * C64::new(0.04, 0.0);
    let gain = r * phi.adjoint() * sigma.try_inverse().unwrap();
    let (mut id_err, mut resp_err): (f64, f64) = (0.0, 0.0);
    let est1 = GmmMmse::new(&phi, &single).unwrap();
    let est2 = GmmMmse::new(&phi, &mixture).unwrap();
    for _ in 0..50 {
        let y = CVector::from_fn(3, |_, _| complex_normal(&mut rng, 2.0));
        let lmmse = mu + &gain * (&y - phi.as_matrix() * mu);
        id_err = id_err.max((est1.estimate(&y) - &lmmse).norm() / lmmse.norm());
        let (_, p) = est2.estimate_with_responsibilities(&y);
        resp_err = resp_err.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    (
        id_err <= 1e-10 && resp_err <= 1e-12,
        format!("linear MMSE identity error {id_err:.1e}, responsibility sum error {resp_err:.1e}"),
    )
}

fn criterion_12() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut g_ok = true;
    for seed in 0..20 {
        let mut rng = RngStream::new(seed).labeled("scene").rng();
        let geo = ArrayGeometry::half_wavelength(8, 4).unwrap();
        let scene = random_scene(&geo, (seed % 3) as usize, &mut rng);
        let phi = random_stiefel(3, 8, &RngStream::new(seed)).unwrap();
        let (kl, g) = sense_kl_and_g(&phi, &scene).unwrap();
        let direct = sense_kl_direct(&phi, &scene).unwrap();
        worst = worst.max((kl - direct).abs() / direct.abs().max(1.0));
        g_ok &= (0.0..1.0).contains(&g);
    }
    let geo = ArrayGeometry::half_wavelength(8, 4).unwrap();
    let strong = SensingScene::new(geo, 10.0, 1e6, vec![Clutter { angle_deg: -30.0, power: 1.0 }], 1.0).unwrap();
    let (_, g) = sense_kl_and_g(&random_stiefel(3, 8, &RngStream::new(99)).unwrap(), &strong).unwrap();
    (
        worst <= 1e-10 && g_ok && (g - 1.0).abs() <= 1e-3,
        format!("closed form vs direct {worst:.1e}; g in [0,1) = {g_ok}; |g-1| at ν0=1e6 = {:.1e}", (g - 1.0).abs()),
    )
}

fn criterion_13() -> Outcome {
    let g = ArrayGeometry::half_wavelength(16, 4).unwrap();
    let users = vec![user(&g, 70.0, 6.0, 180, 0.1)];
    let (mut mi, mut cw) = (Vec::new(), Vec::new());
    for i in 0..50 {
        let p = random_stiefel(6, 16, &RngStream::new(1000 + i)).unwrap();
        mi.push(comm_mi_user(&p, &users[0]).unwrap());
        cw.push(c_worst_estimate(&p, &users, 100, 1000, &RngStream::new(5)).unwrap());
    }
    let r = spearman(&mi, &cw);
    (r > 0.5, format!("Spearman rank correlation {r:.3} over 50 pilots"))
}

fn criterion_14() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_isacpilot");
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut names: Vec<_> = fs::read_dir(&configs)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    let mut identical = 0;
    let mut failures = Vec::new();
    for cfg in &names {
        let text = fs::read_to_string(cfg).unwrap();
        let task = text
            .lines()
            .find_map(|l| l.strip_prefix("task = "))
            .map(|t| t.trim_matches('"').to_string())
            .expect("bundled configs declare their task");
        let stem = cfg.file_stem().unwrap().to_string_lossy().into_owned();
        let mut outputs = Vec::new();
        for threads in ["1", "3"] {
            let out = tmp.path().join(format!("{stem}-{threads}"));
            let status = Command::new(bin)
                .args([task.as_str(), "--config"])
                .arg(cfg)
                .arg("--out")
                .arg(&out)
                .args(["--threads", threads])
                .output()
                .unwrap()
                .status;
            let mut files: Vec<_> =
                fs::read_dir(&out).map(|d| d.map(|e| e.unwrap().path()).collect()).unwrap_or_default();
            files.sort();
            let contents: Vec<_> =
                files.iter().map(|f| (f.file_name().unwrap().to_owned(), fs::read(f).unwrap())).collect();
            outputs.push((status.success(), contents));
        }
        if outputs[0].0 && outputs[1].0 && !outputs[0].1.is_empty() && outputs[0].1 == outputs[1].1 {
            identical += 1;
        } else {
            failures.push(stem);
        }
    }
    (
        identical == names.len() && !names.is_empty(),
        format!("{identical}/{} bundled configs byte-identical under 1 and 3 threads {failures:?}", names.len()),
    )
}

fn main() {
    // `cargo test -- --list` and filters: this target has a single entry.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let start = Instant::now();
    let criteria: [Criterion; 14] = [
        ("gradient oracle", criterion_1),
        ("feasibility", criterion_2),
        ("sensing MI oracle", criterion_3),
        ("unitary invariance", criterion_4),
        ("trade-off ordering", criterion_5),
        ("frontier dominance", criterion_6),
        ("ROC ordering", criterion_7),
        ("NMSE ordering", criterion_8),
        ("SER ordering", criterion_9),
        ("convergence stability", criterion_10),
        ("MMSE identity", criterion_11),
        ("KL/Stein identities", criterion_12),
        ("diagnostic trend", criterion_13),
        ("determinism", criterion_14),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = run();
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {:<22} {}  {detail} [{:.1}s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
