//! Acceptance gate. Every criterion prints one `[PASS]` or `[FAIL]` line on
//! stderr (outside the test harness capture) and then asserts.
//!
//! The criteria share one lock so that runtime budgets are measured without
//! competing for the CPU.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use lsw_core::estimators::{bootstrap_noise_floor, eps_measure_sweep, kb_measure, measure_distances, run_ensemble};
use lsw_core::integrator::Simulation;
use lsw_core::noise::{DeltaSequence, DiffusionFamily, DiffusionKind, GainTable};
use lsw_core::oracle::ou_complex_mean;
use lsw_core::stats::{loglog_slope, spearman};
use lsw_core::Boundary;
use lsw_sim::executor::Parallel;
use lsw_sim::validate::{level_consistency, operator_suite, truncation_suite, Operators, LEVEL_TOLERANCE};
use lsw_sim::{run, RunConfig, RunOptions, Verb};

static SERIAL: Mutex<()> = Mutex::new(());

fn acceptance_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance.toml")
}

fn acceptance(overrides: &[&str]) -> RunConfig {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::load(&acceptance_path(), &ov).expect("acceptance config")
}

fn inline(text: &str) -> RunConfig {
    RunConfig::parse(text, &[]).expect("inline config")
}

fn report(n: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "[{}] criterion {n:>2}: {title}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "{line}");
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn f(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn criterion_01_operator_identities() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let checks = operator_suite(&Operators::default(), 64, 1000, 11);
    let secs = start.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.worst).fold(0.0, f64::max);
    let all = checks.iter().all(|c| c.passed() && c.samples == 1000);
    report(
        1,
        "operator identities at M=64",
        all && secs < 5.0,
        &format!(
            "{} checks, worst normalized residual {worst:.2e} (limit 1e-12), {secs:.2}s (limit 5s)",
            checks.len()
        ),
    );
}

#[test]
fn criterion_02_cutoff_and_truncation() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let delta = DeltaSequence::separable(8, 8, 0.5).unwrap();
    let families = [
        DiffusionKind::SineBounded,
        DiffusionKind::LinearSaturating { gain: 0.6, offset: 0.3 },
        DiffusionKind::Table(GainTable::new(vec![0.0, 1.0, 3.0], vec![1.0, 0.5, 0.1]).unwrap()),
    ];
    let mut failed = Vec::new();
    for kind in families {
        let fam = DiffusionFamily::new(kind, delta.clone()).unwrap();
        for c in truncation_suite(&fam, 0.1, 100_000, 5) {
            if !c.passed() {
                failed.push(format!("{} ({:e})", c.name, c.worst));
            }
        }
    }
    let n = 3.5;
    let base = acceptance(&["sim.radius=16", "sim.horizon=5.0"]);
    let mut low = base.clone();
    low.sim.cutoff = Some(n);
    let mut high = base;
    high.sim.cutoff = Some(n + 1.0);
    let low = low.resolve().unwrap().simulation().unwrap();
    let high = high.resolve().unwrap().simulation().unwrap();
    let drift = level_consistency(&low, &high, n, 32).unwrap();
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "cutoff Lipschitz bounds, in-ball agreement, level consistency",
        failed.is_empty() && drift <= LEVEL_TOLERANCE && secs < 30.0,
        &format!(
            "failed checks {failed:?}, level drift {drift:.2e} per unit time (limit 1e-9), {secs:.2}s (limit 30s)"
        ),
    );
}

#[test]
fn criterion_03_energy_law_and_em_order() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for boundary in ["zero", "periodic"] {
        let cfg = inline(&format!(
            r#"
            [system]
            alpha = 1.0
            lambda = 0.0
            epsilon = 0.0
            [noise]
            kind = "zero"
            [sim]
            radius = 64
            dt = 0.01
            horizon = 10.0
            n_paths = 1
            record_stride = 1
            scheme = "exp_euler_maruyama"
            boundary = "{boundary}"
            initial.u = {{ kind = "gaussian", amplitude = 1.0, width = 3.0, phase = 0.4 }}
            "#
        ));
        let sim = cfg.resolve().unwrap().simulation().unwrap();
        let e0 = sim.initial_state(0).u.norm_sq();
        sim.run_path_with(0, &mut |_, t, s| {
            let want = (-2.0 * t).exp() * e0;
            worst = worst.max((s.u.norm_sq() - want).abs() / want);
        })
        .unwrap();
    }

    let dts = [0.04, 0.02, 0.01, 0.005, 0.0025];
    let mut errors = Vec::new();
    for dt in dts {
        let cfg = inline(&format!(
            r#"
            [system]
            lambda = 0.0
            epsilon = 0.0
            [noise]
            kind = "zero"
            [sim]
            radius = 16
            dt = {dt}
            horizon = 1.0
            n_paths = 1
            record_stride = 1
            initial.u = {{ kind = "gaussian", amplitude = 1.0, width = 3.0, phase = 0.4 }}
            "#
        ));
        let sim = cfg.resolve().unwrap().simulation().unwrap();
        let u0 = sim.initial_state(0).u;
        let mut last = None;
        let n_steps = sim.n_steps();
        sim.run_path_with(0, &mut |step, _, s| {
            if step == n_steps {
                last = Some(s.u.clone());
            }
        })
        .unwrap();
        let exact = ou_complex_mean(&u0, &sim.params().f, 1.0, 1.0, Boundary::Zero).unwrap();
        errors.push(last.unwrap().sub(&exact).unwrap().norm());
    }
    let slope = loglog_slope(&dts, &errors).unwrap();
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        "deterministic energy law and Euler-Maruyama order",
        worst <= 1e-10 && (slope - 1.0).abs() <= 0.15 && secs < 30.0,
        &format!(
            "energy relative error {worst:.2e} (limit 1e-10), EM slope {slope:.3} (1 +/- 0.15), {secs:.2}s (limit 30s)"
        ),
    );
}

#[test]
fn criterion_04_ou_oracle() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = inline(
        r#"
        [system]
        alpha = 1.0
        beta = 2.0
        lambda = 0.0
        epsilon = 0.3
        uv_coupling = false
        f = { kind = "compact", support = 2, re = 0.3, im = -0.2 }
        g = { kind = "compact", support = 1, re = 0.4 }
        b = { modes = 2, profile = { kind = "compact", support = 1, re = 0.5 } }
        gamma = { modes = 2, profile = { kind = "compact", support = 1, re = 0.5 } }
        [noise]
        kind = "zero"
        modes = 2
        seed = 404
        [sim]
        radius = 4
        dt = 2e-3
        horizon = 5.0
        n_paths = 10000
        record_stride = 50
        scheme = "exp_euler_maruyama"
        initial.u = { kind = "compact", support = 2, re = 1.0, im = 0.5 }
        "#,
    );
    let opts = RunOptions {
        workers: 1,
        output_dir: Some(dir.path().to_path_buf()),
    };
    let out = run(Verb::OracleCheck, &cfg, &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rows = read_csv(&dir.path().join("oracle.csv"));
    let worst_mean = rows
        .iter()
        .filter(|r| r["check"] == "u_mean")
        .map(|r| f(r, "abs_error"))
        .fold(0.0, f64::max);
    report(
        4,
        "linear regime against dense exponential and OU laws",
        out.failures.is_empty() && secs < 120.0,
        &format!(
            "mean error {worst_mean:.2e} (limit 1e-10), worst v deviation {:.2} se (limit 3), failures {:?}, {secs:.1}s (limit 120s)",
            out.results["v_worst_z"].as_f64().unwrap(),
            out.failures
        ),
    );
}

#[test]
fn criterion_05_moment_envelope() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = acceptance(&[]);
    let opts = RunOptions {
        workers: 1,
        output_dir: Some(dir.path().to_path_buf()),
    };
    let out = run(Verb::Moments, &cfg, &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let kappa = out.results["kappa"].as_f64().unwrap();
    let kappa_tilde = out.results["kappa_tilde"].as_f64().unwrap();
    let rows = read_csv(&dir.path().join("moments.csv"));
    let flagged = rows.iter().filter(|r| r["violation"] == "1").count();
    let closest = rows
        .iter()
        .map(|r| (f(r, "m4u") + f(r, "m2v")) / f(r, "envelope"))
        .fold(0.0, f64::max);
    report(
        5,
        "moment envelope, M=64, 2000 paths, t in [0,20]",
        flagged == 0 && out.failures.is_empty() && (kappa - 0.91).abs() < 1e-12 && kappa_tilde == 27.0 && secs < 900.0,
        &format!(
            "{flagged} flagged of {} times, peak (m4u+m2v)/envelope {closest:.3}, kappa {kappa}, kappa_tilde {kappa_tilde}, {secs:.0}s (limit 900s)",
            rows.len()
        ),
    );
}

#[test]
fn criterion_06_tail_uniformity() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let cfg = acceptance(&["sim.n_paths=200"]);
    let opts = RunOptions {
        workers: 1,
        output_dir: Some(dir.path().to_path_buf()),
    };
    let out = run(Verb::Tails, &cfg, &opts).unwrap();
    let rows = read_csv(&dir.path().join("tails.csv"));
    let n = 2 * cfg.sim.radius / 3;
    let at = |t0: bool, radius: usize| -> Vec<f64> {
        rows.iter()
            .filter(|r| r["n"] == radius.to_string() && (!t0 || f(r, "t") == 0.0))
            .map(|r| f(r, "hard"))
            .collect()
    };
    let start_tail = at(true, n)[0];
    let start_total = at(true, 0)[0];
    let peak = at(false, n).into_iter().fold(0.0, f64::max);
    let bound = start_tail + 0.1 * start_total;
    let monotone = out.results["monotone_in_n"].as_bool().unwrap();
    report(
        6,
        "tail mass at n = 2M/3 and monotonicity in n",
        peak <= bound && monotone,
        &format!("peak tail {peak:.3e} <= {bound:.3e} (t=0 tail + 10% of t=0 mass), monotone in n: {monotone}"),
    );
}

#[test]
fn criterion_07_stopping_time_decay() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = acceptance(&[
        "sim.radius=8",
        "sim.horizon=2.0",
        "sim.n_paths=1000",
        "sim.cutoff_ladder=[2.0, 4.0, 8.0, 16.0, 32.0]",
        r#"sim.initial.u={ kind = "zero" }"#,
        r#"sim.initial.v={ kind = "zero" }"#,
        "sim.initial.random_amplitude=0.7",
        "sim.initial.random_support=2",
    ]);
    let sim = cfg.resolve().unwrap().simulation().unwrap();
    let outputs = run_ensemble(&sim, &Parallel::new(1)).unwrap();
    let levels = &cfg.sim.cutoff_ladder;
    let horizon = cfg.sim.horizon;
    let escapes: Vec<usize> = (0..levels.len())
        .map(|j| outputs.iter().filter(|o| o.stopping[j].before(horizon)).count())
        .collect();
    let (xs, ps): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .zip(&escapes)
        .filter(|(_, &e)| e >= 10)
        .map(|(&n, &e)| (n, e as f64 / outputs.len() as f64))
        .unzip();
    let slope = if xs.len() >= 2 { loglog_slope(&xs, &ps) } else { None };
    report(
        7,
        "P(tau_n < T) decay on the ladder 2..32",
        slope.is_some_and(|s| s <= -2.0 + 0.3),
        &format!("escapes per level {escapes:?}, fitted slope {slope:?} over levels {xs:?} (limit -1.7)"),
    );
}

#[test]
fn criterion_08_eps_continuity() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let cfg = acceptance(&[
        "sim.radius=16",
        "sim.horizon=5.0",
        "sim.n_paths=200",
        "experiment.eps_pairs=[[0.02, 0.0], [0.04, 0.0], [0.08, 0.0], [0.16, 0.0], [0.1, 0.1]]",
        "experiment.eps_list=[]",
    ]);
    let opts = RunOptions {
        workers: 1,
        output_dir: Some(dir.path().to_path_buf()),
    };
    let out = run(Verb::EpsSweep, &cfg, &opts).unwrap();
    let rows = read_csv(&dir.path().join("eps_divergence.csv"));
    let equal = rows
        .iter()
        .find(|r| r["eps1"] == r["eps2"])
        .map(|r| f(r, "divergence"))
        .unwrap();
    let slope = out.results["divergence_slope"].as_f64().unwrap();
    report(
        8,
        "common-noise divergence against |eps1 - eps2|",
        (slope - 2.0).abs() <= 0.3 && equal == 0.0,
        &format!("log-log slope {slope:.3} (2 +/- 0.3), equal-intensity divergence {equal:e}"),
    );
}

#[test]
fn criterion_09_invariant_measures() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let common = ["sim.radius=8", "sim.dt=1e-2", "sim.n_paths=200", "sim.record_stride=50"];
    let with = |extra: &[&str]| {
        let mut all: Vec<&str> = common.to_vec();
        all.extend_from_slice(extra);
        acceptance(&all)
    };
    let cfg_a = with(&["noise.seed=901"]);
    let cfg_b = with(&[
        "noise.seed=902",
        r#"sim.initial.u={ kind = "compact", support = 1, re = -1.2, im = 0.4 }"#,
        r#"sim.initial.v={ kind = "point", site = 1, re = 2.0 }"#,
    ]);
    let sim_a: Simulation = cfg_a.resolve().unwrap().simulation().unwrap();
    let sim_b: Simulation = cfg_b.resolve().unwrap().simulation().unwrap();
    let kappa = sim_a.derived().unwrap().kappa;
    let (burn, avg) = (5.0 / kappa, 50.0 / kappa);
    let obs = cfg_a.resolve().unwrap().observables;
    let exec = Parallel::new(1);
    let a = kb_measure(&sim_a, &exec, burn, avg, &obs).unwrap();
    let b = kb_measure(&sim_b, &exec, burn, avg, &obs).unwrap();
    let dist = measure_distances(&a, &b).unwrap();
    let floor = bootstrap_noise_floor(&a, &b, 100, 77).unwrap();
    let within = dist.iter().zip(&floor).all(|(d, f)| d <= f);

    let eps_list = [0.0, 0.02, 0.05, 0.1, 0.15, 0.25];
    let sweep_sim = with(&["sim.n_paths=50"]).resolve().unwrap().simulation().unwrap();
    let sweep = eps_measure_sweep(&sweep_sim, &exec, &eps_list, burn, avg, &obs).unwrap();
    let (xs, ys): (Vec<f64>, Vec<f64>) = sweep
        .iter()
        .filter(|r| r.eps > 0.0)
        .map(|r| (r.eps, r.distance))
        .unzip();
    let rho = spearman(&xs, &ys).unwrap_or(f64::NAN);
    let pairs: Vec<String> = obs
        .iter()
        .zip(dist.iter().zip(&floor))
        .map(|(o, (d, f))| format!("{} {d:.3e}/{f:.3e}", o.name()))
        .collect();
    report(
        9,
        "initial-condition independence and eps-sweep ordering",
        within && rho > 0.8,
        &format!(
            "W1/floor per observable [{}], sweep distances {ys:?}, Spearman {rho:.3}",
            pairs.join(", ")
        ),
    );
}

#[test]
fn criterion_10_worker_independence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = acceptance(&[
        "sim.radius=8",
        "sim.horizon=1.0",
        "sim.n_paths=24",
        "sim.record_stride=50",
        "sim.cutoff_ladder=[2.0, 4.0]",
        "sim.tail_radii=[0, 4, 8]",
        "experiment.burn_in=0.5",
        "experiment.avg_time=1.0",
        "experiment.eps_pairs=[[0.05, 0.0], [0.1, 0.0]]",
        "experiment.eps_list=[0.0, 0.05, 0.1]",
        "experiment.operator_samples=50",
        "experiment.operator_radius=8",
        "experiment.cutoff_samples=2000",
        "output.trajectory=true",
    ]);
    let verbs = [
        Verb::ValidateOperators,
        Verb::Simulate,
        Verb::Moments,
        Verb::Tails,
        Verb::InvariantMeasure,
        Verb::EpsSweep,
    ];
    let root = tempfile::tempdir().unwrap();
    let mut snapshots: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
    for workers in [1, 4, 16] {
        let mut files = BTreeMap::new();
        for verb in verbs {
            let dir = root.path().join(format!("{}-{workers}", verb.name()));
            let opts = RunOptions {
                workers,
                output_dir: Some(dir.clone()),
            };
            run(verb, &cfg, &opts).unwrap();
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                let name = path.file_name().unwrap().to_string_lossy().to_string();
                if name != "manifest.json" {
                    files.insert(format!("{}/{name}", verb.name()), fs::read(&path).unwrap());
                }
            }
        }
        snapshots.push(files);
    }
    let names: Vec<&String> = snapshots[0].keys().collect();
    let identical = snapshots[1..].iter().all(|s| *s == snapshots[0]);
    report(
        10,
        "byte-identical outputs with 1, 4 and 16 workers",
        identical && names.len() >= 10,
        &format!("{} files compared: {names:?}", names.len()),
    );
}
