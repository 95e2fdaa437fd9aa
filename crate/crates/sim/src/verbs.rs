//! The command verbs. Each writes its tables and a manifest into the
//! output directory and reports which property checks failed.

use std::path::PathBuf;

use lsw_core::estimators::{
    eps_divergence, eps_measure_sweep, estimate_moments, estimate_tails, fitted_decay_rate, kb_measure, run_ensemble,
    Histogram, PathExecutor,
};
use lsw_core::integrator::{Scheme, Simulation};
use lsw_core::oracle::{ou_complex_mean, ou_real_at};
use lsw_core::stats::{mean_stderr, spearman};
use lsw_core::{ComplexSeq, DerivedConstants, LatticeState};

use crate::config::RunConfig;
use crate::error::{Result, SimError};
use crate::executor::Parallel;
use crate::output::{num, RunDir, TrajectoryWriter};
use crate::validate::{operator_suite, truncation_suite, Check, Operators};

/// Paths integrated per batch when snapshots are streamed to disk.
const SNAPSHOT_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verb {
    ValidateOperators,
    Simulate,
    Moments,
    Tails,
    InvariantMeasure,
    EpsSweep,
    OracleCheck,
}

impl Verb {
    pub const ALL: [Verb; 7] = [
        Verb::ValidateOperators,
        Verb::Simulate,
        Verb::Moments,
        Verb::Tails,
        Verb::InvariantMeasure,
        Verb::EpsSweep,
        Verb::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verb::ValidateOperators => "validate-operators",
            Verb::Simulate => "simulate",
            Verb::Moments => "moments",
            Verb::Tails => "tails",
            Verb::InvariantMeasure => "invariant-measure",
            Verb::EpsSweep => "eps-sweep",
            Verb::OracleCheck => "oracle-check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `0` means one per available hardware thread.
    pub workers: usize,
    /// Overrides the configured output directory.
    pub output_dir: Option<PathBuf>,
}

/// What a completed verb produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub failures: Vec<String>,
    pub results: serde_json::Map<String, serde_json::Value>,
}

impl Outcome {
    /// `0` when every property check passed, `3` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            3
        }
    }
}

pub fn run(verb: Verb, config: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let dir = opts.output_dir.clone().unwrap_or_else(|| config.output_dir());
    let exec = if opts.workers == 0 {
        Parallel::with_available_parallelism()
    } else {
        Parallel::new(opts.workers)
    };
    let mut run = RunDir::create(&dir, verb.name(), config, exec.workers())?;
    let body = match verb {
        Verb::ValidateOperators => validate_operators(&mut run, config),
        Verb::Simulate => simulate(&mut run, config, &exec),
        Verb::Moments => moments(&mut run, config, &exec),
        Verb::Tails => tails(&mut run, config, &exec),
        Verb::InvariantMeasure => invariant_measure(&mut run, config, &exec),
        Verb::EpsSweep => eps_sweep(&mut run, config, &exec),
        Verb::OracleCheck => oracle_check(&mut run, config, &exec),
    };
    match body {
        Ok(()) => run.finish(Ok(()))?,
        Err(e) => {
            run.finish(Err(&e))?;
            return Err(e);
        }
    }
    Ok(Outcome {
        dir,
        failures: run.failures().to_vec(),
        results: run.results().clone(),
    })
}

fn record_constants(run: &mut RunDir, sim: &Simulation) {
    run.result("epsilon", sim.params().epsilon);
    if let Some(d) = sim.derived() {
        run.result("kappa", d.kappa);
        run.result("kappa_tilde", d.kappa_tilde);
        // JSON has no infinity; purely additive noise reports null
        run.result("eps0", finite(d.eps0));
        run.result("eps0_stated", finite(d.eps0_stated));
        run.result("absorbing_bound", d.absorbing_bound);
    }
}

fn finite(x: f64) -> serde_json::Value {
    if x.is_finite() {
        x.into()
    } else {
        serde_json::Value::Null
    }
}

fn derived_or_err(sim: &Simulation) -> Result<DerivedConstants> {
    sim.derived()
        .copied()
        .ok_or_else(|| SimError::Config("the moment constants need a dissipative system".into()))
}

fn check_rows(checks: &[Check]) -> Vec<Vec<String>> {
    checks
        .iter()
        .map(|c| {
            vec![
                c.suite.to_string(),
                format!("\"{}\"", c.name),
                c.samples.to_string(),
                num(c.worst),
                num(c.tolerance),
                u8::from(c.passed()).to_string(),
            ]
        })
        .collect()
}

fn validate_operators(run: &mut RunDir, cfg: &RunConfig) -> Result<()> {
    let e = &cfg.experiment;
    let resolved = cfg.resolve()?;
    let seed = cfg.noise.seed;
    let mut checks = run.stage("operators", || {
        Ok(operator_suite(
            &Operators::default(),
            e.operator_radius,
            e.operator_samples,
            seed,
        ))
    })?;
    checks.extend(run.stage("truncation", || {
        Ok(truncation_suite(
            &resolved.family,
            resolved.params.lambda,
            e.cutoff_samples,
            seed,
        ))
    })?);
    run.csv(
        "operators.csv",
        &["suite", "check", "samples", "worst", "tolerance", "passed"],
        check_rows(&checks),
    )?;
    for c in checks.iter().filter(|c| !c.passed()) {
        run.fail_check(format!(
            "{}: {} (worst {:e} > {:e})",
            c.suite, c.name, c.worst, c.tolerance
        ));
    }
    run.result("checks", checks.len());
    Ok(())
}

fn simulate(run: &mut RunDir, cfg: &RunConfig, exec: &Parallel) -> Result<()> {
    let resolved = cfg.resolve()?;
    let mut sc = resolved.sim_config.clone();
    sc.keep_snapshots = cfg.output.trajectory;
    let sim = Simulation::new(sc, resolved.params, resolved.family, resolved.init)?;
    record_constants(run, &sim);
    let n_paths = sim.config().n_paths;
    let records = sim.record_times().len();
    let mut traj = if cfg.output.trajectory {
        run.output("trajectory.bin");
        Some(TrajectoryWriter::create(
            &run.file("trajectory.bin"),
            sim.config().radius,
            n_paths as u64,
            records as u64,
        )?)
    } else {
        None
    };
    let mut norm_rows = Vec::with_capacity(n_paths * records);
    let mut stop_rows = Vec::new();
    run.stage("integrate", || {
        for start in (0..n_paths).step_by(SNAPSHOT_BATCH) {
            let len = SNAPSHOT_BATCH.min(n_paths - start);
            let batch = exec.map_paths(len, |i| sim.run_path(start as u64 + i));
            for out in batch {
                let out = out?;
                for s in &out.norms {
                    norm_rows.push(vec![
                        out.path.to_string(),
                        num(s.t),
                        num(s.u_sq),
                        num(s.u_quartic),
                        num(s.v_sq),
                    ]);
                }
                for r in &out.stopping {
                    let (step, t, x) = match r.hit {
                        Some(h) => (h.step.to_string(), num(h.time), num(h.trigger_norm)),
                        None => (String::new(), String::new(), String::new()),
                    };
                    stop_rows.push(vec![out.path.to_string(), num(r.level.get()), step, t, x]);
                }
                if let Some(w) = traj.as_mut() {
                    for (t, state) in &out.snapshots {
                        w.record(out.path, *t, state)?;
                    }
                }
            }
        }
        Ok(())
    })?;
    if let Some(w) = traj {
        w.finish()?;
    }
    run.csv("norms.csv", &["path", "t", "u_sq", "u_quartic", "v_sq"], norm_rows)?;
    if !sim.config().stopping_levels.is_empty() {
        run.csv(
            "stopping.csv",
            &["path", "level", "hit_step", "hit_time", "trigger_norm"],
            stop_rows,
        )?;
    }
    run.result("paths", n_paths);
    run.result("records_per_path", records);
    Ok(())
}

fn moments(run: &mut RunDir, cfg: &RunConfig, exec: &Parallel) -> Result<()> {
    let sim = cfg.resolve()?.simulation()?;
    record_constants(run, &sim);
    let derived = derived_or_err(&sim)?;
    let outputs = run.stage("integrate", || Ok(run_ensemble(&sim, exec)?))?;
    let series = estimate_moments(&outputs, &derived)?;
    let rows = (0..series.times.len()).map(|i| {
        vec![
            num(series.times[i]),
            num(series.m4u[i].mean),
            num(series.m4u[i].se),
            num(series.m2v[i].mean),
            num(series.m2v[i].se),
            num(series.total[i].mean),
            num(series.total[i].se),
            num(series.envelope[i]),
            u8::from(series.violation[i]).to_string(),
        ]
    });
    run.csv(
        "moments.csv",
        &[
            "t",
            "m4u",
            "m4u_se",
            "m2v",
            "m2v_se",
            "total",
            "total_se",
            "envelope",
            "violation",
        ],
        rows,
    )?;
    let totals: Vec<f64> = series.total.iter().map(|e| e.mean).collect();
    run.result("violations", series.violations());
    run.result(
        "fitted_decay_rate",
        fitted_decay_rate(&series.times, &totals).map_or(serde_json::Value::Null, finite),
    );
    if series.violations() > 0 {
        let first = series.violation.iter().position(|&v| v).expect("some violation");
        run.fail_check(format!(
            "moment envelope exceeded at {} recorded times, first at t = {}",
            series.violations(),
            series.times[first]
        ));
    }
    Ok(())
}

fn tail_radii(cfg: &RunConfig) -> Vec<usize> {
    if !cfg.sim.tail_radii.is_empty() {
        return cfg.sim.tail_radii.clone();
    }
    let m = cfg.sim.radius;
    let mut r = vec![0, m / 3, 2 * m / 3, m];
    r.dedup();
    r
}

fn tails(run: &mut RunDir, cfg: &RunConfig, exec: &Parallel) -> Result<()> {
    let mut resolved = cfg.resolve()?;
    let radii = tail_radii(cfg);
    resolved.sim_config.tail_radii = radii.clone();
    let sim = resolved.simulation()?;
    record_constants(run, &sim);
    let outputs = run.stage("integrate", || Ok(run_ensemble(&sim, exec)?))?;
    let series = estimate_tails(&outputs, &radii)?;
    let mut rows = Vec::new();
    for (i, &t) in series.times.iter().enumerate() {
        for (j, &n) in radii.iter().enumerate() {
            rows.push(vec![
                num(t),
                n.to_string(),
                num(series.hard[i][j]),
                num(series.smooth[i][j]),
            ]);
        }
    }
    run.csv("tails.csv", &["t", "n", "hard", "smooth"], rows)?;
    run.result("monotone_in_n", series.is_monotone());
    if !series.is_monotone() {
        run.fail_check("hard tail mass increases with n at some recorded time".into());
    }
    Ok(())
}

/// Burn-in and averaging window: the configured values or `5/kappa` and `50/kappa`.
pub fn measure_window(cfg: &RunConfig, sim: &Simulation) -> Result<(f64, f64)> {
    let kappa = sim.derived().map(|d| d.kappa);
    let pick = |v: Option<f64>, factor: f64, what: &str| -> Result<f64> {
        v.or(kappa.map(|k| factor / k))
            .ok_or_else(|| SimError::Config(format!("{what} must be set when kappa is unavailable")))
    };
    Ok((
        pick(cfg.experiment.burn_in, 5.0, "burn_in")?,
        pick(cfg.experiment.avg_time, 50.0, "avg_time")?,
    ))
}

fn invariant_measure(run: &mut RunDir, cfg: &RunConfig, exec: &Parallel) -> Result<()> {
    let resolved = cfg.resolve()?;
    let sim = resolved.simulation()?;
    record_constants(run, &sim);
    let (burn, avg) = measure_window(cfg, &sim)?;
    run.result("burn_in", burn);
    run.result("avg_time", avg);
    let obs = &resolved.observables;
    let short = run.stage("average", || Ok(kb_measure(&sim, exec, burn, avg, obs)?))?;
    let long = run.stage("average_doubled", || Ok(kb_measure(&sim, exec, burn, 2.0 * avg, obs)?))?;
    let bins = cfg.experiment.bins;
    let mut summary = Vec::new();
    let mut worst_tv: f64 = 0.0;
    for (j, o) in obs.iter().enumerate() {
        let all = short.samples[j].iter().chain(&long.samples[j]);
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        let h_short = Histogram::build(&short.samples[j], bins, lo, hi);
        let h_long = Histogram::build(&long.samples[j], bins, lo, hi);
        let tv = h_short.total_variation(&h_long)?;
        worst_tv = worst_tv.max(tv);
        let rows = h_long
            .edges
            .windows(2)
            .zip(&h_long.mass)
            .map(|(e, m)| vec![num(e[0]), num(e[1]), num(*m)]);
        run.csv(
            &format!("measure_{}.csv", o.name()),
            &["bin_lo", "bin_hi", "mass"],
            rows,
        )?;
        let (mean, _) = mean_stderr(&long.samples[j]);
        let var = long.samples[j].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / long.samples[j].len() as f64;
        summary.push(vec![
            o.name().to_string(),
            long.samples[j].len().to_string(),
            num(mean),
            num(var),
            num(tv),
        ]);
    }
    run.csv(
        "measure_summary.csv",
        &["observable", "samples", "mean", "variance", "tv_doubling"],
        summary,
    )?;
    run.result("max_tv_doubling", worst_tv);
    if worst_tv > cfg.experiment.cauchy_tolerance {
        run.fail_check(format!(
            "histograms moved by {worst_tv} in total variation when the window doubled (tolerance {})",
            cfg.experiment.cauchy_tolerance
        ));
    }
    Ok(())
}

fn eps_sweep(run: &mut RunDir, cfg: &RunConfig, exec: &Parallel) -> Result<()> {
    let resolved = cfg.resolve()?;
    let sim = resolved.simulation()?;
    record_constants(run, &sim);
    let e = &cfg.experiment;
    if !e.eps_pairs.is_empty() {
        let pairs: Vec<(f64, f64)> = e.eps_pairs.iter().map(|p| (p[0], p[1])).collect();
        let div = run.stage("divergence", || Ok(eps_divergence(&sim, exec, &pairs)?))?;
        let rows = div.rows.iter().map(|r| {
            vec![
                num(r.eps1),
                num(r.eps2),
                num((r.eps1 - r.eps2).abs()),
                num(r.divergence.mean),
                num(r.divergence.se),
            ]
        });
        run.csv("eps_divergence.csv", &["eps1", "eps2", "gap", "divergence", "se"], rows)?;
        run.result("divergence_slope", div.slope.map_or(serde_json::Value::Null, finite));
        for r in div.rows.iter().filter(|r| r.eps1 == r.eps2 && r.divergence.mean != 0.0) {
            run.fail_check(format!(
                "equal intensities {} diverged by {}",
                r.eps1, r.divergence.mean
            ));
        }
        if let Some(s) = div.slope {
            if !(1.7..=2.3).contains(&s) {
                run.fail_check(format!("divergence slope {s} outside [1.7, 2.3]"));
            }
        }
    }
    if !e.eps_list.is_empty() {
        let (burn, avg) = measure_window(cfg, &sim)?;
        let obs = &resolved.observables;
        let rows = run.stage("measure_sweep", || {
            Ok(eps_measure_sweep(&sim, exec, &e.eps_list, burn, avg, obs)?)
        })?;
        run.csv(
            "eps_measure.csv",
            &["eps", "distance"],
            rows.iter().map(|r| vec![num(r.eps), num(r.distance)]),
        )?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.eps > 0.0).map(|r| (r.eps, r.distance)).unzip();
        let rho = spearman(&xs, &ys);
        run.result("measure_spearman", rho.map_or(serde_json::Value::Null, finite));
        if let Some(rho) = rho {
            if rho <= 0.0 {
                run.fail_check(format!("measure distance does not grow with eps (Spearman {rho})"));
            }
        }
    }
    Ok(())
}

fn oracle_check(run: &mut RunDir, cfg: &RunConfig, exec: &Parallel) -> Result<()> {
    let resolved = cfg.resolve()?;
    let p = &resolved.params;
    if p.lambda != 0.0 || p.uv_coupling || !resolved.family.is_zero() {
        return Err(SimError::Config(
            "oracle-check needs lambda = 0, uv_coupling = false and a zero diffusion family".into(),
        ));
    }
    let sim = resolved.simulation()?;
    record_constants(run, &sim);
    let boundary = sim.config().boundary;
    let tol = cfg.experiment.oracle_tolerance;
    let sigmas = cfg.experiment.oracle_sigmas;
    let mut rows = Vec::new();
    let mut failures = 0usize;

    // deterministic short-wave mean against the dense propagator
    let quiet = sim.with_epsilon(0.0)?;
    let mut snaps: Vec<(f64, ComplexSeq)> = Vec::new();
    let u0 = quiet.initial_state(0).u;
    run.stage("mean_path", || {
        quiet.run_path_with(0, &mut |_, t, s| snaps.push((t, s.u.clone())))?;
        Ok(())
    })?;
    let mut worst_u: f64 = 0.0;
    for (t, u) in &snaps {
        let want = ou_complex_mean(&u0, &p.f, p.alpha, *t, boundary)?;
        let err = u.sub(&want)?.norm() / want.norm().max(1.0);
        let allowed = tol;
        worst_u = worst_u.max(err / allowed);
        let ok = err <= allowed;
        failures += usize::from(!ok);
        rows.push(vec![
            "u_mean".into(),
            String::new(),
            num(*t),
            num(u.norm()),
            num(want.norm()),
            num(err),
            num(allowed),
            u8::from(ok).to_string(),
        ]);
    }
    if sim.config().scheme != Scheme::ExpEulerMaruyama {
        run.result("note", "the u mean is exact only for the exponential scheme");
    }
    run.result("u_mean_worst_ratio", worst_u);

    // long-wave law at the horizon against the scalar OU solution
    let horizon = sim.config().horizon;
    let n_steps = sim.n_steps();
    let finals: Vec<LatticeState> = run.stage("ensemble", || {
        let outs = exec.map_paths(sim.config().n_paths, |path| {
            let mut last = None;
            sim.run_path_with(path, &mut |step, _, s| {
                if step == n_steps {
                    last = Some(s.clone());
                }
            })
            .map(|_| last.expect("final step is recorded"))
        });
        Ok(outs.into_iter().collect::<lsw_core::Result<Vec<_>>>()?)
    })?;
    let v0 = sim.initial_state(0).v;
    let n = finals.len() as f64;
    let mut worst_z: f64 = 0.0;
    for (m, _) in v0.sites() {
        let gamma_site: Vec<f64> = p.gamma.iter().map(|g| g.get(m)).collect();
        let law = ou_real_at(p.beta, p.epsilon, &gamma_site, p.g.get(m), v0.get(m), horizon)?;
        let xs: Vec<f64> = finals.iter().map(|s| s.v.get(m)).collect();
        let (mean, se) = mean_stderr(&xs);
        let var = xs.iter().map(|x| (x - law.mean).powi(2)).sum::<f64>() / n;
        // standard error of a sample variance of Gaussian data
        let var_se = law.variance * (2.0 / n).sqrt();
        let mean_se = se.max((law.variance / n).sqrt());
        for (what, got, want, s) in [
            ("v_mean", mean, law.mean, mean_se),
            ("v_variance", var, law.variance, var_se),
        ] {
            let err = (got - want).abs();
            let allowed = sigmas * s + 1e-12 * want.abs().max(1.0);
            worst_z = worst_z.max(if s > 0.0 { err / s } else { 0.0 });
            let ok = err <= allowed;
            failures += usize::from(!ok);
            rows.push(vec![
                what.into(),
                m.to_string(),
                num(horizon),
                num(got),
                num(want),
                num(err),
                num(allowed),
                u8::from(ok).to_string(),
            ]);
        }
    }
    run.result("v_worst_z", worst_z);
    run.csv(
        "oracle.csv",
        &[
            "check",
            "site",
            "t",
            "value",
            "reference",
            "abs_error",
            "tolerance",
            "passed",
        ],
        rows,
    )?;
    if failures > 0 {
        run.fail_check(format!("{failures} oracle comparisons outside tolerance"));
    }
    Ok(())
}
