use lsw_core::estimators::{run_ensemble, Serial};
use lsw_core::integrator::{step, InitialCondition, Scheme, SimConfig, Simulation};
use lsw_core::noise::{DeltaSequence, DiffusionFamily, DiffusionKind, NormalSource};
use lsw_core::oracle::ou_real_stationary;
use lsw_core::stats::{loglog_slope, mean_stderr};
use lsw_core::{Boundary, Complex, ComplexSeq, LatticeState, RealSeq, SystemParams};

const MODES: usize = 2;
const RADIUS: usize = 2;

fn start() -> LatticeState {
    LatticeState::new(
        ComplexSeq::from_fn(RADIUS, |m| Complex::new(0.6 - 0.2 * m as f64, 0.3)),
        RealSeq::from_fn(RADIUS, |m| 0.4 + 0.1 * m as f64),
    )
    .unwrap()
}

/// Mean terminal error of Euler-Maruyama at `dt = fine * 2^j` against the
/// finest grid, on shared Brownian paths.
fn strong_errors(params: &SystemParams, family: &DiffusionFamily, levels: &[u32]) -> Vec<f64> {
    let fine = 2f64.powi(-12);
    let n_fine = 1usize << 12;
    let paths = 200;
    let mut errors = vec![Vec::with_capacity(paths); levels.len()];
    let mut rng = NormalSource::from_seed(99);
    for _ in 0..paths {
        let dw: Vec<[f64; MODES]> = (0..n_fine)
            .map(|_| [rng.next_normal() * fine.sqrt(), rng.next_normal() * fine.sqrt()])
            .collect();
        let run = |coarsen: usize| -> LatticeState {
            let dt = fine * coarsen as f64;
            let mut s = start();
            for chunk in dw.chunks(coarsen) {
                let mut inc = [0.0; MODES];
                for d in chunk {
                    inc[0] += d[0];
                    inc[1] += d[1];
                }
                s = step(
                    &s,
                    params,
                    family,
                    &inc,
                    dt,
                    Scheme::EulerMaruyama,
                    None,
                    Boundary::Zero,
                )
                .unwrap();
            }
            s
        };
        let reference = run(1);
        for (e, &j) in errors.iter_mut().zip(levels) {
            let s = run(1 << j);
            let du = s.u.sub(&reference.u).unwrap().norm_sq();
            let dv = s.v.sub(&reference.v).unwrap().norm_sq();
            e.push((du + dv).sqrt());
        }
    }
    errors.iter().map(|e| mean_stderr(e).0).collect()
}

fn base_params(epsilon: f64) -> SystemParams {
    SystemParams::new(1.0, 2.0, 0.1, RADIUS).with_epsilon(epsilon)
}

#[test]
fn strong_order_one_half_with_multiplicative_noise() {
    let levels = [4, 5, 6, 7];
    let dts: Vec<f64> = levels.iter().map(|&j| 2f64.powi(j as i32 - 12)).collect();
    let mult = DiffusionFamily::new(
        DiffusionKind::LinearSaturating { gain: 1.0, offset: 0.0 },
        DeltaSequence::separable(MODES, RADIUS, 4.0).unwrap(),
    )
    .unwrap();
    let errs = strong_errors(&base_params(1.0), &mult, &levels);
    let slope = loglog_slope(&dts, &errs).unwrap();
    assert!((slope - 0.5).abs() <= 0.15, "slope {slope}, errors {errs:?}");
}

#[test]
fn strong_order_one_with_additive_noise() {
    let levels = [4, 5, 6, 7];
    let dts: Vec<f64> = levels.iter().map(|&j| 2f64.powi(j as i32 - 12)).collect();
    let profile = ComplexSeq::from_fn(RADIUS, |m| Complex::new(1.0 / (1.0 + m.abs() as f64), 0.0));
    let params = base_params(1.0).with_additive_noise(
        vec![profile.clone(), profile.scaled(0.5)],
        vec![RealSeq::from_fn(RADIUS, |_| 1.0); 2],
    );
    let errs = strong_errors(&params, &DiffusionFamily::zero(MODES, RADIUS), &levels);
    let slope = loglog_slope(&dts, &errs).unwrap();
    assert!((slope - 1.0).abs() <= 0.15, "slope {slope}, errors {errs:?}");
}

#[test]
fn long_wave_site_matches_ou_law() {
    let mut params = SystemParams::new(1.0, 2.0, 0.0, 0)
        .with_epsilon(0.5)
        .with_forcing(ComplexSeq::zeros(0), RealSeq::from_values(0, vec![0.6]).unwrap());
    params.gamma = vec![
        RealSeq::from_values(0, vec![0.8]).unwrap(),
        RealSeq::from_values(0, vec![0.6]).unwrap(),
    ];
    params.uv_coupling = false;
    let mut cfg = SimConfig::new(0, 2, 1e-3, 3.0);
    cfg.n_paths = 10_000;
    cfg.record_stride = 3000;
    cfg.seed = 17;
    let sim = Simulation::new(cfg, params, DiffusionFamily::zero(2, 0), InitialCondition::zero(0)).unwrap();
    let outs = run_ensemble(&sim, &Serial).unwrap();
    // a single site, so ||v||^2 = v^2 and E v^2 = variance + mean^2
    let law = ou_real_stationary(2.0, 0.5, &[0.8, 0.6], 0.6).unwrap();
    let v_sq: Vec<f64> = outs.iter().map(|o| o.norms.last().unwrap().v_sq).collect();
    let (m2, se) = mean_stderr(&v_sq);
    let want = law.variance + law.mean * law.mean;
    assert!((m2 - want).abs() <= 3.0 * se, "E v^2 = {m2} +/- {se}, want {want}");
}

#[test]
fn exponential_scheme_preserves_the_energy_law() {
    let params = SystemParams::new(0.7, 2.0, 0.0, 12);
    let mut cfg = SimConfig::new(12, 1, 0.05, 10.0);
    cfg.scheme = Scheme::ExpEulerMaruyama;
    cfg.boundary = Boundary::Periodic;
    cfg.record_stride = 10;
    let u0 = ComplexSeq::from_fn(12, |m| {
        Complex::from_polar((-(m * m) as f64 / 8.0).exp(), 0.3 * m as f64)
    });
    let init = InitialCondition::deterministic(LatticeState::new(u0.clone(), RealSeq::zeros(12)).unwrap());
    let sim = Simulation::new(cfg, params, DiffusionFamily::zero(1, 12), init).unwrap();
    let out = sim.run_path(0).unwrap();
    for s in &out.norms {
        let want = (-1.4 * s.t).exp() * u0.norm_sq();
        assert!((s.u_sq - want).abs() <= 1e-10 * want, "t = {}", s.t);
        assert_eq!(s.v_sq, 0.0);
    }
}
