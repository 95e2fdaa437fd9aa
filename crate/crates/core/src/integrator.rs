//! Time stepping and single-path simulation.
//!
//! Two Ito schemes are available. Euler-Maruyama advances
//!
//! ```text
//! u' = u + dt (-iAu - alpha u - iF(u,v) - if) - i eps sum_k (h_k(u) + b_k) dW_k
//! v' = v + dt (-beta v - G(u) + g)            +   eps sum_k (sigma_k(v) + gamma_k) dW_k
//! ```
//!
//! and the exponential variant treats the linear parts exactly:
//!
//! ```text
//! u' = P (u + noise_u) + Phi (-iF(u,v) - if),      P = exp(dt L), Phi = int_0^dt exp(sL) ds
//! v' = a (v + noise_v) + (1 - a)/beta (-G(u) + g),  a = exp(-beta dt)
//! ```
//!
//! with `L = -iA - alpha`. The same increment `dW_k` enters both components.
//! When a cutoff level is configured, `F`, `G`, `h_k` and `sigma_k` are
//! replaced by their truncations.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{propagator_pair, short_wave_generator, CMatrix};
use crate::error::{Error, Result};
use crate::estimators::smooth_cutoff;
use crate::lattice::{neighbor, site_count, Boundary, Complex, ComplexSeq, LatticeState, RealSeq};
use crate::noise::{DiffusionFamily, NoiseStream};
use crate::system::{check_noise_regime, derive_constants, DerivedConstants, SystemParams};
use crate::truncation::{cutoff_complex, cutoff_real, CutoffLevel, StoppingRecord, StoppingTracker};

/// Largest radius for which the exponential scheme builds its dense factors.
pub const EXP_RADIUS_LIMIT: usize = 128;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    #[default]
    EulerMaruyama,
    ExpEulerMaruyama,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "euler_maruyama",
            Scheme::ExpEulerMaruyama => "exp_euler_maruyama",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler_maruyama" => Some(Scheme::EulerMaruyama),
            "exp_euler_maruyama" => Some(Scheme::ExpEulerMaruyama),
            _ => None,
        }
    }
}

/// Discretization and ensemble settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub radius: usize,
    pub modes: usize,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub boundary: Boundary,
    /// Truncation level of the nonlinearities; `None` integrates the original system.
    pub cutoff: Option<CutoffLevel>,
    /// Steps between recorded grid points.
    pub record_stride: u64,
    /// Levels whose first exit times are tracked on every step.
    pub stopping_levels: Vec<CutoffLevel>,
    /// Radii at which tail sums are recorded.
    pub tail_radii: Vec<usize>,
    /// Keep full states at the recorded times.
    pub keep_snapshots: bool,
    /// Run even if the dissipativity condition or `eps <= eps0` fails.
    pub allow_outside_regime: bool,
}

impl SimConfig {
    pub fn new(radius: usize, modes: usize, dt: f64, horizon: f64) -> Self {
        SimConfig {
            radius,
            modes,
            dt,
            horizon,
            n_paths: 1,
            seed: 0,
            scheme: Scheme::EulerMaruyama,
            boundary: Boundary::Zero,
            cutoff: None,
            record_stride: 1,
            stopping_levels: Vec::new(),
            tail_radii: Vec::new(),
            keep_snapshots: false,
            allow_outside_regime: false,
        }
    }

    /// Number of steps, `horizon / dt`, which must be an integer up to rounding.
    pub fn n_steps(&self) -> Result<u64> {
        let ratio = self.horizon / self.dt;
        let n = ratio.round();
        if !(ratio.is_finite() && n >= 0.0) || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(alloc::format!(
                "horizon {} is not an integer multiple of dt {}",
                self.horizon,
                self.dt
            )));
        }
        Ok(n as u64)
    }

    pub fn validate(&self, alpha: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(alloc::format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::config(alloc::format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if self.scheme == Scheme::EulerMaruyama && self.dt * (4.0 + alpha) > 0.5 {
            return Err(Error::config(alloc::format!(
                "euler_maruyama needs dt (4 + alpha) <= 0.5, got {}",
                self.dt * (4.0 + alpha)
            )));
        }
        if self.modes == 0 {
            return Err(Error::config("at least one noise mode is required"));
        }
        if self.n_paths == 0 {
            return Err(Error::config("n_paths must be positive"));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be positive"));
        }
        if let Some(&n) = self.tail_radii.iter().find(|&&n| n > self.radius) {
            return Err(Error::config(alloc::format!(
                "tail radius {n} exceeds M = {}",
                self.radius
            )));
        }
        self.n_steps().map(|_| ())
    }
}

/// Random perturbation added to the base initial state: independent
/// Gaussians on the sites `|m| <= support`, complex ones with
/// `E|z|^2 = amplitude^2` for `u` and real ones with variance `amplitude^2`
/// for `v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomInit {
    pub amplitude: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialCondition {
    pub base: LatticeState,
    pub random: Option<RandomInit>,
}

impl InitialCondition {
    pub fn deterministic(base: LatticeState) -> Self {
        InitialCondition { base, random: None }
    }

    pub fn zero(radius: usize) -> Self {
        Self::deterministic(LatticeState::zeros(radius))
    }

    pub fn with_random(mut self, amplitude: f64, support: usize) -> Self {
        self.random = Some(RandomInit { amplitude, support });
        self
    }

    /// The initial state of `path`; random parts come from a key domain
    /// disjoint from the Wiener increments.
    pub fn sample(&self, stream: &NoiseStream, path: u64) -> LatticeState {
        let mut state = self.base.clone();
        if let Some(r) = self.random {
            let mut rng = stream.initial_condition_rng(path);
            let radius = state.radius() as i64;
            let s = (r.support as i64).min(radius);
            let half = core::f64::consts::FRAC_1_SQRT_2 * r.amplitude;
            for m in -s..=s {
                let re = rng.next_normal();
                let im = rng.next_normal();
                let x = rng.next_normal();
                state.u.set(m, state.u.get(m) + Complex::new(re, im) * half);
                state.v.set(m, state.v.get(m) + x * r.amplitude);
            }
        }
        state
    }
}

/// Norms recorded at one grid time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSample {
    pub t: f64,
    pub u_sq: f64,
    pub u_quartic: f64,
    pub v_sq: f64,
}

/// Tail sums at one grid time and one radius `n`: the hard sums over
/// `|m| >= n`, `||rho_n u||^2` and `||rho_n^2 v||^2` for the smooth weight
/// `rho(|m| / n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TailSample {
    pub u_hard: f64,
    pub v_hard: f64,
    pub u_smooth_sq: f64,
    pub v_smooth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathOutput {
    pub path: u64,
    pub norms: Vec<NormSample>,
    /// `tails[record][radius index]`.
    pub tails: Vec<Vec<TailSample>>,
    pub stopping: Vec<StoppingRecord>,
    pub snapshots: Vec<(f64, LatticeState)>,
}

impl PathOutput {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.norms.iter().map(|s| s.t)
    }
}

/// Row-compressed complex matrix.
#[derive(Clone, Debug, PartialEq)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex>,
}

impl Csr {
    fn from_dense(m: &CMatrix, drop_below: f64) -> Self {
        let n = m.dim();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let x = m[(i, j)];
                if x.norm() > drop_below {
                    cols.push(j);
                    vals.push(x);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr { row_ptr, cols, vals }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[Complex]) -> Complex {
        let mut acc = Complex::new(0.0, 0.0);
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.vals[p] * x[self.cols[p]];
        }
        acc
    }
}

/// Precomputed linear factors of the exponential scheme for one `(M, dt, boundary)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpFactors {
    propagator: Csr,
    integral: Csr,
    decay_v: f64,
    gain_v: f64,
}

impl ExpFactors {
    pub fn new(radius: usize, alpha: f64, beta: f64, dt: f64, boundary: Boundary) -> Result<Self> {
        if radius > EXP_RADIUS_LIMIT {
            return Err(Error::TooLarge {
                radius,
                limit: EXP_RADIUS_LIMIT,
            });
        }
        let (p, phi) = propagator_pair(&short_wave_generator(radius, alpha, boundary), dt);
        Ok(ExpFactors {
            propagator: Csr::from_dense(&p, 1e-18),
            integral: Csr::from_dense(&phi, 1e-18 * dt),
            decay_v: (-beta * dt).exp(),
            gain_v: -(-beta * dt).exp_m1() / beta,
        })
    }
}

/// A validated simulation setup shared by all paths of an ensemble.
#[derive(Clone, Debug)]
pub struct Simulation {
    config: SimConfig,
    params: SystemParams,
    family: DiffusionFamily,
    init: InitialCondition,
    stream: NoiseStream,
    n_steps: u64,
    derived: Option<DerivedConstants>,
    exp: Option<ExpFactors>,
    /// Additive profiles, mode-major, padded to `modes` rows; empty when absent.
    add_b: Vec<Complex>,
    add_gamma: Vec<f64>,
    tail_weights: Vec<Vec<f64>>,
}

impl Simulation {
    pub fn new(
        config: SimConfig,
        params: SystemParams,
        family: DiffusionFamily,
        init: InitialCondition,
    ) -> Result<Self> {
        config.validate(params.alpha)?;
        params.validate(config.modes)?;
        if params.radius() != config.radius {
            return Err(Error::RadiusMismatch {
                left: config.radius,
                right: params.radius(),
            });
        }
        if family.radius() != config.radius || init.base.radius() != config.radius {
            return Err(Error::RadiusMismatch {
                left: config.radius,
                right: if family.radius() != config.radius {
                    family.radius()
                } else {
                    init.base.radius()
                },
            });
        }
        if family.modes() != config.modes {
            return Err(Error::config(alloc::format!(
                "diffusion family has {} modes, configuration has {}",
                family.modes(),
                config.modes
            )));
        }
        if !init.base.is_finite() {
            return Err(Error::config("initial state contains non-finite values"));
        }
        let derived = match derive_constants(&params, family.effective_delta_norm_sq()) {
            Ok(d) => {
                check_noise_regime(&params, &d, config.allow_outside_regime)?;
                Some(d)
            }
            Err(e) if !config.allow_outside_regime => return Err(e),
            Err(_) => None,
        };
        let exp = match config.scheme {
            Scheme::ExpEulerMaruyama => Some(ExpFactors::new(
                config.radius,
                params.alpha,
                params.beta,
                config.dt,
                config.boundary,
            )?),
            Scheme::EulerMaruyama => None,
        };
        let n = site_count(config.radius);
        let mut add_b = Vec::new();
        if params.b.iter().any(|s| s.norm_sq() > 0.0) {
            add_b = vec![Complex::new(0.0, 0.0); config.modes * n];
            for (k, s) in params.b.iter().enumerate() {
                add_b[k * n..(k + 1) * n].copy_from_slice(s.values());
            }
        }
        let mut add_gamma = Vec::new();
        if params.gamma.iter().any(|s| s.norm_sq() > 0.0) {
            add_gamma = vec![0.0; config.modes * n];
            for (k, s) in params.gamma.iter().enumerate() {
                add_gamma[k * n..(k + 1) * n].copy_from_slice(s.values());
            }
        }
        let r = config.radius as i64;
        let tail_weights = config
            .tail_radii
            .iter()
            .map(|&tn| {
                (-r..=r)
                    .map(|m| {
                        if tn == 0 {
                            1.0
                        } else {
                            smooth_cutoff(m.unsigned_abs() as f64 / tn as f64)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Simulation {
            stream: NoiseStream::new(config.seed, config.modes),
            n_steps: config.n_steps()?,
            config,
            params,
            family,
            init,
            derived,
            exp,
            add_b,
            add_gamma,
            tail_weights,
        })
    }

    /// The same setup with a different noise intensity; the exponential
    /// factors and the Wiener streams are reused.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let params = self.params.clone().with_epsilon(epsilon);
        params.validate(self.config.modes)?;
        let derived = match derive_constants(&params, self.family.effective_delta_norm_sq()) {
            Ok(d) => {
                check_noise_regime(&params, &d, self.config.allow_outside_regime)?;
                Some(d)
            }
            Err(e) if !self.config.allow_outside_regime => return Err(e),
            Err(_) => None,
        };
        Ok(Simulation {
            params,
            derived,
            ..self.clone()
        })
    }

    /// The same setup over a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut config = self.config.clone();
        config.horizon = horizon;
        config.validate(self.params.alpha)?;
        Ok(Simulation {
            n_steps: config.n_steps()?,
            config,
            ..self.clone()
        })
    }

    /// The same setup with a different base initial state.
    pub fn with_initial(&self, init: InitialCondition) -> Result<Self> {
        if init.base.radius() != self.config.radius {
            return Err(Error::RadiusMismatch {
                left: self.config.radius,
                right: init.base.radius(),
            });
        }
        Ok(Simulation { init, ..self.clone() })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn family(&self) -> &DiffusionFamily {
        &self.family
    }

    pub fn initial_condition(&self) -> &InitialCondition {
        &self.init
    }

    pub fn stream(&self) -> &NoiseStream {
        &self.stream
    }

    /// `None` only when the regime checks were overridden and failed.
    pub fn derived(&self) -> Option<&DerivedConstants> {
        self.derived.as_ref()
    }

    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn record_steps(&self) -> impl Iterator<Item = u64> + '_ {
        (0..=self.n_steps).step_by(self.config.record_stride as usize)
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps().map(|s| s as f64 * self.config.dt).collect()
    }

    pub fn initial_state(&self, path: u64) -> LatticeState {
        self.init.sample(&self.stream, path)
    }

    pub fn stepper(&self) -> Stepper<'_> {
        Stepper::new(self)
    }

    pub fn run_path(&self, path: u64) -> Result<PathOutput> {
        self.run_path_with(path, &mut |_, _, _| {})
    }

    /// Integrates one path; `observer` sees the state at every recorded step.
    pub fn run_path_with(&self, path: u64, observer: &mut dyn FnMut(u64, f64, &LatticeState)) -> Result<PathOutput> {
        let dt = self.config.dt;
        let stride = self.config.record_stride;
        let mut state = self.initial_state(path);
        let mut stepper = self.stepper();
        let mut cursor = self.stream.cursor(path, 0);
        let mut tracker = StoppingTracker::new(&self.config.stopping_levels);
        let records = (self.n_steps / stride + 1) as usize;
        let mut out = PathOutput {
            path,
            norms: Vec::with_capacity(records),
            tails: Vec::with_capacity(if self.tail_weights.is_empty() { 0 } else { records }),
            stopping: Vec::new(),
            snapshots: Vec::new(),
        };
        let mut dw = vec![0.0; self.config.modes];

        let (u_sq, v_sq) = (state.u.norm_sq(), state.v.norm_sq());
        tracker.observe(0, 0.0, u_sq.sqrt() + v_sq.sqrt());
        self.record(&mut out, 0.0, &state, u_sq, v_sq);
        observer(0, 0.0, &state);

        for step in 1..=self.n_steps {
            cursor.next_into(dt, &mut dw);
            let (u_sq, v_sq) = stepper.step(&mut state, &dw);
            if !(u_sq + v_sq).is_finite() {
                return Err(Error::BlowUp { path, step });
            }
            let t = step as f64 * dt;
            tracker.observe(step, t, u_sq.sqrt() + v_sq.sqrt());
            if step % stride == 0 {
                self.record(&mut out, t, &state, u_sq, v_sq);
                observer(step, t, &state);
            }
        }
        out.stopping = tracker.finish();
        Ok(out)
    }

    fn record(&self, out: &mut PathOutput, t: f64, state: &LatticeState, u_sq: f64, v_sq: f64) {
        out.norms.push(NormSample {
            t,
            u_sq,
            u_quartic: u_sq * u_sq,
            v_sq,
        });
        if !self.tail_weights.is_empty() {
            out.tails.push(self.tail_samples(state));
        }
        if self.config.keep_snapshots {
            out.snapshots.push((t, state.clone()));
        }
    }

    fn tail_samples(&self, state: &LatticeState) -> Vec<TailSample> {
        let r = self.config.radius as i64;
        let u = state.u.values();
        let v = state.v.values();
        self.config
            .tail_radii
            .iter()
            .zip(&self.tail_weights)
            .map(|(&tn, w)| {
                let mut s = TailSample::default();
                for (i, m) in (-r..=r).enumerate() {
                    let (us, vs) = (u[i].norm_sqr(), v[i] * v[i]);
                    if m.unsigned_abs() as usize >= tn {
                        s.u_hard += us;
                        s.v_hard += vs;
                    }
                    let w2 = w[i] * w[i];
                    s.u_smooth_sq += w2 * us;
                    s.v_smooth += w2 * w2 * vs;
                }
                s
            })
            .collect()
    }
}

/// One-path time stepper with preallocated scratch space.
#[derive(Debug)]
pub struct Stepper<'a> {
    sim: &'a Simulation,
    w: Vec<f64>,
    bw: Vec<Complex>,
    gw: Vec<f64>,
    sq: Vec<f64>,
    next_u: Vec<Complex>,
    next_v: Vec<f64>,
    lin_u: Vec<Complex>,
    nonlin_u: Vec<Complex>,
}

impl<'a> Stepper<'a> {
    fn new(sim: &'a Simulation) -> Self {
        let n = site_count(sim.config.radius);
        Stepper {
            sim,
            w: vec![0.0; n],
            bw: vec![Complex::new(0.0, 0.0); n],
            gw: vec![0.0; n],
            sq: vec![0.0; n],
            next_u: vec![Complex::new(0.0, 0.0); n],
            next_v: vec![0.0; n],
            lin_u: vec![Complex::new(0.0, 0.0); n],
            nonlin_u: vec![Complex::new(0.0, 0.0); n],
        }
    }

    /// Advances `state` by one step with the increments `dw` (one per mode)
    /// and returns `(||u'||^2, ||v'||^2)`; a non-finite sum signals blow-up.
    pub fn step(&mut self, state: &mut LatticeState, dw: &[f64]) -> (f64, f64) {
        let sim = self.sim;
        let p = &sim.params;
        let n = self.w.len();
        let modes = sim.config.modes;
        let boundary = sim.config.boundary;
        let cutoff = sim.config.cutoff;
        let dt = sim.config.dt;
        let eps = p.epsilon;
        debug_assert_eq!(dw.len(), modes);

        let multiplicative = eps != 0.0 && !sim.family.is_zero();
        self.w.fill(0.0);
        if multiplicative {
            let delta = sim.family.delta();
            for (k, &d) in dw.iter().enumerate() {
                for (w, &dk) in self.w.iter_mut().zip(delta.mode(k)) {
                    *w += dk * d;
                }
            }
        }
        self.bw.fill(Complex::new(0.0, 0.0));
        if eps != 0.0 && !sim.add_b.is_empty() {
            for (k, &d) in dw.iter().enumerate() {
                for (w, &b) in self.bw.iter_mut().zip(&sim.add_b[k * n..(k + 1) * n]) {
                    *w += b * d;
                }
            }
        }
        self.gw.fill(0.0);
        if eps != 0.0 && !sim.add_gamma.is_empty() {
            for (k, &d) in dw.iter().enumerate() {
                for (w, &g) in self.gw.iter_mut().zip(&sim.add_gamma[k * n..(k + 1) * n]) {
                    *w += g * d;
                }
            }
        }

        let u = state.u.values();
        let v = state.v.values();
        for (s, &z) in self.sq.iter_mut().zip(u) {
            *s = match cutoff {
                Some(c) => cutoff_complex(z, c).norm_sqr(),
                None => z.norm_sqr(),
            };
        }

        let minus_i = Complex::new(0.0, -1.0);
        let f = p.f.values();
        let g = p.g.values();
        let exp = sim.exp.as_ref();
        for i in 0..n {
            let (uc, vc) = match cutoff {
                Some(c) => (cutoff_complex(u[i], c), cutoff_real(v[i], c)),
                None => (u[i], v[i]),
            };
            let coupling = if p.uv_coupling { uc * vc } else { Complex::new(0.0, 0.0) };
            let gi = p.lambda * (neighbor(&self.sq, i, 1, boundary) - self.sq[i]);
            let (noise_u, noise_v) = if multiplicative {
                (
                    minus_i * eps * (sim.family.profile_complex(uc) * self.w[i] + self.bw[i]),
                    eps * (sim.family.profile_real(vc) * self.w[i] + self.gw[i]),
                )
            } else {
                (minus_i * eps * self.bw[i], eps * self.gw[i])
            };
            let forcing_u = minus_i * (coupling + f[i]);
            let forcing_v = g[i] - gi;
            match exp {
                None => {
                    let au = u[i] * 2.0 - neighbor(u, i, -1, boundary) - neighbor(u, i, 1, boundary);
                    let drift_u = minus_i * au - u[i] * p.alpha + forcing_u;
                    self.next_u[i] = u[i] + drift_u * dt + noise_u;
                    self.next_v[i] = v[i] + (forcing_v - p.beta * v[i]) * dt + noise_v;
                }
                Some(e) => {
                    self.lin_u[i] = u[i] + noise_u;
                    self.nonlin_u[i] = forcing_u;
                    self.next_v[i] = e.decay_v * (v[i] + noise_v) + e.gain_v * forcing_v;
                }
            }
        }
        if let Some(e) = exp {
            for i in 0..n {
                self.next_u[i] = e.propagator.row_dot(i, &self.lin_u) + e.integral.row_dot(i, &self.nonlin_u);
            }
        }

        state.u.values_mut().copy_from_slice(&self.next_u);
        state.v.values_mut().copy_from_slice(&self.next_v);
        let u_sq = self.next_u.iter().map(|z| z.norm_sqr()).sum();
        let v_sq = self.next_v.iter().map(|x| x * x).sum();
        (u_sq, v_sq)
    }
}

/// Single step from explicit inputs, written directly from the vector
/// formulas; `increments` are the `K` values `Delta W_k`. The exponential
/// factors are rebuilt on every call.
#[allow(clippy::too_many_arguments)]
pub fn step(
    state: &LatticeState,
    params: &SystemParams,
    family: &DiffusionFamily,
    increments: &[f64],
    dt: f64,
    scheme: Scheme,
    cutoff: Option<CutoffLevel>,
    boundary: Boundary,
) -> Result<LatticeState> {
    use crate::lattice::apply_a;
    use crate::noise::{eval_h, eval_sigma};
    use crate::system::{coupling_f, coupling_g};
    use crate::truncation::{truncated_f, truncated_g, truncated_h, truncated_sigma};

    let radius = state.radius();
    if increments.len() != family.modes() {
        return Err(Error::Length {
            expected: family.modes(),
            actual: increments.len(),
        });
    }
    let minus_i = Complex::new(0.0, -1.0);
    let (fuv, gu, hs, sigmas) = match cutoff {
        Some(n) => (
            truncated_f(&state.u, &state.v, n)?,
            truncated_g(&state.u, n, params.lambda, boundary),
            truncated_h(family, &state.u, n),
            truncated_sigma(family, &state.v, n),
        ),
        None => (
            coupling_f(&state.u, &state.v)?,
            coupling_g(&state.u, params.lambda, boundary),
            eval_h(family, &state.u),
            eval_sigma(family, &state.v),
        ),
    };
    let fuv = if params.uv_coupling {
        fuv
    } else {
        ComplexSeq::zeros(radius)
    };

    let mut noise_u = ComplexSeq::zeros(radius);
    let mut noise_v = RealSeq::zeros(radius);
    for (k, &dw) in increments.iter().enumerate() {
        let mut hk = hs[k].clone();
        if let Some(b) = params.b.get(k) {
            hk = hk.add(b)?;
        }
        let mut sk = sigmas[k].clone();
        if let Some(gm) = params.gamma.get(k) {
            sk = sk.add(gm)?;
        }
        noise_u = noise_u.zip_with(&hk, |a, h| a + minus_i * h * (params.epsilon * dw))?;
        noise_v = noise_v.zip_with(&sk, |a, s| a + s * (params.epsilon * dw))?;
    }
    let forcing_u = fuv.add(&params.f)?.map(|z| minus_i * z);
    let forcing_v = params.g.sub(&gu)?;

    let (u, v) = match scheme {
        Scheme::EulerMaruyama => {
            let au = apply_a(&state.u, boundary);
            let drift_u = au
                .zip_with(&state.u, |a, x| minus_i * a - x * params.alpha)?
                .add(&forcing_u)?;
            let drift_v = state.v.zip_with(&forcing_v, |x, fv| fv - params.beta * x)?;
            (
                state.u.add(&drift_u.scaled(dt))?.add(&noise_u)?,
                state.v.add(&drift_v.scaled(dt))?.add(&noise_v)?,
            )
        }
        Scheme::ExpEulerMaruyama => {
            if radius > EXP_RADIUS_LIMIT {
                return Err(Error::TooLarge {
                    radius,
                    limit: EXP_RADIUS_LIMIT,
                });
            }
            let (p, phi) = propagator_pair(&short_wave_generator(radius, params.alpha, boundary), dt);
            let lin = p.mul_vec(state.u.add(&noise_u)?.values());
            let non = phi.mul_vec(forcing_u.values());
            let u = ComplexSeq::from_fn(radius, |m| {
                let i = (m + radius as i64) as usize;
                lin[i] + non[i]
            });
            let a = (-params.beta * dt).exp();
            let c = -(-params.beta * dt).exp_m1() / params.beta;
            let v = state.v.add(&noise_v)?.zip_with(&forcing_v, |x, fv| a * x + c * fv)?;
            (u, v)
        }
    };
    if let Some(i) = u.values().iter().position(|z| !z.is_finite()) {
        return Err(Error::NonFinite {
            site: i as i64 - radius as i64,
        });
    }
    if let Some(i) = v.values().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            site: i as i64 - radius as i64,
        });
    }
    LatticeState::new(u, v)
}

/// Builds the simulation and integrates one path.
pub fn simulate_path(
    config: &SimConfig,
    params: &SystemParams,
    family: &DiffusionFamily,
    init: &InitialCondition,
    path: u64,
) -> Result<PathOutput> {
    Simulation::new(config.clone(), params.clone(), family.clone(), init.clone())?.run_path(path)
}
