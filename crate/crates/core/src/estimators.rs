//! Ensemble statistics: moment envelopes, tail masses, time-averaged
//! occupation measures and their distances, and noise-intensity studies.
//!
//! Every reduction runs over paths in index order, so results do not depend
//! on how an executor schedules the paths.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::integrator::{PathOutput, Simulation};
use crate::lattice::LatticeState;
use crate::noise::NormalSource;
use crate::stats::{loglog_slope, mean_stderr};
use crate::system::DerivedConstants;

/// Runs independent per-path work units; implementations must return the
/// results in path order.
pub trait PathExecutor {
    fn map_paths<T, F>(&self, n_paths: usize, work: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;
}

/// Runs every path on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl PathExecutor for Serial {
    fn map_paths<T, F>(&self, n_paths: usize, work: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..n_paths as u64).map(work).collect()
    }
}

fn collect_ordered<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Integrates `config.n_paths` paths.
pub fn run_ensemble<E: PathExecutor>(sim: &Simulation, exec: &E) -> Result<Vec<PathOutput>> {
    collect_ordered(exec.map_paths(sim.config().n_paths, |p| sim.run_path(p)))
}

/// `exp(-1/x)` for `x > 0`, zero otherwise.
fn psi(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth nondecreasing weight in `|s|`: `0` on `|s| <= 1`, `1` on `|s| >= 2`.
pub fn smooth_cutoff(s: f64) -> f64 {
    let a = s.abs();
    if a <= 1.0 {
        0.0
    } else if a >= 2.0 {
        1.0
    } else {
        let p = psi(a - 1.0);
        p / (p + psi(2.0 - a))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn of(xs: &[f64]) -> Self {
        let (mean, se) = mean_stderr(xs);
        Estimate { mean, se }
    }

    /// `mean - k * se`.
    pub fn lower(&self, k: f64) -> f64 {
        self.mean - k * self.se
    }
}

/// `E||u||^4`, `E||v||^2` and their sum against the moment envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub m4u: Vec<Estimate>,
    pub m2v: Vec<Estimate>,
    pub total: Vec<Estimate>,
    /// `e^{-kappa t} E[||u0||^4 + ||v0||^2] + absorbing_bound`.
    pub envelope: Vec<f64>,
    /// Some estimate exceeds the envelope by more than three standard errors.
    pub violation: Vec<bool>,
}

impl MomentSeries {
    pub fn violations(&self) -> usize {
        self.violation.iter().filter(|&&v| v).count()
    }
}

fn check_grid(outputs: &[PathOutput]) -> Result<&PathOutput> {
    let first = outputs.first().ok_or(Error::EmptyEnsemble)?;
    let same = outputs
        .iter()
        .all(|o| o.norms.len() == first.norms.len() && o.norms.iter().zip(&first.norms).all(|(a, b)| a.t == b.t));
    if same {
        Ok(first)
    } else {
        Err(Error::GridMismatch)
    }
}

pub fn estimate_moments(outputs: &[PathOutput], derived: &DerivedConstants) -> Result<MomentSeries> {
    let first = check_grid(outputs)?;
    let records = first.norms.len();
    let times: Vec<f64> = first.times().collect();
    let column = |f: &dyn Fn(&PathOutput) -> f64| -> Vec<f64> { outputs.iter().map(f).collect() };
    let initial = mean_stderr(&column(&|o| o.norms[0].u_quartic + o.norms[0].v_sq)).0;
    let mut series = MomentSeries {
        times,
        m4u: Vec::with_capacity(records),
        m2v: Vec::with_capacity(records),
        total: Vec::with_capacity(records),
        envelope: Vec::with_capacity(records),
        violation: Vec::with_capacity(records),
    };
    for r in 0..records {
        let m4u = Estimate::of(&column(&|o| o.norms[r].u_quartic));
        let m2v = Estimate::of(&column(&|o| o.norms[r].v_sq));
        let total = Estimate::of(&column(&|o| o.norms[r].u_quartic + o.norms[r].v_sq));
        let env = derived.envelope(series.times[r], initial);
        let violated = [m4u, m2v, total].iter().any(|e| e.lower(3.0) > env);
        series.m4u.push(m4u);
        series.m2v.push(m2v);
        series.total.push(total);
        series.envelope.push(env);
        series.violation.push(violated);
    }
    Ok(series)
}

/// Fitted exponential decay rate `-d ln y / dt` over the positive entries.
pub fn fitted_decay_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let (t, ly): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(_, y)| **y > 0.0)
        .map(|(t, y)| (*t, y.ln()))
        .unzip();
    crate::stats::linear_slope(&t, &ly).map(|s| -s)
}

/// Tail masses per recorded time (outer index) and radius (inner index).
#[derive(Clone, Debug, PartialEq)]
pub struct TailSeries {
    pub times: Vec<f64>,
    pub n_values: Vec<usize>,
    /// `(sum_{|m|>=n} E|u_m|^2)^2 + sum_{|m|>=n} E|v_m|^2`.
    pub hard: Vec<Vec<f64>>,
    /// `E||rho_n u||^4 + E||rho_n^2 v||^2`.
    pub smooth: Vec<Vec<f64>>,
}

impl TailSeries {
    /// True when every row is nonincreasing along increasing radii.
    pub fn is_monotone(&self) -> bool {
        let mut order: Vec<usize> = (0..self.n_values.len()).collect();
        order.sort_by_key(|&i| self.n_values[i]);
        self.hard
            .iter()
            .all(|row| order.windows(2).all(|w| row[w[1]] <= row[w[0]]))
    }

    /// Column of the hard tail mass for one radius.
    pub fn hard_at(&self, n: usize) -> Option<Vec<f64>> {
        let j = self.n_values.iter().position(|&x| x == n)?;
        Some(self.hard.iter().map(|row| row[j]).collect())
    }
}

/// Tail masses from the tail sums recorded along the paths; `n_values`
/// are the radii the simulation recorded, in the same order.
pub fn estimate_tails(outputs: &[PathOutput], n_values: &[usize]) -> Result<TailSeries> {
    let first = check_grid(outputs)?;
    if outputs
        .iter()
        .any(|o| o.tails.len() != o.norms.len() || o.tails.iter().any(|r| r.len() != n_values.len()))
    {
        return Err(Error::MissingRecord(String::from(
            "tail sums were not recorded for these radii",
        )));
    }
    let count = outputs.len() as f64;
    let records = first.norms.len();
    let mut hard = Vec::with_capacity(records);
    let mut smooth = Vec::with_capacity(records);
    for r in 0..records {
        let mut hrow = vec![0.0; n_values.len()];
        let mut srow = vec![0.0; n_values.len()];
        for j in 0..n_values.len() {
            let (mut uh, mut vh, mut us, mut vs) = (0.0, 0.0, 0.0, 0.0);
            for o in outputs {
                let s = o.tails[r][j];
                uh += s.u_hard;
                vh += s.v_hard;
                us += s.u_smooth_sq * s.u_smooth_sq;
                vs += s.v_smooth;
            }
            let uh = uh / count;
            hrow[j] = uh * uh + vh / count;
            srow[j] = us / count + vs / count;
        }
        hard.push(hrow);
        smooth.push(srow);
    }
    Ok(TailSeries {
        times: first.times().collect(),
        n_values: n_values.to_vec(),
        hard,
        smooth,
    })
}

/// Scalar functionals of the state used as coordinates of occupation measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observable {
    NormUSq,
    NormVSq,
    ReU0,
    ImU0,
    V0,
}

impl Observable {
    pub const DEFAULTS: [Observable; 5] = [
        Observable::NormUSq,
        Observable::NormVSq,
        Observable::ReU0,
        Observable::ImU0,
        Observable::V0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Observable::NormUSq => "norm_u_sq",
            Observable::NormVSq => "norm_v_sq",
            Observable::ReU0 => "re_u0",
            Observable::ImU0 => "im_u0",
            Observable::V0 => "v0",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::DEFAULTS.into_iter().find(|o| o.name() == s)
    }

    pub fn eval(self, state: &LatticeState) -> f64 {
        match self {
            Observable::NormUSq => state.u.norm_sq(),
            Observable::NormVSq => state.v.norm_sq(),
            Observable::ReU0 => state.u.get(0).re,
            Observable::ImU0 => state.u.get(0).im,
            Observable::V0 => state.v.get(0),
        }
    }
}

/// Fixed-bin summary; `mass` sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Histogram {
    /// `bins` equal bins on `[lo, hi]`; samples outside land in the end bins.
    pub fn build(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let bins = bins.max(1);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut mass = vec![0.0; bins];
        if !samples.is_empty() {
            let w = 1.0 / samples.len() as f64;
            for &x in samples {
                let b = (((x - lo) / width).floor().max(0.0) as usize).min(bins - 1);
                mass[b] += w;
            }
        }
        Histogram { edges, mass }
    }

    /// Density values; they integrate to one against the bin widths.
    pub fn density(&self) -> Vec<f64> {
        self.mass
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, e)| m / (e[1] - e[0]))
            .collect()
    }

    pub fn total_variation(&self, other: &Histogram) -> Result<f64> {
        if self.edges != other.edges {
            return Err(Error::ObservableMismatch);
        }
        Ok(0.5
            * self
                .mass
                .iter()
                .zip(&other.mass)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// Time-and-ensemble averaged occupation measure, stored as equally
/// weighted samples per observable.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    pub observables: Vec<Observable>,
    /// `samples[j]` holds observable `j`, path by path in path order.
    pub samples: Vec<Vec<f64>>,
    /// Samples contributed by each path.
    pub per_path: usize,
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_paths(&self) -> usize {
        self.len().checked_div(self.per_path).unwrap_or(0)
    }

    /// Every sample carries weight `1 / len`.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn histogram(&self, j: usize, bins: usize) -> Histogram {
        let s = &self.samples[j];
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Histogram::build(s, bins, lo, hi)
    }

    /// Paths `range` only.
    pub fn paths(&self, range: core::ops::Range<usize>) -> EmpiricalMeasure {
        let (a, b) = (range.start * self.per_path, range.end * self.per_path);
        EmpiricalMeasure {
            observables: self.observables.clone(),
            samples: self.samples.iter().map(|s| s[a..b].to_vec()).collect(),
            per_path: self.per_path,
        }
    }
}

/// Simulates the ensemble over `[0, burn_in + avg_t]` and pools the
/// observables at the recorded times in `[burn_in, burn_in + avg_t]`.
/// Both ends are rounded up to the time grid.
pub fn kb_measure<E: PathExecutor>(
    sim: &Simulation,
    exec: &E,
    burn_in: f64,
    avg_t: f64,
    observables: &[Observable],
) -> Result<EmpiricalMeasure> {
    if !(avg_t > 0.0) || !(burn_in >= 0.0) {
        return Err(Error::config(
            "averaging window must be positive and burn-in nonnegative",
        ));
    }
    let dt = sim.config().dt;
    // the window end is rounded up to the time grid
    let steps = ((burn_in + avg_t) / dt - 1e-9).ceil();
    let sim = sim.with_horizon(steps * dt)?;
    let start = (burn_in / dt - 1e-9).ceil() as u64;
    let per_path = sim.record_steps().filter(|&s| s >= start).count();
    if per_path == 0 {
        return Err(Error::config("no recorded time falls inside the averaging window"));
    }
    let per_path_samples = exec.map_paths(sim.config().n_paths, |p| {
        let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(per_path); observables.len()];
        sim.run_path_with(p, &mut |step, _, state| {
            if step >= start {
                for (row, obs) in rows.iter_mut().zip(observables) {
                    row.push(obs.eval(state));
                }
            }
        })
        .map(|_| rows)
    });
    let per_path_samples = collect_ordered(per_path_samples)?;
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(per_path * per_path_samples.len()); observables.len()];
    for rows in per_path_samples {
        for (dst, src) in samples.iter_mut().zip(rows) {
            dst.extend(src);
        }
    }
    Ok(EmpiricalMeasure {
        observables: observables.to_vec(),
        samples,
        per_path,
    })
}

/// `int |F_a(x) - F_b(x)| dx` for the empirical distribution functions.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { f64::INFINITY };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut x = a[0].min(b[0]);
    let mut acc = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        acc += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
    }
    acc
}

/// Per-observable W1 distances.
pub fn measure_distances(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<Vec<f64>> {
    if a.observables != b.observables {
        return Err(Error::ObservableMismatch);
    }
    Ok(a.samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| wasserstein1(x, y))
        .collect())
}

/// Largest per-observable W1 distance.
pub fn measure_distance(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    Ok(measure_distances(a, b)?.into_iter().fold(0.0, f64::max))
}

/// Three times the root-mean-square W1 distance between two path-level
/// bootstrap resamples, of the sizes of `a` and `b`, drawn from their union;
/// one value per observable.
pub fn bootstrap_noise_floor(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    resamples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if a.observables != b.observables || a.per_path != b.per_path {
        return Err(Error::ObservableMismatch);
    }
    let (pa, pb) = (a.n_paths(), b.n_paths());
    if pa == 0 || pb == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let k = a.per_path;
    let pool = |path: usize, j: usize| -> &[f64] {
        if path < pa {
            &a.samples[j][path * k..(path + 1) * k]
        } else {
            let p = path - pa;
            &b.samples[j][p * k..(p + 1) * k]
        }
    };
    let mut rng = NormalSource::from_seed(seed);
    let mut sum_sq = vec![0.0; a.observables.len()];
    for _ in 0..resamples.max(1) {
        let left: Vec<usize> = (0..pa).map(|_| rng.next_index(pa + pb)).collect();
        let right: Vec<usize> = (0..pb).map(|_| rng.next_index(pa + pb)).collect();
        for (j, acc) in sum_sq.iter_mut().enumerate() {
            let x: Vec<f64> = left.iter().flat_map(|&p| pool(p, j).iter().copied()).collect();
            let y: Vec<f64> = right.iter().flat_map(|&p| pool(p, j).iter().copied()).collect();
            *acc += wasserstein1(&x, &y).powi(2);
        }
    }
    let r = resamples.max(1) as f64;
    Ok(sum_sq.into_iter().map(|s| 3.0 * (s / r).sqrt()).collect())
}

/// One row of a noise-intensity divergence study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceRow {
    pub eps1: f64,
    pub eps2: f64,
    /// `E sup_t (||u1 - u2||^4 + ||v1 - v2||^2)`.
    pub divergence: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsDivergence {
    pub rows: Vec<DivergenceRow>,
    /// Log-log slope of the divergence against `|eps1 - eps2|` over the
    /// rows with positive gap and divergence.
    pub slope: Option<f64>,
}

/// Runs the two intensities of each pair in lockstep on identical Wiener
/// increments and records the supremum over the grid of the combined gap.
pub fn eps_divergence<E: PathExecutor>(sim: &Simulation, exec: &E, pairs: &[(f64, f64)]) -> Result<EpsDivergence> {
    let mut rows = Vec::with_capacity(pairs.len());
    for &(e1, e2) in pairs {
        let s1 = sim.with_epsilon(e1)?;
        let s2 = sim.with_epsilon(e2)?;
        let sups = collect_ordered(exec.map_paths(sim.config().n_paths, |p| lockstep_sup(&s1, &s2, p)))?;
        rows.push(DivergenceRow {
            eps1: e1,
            eps2: e2,
            divergence: Estimate::of(&sups),
        });
    }
    let (gaps, divs): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .map(|r| ((r.eps1 - r.eps2).abs(), r.divergence.mean))
        .unzip();
    let slope = loglog_slope(&gaps, &divs);
    Ok(EpsDivergence { rows, slope })
}

fn lockstep_sup(s1: &Simulation, s2: &Simulation, path: u64) -> Result<f64> {
    let mut a = s1.initial_state(path);
    let mut b = s2.initial_state(path);
    let mut st1 = s1.stepper();
    let mut st2 = s2.stepper();
    let mut cursor = s1.stream().cursor(path, 0);
    let mut dw = vec![0.0; s1.config().modes];
    let gap = |a: &LatticeState, b: &LatticeState| -> f64 {
        let du: f64 =
            a.u.values()
                .iter()
                .zip(b.u.values())
                .map(|(x, y)| (x - y).norm_sqr())
                .sum();
        let dv: f64 =
            a.v.values()
                .iter()
                .zip(b.v.values())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        du * du + dv
    };
    let mut sup = gap(&a, &b);
    for step in 1..=s1.n_steps() {
        cursor.next_into(s1.config().dt, &mut dw);
        let (x1, y1) = st1.step(&mut a, &dw);
        let (x2, y2) = st2.step(&mut b, &dw);
        if !(x1 + y1 + x2 + y2).is_finite() {
            return Err(Error::BlowUp { path, step });
        }
        sup = sup.max(gap(&a, &b));
    }
    Ok(sup)
}

/// Distance of the occupation measure at each intensity to the one at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub distance: f64,
}

pub fn eps_measure_sweep<E: PathExecutor>(
    sim: &Simulation,
    exec: &E,
    eps_list: &[f64],
    burn_in: f64,
    avg_t: f64,
    observables: &[Observable],
) -> Result<Vec<SweepRow>> {
    if !eps_list.contains(&0.0) {
        return Err(Error::config("the intensity list must contain 0"));
    }
    let reference = kb_measure(&sim.with_epsilon(0.0)?, exec, burn_in, avg_t, observables)?;
    eps_list
        .iter()
        .map(|&eps| {
            let distance = if eps == 0.0 {
                0.0
            } else {
                let m = kb_measure(&sim.with_epsilon(eps)?, exec, burn_in, avg_t, observables)?;
                measure_distance(&m, &reference)?
            };
            Ok(SweepRow { eps, distance })
        })
        .collect()
}
