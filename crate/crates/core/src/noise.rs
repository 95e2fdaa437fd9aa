//! Diffusion coefficients and Wiener increments.
//!
//! Every built-in family is separable: `h_{k,m}(z) = delta_{k,m} phi(z)` and
//! `sigma_{k,m}(s) = delta_{k,m} phi(s)` with a profile `phi` satisfying
//! `|phi(s)| <= 1 + |s|`, so the growth bound
//! `|h_{k,m}(s)|, |sigma_{k,m}(s)| <= delta_{k,m} (1 + |s|)` holds by
//! construction and the Lipschitz modulus of `h_{k,m}` on `{|s| <= n}` is
//! `delta_{k,m}` times that of `phi`.
//!
//! Increments come from a counter-based generator: the normal draw for
//! `(seed, path, mode, step)` is a pure function of those four numbers, so
//! runs that differ only in noise intensity, scheduling or worker count see
//! literally the same Brownian paths.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::lattice::{site_count, Complex, ComplexSeq, RealSeq};

/// Nonnegative bounds `delta_{k,m}` for modes `k = 1..=K` and sites `-M..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaSequence {
    modes: usize,
    radius: usize,
    /// mode-major: `values[k * (2M + 1) + (m + M)]`
    values: Vec<f64>,
    norm_sq: f64,
    /// `max_m sum_k delta_{k,m}^2`
    site_peak: f64,
    /// Share of `||delta||^2` carried by modes beyond `K` for the separable
    /// profile; zero for tables given explicitly.
    mode_tail: f64,
}

impl DeltaSequence {
    pub fn new(modes: usize, radius: usize, values: Vec<f64>) -> Result<Self> {
        let n = site_count(radius);
        if values.len() != modes * n {
            return Err(Error::Length {
                expected: modes * n,
                actual: values.len(),
            });
        }
        if values.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::config("delta entries must be finite and nonnegative"));
        }
        let mut s = DeltaSequence {
            modes,
            radius,
            values,
            norm_sq: 0.0,
            site_peak: 0.0,
            mode_tail: 0.0,
        };
        s.refresh();
        Ok(s)
    }

    pub fn zero(modes: usize, radius: usize) -> Self {
        Self::new(modes, radius, vec![0.0; modes * site_count(radius)]).expect("valid")
    }

    /// `delta_{k,m} = c 2^{-k/2} (1 + |m|)^{-1}` with `c` chosen so that the
    /// truncated `||delta||^2` equals `target_norm_sq`.
    pub fn separable(modes: usize, radius: usize, target_norm_sq: f64) -> Result<Self> {
        if !(target_norm_sq >= 0.0 && target_norm_sq.is_finite()) {
            return Err(Error::config(format!("invalid ||delta||^2 target {target_norm_sq}")));
        }
        let r = radius as i64;
        let mut values = Vec::with_capacity(modes * site_count(radius));
        for k in 1..=modes {
            let mode_weight = 2f64.powf(-(k as f64) / 2.0);
            values.extend((-r..=r).map(|m| mode_weight / (1.0 + m.unsigned_abs() as f64)));
        }
        let raw: f64 = values.iter().map(|d| d * d).sum();
        let c = if raw > 0.0 { (target_norm_sq / raw).sqrt() } else { 0.0 };
        values.iter_mut().for_each(|d| *d *= c);
        let mut s = Self::new(modes, radius, values)?;
        // sum_{k>K} 2^{-k} relative to sum_{k<=K} 2^{-k}
        let kept = 1.0 - 2f64.powi(-(modes as i32));
        s.mode_tail = if kept > 0.0 {
            s.norm_sq * (1.0 - kept) / kept
        } else {
            0.0
        };
        Ok(s)
    }

    fn refresh(&mut self) {
        self.norm_sq = self.values.iter().map(|d| d * d).sum();
        let n = site_count(self.radius);
        self.site_peak = (0..n)
            .map(|i| (0..self.modes).map(|k| self.values[k * n + i].powi(2)).sum::<f64>())
            .fold(0.0, f64::max);
    }

    #[inline]
    pub fn modes(&self) -> usize {
        self.modes
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `delta_{k,m}` with `k` counted from zero.
    pub fn get(&self, k: usize, m: i64) -> f64 {
        let n = site_count(self.radius);
        let idx = m + self.radius as i64;
        if k >= self.modes || idx < 0 || idx >= n as i64 {
            return 0.0;
        }
        self.values[k * n + idx as usize]
    }

    /// Site values of mode `k` (zero-based).
    pub fn mode(&self, k: usize) -> &[f64] {
        let n = site_count(self.radius);
        &self.values[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Sum of squares recomputed from the entries.
    pub fn recompute_norm_sq(&self) -> f64 {
        self.values.iter().map(|d| d * d).sum()
    }

    /// `max_m sum_k delta_{k,m}^2`.
    #[inline]
    pub fn site_peak(&self) -> f64 {
        self.site_peak
    }

    /// Contribution to `||delta||^2` of the modes dropped by the `K` truncation.
    #[inline]
    pub fn discarded_mode_tail(&self) -> f64 {
        self.mode_tail
    }
}

/// Radial gain table `q(r)`, piecewise linear in `r = |s|` and constant past
/// the last knot; the coefficient is `delta * q(|s|) * s`.
#[derive(Clone, Debug, PartialEq)]
pub struct GainTable {
    radii: Vec<f64>,
    gains: Vec<f64>,
}

impl GainTable {
    /// Knots must start at `r = 0`, increase strictly, and carry gains in `[-1, 1]`.
    pub fn new(radii: Vec<f64>, gains: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.len() != gains.len() {
            return Err(Error::config("gain table needs matching, nonempty radii and gains"));
        }
        if radii[0] != 0.0 {
            return Err(Error::config("gain table must start at radius 0"));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|r| !r.is_finite()) {
            return Err(Error::config("gain table radii must increase strictly"));
        }
        if gains.iter().any(|g| !(g.abs() <= 1.0)) {
            return Err(Error::config("gain table entries must lie in [-1, 1]"));
        }
        Ok(GainTable { radii, gains })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn eval(&self, r: f64) -> f64 {
        let last = self.radii.len() - 1;
        if r >= self.radii[last] {
            return self.gains[last];
        }
        let j = self.radii.partition_point(|&x| x <= r) - 1;
        let t = (r - self.radii[j]) / (self.radii[j + 1] - self.radii[j]);
        self.gains[j] + t * (self.gains[j + 1] - self.gains[j])
    }

    /// `sup_{0 <= r <= n} max(|q(r)|, |q(r) + r q'(r)|)`, the Lipschitz
    /// constant of `s -> q(|s|) s` on the ball of radius `n`.
    fn modulus(&self, n: f64) -> f64 {
        let knots = self.radii.len();
        let mut best = 0.0f64;
        for j in 0..knots {
            let lo = self.radii[j];
            if lo > n {
                break;
            }
            let (slope, hi) = if j + 1 < knots {
                let s = (self.gains[j + 1] - self.gains[j]) / (self.radii[j + 1] - lo);
                (s, self.radii[j + 1].min(n))
            } else {
                (0.0, n)
            };
            // q and r q' + q are affine on the segment
            for r in [lo, hi] {
                let q = self.gains[j] + slope * (r - lo);
                best = best.max(q.abs()).max((q + r * slope).abs());
            }
        }
        best
    }
}

/// The profile `phi` shared by all `(k, m)`.
#[derive(Clone, Debug, PartialEq)]
pub enum DiffusionKind {
    /// `phi = 0`: the noise is purely additive.
    Zero,
    /// `phi(s) = gain * s / (1 + |s|) + offset`, with `|gain| + |offset| <= 1`.
    LinearSaturating { gain: f64, offset: f64 },
    /// `phi(s) = sin(s)` on reals and `sin(|z|) z / |z|` on complex numbers.
    SineBounded,
    /// `phi(s) = q(|s|) s` for a tabulated gain `q`.
    Table(GainTable),
}

/// A validated diffusion family: profile plus `delta` bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionFamily {
    kind: DiffusionKind,
    delta: DeltaSequence,
}

impl DiffusionFamily {
    pub fn new(kind: DiffusionKind, delta: DeltaSequence) -> Result<Self> {
        if let DiffusionKind::LinearSaturating { gain, offset } = kind {
            if !(gain.is_finite() && offset.is_finite() && gain.abs() + offset.abs() <= 1.0) {
                return Err(Error::config(format!(
                    "linear_saturating needs |gain| + |offset| <= 1, got {gain} and {offset}"
                )));
            }
        }
        Ok(DiffusionFamily { kind, delta })
    }

    /// No multiplicative noise.
    pub fn zero(modes: usize, radius: usize) -> Self {
        DiffusionFamily {
            kind: DiffusionKind::Zero,
            delta: DeltaSequence::zero(modes, radius),
        }
    }

    #[inline]
    pub fn kind(&self) -> &DiffusionKind {
        &self.kind
    }

    #[inline]
    pub fn delta(&self) -> &DeltaSequence {
        &self.delta
    }

    #[inline]
    pub fn modes(&self) -> usize {
        self.delta.modes
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.delta.radius
    }

    /// True when every coefficient vanishes identically.
    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DiffusionKind::Zero) || self.delta.norm_sq == 0.0
    }

    /// `||delta||^2` as it enters the constants; zero for the zero profile.
    pub fn effective_delta_norm_sq(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.delta.norm_sq
        }
    }

    #[inline]
    pub fn profile_complex(&self, z: Complex) -> Complex {
        match &self.kind {
            DiffusionKind::Zero => Complex::new(0.0, 0.0),
            DiffusionKind::LinearSaturating { gain, offset } => z * (*gain / (1.0 + z.norm())) + offset,
            DiffusionKind::SineBounded => {
                let r = z.norm();
                if r == 0.0 {
                    Complex::new(0.0, 0.0)
                } else {
                    z * (r.sin() / r)
                }
            }
            DiffusionKind::Table(t) => z * t.eval(z.norm()),
        }
    }

    #[inline]
    pub fn profile_real(&self, s: f64) -> f64 {
        match &self.kind {
            DiffusionKind::Zero => 0.0,
            DiffusionKind::LinearSaturating { gain, offset } => gain * s / (1.0 + s.abs()) + offset,
            DiffusionKind::SineBounded => s.sin(),
            DiffusionKind::Table(t) => t.eval(s.abs()) * s,
        }
    }

    /// Lipschitz constant of `phi` on `{|s| <= n}` (complex and real alike).
    pub fn profile_modulus(&self, n: f64) -> f64 {
        match &self.kind {
            DiffusionKind::Zero => 0.0,
            DiffusionKind::LinearSaturating { gain, .. } => gain.abs(),
            DiffusionKind::SineBounded => 1.0,
            DiffusionKind::Table(t) => t.modulus(n),
        }
    }

    /// `h_{k,m}(z)` with `k` counted from zero.
    pub fn h(&self, k: usize, m: i64, z: Complex) -> Complex {
        self.profile_complex(z) * self.delta.get(k, m)
    }

    /// `sigma_{k,m}(s)` with `k` counted from zero.
    pub fn sigma(&self, k: usize, m: i64, s: f64) -> f64 {
        self.profile_real(s) * self.delta.get(k, m)
    }
}

/// `h_k(u)` for every mode.
pub fn eval_h(family: &DiffusionFamily, u: &ComplexSeq) -> Vec<ComplexSeq> {
    let phi: Vec<Complex> = u.values().iter().map(|&z| family.profile_complex(z)).collect();
    (0..family.modes())
        .map(|k| {
            let vals = phi.iter().zip(family.delta.mode(k)).map(|(&p, &d)| p * d).collect();
            ComplexSeq::from_values(u.radius(), vals).expect("finite profile")
        })
        .collect()
}

/// `sigma_k(v)` for every mode.
pub fn eval_sigma(family: &DiffusionFamily, v: &RealSeq) -> Vec<RealSeq> {
    let phi: Vec<f64> = v.values().iter().map(|&s| family.profile_real(s)).collect();
    (0..family.modes())
        .map(|k| {
            let vals = phi.iter().zip(family.delta.mode(k)).map(|(&p, &d)| p * d).collect();
            RealSeq::from_values(v.radius(), vals).expect("finite profile")
        })
        .collect()
}

/// Words consumed per `(path, mode, step)`: two `u64` for one Box-Muller draw.
const WORDS_PER_STEP: u128 = 4;
/// Mode bits of the ChaCha stream id.
const MODE_BITS: u32 = 20;
const INIT_DOMAIN: u64 = 0x6c73_772d_696e_6974;

/// Deterministic source of Wiener increments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    modes: usize,
}

impl NoiseStream {
    pub fn new(seed: u64, modes: usize) -> Self {
        assert!(modes < (1 << MODE_BITS), "too many noise modes");
        NoiseStream { seed, modes }
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn modes(&self) -> usize {
        self.modes
    }

    fn generator(&self, path: u64, k: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((path << MODE_BITS) | k as u64);
        rng
    }

    /// Standard normal for `(path, k, step)`, `k` counted from zero.
    pub fn standard_normal(&self, path: u64, k: usize, step: u64) -> f64 {
        let mut rng = self.generator(path, k);
        rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        box_muller(rng.next_u64(), rng.next_u64())
    }

    /// `Delta W_k` over one step of length `dt`.
    pub fn increment(&self, path: u64, k: usize, step: u64, dt: f64) -> f64 {
        self.standard_normal(path, k, step) * dt.sqrt()
    }

    /// All `K` increments for one step.
    pub fn wiener_increments(&self, path: u64, step: u64, dt: f64) -> Vec<f64> {
        (0..self.modes).map(|k| self.increment(path, k, step, dt)).collect()
    }

    /// Sequential reader starting at `step`; yields exactly the values of
    /// [`NoiseStream::wiener_increments`] for consecutive steps.
    pub fn cursor(&self, path: u64, start_step: u64) -> IncrementCursor {
        let generators = (0..self.modes)
            .map(|k| {
                let mut rng = self.generator(path, k);
                rng.set_word_pos(start_step as u128 * WORDS_PER_STEP);
                rng
            })
            .collect();
        IncrementCursor {
            generators,
            step: start_step,
        }
    }

    /// Generator for random initial data, in a key domain disjoint from
    /// the Wiener streams.
    pub fn initial_condition_rng(&self, path: u64) -> NormalSource {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ INIT_DOMAIN);
        rng.set_stream(path);
        NormalSource { rng }
    }
}

/// Sequential increments for one path.
#[derive(Clone, Debug)]
pub struct IncrementCursor {
    generators: Vec<ChaCha8Rng>,
    step: u64,
}

impl IncrementCursor {
    /// Step index of the next draw.
    #[inline]
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Fills `out` with the increments of the next step.
    pub fn next_into(&mut self, dt: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.generators.len());
        let scale = dt.sqrt();
        for (rng, o) in self.generators.iter_mut().zip(out.iter_mut()) {
            *o = box_muller(rng.next_u64(), rng.next_u64()) * scale;
        }
        self.step += 1;
    }

    /// Standard normals of the next step.
    pub fn next_standard_into(&mut self, out: &mut [f64]) {
        self.next_into(1.0, out);
    }
}

/// Plain stream of standard normals.
#[derive(Clone, Debug)]
pub struct NormalSource {
    rng: ChaCha8Rng,
}

impl NormalSource {
    pub fn from_seed(seed: u64) -> Self {
        NormalSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        box_muller(self.rng.next_u64(), self.rng.next_u64())
    }

    /// Uniform integer in `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        // 128-bit multiply-shift; bias is below 2^-64 * n
        ((self.rng.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Cosine branch of Box-Muller; `a` is mapped into `(0, 1]` so the log is finite.
#[inline]
fn box_muller(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(kind: DiffusionKind, modes: usize, radius: usize, d2: f64) -> DiffusionFamily {
        DiffusionFamily::new(kind, DeltaSequence::separable(modes, radius, d2).unwrap()).unwrap()
    }

    #[test]
    fn zero_family_vanishes() {
        let f = DiffusionFamily::zero(3, 2);
        let u = ComplexSeq::from_fn(2, |m| Complex::new(m as f64, 1.0));
        for h in eval_h(&f, &u) {
            assert_eq!(h.norm_sq(), 0.0);
        }
        let v = RealSeq::from_fn(2, |m| m as f64);
        for s in eval_sigma(&f, &v) {
            assert_eq!(s.norm_sq(), 0.0);
        }
        assert!(f.is_zero());
    }

    #[test]
    fn linear_saturating_example() {
        let mut vals = vec![0.0; 5];
        vals[2] = 0.5;
        let delta = DeltaSequence::new(1, 2, vals).unwrap();
        let f = DiffusionFamily::new(DiffusionKind::LinearSaturating { gain: 1.0, offset: 0.0 }, delta).unwrap();
        let u = ComplexSeq::unit(2, 0, Complex::new(1.0, 0.0));
        let h = eval_h(&f, &u);
        assert_eq!(h[0], ComplexSeq::unit(2, 0, Complex::new(0.25, 0.0)));
    }

    #[test]
    fn sine_example() {
        let mut vals = vec![0.0; 5];
        vals[2] = 1.0;
        let delta = DeltaSequence::new(1, 2, vals).unwrap();
        let f = DiffusionFamily::new(DiffusionKind::SineBounded, delta).unwrap();
        let v = RealSeq::unit(2, 0, PI / 2.0);
        let s = eval_sigma(&f, &v);
        assert!((s[0].get(0) - 1.0).abs() < 1e-15);
        assert_eq!(s[0].norm_sq(), s[0].get(0).powi(2));
    }

    #[test]
    fn separable_profile_hits_target() {
        let d = DeltaSequence::separable(8, 16, 0.5).unwrap();
        assert!((d.norm_sq() - 0.5).abs() < 1e-14);
        assert!((d.recompute_norm_sq() - d.norm_sq()).abs() < 1e-15);
        assert!((d.get(0, 0) / d.get(1, 0) - 2f64.sqrt()).abs() < 1e-12);
        assert!((d.get(0, 0) / d.get(0, 3) - 4.0).abs() < 1e-12);
        // sum_{k>8} 2^-k / sum_{k<=8} 2^-k
        assert!((d.discarded_mode_tail() - 0.5 / 255.0).abs() < 1e-15);
        assert_eq!(d.get(8, 0), 0.0);
    }

    #[test]
    fn invalid_families_rejected() {
        let d = DeltaSequence::zero(1, 1);
        assert!(DiffusionFamily::new(DiffusionKind::LinearSaturating { gain: 0.8, offset: 0.3 }, d.clone()).is_err());
        assert!(DeltaSequence::new(1, 1, vec![0.0, -1.0, 0.0]).is_err());
        assert!(GainTable::new(vec![0.0, 1.0], vec![0.5, 1.5]).is_err());
        assert!(GainTable::new(vec![0.5, 1.0], vec![0.5, 0.5]).is_err());
        assert!(GainTable::new(vec![0.0, 0.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn gain_table_interpolates() {
        let t = GainTable::new(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 0.5]).unwrap();
        assert_eq!(t.eval(0.5), 0.5);
        assert_eq!(t.eval(2.0), 0.75);
        assert_eq!(t.eval(10.0), 0.5);
        // g(r) = r q(r): on [0,1] q = r so g' = 2r, peaks at 2
        assert!((t.modulus(5.0) - 2.0).abs() < 1e-15);
        assert!((t.modulus(0.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn increments_are_deterministic_and_cursor_agrees() {
        let s = NoiseStream::new(42, 3);
        let a = s.wiener_increments(7, 11, 0.01);
        let b = s.wiener_increments(7, 11, 0.01);
        assert_eq!(a, b);
        let mut c = s.cursor(7, 9);
        let mut buf = [0.0; 3];
        c.next_into(0.01, &mut buf);
        assert_eq!(buf.to_vec(), s.wiener_increments(7, 9, 0.01));
        c.next_into(0.01, &mut buf);
        c.next_into(0.01, &mut buf);
        assert_eq!(buf.to_vec(), a);
        assert_ne!(s.wiener_increments(8, 11, 0.01), a);
        assert_ne!(NoiseStream::new(43, 3).wiener_increments(7, 11, 0.01), a);
    }

    #[test]
    fn growth_bound_holds_on_log_grid() {
        let fams = [
            family(
                DiffusionKind::LinearSaturating {
                    gain: 0.7,
                    offset: -0.3,
                },
                2,
                1,
                1.0,
            ),
            family(DiffusionKind::SineBounded, 2, 1, 1.0),
            family(
                DiffusionKind::Table(GainTable::new(vec![0.0, 2.0, 5.0], vec![1.0, -1.0, 0.2]).unwrap()),
                2,
                1,
                1.0,
            ),
        ];
        for f in &fams {
            for i in 0..=120 {
                let mag = 10f64.powf(-3.0 + i as f64 * 0.05);
                for s in [mag, -mag] {
                    for k in 0..2 {
                        for m in -1..=1 {
                            let bound = f.delta().get(k, m) * (1.0 + s.abs());
                            assert!(f.sigma(k, m, s).abs() <= bound * (1.0 + 1e-15));
                            let z = Complex::new(s * 0.6, s * 0.8);
                            assert!(f.h(k, m, z).norm() <= bound * (1.0 + 1e-15));
                        }
                    }
                }
            }
        }
    }
}
