//! Radial cutoffs `rho_n`, the globally Lipschitz truncations `F^n`, `G^n`,
//! `h_k^n`, `sigma_k^n`, and first-exit bookkeeping for `||u|| + ||v|| > n`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lattice::{neighbor, Boundary, Complex, ComplexSeq, RealSeq};
use crate::noise::DiffusionFamily;

/// Truncation radius `n > 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct CutoffLevel(f64);

impl CutoffLevel {
    pub fn new(n: f64) -> Result<Self> {
        if n > 0.0 && n.is_finite() {
            Ok(CutoffLevel(n))
        } else {
            Err(Error::Config(alloc::format!("cutoff level must be positive, got {n}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Identity on `|z| <= n`, radial projection onto the circle of radius `n` outside.
#[inline]
pub fn cutoff_complex(z: Complex, n: CutoffLevel) -> Complex {
    let r = z.norm();
    if r <= n.0 {
        return z;
    }
    let w = z * (n.0 / r);
    // rounding can leave |w| one ulp above n; pull it inside so a second
    // application is the identity
    if w.norm() > n.0 {
        w * (1.0 - f64::EPSILON)
    } else {
        w
    }
}

/// Clamp to `[-n, n]`.
#[inline]
pub fn cutoff_real(s: f64, n: CutoffLevel) -> f64 {
    s.clamp(-n.0, n.0)
}

/// Lipschitz factor used for the complex cutoff.
pub const COMPLEX_CUTOFF_LIPSCHITZ: f64 = 2.0;
/// Lipschitz factor used for the real cutoff.
pub const REAL_CUTOFF_LIPSCHITZ: f64 = 1.0;

pub fn cutoff_complex_seq(u: &ComplexSeq, n: CutoffLevel) -> ComplexSeq {
    u.map(|z| cutoff_complex(z, n))
}

pub fn cutoff_real_seq(v: &RealSeq, n: CutoffLevel) -> RealSeq {
    v.map(|s| cutoff_real(s, n))
}

/// `F^n(u, v)_m = rho_n(u_m) rho_n(v_m)`.
pub fn truncated_f(u: &ComplexSeq, v: &RealSeq, n: CutoffLevel) -> Result<ComplexSeq> {
    u.zip_with(v, |a, b| cutoff_complex(a, n) * cutoff_real(b, n))
}

/// `G^n(u) = lambda B(|rho_n u|^2)`.
pub fn truncated_g(u: &ComplexSeq, n: CutoffLevel, lambda: f64, boundary: Boundary) -> RealSeq {
    let sq: Vec<f64> = u.values().iter().map(|&z| cutoff_complex(z, n).norm_sqr()).collect();
    let vals = (0..sq.len())
        .map(|i| lambda * (neighbor(&sq, i, 1, boundary) - sq[i]))
        .collect();
    RealSeq::from_values(u.radius(), vals).expect("length preserved")
}

/// `h_k^n(u) = h_k(rho_n u)` for every mode.
pub fn truncated_h(family: &DiffusionFamily, u: &ComplexSeq, n: CutoffLevel) -> Vec<ComplexSeq> {
    crate::noise::eval_h(family, &cutoff_complex_seq(u, n))
}

/// `sigma_k^n(v) = sigma_k(rho_n v)` for every mode.
pub fn truncated_sigma(family: &DiffusionFamily, v: &RealSeq, n: CutoffLevel) -> Vec<RealSeq> {
    crate::noise::eval_sigma(family, &cutoff_real_seq(v, n))
}

/// Global Lipschitz constants of the level-`n` truncations, squared form:
/// `||F^n(u1,v1) - F^n(u2,v2)||^2 <= q1 (||du||^2 + ||dv||^2)` and so on.
///
/// With `|rho_n| <= n` and the cutoff factors 2 (complex) and 1 (real):
///
/// - `|rho u1 rho v1 - rho u2 rho v2| <= n |dv| + 2n |du|`, so `q1 = 8 n^2`;
/// - `| |rho u1|^2 - |rho u2|^2 | <= 2n |du|` and `||B w||^2 <= 4 ||w||^2`,
///   so `q2 = 16 lambda^2 n^2`;
/// - `|h_{k,m}(rho z1) - h_{k,m}(rho z2)| <= delta_{k,m} L_n 2 |dz|`, so
///   `q3 = 4 L_n^2 max_m sum_k delta_{k,m}^2`, and `q4` likewise with factor 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationConstants {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

pub fn truncation_constants(n: CutoffLevel, lambda: f64, family: &DiffusionFamily) -> TruncationConstants {
    let n = n.get();
    let modulus = family.profile_modulus(n);
    let peak = family.delta().site_peak();
    TruncationConstants {
        q1: 2.0 * n * n * COMPLEX_CUTOFF_LIPSCHITZ.max(REAL_CUTOFF_LIPSCHITZ).powi(2),
        q2: 16.0 * lambda * lambda * n * n,
        q3: COMPLEX_CUTOFF_LIPSCHITZ.powi(2) * modulus * modulus * peak,
        q4: REAL_CUTOFF_LIPSCHITZ.powi(2) * modulus * modulus * peak,
    }
}

/// First grid time at which `||u|| + ||v||` exceeds the level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingRecord {
    pub level: CutoffLevel,
    pub hit: Option<StoppingHit>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingHit {
    pub step: u64,
    pub time: f64,
    /// `||u|| + ||v||` at the hit.
    pub trigger_norm: f64,
}

impl StoppingRecord {
    pub fn hit_time(&self) -> Option<f64> {
        self.hit.map(|h| h.time)
    }

    /// True when the exit happened strictly before `t`.
    pub fn before(&self, t: f64) -> bool {
        self.hit.is_some_and(|h| h.time < t)
    }
}

/// Online first-exit detection for a ladder of levels.
#[derive(Clone, Debug)]
pub struct StoppingTracker {
    records: Vec<StoppingRecord>,
    pending: usize,
}

impl StoppingTracker {
    pub fn new(levels: &[CutoffLevel]) -> Self {
        StoppingTracker {
            records: levels
                .iter()
                .map(|&level| StoppingRecord { level, hit: None })
                .collect(),
            pending: levels.len(),
        }
    }

    /// Feeds the combined norm at grid point `step` (time `time`).
    #[inline]
    pub fn observe(&mut self, step: u64, time: f64, combined_norm: f64) {
        if self.pending == 0 {
            return;
        }
        for rec in self.records.iter_mut().filter(|r| r.hit.is_none()) {
            if combined_norm > rec.level.get() {
                rec.hit = Some(StoppingHit {
                    step,
                    time,
                    trigger_norm: combined_norm,
                });
                self.pending -= 1;
            }
        }
    }

    pub fn finish(self) -> Vec<StoppingRecord> {
        self.records
    }
}

/// First-exit detection on a sampled trajectory of `||u|| + ||v||`.
pub fn detect_stopping(times: &[f64], combined_norms: &[f64], n: CutoffLevel) -> StoppingRecord {
    let mut tracker = StoppingTracker::new(&[n]);
    for (i, (&t, &x)) in times.iter().zip(combined_norms).enumerate() {
        tracker.observe(i as u64, t, x);
    }
    tracker.finish()[0]
}
