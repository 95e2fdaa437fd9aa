//! Randomized property suites for the lattice operators and the cutoff
//! truncations, plus the lockstep truncation-consistency check.
//!
//! Each check reports the worst normalized residual over its samples. A
//! check passes when that value stays at or below its tolerance.

use lsw_core::integrator::Simulation;
use lsw_core::lattice::{apply_a, apply_b, apply_b_star, inner};
use lsw_core::noise::{eval_h, eval_sigma, DiffusionFamily, NormalSource};
use lsw_core::system::{coupling_f, coupling_g};
use lsw_core::truncation::{
    cutoff_complex, cutoff_real, truncated_f, truncated_g, truncated_h, truncated_sigma, truncation_constants,
    CutoffLevel, COMPLEX_CUTOFF_LIPSCHITZ, REAL_CUTOFF_LIPSCHITZ,
};
use lsw_core::{Boundary, Complex, ComplexSeq, LatticeState, RealSeq};

use crate::error::Result;

/// Relative tolerance of the operator identities.
pub const OPERATOR_TOLERANCE: f64 = 1e-12;
/// Allowed deviation per unit time between neighbouring truncation levels.
pub const LEVEL_TOLERANCE: f64 = 1e-9;

/// Outcome of one identity over many random samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub samples: usize,
    /// Largest `residual / scale` seen.
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(suite: &'static str, name: impl Into<String>, tolerance: f64) -> Self {
        Check {
            suite,
            name: name.into(),
            samples: 0,
            worst: 0.0,
            tolerance,
        }
    }

    fn observe(&mut self, residual: f64, scale: f64) {
        self.samples += 1;
        let r = residual / scale;
        // NaN residuals must fail
        if !(r <= self.worst) {
            self.worst = if r.is_nan() { f64::INFINITY } else { r };
        }
    }

    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// The operators under test. Swapping in a faulty implementation must make
/// the suite fail.
#[derive(Clone, Copy, Debug)]
pub struct Operators {
    pub a: fn(&ComplexSeq, Boundary) -> ComplexSeq,
    pub b: fn(&ComplexSeq, Boundary) -> ComplexSeq,
    pub b_star: fn(&ComplexSeq, Boundary) -> ComplexSeq,
}

impl Default for Operators {
    fn default() -> Self {
        Operators {
            a: apply_a,
            b: apply_b,
            b_star: apply_b_star,
        }
    }
}

/// Gaussian sequence with an overall scale drawn log-uniformly from
/// `[1e-3, 1e3]`.
fn random_seq(rng: &mut NormalSource, radius: usize) -> ComplexSeq {
    let scale = 10f64.powf(6.0 * rng.next_uniform() - 3.0);
    ComplexSeq::from_fn(radius, |_| Complex::new(rng.next_normal(), rng.next_normal()) * scale)
}

fn boundary_name(b: Boundary) -> &'static str {
    match b {
        Boundary::Zero => "zero",
        Boundary::Periodic => "periodic",
    }
}

/// Adjointness, positivity, the energy identity, the factorization
/// `A = B*B` and the bound `||Bu||^2 <= 4 ||u||^2`, on both boundaries.
///
/// With zero padding the factorization fails at the left end site and the
/// energy identity picks up the boundary term `|u_{-M}|^2`; both are checked
/// in that form.
pub fn operator_suite(ops: &Operators, radius: usize, samples: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for boundary in [Boundary::Zero, Boundary::Periodic] {
        let bn = boundary_name(boundary);
        let tol = OPERATOR_TOLERANCE;
        let mut adjoint = Check::new("operators", format!("(Bu,w) = (u,B*w) [{bn}]"), tol);
        let mut positive = Check::new("operators", format!("(Au,u) real and >= 0 [{bn}]"), tol);
        let mut energy = Check::new("operators", format!("(Au,u) = ||Bu||^2 + boundary [{bn}]"), tol);
        let mut factor = Check::new("operators", format!("Au = B*Bu [{bn}]"), tol);
        let mut bounded = Check::new("operators", format!("||Bu||^2 <= 4||u||^2 [{bn}]"), tol);
        let mut rng = NormalSource::from_seed(seed ^ (boundary as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for _ in 0..samples {
            let u = random_seq(&mut rng, radius);
            let w = random_seq(&mut rng, radius);
            let (nu, nw) = (u.norm(), w.norm());
            let au = (ops.a)(&u, boundary);
            let bu = (ops.b)(&u, boundary);
            let bu_sq = bu.norm_sq();

            let lhs = inner(&bu, &w).expect("same radius");
            let rhs = inner(&u, &(ops.b_star)(&w, boundary)).expect("same radius");
            adjoint.observe((lhs - rhs).norm(), 1.0 + nu * nw);

            let q = inner(&au, &u).expect("same radius");
            positive.observe(q.im.abs() + (-q.re).max(0.0), 1.0 + nu * nu);

            let edge = match boundary {
                Boundary::Zero => u.get(-(radius as i64)).norm_sqr(),
                Boundary::Periodic => 0.0,
            };
            energy.observe((q.re - bu_sq - edge).abs(), 1.0 + nu * nu);

            let bsbu = (ops.b_star)(&bu, boundary);
            let skip = usize::from(boundary == Boundary::Zero);
            let diff = au.values()[skip..]
                .iter()
                .zip(&bsbu.values()[skip..])
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            factor.observe(diff, 1.0 + nu);

            bounded.observe((bu_sq - 4.0 * nu * nu).max(0.0), 1.0 + nu * nu);
        }
        out.extend([adjoint, positive, energy, factor, bounded]);
    }
    out
}

/// Lipschitz and growth bounds of the truncated maps, and agreement with the
/// untruncated maps inside the ball of radius `n`.
///
/// Scalar cutoff bounds use `samples` random pairs; the sequence-level maps
/// use `samples / 100` pairs on a lattice of radius 8.
pub fn truncation_suite(family: &DiffusionFamily, lambda: f64, samples: usize, seed: u64) -> Vec<Check> {
    // relative slack for rounding in the norms on both sides
    let tol = 1e-12;
    let mut rng = NormalSource::from_seed(seed);
    let level = |rng: &mut NormalSource| CutoffLevel::new(0.5 + 4.5 * rng.next_uniform()).expect("positive");

    let mut c_lip = Check::new("truncation", "|rho(z1) - rho(z2)| <= 2|z1 - z2|", tol);
    let mut r_lip = Check::new("truncation", "|rho(s1) - rho(s2)| <= |s1 - s2|", tol);
    let mut bounded = Check::new("truncation", "|rho(z)| <= n", tol);
    let mut identity = Check::new("truncation", "rho(z) = z for |z| <= n", 0.0);
    for _ in 0..samples {
        let n = level(&mut rng);
        let s = 2.0 * n.get();
        let z1 = Complex::new(rng.next_normal(), rng.next_normal()) * s;
        let z2 = Complex::new(rng.next_normal(), rng.next_normal()) * s;
        let (r1, r2) = (cutoff_complex(z1, n), cutoff_complex(z2, n));
        let dz = (z1 - z2).norm();
        c_lip.observe(
            ((r1 - r2).norm() - COMPLEX_CUTOFF_LIPSCHITZ * dz).max(0.0),
            dz.max(f64::MIN_POSITIVE),
        );
        let (x1, x2) = (z1.re, z2.re);
        let dx = (x1 - x2).abs();
        let rx = (cutoff_real(x1, n) - cutoff_real(x2, n)).abs();
        r_lip.observe((rx - REAL_CUTOFF_LIPSCHITZ * dx).max(0.0), dx.max(f64::MIN_POSITIVE));
        bounded.observe((r1.norm() - n.get()).max(0.0), n.get());
        if z1.norm() <= n.get() {
            identity.observe((r1 - z1).norm(), 1.0);
        }
    }

    let radius = 8;
    let mut f_lip = Check::new("truncation", "F^n Lipschitz with q1", tol);
    let mut g_lip = Check::new("truncation", "G^n Lipschitz with q2", tol);
    let mut h_lip = Check::new("truncation", "h^n Lipschitz with q3", tol);
    let mut s_lip = Check::new("truncation", "sigma^n Lipschitz with q4", tol);
    let mut growth = Check::new("truncation", "sum_k ||h_k^n(u)||^2 <= 2||delta||^2 (1 + ||u||^2)", tol);
    let mut inside = Check::new(
        "truncation",
        "F^n, G^n, h^n, sigma^n equal F, G, h, sigma inside the n-ball",
        0.0,
    );
    let delta_sq = family.effective_delta_norm_sq();
    for _ in 0..(samples / 100).max(1) {
        let n = level(&mut rng);
        let s = n.get();
        let u1 = ComplexSeq::from_fn(radius, |_| Complex::new(rng.next_normal(), rng.next_normal()) * s);
        let u2 = ComplexSeq::from_fn(radius, |_| Complex::new(rng.next_normal(), rng.next_normal()) * s);
        let v1 = RealSeq::from_fn(radius, |_| rng.next_normal() * s);
        let v2 = RealSeq::from_fn(radius, |_| rng.next_normal() * s);
        let du = u1.sub(&u2).expect("same radius").norm_sq();
        let dv = v1.sub(&v2).expect("same radius").norm_sq();
        let q = truncation_constants(n, lambda, family);

        let df = truncated_f(&u1, &v1, n)
            .and_then(|a| a.sub(&truncated_f(&u2, &v2, n)?))
            .expect("same radius")
            .norm_sq();
        f_lip.observe((df - q.q1 * (du + dv)).max(0.0), 1.0 + q.q1 * (du + dv));

        let dg = truncated_g(&u1, n, lambda, Boundary::Zero)
            .sub(&truncated_g(&u2, n, lambda, Boundary::Zero))
            .expect("same radius")
            .norm_sq();
        g_lip.observe((dg - q.q2 * du).max(0.0), 1.0 + q.q2 * du);

        let dh: f64 = truncated_h(family, &u1, n)
            .iter()
            .zip(truncated_h(family, &u2, n))
            .map(|(a, b)| a.sub(&b).expect("same radius").norm_sq())
            .sum();
        h_lip.observe((dh - q.q3 * du).max(0.0), 1.0 + q.q3 * du);

        let ds: f64 = truncated_sigma(family, &v1, n)
            .iter()
            .zip(truncated_sigma(family, &v2, n))
            .map(|(a, b)| a.sub(&b).expect("same radius").norm_sq())
            .sum();
        s_lip.observe((ds - q.q4 * dv).max(0.0), 1.0 + q.q4 * dv);

        let hh: f64 = truncated_h(family, &u1, n).iter().map(|h| h.norm_sq()).sum();
        let cap = 2.0 * delta_sq * (1.0 + u1.norm_sq());
        growth.observe((hh - cap).max(0.0), 1.0 + cap);

        let u = ComplexSeq::from_fn(radius, |_| {
            Complex::from_polar(s * rng.next_uniform(), std::f64::consts::TAU * rng.next_uniform())
        });
        let v = RealSeq::from_fn(radius, |_| s * (2.0 * rng.next_uniform() - 1.0));
        let gap_f = truncated_f(&u, &v, n)
            .and_then(|a| a.sub(&coupling_f(&u, &v)?))
            .expect("same radius")
            .norm();
        let gap_g = truncated_g(&u, n, lambda, Boundary::Periodic)
            .sub(&coupling_g(&u, lambda, Boundary::Periodic))
            .expect("same radius")
            .norm();
        let gap_h: f64 = truncated_h(family, &u, n)
            .iter()
            .zip(eval_h(family, &u))
            .map(|(a, b)| a.sub(&b).expect("same radius").norm())
            .sum();
        let gap_s: f64 = truncated_sigma(family, &v, n)
            .iter()
            .zip(eval_sigma(family, &v))
            .map(|(a, b)| a.sub(&b).expect("same radius").norm())
            .sum();
        inside.observe(gap_f + gap_g + gap_h + gap_s, 1.0);
    }
    vec![
        c_lip, r_lip, bounded, identity, f_lip, g_lip, h_lip, s_lip, growth, inside,
    ]
}

/// Largest `||state_n - state_{n+1}|| / t` over the grid up to and including
/// the exit step from the ball `||u|| + ||v|| <= n`, for every path.
///
/// `low` and `high` must be the same simulation at cutoffs `n` and `n + 1`.
/// Both runs consume identical Wiener increments.
pub fn level_consistency(low: &Simulation, high: &Simulation, n: f64, n_paths: usize) -> Result<f64> {
    let dt = low.config().dt;
    let mut worst: f64 = 0.0;
    for path in 0..n_paths as u64 {
        let mut a = low.initial_state(path);
        let mut b = high.initial_state(path);
        let mut st_a = low.stepper();
        let mut st_b = high.stepper();
        let mut cursor = low.stream().cursor(path, 0);
        let mut dw = vec![0.0; low.config().modes];
        let mut inside = a.combined_norm() <= n;
        let mut step = 0;
        while inside && step < low.n_steps() {
            step += 1;
            cursor.next_into(dt, &mut dw);
            st_a.step(&mut a, &dw);
            st_b.step(&mut b, &dw);
            worst = worst.max(state_gap(&a, &b) / (step as f64 * dt));
            inside = a.combined_norm() <= n;
        }
    }
    Ok(worst)
}

fn state_gap(a: &LatticeState, b: &LatticeState) -> f64 {
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
            .map(|(x, y)| (x - y).powi(2))
            .sum();
    (du + dv).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use lsw_core::noise::{DeltaSequence, DiffusionKind};

    #[test]
    fn reference_operators_pass() {
        let checks = operator_suite(&Operators::default(), 6, 200, 1);
        assert_eq!(checks.len(), 10);
        for c in &checks {
            assert!(c.passed(), "{c:?}");
            assert_eq!(c.samples, 200);
        }
    }

    #[test]
    fn flipped_adjoint_is_caught() {
        fn flipped(u: &ComplexSeq, b: Boundary) -> ComplexSeq {
            apply_b_star(u, b).scaled(-1.0)
        }
        let ops = Operators {
            b_star: flipped,
            ..Operators::default()
        };
        let checks = operator_suite(&ops, 6, 50, 1);
        assert!(checks.iter().any(|c| c.name.starts_with("(Bu,w)") && !c.passed()));
        assert!(checks.iter().any(|c| c.name.starts_with("Au = B*Bu") && !c.passed()));
    }

    #[test]
    fn truncations_pass_for_each_family() {
        let delta = DeltaSequence::separable(4, 8, 0.5).unwrap();
        for kind in [
            DiffusionKind::SineBounded,
            DiffusionKind::LinearSaturating { gain: 0.6, offset: 0.3 },
        ] {
            let fam = DiffusionFamily::new(kind, delta.clone()).unwrap();
            for c in truncation_suite(&fam, 0.1, 20_000, 3) {
                assert!(c.passed(), "{c:?}");
            }
        }
    }
}
