//! Closed-form references for the linear regime (`lambda = 0`, no `u v`
//! coupling, additive noise only).

use alloc::vec::Vec;

use crate::dense::{expm, propagator_pair, short_wave_generator, CMatrix};
use crate::error::{Error, Result};
use crate::lattice::{check_radius, Boundary, Complex, ComplexSeq};

/// Largest radius handled by the dense references.
pub const ORACLE_RADIUS_LIMIT: usize = 32;

fn check_size(radius: usize) -> Result<()> {
    if radius > ORACLE_RADIUS_LIMIT {
        Err(Error::TooLarge {
            radius,
            limit: ORACLE_RADIUS_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Exact factors of `du = (-iA - alpha) u dt - i f dt - i eps sum_k b_k dW_k` at time `t`.
#[derive(Clone, Debug)]
pub struct LinearOuReference {
    radius: usize,
    /// `exp(t L)` with `L = -iA - alpha`.
    pub propagator: CMatrix,
    /// `int_0^t exp(s L) ds`.
    pub integral: CMatrix,
}

impl LinearOuReference {
    pub fn new(radius: usize, alpha: f64, t: f64, boundary: Boundary) -> Result<Self> {
        check_size(radius)?;
        let (propagator, integral) = propagator_pair(&short_wave_generator(radius, alpha, boundary), t);
        Ok(LinearOuReference {
            radius,
            propagator,
            integral,
        })
    }

    /// `exp(tL) u0 - i int_0^t exp(sL) ds f`.
    pub fn mean(&self, u0: &ComplexSeq, f: &ComplexSeq) -> Result<ComplexSeq> {
        check_radius(self.radius, u0.radius())?;
        check_radius(self.radius, f.radius())?;
        let free = self.propagator.mul_vec(u0.values());
        let minus_i = Complex::new(0.0, -1.0);
        let forced = self.integral.mul_vec(f.values());
        let vals = free.iter().zip(&forced).map(|(&a, &b)| a + minus_i * b).collect();
        ComplexSeq::from_values(self.radius, vals)
    }
}

/// Mean of the linear short-wave flow at time `t`, by dense exponentiation.
pub fn ou_complex_mean(u0: &ComplexSeq, f: &ComplexSeq, alpha: f64, t: f64, boundary: Boundary) -> Result<ComplexSeq> {
    LinearOuReference::new(u0.radius(), alpha, t, boundary)?.mean(u0, f)
}

/// Per-site variances `E|u_m(t) - E u_m(t)|^2` of the linear flow with
/// additive noise `-i eps sum_k b_k dW_k`, from the Van Loan block
/// exponential of `[[L, Q], [0, -L^H]]` with `Q = eps^2 sum_k b_k b_k^H`.
pub fn ou_complex_variance(
    radius: usize,
    alpha: f64,
    eps: f64,
    b: &[ComplexSeq],
    t: f64,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    check_size(radius)?;
    for s in b {
        check_radius(radius, s.radius())?;
    }
    let l = short_wave_generator(radius, alpha, boundary);
    let n = l.dim();
    let mut block = CMatrix::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            block[(i, j)] = l[(i, j)] * t;
            block[(n + i, n + j)] = -l[(j, i)].conj() * t;
            let q: Complex = b.iter().map(|s| s.values()[i] * s.values()[j].conj()).sum();
            block[(i, n + j)] = q * (eps * eps * t);
        }
    }
    let e = expm(&block);
    // Sigma = G exp(t L)^H, G the upper right block
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = Complex::new(0.0, 0.0);
        for j in 0..n {
            acc += e[(i, n + j)] * e[(i, j)].conj();
        }
        out.push(acc.re);
    }
    Ok(out)
}

/// Law of a scalar Ornstein-Uhlenbeck site `dv = (-beta v + g) dt + eps sum_k gamma_k dW_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealOu {
    pub mean: f64,
    pub variance: f64,
}

/// Stationary law: mean `g / beta`, variance `eps^2 sum_k gamma_k^2 / (2 beta)`.
pub fn ou_real_stationary(beta: f64, eps: f64, gamma_site: &[f64], g_site: f64) -> Result<RealOu> {
    if !(beta > 0.0) {
        return Err(Error::config("beta must be positive"));
    }
    let s2: f64 = gamma_site.iter().map(|x| x * x).sum();
    Ok(RealOu {
        mean: g_site / beta,
        variance: eps * eps * s2 / (2.0 * beta),
    })
}

/// Law at time `t` started from the point `v0`.
pub fn ou_real_at(beta: f64, eps: f64, gamma_site: &[f64], g_site: f64, v0: f64, t: f64) -> Result<RealOu> {
    let st = ou_real_stationary(beta, eps, gamma_site, g_site)?;
    let decay = (-beta * t).exp();
    Ok(RealOu {
        mean: st.mean + (v0 - st.mean) * decay,
        variance: -st.variance * (-2.0 * beta * t).exp_m1(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_zero_is_identity() {
        let u0 = ComplexSeq::from_fn(3, |m| Complex::new(m as f64, 1.0));
        let f = ComplexSeq::from_fn(3, |m| Complex::new(0.5, -(m as f64)));
        let out = ou_complex_mean(&u0, &ComplexSeq::zeros(3), 1.0, 0.0, Boundary::Zero).unwrap();
        assert_eq!(out, u0);
        let out = ou_complex_mean(&u0, &f, 1.0, 0.0, Boundary::Zero).unwrap();
        assert!(out.sub(&u0).unwrap().norm() < 1e-15);
    }

    #[test]
    fn impulse_decays_at_rate_alpha() {
        let e0 = ComplexSeq::unit(6, 0, Complex::new(1.0, 0.0));
        for &t in &[0.1, 0.5, 1.0, 2.5] {
            let out = ou_complex_mean(&e0, &ComplexSeq::zeros(6), 1.0, t, Boundary::Zero).unwrap();
            assert!((out.norm() - (-t).exp()).abs() < 1e-13, "t = {t}");
            let out = ou_complex_mean(&e0, &ComplexSeq::zeros(6), 0.0, t, Boundary::Periodic).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn forced_response_reaches_fixed_point() {
        // L u* = i f  gives the steady state of du/dt = L u - i f
        let f = ComplexSeq::unit(2, 0, Complex::new(1.0, 0.0));
        let out = ou_complex_mean(&ComplexSeq::zeros(2), &f, 2.0, 40.0, Boundary::Zero).unwrap();
        let l = short_wave_generator(2, 2.0, Boundary::Zero);
        let lu = l.mul_vec(out.values());
        for (i, z) in lu.iter().enumerate() {
            let want = Complex::new(0.0, 1.0) * f.values()[i];
            assert!((z - want).norm() < 1e-12);
        }
    }

    #[test]
    fn radius_cap() {
        let u = ComplexSeq::zeros(33);
        assert!(matches!(
            ou_complex_mean(&u, &u, 1.0, 1.0, Boundary::Zero),
            Err(Error::TooLarge { radius: 33, limit: 32 })
        ));
    }

    #[test]
    fn real_stationary_examples() {
        let s = ou_real_stationary(2.0, 0.1, &[1.0], 0.0).unwrap();
        assert!((s.variance - 0.0025).abs() < 1e-18);
        assert_eq!(ou_real_stationary(2.0, 0.0, &[1.0], 0.0).unwrap().variance, 0.0);
        assert_eq!(ou_real_stationary(2.0, 0.1, &[1.0], 4.0).unwrap().mean, 2.0);
        let t = ou_real_at(2.0, 0.1, &[1.0], 4.0, 0.0, 50.0).unwrap();
        assert!((t.mean - 2.0).abs() < 1e-15 && (t.variance - 0.0025).abs() < 1e-15);
        assert!(ou_real_stationary(0.0, 0.1, &[1.0], 0.0).is_err());
    }

    #[test]
    fn complex_variance_single_site() {
        // radius 0: du = -alpha u dt - i eps b dW, variance eps^2 |b|^2 (1 - e^{-2 alpha t}) / (2 alpha)
        let b = [ComplexSeq::unit(0, 0, Complex::new(0.6, 0.8))];
        let var = ou_complex_variance(0, 1.5, 0.3, &b, 0.7, Boundary::Zero).unwrap();
        let want = 0.09 * (1.0 - (-2.1f64).exp()) / 3.0;
        assert!((var[0] - want).abs() < 1e-14);
    }
}
