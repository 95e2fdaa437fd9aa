//! Model parameters, the couplings `F` and `G`, the deterministic drift and
//! the explicit constants of the moment estimates.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lattice::{apply_a, check_radius, neighbor, Boundary, Complex, ComplexSeq, LatticeState, RealSeq};

/// Coefficients and time-independent forcing of the lattice system.
///
/// `b[k]` and `gamma[k]` are the additive noise profiles attached to the
/// Wiener process `W_{k+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub f: ComplexSeq,
    pub g: RealSeq,
    pub b: Vec<ComplexSeq>,
    pub gamma: Vec<RealSeq>,
    /// Whether the `u v` coupling is present in the short-wave equation.
    /// Switching it off (together with `lambda = 0`) decouples the system
    /// into two linear equations.
    pub uv_coupling: bool,
}

impl SystemParams {
    /// Unforced, noise-free parameters on a lattice of the given radius.
    pub fn new(alpha: f64, beta: f64, lambda: f64, radius: usize) -> Self {
        SystemParams {
            alpha,
            beta,
            lambda,
            epsilon: 0.0,
            f: ComplexSeq::zeros(radius),
            g: RealSeq::zeros(radius),
            b: Vec::new(),
            gamma: Vec::new(),
            uv_coupling: true,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_forcing(mut self, f: ComplexSeq, g: RealSeq) -> Self {
        self.f = f;
        self.g = g;
        self
    }

    pub fn with_additive_noise(mut self, b: Vec<ComplexSeq>, gamma: Vec<RealSeq>) -> Self {
        self.b = b;
        self.gamma = gamma;
        self
    }

    pub fn without_uv_coupling(mut self) -> Self {
        self.uv_coupling = false;
        self
    }

    pub fn radius(&self) -> usize {
        self.f.radius()
    }

    /// Checks signs, finiteness and radii; `modes` is the number of
    /// simulated Wiener processes, which bounds the additive profiles.
    pub fn validate(&self, modes: usize) -> Result<()> {
        for (name, x) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::config(format!("{name} must be positive and finite, got {x}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        let r = self.radius();
        check_radius(r, self.g.radius())?;
        if self.b.len() > modes || self.gamma.len() > modes {
            return Err(Error::config(format!(
                "additive noise has {} / {} profiles but only {modes} Wiener modes",
                self.b.len(),
                self.gamma.len()
            )));
        }
        for s in &self.b {
            check_radius(r, s.radius())?;
        }
        for s in &self.gamma {
            check_radius(r, s.radius())?;
        }
        let finite = self.f.is_finite()
            && self.g.is_finite()
            && self.b.iter().all(|s| s.is_finite())
            && self.gamma.iter().all(|s| s.is_finite());
        if !finite {
            return Err(Error::config("forcing contains non-finite values"));
        }
        Ok(())
    }

    /// `||b||^2 = sum_k ||b_k||^2`.
    pub fn b_norm_sq(&self) -> f64 {
        self.b.iter().map(|s| s.norm_sq()).sum()
    }

    /// `||gamma||^2 = sum_k ||gamma_k||^2`.
    pub fn gamma_norm_sq(&self) -> f64 {
        self.gamma.iter().map(|s| s.norm_sq()).sum()
    }

    /// `||f||^4 + ||g||^4 + ||b||^4 + ||gamma||^4`.
    pub fn forcing_quartic(&self) -> f64 {
        self.f.norm_sq().powi(2) + self.g.norm_sq().powi(2) + self.b_norm_sq().powi(2) + self.gamma_norm_sq().powi(2)
    }
}

/// `F(u, v)_m = u_m v_m`.
pub fn coupling_f(u: &ComplexSeq, v: &RealSeq) -> Result<ComplexSeq> {
    u.zip_with(v, |a, b| a * b)
}

/// `G(u)_m = lambda (|u_{m+1}|^2 - |u_m|^2)`.
pub fn coupling_g(u: &ComplexSeq, lambda: f64, boundary: Boundary) -> RealSeq {
    let sq: Vec<f64> = u.values().iter().map(|z| z.norm_sqr()).collect();
    let values = (0..sq.len())
        .map(|i| lambda * (neighbor(&sq, i, 1, boundary) - sq[i]))
        .collect();
    RealSeq::from_values(u.radius(), values).expect("length preserved")
}

/// The deterministic part of the right-hand side:
///
/// ```text
/// du = -i A u - alpha u - i F(u, v) - i f
/// dv = -beta v - G(u) + g
/// ```
pub fn drift(state: &LatticeState, params: &SystemParams, boundary: Boundary) -> Result<(ComplexSeq, RealSeq)> {
    check_radius(state.radius(), params.radius())?;
    let minus_i = Complex::new(0.0, -1.0);
    let au = apply_a(&state.u, boundary);
    let mut du = au.zip_with(&state.u, |a, u| minus_i * a - u * params.alpha)?;
    if params.uv_coupling {
        let fuv = coupling_f(&state.u, &state.v)?;
        du = du.zip_with(&fuv, |d, x| d + minus_i * x)?;
    }
    du = du.zip_with(&params.f, |d, x| d + minus_i * x)?;

    let gu = coupling_g(&state.u, params.lambda, boundary);
    let dv = state
        .v
        .zip_with(&gu, |v, x| -params.beta * v - x)?
        .zip_with(&params.g, |d, x| d + x)?;
    Ok((du, dv))
}

/// Explicit constants of the fourth/second moment estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedConstants {
    /// Decay rate `min{alpha - 18 lambda^2 / beta, beta / 2}`.
    pub kappa: f64,
    /// Forcing gain of the moment inequality.
    pub kappa_tilde: f64,
    /// Admissible noise intensity, `min` of the two square-root constraints.
    pub eps0: f64,
    /// The same two square roots combined with `max`, as stated in the
    /// lemma; kept for reporting only.
    pub eps0_stated: f64,
    /// `(kappa_tilde / kappa) (||f||^4 + ||g||^4 + ||b||^4 + ||gamma||^4 + 1)`.
    pub absorbing_bound: f64,
}

impl DerivedConstants {
    /// `e^{-kappa t} initial + absorbing_bound`.
    pub fn envelope(&self, t: f64, initial: f64) -> f64 {
        (-self.kappa * t).exp() * initial + self.absorbing_bound
    }
}

/// `alpha - 18 lambda^2 / beta`, positive exactly when the system is dissipative.
pub fn dissipativity_margin(alpha: f64, beta: f64, lambda: f64) -> f64 {
    alpha - 18.0 * lambda * lambda / beta
}

/// `max{27/alpha, 2/beta, 36 e^4/alpha, 12 e^2, 6 e^2 (1 + 8 ||delta||^2)}`,
/// the gain of the moment inequality when the noise intensity is `e`.
pub fn kappa_tilde_at(alpha: f64, beta: f64, delta_norm_sq: f64, eps: f64) -> f64 {
    let e2 = eps * eps;
    [
        27.0 / alpha,
        2.0 / beta,
        36.0 * e2 * e2 / alpha,
        12.0 * e2,
        6.0 * e2 * (1.0 + 8.0 * delta_norm_sq),
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}

/// Computes the decay rate, gain, noise threshold and absorbing bound.
///
/// Fails when `alpha - 18 lambda^2 / beta <= 0`. With `delta_norm_sq > 0`
/// the gain is
///
/// ```text
/// max{27/alpha, 2/beta, 9 beta^2 / (576 alpha ||delta||^4),
///     beta / (4 ||delta||^2), beta (1 + 8 ||delta||^2) / (8 ||delta||^2)}
/// ```
///
/// With `delta_norm_sq == 0` the threshold is infinite and the noise terms
/// are evaluated at `params.epsilon`.
pub fn derive_constants(params: &SystemParams, delta_norm_sq: f64) -> Result<DerivedConstants> {
    let (alpha, beta, lambda) = (params.alpha, params.beta, params.lambda);
    let margin = dissipativity_margin(alpha, beta, lambda);
    if !(margin > 0.0) {
        return Err(Error::Dissipativity(format!(
            "alpha - 18 lambda^2 / beta = {alpha} - 18*{lambda}^2/{beta} = {margin} is not positive"
        )));
    }
    if !(delta_norm_sq >= 0.0 && delta_norm_sq.is_finite()) {
        return Err(Error::config(format!("invalid ||delta||^2 = {delta_norm_sq}")));
    }
    let kappa = margin.min(beta / 2.0);
    let (kappa_tilde, eps0, eps0_stated) = if delta_norm_sq > 0.0 {
        let d2 = delta_norm_sq;
        let kt = [
            27.0 / alpha,
            2.0 / beta,
            9.0 * beta * beta / (576.0 * alpha * d2 * d2),
            beta / (4.0 * d2),
            beta * (1.0 + 8.0 * d2) / (8.0 * d2),
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
        let a = (alpha / (24.0 * d2)).sqrt();
        let b = (beta / (48.0 * d2)).sqrt();
        (kt, a.min(b), a.max(b))
    } else {
        (
            kappa_tilde_at(alpha, beta, 0.0, params.epsilon),
            f64::INFINITY,
            f64::INFINITY,
        )
    };
    let absorbing_bound = kappa_tilde / kappa * (params.forcing_quartic() + 1.0);
    Ok(DerivedConstants {
        kappa,
        kappa_tilde,
        eps0,
        eps0_stated,
        absorbing_bound,
    })
}

/// Checks `epsilon <= eps0` unless `allow_outside` is set.
pub fn check_noise_regime(params: &SystemParams, derived: &DerivedConstants, allow_outside: bool) -> Result<()> {
    if params.epsilon > derived.eps0 && !allow_outside {
        return Err(Error::config(format!(
            "epsilon = {} exceeds eps0 = {} (set the override to run outside the proven regime)",
            params.epsilon, derived.eps0
        )));
    }
    Ok(())
}
