//! Sequences on the truncated lattice `-M..=M` and the difference operators
//!
//! ```text
//! (A u)_m  = -u_{m-1} + 2 u_m - u_{m+1}
//! (B u)_m  =  u_{m+1} - u_m
//! (B* u)_m =  u_{m-1} - u_m
//! ```
//!
//! Off-lattice neighbours follow a [`Boundary`] rule. With zero padding the
//! identities `(Bu, w) = (u, B*w)` and `(Au, u) >= 0` hold exactly and
//! `A = B*B` holds on interior sites; with periodic wrap `A = B*B` holds
//! everywhere.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub type Complex = num_complex::Complex64;

/// Rule for neighbours of the edge sites `m = -M` and `m = M`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// `u_m = 0` for `|m| > M`.
    #[default]
    Zero,
    /// `u_{M+1} = u_{-M}` and `u_{-M-1} = u_M`.
    Periodic,
}

/// Site values: `f64` for the long wave, [`Complex`] for the short wave.
pub trait Scalar:
    Copy
    + PartialEq
    + core::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn conj(self) -> Self;
    fn abs_sq(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn abs_sq(self) -> f64 {
        self * self
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex {
    #[inline]
    fn zero() -> Self {
        Complex::new(0.0, 0.0)
    }
    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    #[inline]
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// A sequence indexed by the sites `-M..=M`, stored densely from `-M` upward.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq<T> {
    radius: usize,
    values: Vec<T>,
}

pub type ComplexSeq = Seq<Complex>;
pub type RealSeq = Seq<f64>;

/// Number of sites on a lattice of the given radius.
#[inline]
pub const fn site_count(radius: usize) -> usize {
    2 * radius + 1
}

impl<T: Scalar> Seq<T> {
    pub fn zeros(radius: usize) -> Self {
        Seq {
            radius,
            values: vec![T::zero(); site_count(radius)],
        }
    }

    /// Builds a sequence from values listed from site `-M` to `M`.
    pub fn from_values(radius: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != site_count(radius) {
            return Err(Error::Length {
                expected: site_count(radius),
                actual: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                site: idx as i64 - radius as i64,
            });
        }
        Ok(Seq { radius, values })
    }

    /// Builds a sequence by evaluating `f` at every site `m`.
    pub fn from_fn(radius: usize, mut f: impl FnMut(i64) -> T) -> Self {
        let r = radius as i64;
        Seq {
            radius,
            values: (-r..=r).map(&mut f).collect(),
        }
    }

    /// `scale * e_site`.
    pub fn unit(radius: usize, site: i64, scale: T) -> Self {
        let mut s = Self::zeros(radius);
        s.set(site, scale);
        s
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Storage index of site `m`, or `None` off the lattice.
    #[inline]
    pub fn index_of(&self, m: i64) -> Option<usize> {
        let idx = m + self.radius as i64;
        (0..self.values.len() as i64).contains(&idx).then_some(idx as usize)
    }

    /// Value at site `m`; zero off the lattice.
    #[inline]
    pub fn get(&self, m: i64) -> T {
        self.index_of(m).map_or(T::zero(), |i| self.values[i])
    }

    /// Sets site `m`.
    ///
    /// # Panics
    ///
    /// Panics if `m` is off the lattice.
    pub fn set(&mut self, m: i64, value: T) {
        let i = self
            .index_of(m)
            .unwrap_or_else(|| panic!("site {m} outside radius {}", self.radius));
        self.values[i] = value;
    }

    /// Iterator over `(m, value)`.
    pub fn sites(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        let r = self.radius as i64;
        self.values.iter().enumerate().map(move |(i, &x)| (i as i64 - r, x))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|x| x.abs_sq()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|x| x * factor)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Seq {
            radius: self.radius,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Componentwise combination of two sequences of equal radius.
    pub fn zip_with<U: Scalar, V: Scalar>(&self, other: &Seq<U>, f: impl Fn(T, U) -> V) -> Result<Seq<V>> {
        check_radius(self.radius, other.radius)?;
        Ok(Seq {
            radius: self.radius,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }
}

impl ComplexSeq {
    /// `|u|^2` as a real sequence.
    pub fn abs_sq(&self) -> RealSeq {
        Seq {
            radius: self.radius,
            values: self.values.iter().map(|z| z.norm_sqr()).collect(),
        }
    }
}

impl RealSeq {
    pub fn to_complex(&self) -> ComplexSeq {
        Seq {
            radius: self.radius,
            values: self.values.iter().map(|&x| Complex::new(x, 0.0)).collect(),
        }
    }
}

#[inline]
pub(crate) fn check_radius(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::RadiusMismatch { left, right })
    }
}

/// Value of `values[i + offset]` under the boundary rule, `offset` being `-1` or `+1`.
#[inline(always)]
pub(crate) fn neighbor<T: Scalar>(values: &[T], i: usize, offset: isize, boundary: Boundary) -> T {
    let n = values.len();
    let j = i as isize + offset;
    if (0..n as isize).contains(&j) {
        values[j as usize]
    } else {
        match boundary {
            Boundary::Zero => T::zero(),
            Boundary::Periodic => values[j.rem_euclid(n as isize) as usize],
        }
    }
}

/// Writes `A src` into `dst`.
pub fn apply_a_into<T: Scalar>(src: &[T], dst: &mut [T], boundary: Boundary) {
    debug_assert_eq!(src.len(), dst.len());
    for (i, out) in dst.iter_mut().enumerate() {
        let left = neighbor(src, i, -1, boundary);
        let right = neighbor(src, i, 1, boundary);
        *out = src[i] * 2.0 - left - right;
    }
}

pub fn apply_a<T: Scalar>(u: &Seq<T>, boundary: Boundary) -> Seq<T> {
    let mut out = Seq::zeros(u.radius);
    apply_a_into(&u.values, &mut out.values, boundary);
    out
}

pub fn apply_b<T: Scalar>(u: &Seq<T>, boundary: Boundary) -> Seq<T> {
    let v = &u.values;
    Seq {
        radius: u.radius,
        values: (0..v.len()).map(|i| neighbor(v, i, 1, boundary) - v[i]).collect(),
    }
}

pub fn apply_b_star<T: Scalar>(u: &Seq<T>, boundary: Boundary) -> Seq<T> {
    let v = &u.values;
    Seq {
        radius: u.radius,
        values: (0..v.len()).map(|i| neighbor(v, i, -1, boundary) - v[i]).collect(),
    }
}

/// `(a, b) = sum_m a_m conj(b_m)`.
pub fn inner<T: Scalar>(a: &Seq<T>, b: &Seq<T>) -> Result<T> {
    check_radius(a.radius, b.radius)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y.conj()))
}

pub fn norm_sq<T: Scalar>(a: &Seq<T>) -> f64 {
    a.norm_sq()
}

/// The pair `(u, v)` on a common lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState {
    pub u: ComplexSeq,
    pub v: RealSeq,
}

impl LatticeState {
    pub fn new(u: ComplexSeq, v: RealSeq) -> Result<Self> {
        check_radius(u.radius(), v.radius())?;
        Ok(LatticeState { u, v })
    }

    pub fn zeros(radius: usize) -> Self {
        LatticeState {
            u: Seq::zeros(radius),
            v: Seq::zeros(radius),
        }
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.u.radius()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// `||u|| + ||v||`, the quantity watched by stopping times.
    pub fn combined_norm(&self) -> f64 {
        self.u.norm() + self.v.norm()
    }
}
