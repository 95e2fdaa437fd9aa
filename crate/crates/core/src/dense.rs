//! Dense complex matrices, just enough for the matrix exponential.
//!
//! `expm` is scaling-and-squaring around the degree-13 Padé approximant
//! (Higham 2005). Matrices here are at most a few hundred rows, so the
//! implementation favours plain loops over blocking.

use alloc::vec;
use alloc::vec::Vec;

use crate::lattice::{Boundary, Complex};

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix {
            n,
            data: vec![Complex::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scaled(&self, s: Complex) -> Self {
        CMatrix {
            n: self.n,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// `self + s * other`
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!(self.n, other.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b * s).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        assert_eq!(n, other.n);
        let mut out = Self::zeros(n);
        for i in 0..n {
            let row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let other_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[Complex]) -> Vec<Complex> {
        let n = self.n;
        assert_eq!(n, x.len());
        (0..n)
            .map(|i| {
                self.data[i * n..(i + 1) * n]
                    .iter()
                    .zip(x)
                    .fold(Complex::new(0.0, 0.0), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// The square `size x size` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, size: usize) -> Self {
        let mut out = Self::zeros(size);
        for i in 0..size {
            for j in 0..size {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    /// Solves `self * X = rhs` by LU with partial pivoting.
    ///
    /// # Panics
    ///
    /// Panics on an exactly singular pivot.
    pub fn solve(&self, rhs: &Self) -> Self {
        let n = self.n;
        assert_eq!(n, rhs.n);
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| {
                    a[x * n + col]
                        .norm()
                        .partial_cmp(&a[y * n + col].norm())
                        .unwrap_or(core::cmp::Ordering::Equal)
                })
                .unwrap();
            assert!(a[pivot * n + col].norm() > 0.0, "singular matrix in solve");
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                    b.swap(col * n + j, pivot * n + j);
                }
            }
            let inv = Complex::new(1.0, 0.0) / a[col * n + col];
            for row in col + 1..n {
                let factor = a[row * n + col] * inv;
                if factor.re == 0.0 && factor.im == 0.0 {
                    continue;
                }
                for j in col..n {
                    let t = a[col * n + j];
                    a[row * n + j] -= factor * t;
                }
                for j in 0..n {
                    let t = b[col * n + j];
                    b[row * n + j] -= factor * t;
                }
            }
        }
        for col in (0..n).rev() {
            let pivot = a[col * n + col];
            for j in 0..n {
                b[col * n + j] /= pivot;
            }
            for row in 0..col {
                let factor = a[row * n + col];
                if factor.re == 0.0 && factor.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let t = b[col * n + j];
                    b[row * n + j] -= factor * t;
                }
            }
        }
        CMatrix { n, data: b }
    }
}

impl core::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex {
        &self.data[i * self.n + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex {
        &mut self.data[i * self.n + j]
    }
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// `exp(a)` by scaling and squaring with the [13/13] Padé approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.dim();
    if n == 0 {
        return CMatrix::zeros(0);
    }
    let norm = a.norm1();
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scaled(Complex::new(2f64.powi(-s), 0.0));
    let b = &PADE13;
    let ident = CMatrix::identity(n);
    let a2 = a.mul(&a);
    let a4 = a2.mul(&a2);
    let a6 = a4.mul(&a2);

    let inner_u = a6
        .scaled(Complex::new(b[13], 0.0))
        .add_scaled(&a4, b[11])
        .add_scaled(&a2, b[9]);
    let u = a.mul(
        &a6.mul(&inner_u)
            .add_scaled(&a6, b[7])
            .add_scaled(&a4, b[5])
            .add_scaled(&a2, b[3])
            .add_scaled(&ident, b[1]),
    );
    let inner_v = a6
        .scaled(Complex::new(b[12], 0.0))
        .add_scaled(&a4, b[10])
        .add_scaled(&a2, b[8]);
    let v = a6
        .mul(&inner_v)
        .add_scaled(&a6, b[6])
        .add_scaled(&a4, b[4])
        .add_scaled(&a2, b[2])
        .add_scaled(&ident, b[0]);

    let p = v.add_scaled(&u, 1.0);
    let q = v.add_scaled(&u, -1.0);
    let mut r = q.solve(&p);
    for _ in 0..s {
        r = r.mul(&r);
    }
    r
}

/// The generator `-iA - alpha I` of the linear short-wave flow.
pub fn short_wave_generator(radius: usize, alpha: f64, boundary: Boundary) -> CMatrix {
    let n = 2 * radius + 1;
    let mut g = CMatrix::zeros(n);
    let minus_i = Complex::new(0.0, -1.0);
    for i in 0..n {
        g[(i, i)] = minus_i * 2.0 - alpha;
        let mut link = |j: usize| g[(i, j)] += -minus_i;
        if i > 0 {
            link(i - 1);
        } else if boundary == Boundary::Periodic {
            link(n - 1);
        }
        if i + 1 < n {
            link(i + 1);
        } else if boundary == Boundary::Periodic {
            link(0);
        }
    }
    g
}

/// `(exp(t L), int_0^t exp(s L) ds)` from one exponential of the block
/// matrix `[[tL, tI], [0, 0]]`.
pub fn propagator_pair(generator: &CMatrix, t: f64) -> (CMatrix, CMatrix) {
    let n = generator.dim();
    let mut aug = CMatrix::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = generator[(i, j)] * t;
        }
        aug[(i, n + i)] = Complex::new(t, 0.0);
    }
    let e = expm(&aug);
    (e.block(0, 0, n), e.block(0, n, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex, b: Complex, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// Truncated Taylor series, adequate for small-norm inputs.
    fn taylor_exp(a: &CMatrix, terms: usize) -> CMatrix {
        let n = a.dim();
        let mut sum = CMatrix::identity(n);
        let mut term = CMatrix::identity(n);
        for k in 1..terms {
            term = term.mul(a).scaled(Complex::new(1.0 / k as f64, 0.0));
            sum = sum.add_scaled(&term, 1.0);
        }
        sum
    }

    #[test]
    fn scalar_and_diagonal() {
        let mut a = CMatrix::zeros(2);
        a[(0, 0)] = Complex::new(1.5, 0.3);
        a[(1, 1)] = Complex::new(-20.0, 7.0);
        let e = expm(&a);
        assert!(close(e[(0, 0)], a[(0, 0)].exp(), 1e-13));
        assert!(close(e[(1, 1)], a[(1, 1)].exp(), 1e-18));
        assert!(close(e[(0, 1)], Complex::new(0.0, 0.0), 1e-16));
    }

    #[test]
    fn matches_taylor_for_small_norm() {
        let mut a = CMatrix::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                a[(i, j)] = Complex::new(0.1 * (i as f64 - j as f64), 0.05 * (i + j) as f64);
            }
        }
        let e = expm(&a);
        let t = taylor_exp(&a, 40);
        for i in 0..4 {
            for j in 0..4 {
                assert!(close(e[(i, j)], t[(i, j)], 1e-14));
            }
        }
    }

    #[test]
    fn nilpotent_block() {
        // exp([[0, 1], [0, 0]] * 40) = [[1, 40], [0, 1]], exercises squaring
        let mut a = CMatrix::zeros(2);
        a[(0, 1)] = Complex::new(40.0, 0.0);
        let e = expm(&a);
        assert!(close(e[(0, 1)], Complex::new(40.0, 0.0), 1e-12));
        assert!(close(e[(0, 0)], Complex::new(1.0, 0.0), 1e-14));
    }

    #[test]
    fn rotation_generator() {
        // exp(t [[0, -1], [1, 0]]) is a rotation by t
        let t = 3.7;
        let mut a = CMatrix::zeros(2);
        a[(0, 1)] = Complex::new(-t, 0.0);
        a[(1, 0)] = Complex::new(t, 0.0);
        let e = expm(&a);
        assert!(close(e[(0, 0)], Complex::new(t.cos(), 0.0), 1e-14));
        assert!(close(e[(1, 0)], Complex::new(t.sin(), 0.0), 1e-14));
    }

    #[test]
    fn solve_recovers_identity() {
        let mut a = CMatrix::zeros(3);
        a[(0, 1)] = Complex::new(2.0, 1.0);
        a[(1, 0)] = Complex::new(1.0, 0.0);
        a[(1, 2)] = Complex::new(0.0, 3.0);
        a[(2, 2)] = Complex::new(1.0, -1.0);
        a[(2, 0)] = Complex::new(0.5, 0.0);
        let x = a.solve(&a);
        let id = CMatrix::identity(3);
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(x[(i, j)], id[(i, j)], 1e-14));
            }
        }
    }

    #[test]
    fn phi_block_of_scalar() {
        // L = -2: int_0^t e^{-2s} ds = (1 - e^{-2t}) / 2
        let mut g = CMatrix::zeros(1);
        g[(0, 0)] = Complex::new(-2.0, 0.0);
        let (p, q) = propagator_pair(&g, 0.7);
        assert!(close(p[(0, 0)], Complex::new((-1.4f64).exp(), 0.0), 1e-15));
        assert!(close(
            q[(0, 0)],
            Complex::new((1.0 - (-1.4f64).exp()) / 2.0, 0.0),
            1e-15
        ));
    }

    #[test]
    fn generator_matches_stencil() {
        let g = short_wave_generator(2, 0.5, Boundary::Periodic);
        let x: Vec<Complex> = (0..5).map(|i| Complex::new(i as f64, 1.0)).collect();
        let y = g.mul_vec(&x);
        let seq = crate::lattice::ComplexSeq::from_values(2, x.clone()).unwrap();
        let ax = crate::lattice::apply_a(&seq, Boundary::Periodic);
        for i in 0..5 {
            let want = Complex::new(0.0, -1.0) * ax.values()[i] - x[i] * 0.5;
            assert!(close(y[i], want, 1e-15));
        }
    }
}
