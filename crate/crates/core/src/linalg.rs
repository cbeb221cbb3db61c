//! Dense and banded complex matrix helpers.
//!
//! Every operator of the two-mode model is banded in the Fock basis (at most
//! pentadiagonal), so the Liouvillian kernels never form dense products. Dense
//! matrices are `ndarray::Array2` in standard (row-major) layout.

use ndarray::Array2;
use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::{c_to_f64, Cplx, Real};

/// Square complex matrix stored by diagonals: `data[i * width + (k + lower)] = A[i, i + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandOp<T: Real> {
    dim: usize,
    lower: usize,
    upper: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Real> BandOp<T> {
    pub fn zeros(dim: usize, lower: usize, upper: usize) -> Self {
        Self {
            dim,
            lower,
            upper,
            data: vec![Cplx::zero(); dim * (lower + upper + 1)],
        }
    }

    pub fn diagonal(values: &[Cplx<T>]) -> Self {
        let mut op = Self::zeros(values.len(), 0, 0);
        op.data.copy_from_slice(values);
        op
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![Cplx::one(); dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    #[inline]
    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.lower >= i && j <= i + self.upper
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.lower - i)
    }

    /// Entry `A[i, j]` (zero outside the band).
    pub fn get(&self, i: usize, j: usize) -> Cplx<T> {
        if i < self.dim && j < self.dim && self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            Cplx::zero()
        }
    }

    /// Sets `A[i, j]`. Panics if `(i, j)` lies outside the stored band.
    pub fn set(&mut self, i: usize, j: usize, v: Cplx<T>) {
        assert!(i < self.dim && j < self.dim && self.in_band(i, j), "({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    /// Column range of the band in row `i`.
    #[inline]
    fn row_cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.lower)..(i + self.upper + 1).min(self.dim)
    }

    pub fn to_dense(&self) -> Array2<Cplx<T>> {
        let mut out = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            for j in self.row_cols(i) {
                out[(i, j)] = self.get(i, j);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim, self.upper, self.lower);
        for i in 0..self.dim {
            for j in self.row_cols(i) {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    pub fn scale(&self, s: Cplx<T>) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = *v * s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zeros(
            self.dim,
            self.lower.max(other.lower),
            self.upper.max(other.upper),
        );
        for i in 0..self.dim {
            for j in self.row_cols(i) {
                out.set(i, j, out.get(i, j) + self.get(i, j));
            }
            for j in other.row_cols(i) {
                out.set(i, j, out.get(i, j) + other.get(i, j));
            }
        }
        out
    }

    /// Banded product `self * other`; bandwidths add.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let lower = (self.lower + other.lower).min(self.dim.saturating_sub(1));
        let upper = (self.upper + other.upper).min(self.dim.saturating_sub(1));
        let mut out = Self::zeros(self.dim, lower, upper);
        for i in 0..self.dim {
            for r in self.row_cols(i) {
                let a = self.get(i, r);
                for j in other.row_cols(r) {
                    out.set(i, j, out.get(i, j) + a * other.get(r, j));
                }
            }
        }
        out
    }

    /// `out = A * v` for a vector.
    pub fn apply_vec(&self, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                self.row_cols(i)
                    .fold(Cplx::zero(), |acc, j| acc + self.get(i, j) * v[j])
            })
            .collect()
    }

    /// `out = A * X` with `X` a row-major `dim x dim` buffer. Overwrites `out`.
    pub fn mul_left(&self, x: &[Cplx<T>], out: &mut [Cplx<T>]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        let w = self.width();
        for i in 0..d {
            let orow = &mut out[i * d..(i + 1) * d];
            orow.iter_mut().for_each(|v| *v = Cplx::zero());
            for r in self.row_cols(i) {
                let a = self.data[i * w + (r + self.lower - i)];
                let xrow = &x[r * d..(r + 1) * d];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o = *o + a * xv;
                }
            }
        }
    }

    /// `out = X * A` with `X` a row-major `dim x dim` buffer. Overwrites `out`.
    pub fn mul_right(&self, x: &[Cplx<T>], out: &mut [Cplx<T>]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        let w = self.width();
        for i in 0..d {
            let xrow = &x[i * d..(i + 1) * d];
            let orow = &mut out[i * d..(i + 1) * d];
            orow.iter_mut().for_each(|v| *v = Cplx::zero());
            for (r, &xv) in xrow.iter().enumerate() {
                let base = r * w + self.lower;
                for j in self.row_cols(r) {
                    orow[j] = orow[j] + xv * self.data[base + j - r];
                }
            }
        }
    }
}

/// Conjugate transpose of a dense matrix.
pub fn adjoint<T: Real>(a: &Array2<Cplx<T>>) -> Array2<Cplx<T>> {
    a.t().mapv(|z| z.conj())
}

pub fn trace<T: Real>(a: &Array2<Cplx<T>>) -> Cplx<T> {
    a.diag().iter().fold(Cplx::zero(), |acc, &z| acc + z)
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff<T: Real>(a: &Array2<Cplx<T>>, b: &Array2<Cplx<T>>) -> T {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).norm())
        .fold(T::zero(), T::max)
}

pub fn max_abs<T: Real>(a: &Array2<Cplx<T>>) -> T {
    a.iter().map(|z| z.norm()).fold(T::zero(), T::max)
}

/// `max |A - A†|` entrywise.
pub fn hermiticity_defect<T: Real>(a: &Array2<Cplx<T>>) -> T {
    let (n, m) = a.dim();
    assert_eq!(n, m);
    let mut worst = T::zero();
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Dense matrix product (small matrices only; not used on hot paths).
pub fn matmul<T: Real>(a: &Array2<Cplx<T>>, b: &Array2<Cplx<T>>) -> Array2<Cplx<T>> {
    let (n, k) = a.dim();
    let (k2, m) = b.dim();
    assert_eq!(k, k2);
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for r in 0..k {
            let av = a[(i, r)];
            if av.is_zero() {
                continue;
            }
            for j in 0..m {
                out[(i, j)] = out[(i, j)] + av * b[(r, j)];
            }
        }
    }
    out
}

/// Column-stacking vectorization: `vec[i + d * j] = A[i, j]`.
pub fn vectorize<T: Real>(a: &Array2<Cplx<T>>) -> Vec<Cplx<T>> {
    let (d, d2) = a.dim();
    assert_eq!(d, d2);
    let mut v = vec![Cplx::zero(); d * d];
    for ((i, j), &z) in a.indexed_iter() {
        v[i + d * j] = z;
    }
    v
}

/// Inverse of [`vectorize`].
pub fn unvectorize<T: Real>(v: &[Cplx<T>], d: usize) -> Array2<Cplx<T>> {
    assert_eq!(v.len(), d * d);
    Array2::from_shape_fn((d, d), |(i, j)| v[i + d * j])
}

/// Converts to a faer matrix in double precision.
pub(crate) fn to_faer<T: Real>(a: &Array2<Cplx<T>>) -> faer::Mat<faer::c64> {
    let (n, m) = a.dim();
    faer::Mat::from_fn(n, m, |i, j| {
        let z = c_to_f64(a[(i, j)]);
        faer::c64::new(z.re, z.im)
    })
}

/// Eigenvalues of the Hermitian part `(A + A†)/2`, ascending, in double precision.
pub fn hermitian_eigenvalues<T: Real>(a: &Array2<Cplx<T>>) -> Vec<f64> {
    let h = (a + &adjoint(a)).mapv(|z| z * crate::scalar::lit::<T>(0.5));
    let m = to_faer(&h);
    let mut vals = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("Hermitian eigensolver converges");
    vals.sort_by(f64::total_cmp);
    vals
}

/// Trace distance `½ ‖A − B‖₁` for Hermitian `A`, `B`.
pub fn trace_distance<T: Real>(a: &Array2<Cplx<T>>, b: &Array2<Cplx<T>>) -> f64 {
    let diff = a - b;
    0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>()
}

pub fn c64(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}
