//! Scalar abstraction shared by the plain `f64` evaluation path and the
//! forward-mode dual numbers used to differentiate local energy kernels.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + Send
    + Sync
{
    fn cst(x: f64) -> Self;
    /// Primal value; branch decisions are always taken on this.
    fn val(self) -> f64;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
}

impl Real for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Forward-mode dual number carrying `N` tangent lanes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; N] }
    }

    /// Seed lane `lane` with unit tangent.
    pub fn variable(v: f64, lane: usize) -> Self {
        let mut d = [0.0; N];
        d[lane] = 1.0;
        Dual { v, d }
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn cst(x: f64) -> Self {
        Dual::constant(x)
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let k = 0.5 / s;
        let mut d = self.d;
        for x in &mut d {
            *x *= k;
        }
        Dual { v: s, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..N {
            self.d[i] += o.d[i];
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..N {
            self.d[i] -= o.d[i];
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - q * o.d[i]) * inv;
        }
        Dual { v: q, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for x in &mut self.d {
            *x = -*x;
        }
        self
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<const N: usize> MulAssign for Dual<N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.v += o;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.v -= o;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        self.v *= o;
        for x in &mut self.d {
            *x *= o;
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

/// Dot product of two equally long slices.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

/// `y += k * x`
#[inline]
pub fn axpy<T: Real>(k: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += k * *xi;
    }
}

#[inline]
pub fn scale<T: Real>(k: T, x: &[T]) -> Vec<T> {
    x.iter().map(|xi| k * *xi).collect()
}

/// Inverse of a symmetric 2x2 matrix `[[a, b], [b, c]]` together with its determinant.
#[inline]
pub fn inv_sym2<T: Real>(a: T, b: T, c: T) -> (T, T, T, T) {
    let det = a * c - b * b;
    let inv = det.recip();
    (c * inv, -b * inv, a * inv, det)
}

/// Solve the symmetric positive definite system `m x = rhs` (row-major `n x n`,
/// `rhs` holds `k` right-hand sides as an `n x k` block) by elimination without pivoting.
/// Returns `None` when a pivot falls below `rel_tol` times the largest diagonal entry.
pub fn solve_spd<T: Real>(m: &mut [T], n: usize, rhs: &mut [T], k: usize, rel_tol: f64) -> Option<()> {
    let scale = (0..n).map(|i| m[i * n + i].val().abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    for j in 0..n {
        let pivot = m[j * n + j];
        if !(pivot.val() > rel_tol * scale) {
            return None;
        }
        let inv = pivot.recip();
        for i in (j + 1)..n {
            let l = m[i * n + j] * inv;
            for c in j..n {
                let t = m[j * n + c];
                m[i * n + c] -= l * t;
            }
            for c in 0..k {
                let t = rhs[j * k + c];
                rhs[i * k + c] -= l * t;
            }
        }
    }
    for j in (0..n).rev() {
        let inv = m[j * n + j].recip();
        for c in 0..k {
            let mut s = rhs[j * k + c];
            for i in (j + 1)..n {
                s -= m[j * n + i] * rhs[i * k + c];
            }
            rhs[j * k + c] = s * inv;
        }
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_chain_rule_matches_closed_form() {
        // h(x) = sqrt(x^2 + 1) / x at x = 2
        let x = Dual::<1>::variable(2.0, 0);
        let h = (x * x + 1.0).sqrt() / x;
        let exact = {
            let s = 5f64.sqrt();
            (2.0 * 2.0 / s - s) / 4.0
        };
        assert!((h.v - 5f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((h.d[0] - exact).abs() < 1e-15);
    }

    #[test]
    fn spd_solve_recovers_solution() {
        let mut m = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let x = [1.0, -2.0, 0.5];
        let mut rhs: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| m[i * 3 + j] * x[j]).sum())
            .collect();
        solve_spd(&mut m, 3, &mut rhs, 1, 1e-14).unwrap();
        for i in 0..3 {
            assert!((rhs[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn spd_solve_rejects_singular() {
        let mut m = vec![1.0, 1.0, 1.0, 1.0];
        let mut rhs = vec![1.0, 1.0];
        assert!(solve_spd(&mut m, 2, &mut rhs, 1, 1e-12).is_none());
    }
}
