//! Scalar abstraction so the field runs in `f32` for training and `f64` for
//! gradient checks.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

pub trait Real: Float + Default + Debug + Send + Sync + Sum + 'static {
    /// Little-endian bytes of the value rounded to `f32`.
    fn to_f32_le(self) -> [u8; 4] {
        (self.f64() as f32).to_le_bytes()
    }

    fn of(v: f64) -> Self;

    fn f64(self) -> f64;

    /// `C ← alpha·A·B + beta·C` with arbitrary strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping `m×k`, `k×n`
    /// and `m×n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    fn of(v: f64) -> f32 {
        v as f32
    }

    fn f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    fn of(v: f64) -> f64 {
        v
    }

    fn f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Row-major dense products used by the field. Shapes are checked with
/// `assert!` since a mismatch is a programming error.
pub(crate) mod dense {
    use super::Real;

    /// `c (m×n) = a (m×k) · b (k×n) + beta·c`
    pub fn mul<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize, beta: T) {
        assert!(a.len() == m * k && b.len() == k * n && c.len() == m * n);
        if m == 0 || n == 0 {
            return;
        }
        unsafe {
            T::gemm(
                m,
                k,
                n,
                T::one(),
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            )
        }
    }

    /// `c (k×n) += aᵀ · b` with `a (m×k)` and `b (m×n)`.
    pub fn mul_at_b_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
        assert!(a.len() == m * k && b.len() == m * n && c.len() == k * n);
        if k == 0 || n == 0 {
            return;
        }
        unsafe {
            T::gemm(
                k,
                m,
                n,
                T::one(),
                a.as_ptr(),
                1,
                k as isize,
                b.as_ptr(),
                n as isize,
                1,
                T::one(),
                c.as_mut_ptr(),
                n as isize,
                1,
            )
        }
    }

    /// `c (m×k) = a (m×n) · bᵀ` with `b (k×n)`.
    pub fn mul_a_bt<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize) {
        assert!(a.len() == m * n && b.len() == k * n && c.len() == m * k);
        if m == 0 || k == 0 {
            return;
        }
        unsafe {
            T::gemm(
                m,
                n,
                k,
                T::one(),
                a.as_ptr(),
                n as isize,
                1,
                b.as_ptr(),
                1,
                n as isize,
                T::zero(),
                c.as_mut_ptr(),
                k as isize,
                1,
            )
        }
    }

}
