//! Floating-point scalar abstraction shared by every numeric kernel.
//!
//! Double precision is used for verification and gradient checks; single
//! precision drives training and inference.

use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst};

use crate::kernels::Tap;

pub trait Real:
    Float
    + FloatConst
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Raw strided matrix product `C = alpha * A * B + beta * C`.
    ///
    /// # Safety
    /// Pointers and strides must describe in-bounds matrices and `c` must
    /// not alias `a` or `b`. Use [`crate::linalg::gemm`] instead.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
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

    /// Specialized [`crate::kernels::row_conv`]; returns `false` when no
    /// fast path applies. Bounds are checked by the caller.
    #[doc(hidden)]
    fn row_conv_fast(_a: &[Self], _rs: usize, _rows: usize, _k: usize, _n: usize, _taps: &[Tap<'_, Self>], _out: &mut [Self]) -> bool {
        false
    }

    /// Specialized [`crate::kernels::row_conv_weight_grad`].
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    fn row_conv_weight_grad_fast(
        _a: &[Self],
        _offset: usize,
        _rs: usize,
        _rows: usize,
        _k: usize,
        _n: usize,
        _dz: &[Self],
        _dw: &mut [Self],
    ) -> bool {
        false
    }
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
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
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    fn row_conv_fast(a: &[Self], rs: usize, rows: usize, k: usize, n: usize, taps: &[Tap<'_, Self>], out: &mut [Self]) -> bool {
        crate::kernels::x86::row_conv(a, rs, rows, k, n, taps, out)
    }

    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    fn row_conv_weight_grad_fast(
        a: &[Self],
        offset: usize,
        rs: usize,
        rows: usize,
        k: usize,
        n: usize,
        dz: &[Self],
        dw: &mut [Self],
    ) -> bool {
        crate::kernels::x86::row_conv_weight_grad(a, offset, rs, rows, k, n, dz, dw)
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
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
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}
