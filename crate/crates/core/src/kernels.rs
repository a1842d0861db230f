//! Row-convolution kernels used by the network.
//!
//! Both kernels treat `a` as a matrix whose row `r` starts at `off + r * rs`
//! and has `k` contiguous entries; rows may overlap. The portable versions
//! go through [`gemm`]; on x86-64 with `std` a register-blocked f32 path is
//! selected at runtime when the column count is a multiple of 16.

use crate::linalg::{gemm, MatMut, MatRef};
use crate::real::Real;

/// One shifted view of the input paired with its weight slab.
pub struct Tap<'a, T> {
    pub offset: usize,
    pub weight: &'a [T],
}

fn check_taps(a_len: usize, rs: usize, rows: usize, k: usize, n: usize, taps: &[(usize, usize)]) {
    assert!(rows > 0 && k > 0 && n > 0, "empty row convolution");
    for &(off, wlen) in taps {
        assert!(off + (rows - 1) * rs + k <= a_len, "row view out of bounds");
        assert!(wlen >= k * n, "weight slab too short");
    }
}

/// `out[r][c] += sum_t sum_j a[t.offset + r * rs + j] * t.weight[j * n + c]`
pub fn row_conv<T: Real>(a: &[T], rs: usize, rows: usize, k: usize, n: usize, taps: &[Tap<'_, T>], out: &mut [T]) {
    let shapes: alloc::vec::Vec<(usize, usize)> = taps.iter().map(|t| (t.offset, t.weight.len())).collect();
    check_taps(a.len(), rs, rows, k, n, &shapes);
    assert!(out.len() >= rows * n, "output too short");
    if T::row_conv_fast(a, rs, rows, k, n, taps, out) {
        return;
    }
    for t in taps {
        gemm(
            T::one(),
            MatRef::new(a, t.offset, rows, k, rs, 1),
            MatRef::row_major(&t.weight[..k * n], k, n),
            T::one(),
            MatMut::row_major(&mut out[..rows * n], rows, n),
        );
    }
}

/// `dw[j][c] += sum_r a[offset + r * rs + j] * dz[r * n + c]`
#[allow(clippy::too_many_arguments)]
pub fn row_conv_weight_grad<T: Real>(
    a: &[T],
    offset: usize,
    rs: usize,
    rows: usize,
    k: usize,
    n: usize,
    dz: &[T],
    dw: &mut [T],
) {
    check_taps(a.len(), rs, rows, k, n, &[(offset, dw.len())]);
    assert!(dz.len() >= rows * n, "dz too short");
    if T::row_conv_weight_grad_fast(a, offset, rs, rows, k, n, dz, dw) {
        return;
    }
    gemm(
        T::one(),
        MatRef::new(a, offset, rows, k, rs, 1).t(),
        MatRef::row_major(&dz[..rows * n], rows, n),
        T::one(),
        MatMut::row_major(&mut dw[..k * n], k, n),
    );
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
pub(crate) mod x86 {
    use super::Tap;

    const LANES: usize = 16;

    #[derive(Clone, Copy, PartialEq, Eq)]
    enum Level {
        Avx512,
        Avx2,
        None,
    }

    fn level() -> Level {
        if std::arch::is_x86_feature_detected!("avx512f") {
            Level::Avx512
        } else if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            Level::Avx2
        } else {
            Level::None
        }
    }

    /// Register-blocked 16-column tiles over one vector width.
    macro_rules! tiles {
        ($modname:ident, $feat:literal, $vec:ty, $w:expr, $load:path, $store:path, $set1:path, $fma:path, $rc:expr, $rg:expr) => {
            mod $modname {
                use super::{Tap, LANES};
                use core::arch::x86_64::*;

                const W: usize = $w;
                pub(super) const WIDTH: usize = W;
                const V: usize = LANES / W;

                #[inline(always)]
                unsafe fn conv_tile<const R: usize>(
                    a: *const f32,
                    rs: usize,
                    k: usize,
                    n: usize,
                    taps: &[(usize, *const f32)],
                    out: *mut f32,
                ) {
                    let mut acc: [[$vec; V]; R] = [[$set1(0.0); V]; R];
                    for r in 0..R {
                        for v in 0..V {
                            acc[r][v] = $load(out.add(r * n + v * W));
                        }
                    }
                    for &(off, w) in taps {
                        let ap = a.add(off);
                        for j in 0..k {
                            let mut wr: [$vec; V] = [$set1(0.0); V];
                            for v in 0..V {
                                wr[v] = $load(w.add(j * n + v * W));
                            }
                            for r in 0..R {
                                let x = $set1(*ap.add(r * rs + j));
                                for v in 0..V {
                                    acc[r][v] = $fma(x, wr[v], acc[r][v]);
                                }
                            }
                        }
                    }
                    for r in 0..R {
                        for v in 0..V {
                            $store(out.add(r * n + v * W), acc[r][v]);
                        }
                    }
                }

                #[inline(always)]
                unsafe fn grad_tile<const R: usize>(a: *const f32, rs: usize, rows: usize, n: usize, dz: *const f32, dw: *mut f32) {
                    let mut acc: [[$vec; V]; R] = [[$set1(0.0); V]; R];
                    for i in 0..R {
                        for v in 0..V {
                            acc[i][v] = $load(dw.add(i * n + v * W));
                        }
                    }
                    for r in 0..rows {
                        let mut d: [$vec; V] = [$set1(0.0); V];
                        for v in 0..V {
                            d[v] = $load(dz.add(r * n + v * W));
                        }
                        let ar = a.add(r * rs);
                        for i in 0..R {
                            let x = $set1(*ar.add(i));
                            for v in 0..V {
                                acc[i][v] = $fma(x, d[v], acc[i][v]);
                            }
                        }
                    }
                    for i in 0..R {
                        for v in 0..V {
                            $store(dw.add(i * n + v * W), acc[i][v]);
                        }
                    }
                }

                #[inline(always)]
                unsafe fn hsum(v: $vec) -> f32 {
                    let lanes: [f32; W] = core::mem::transmute(v);
                    lanes.iter().sum()
                }

                /// Narrow outputs: one dot product per (row, column), vectorized over `k`.
                #[target_feature(enable = $feat)]
                pub(super) unsafe fn conv_dot(
                    a: &[f32],
                    rs: usize,
                    rows: usize,
                    k: usize,
                    n: usize,
                    taps: &[Tap<'_, f32>],
                    out: &mut [f32],
                ) {
                    let transposed: Vec<(usize, Vec<f32>)> = taps
                        .iter()
                        .map(|t| {
                            let mut wt = vec![0f32; k * n];
                            for j in 0..k {
                                for c in 0..n {
                                    wt[c * k + j] = t.weight[j * n + c];
                                }
                            }
                            (t.offset, wt)
                        })
                        .collect();
                    let ap = a.as_ptr();
                    for r in 0..rows {
                        for c in 0..n {
                            let mut acc = $set1(0.0);
                            for (off, wt) in &transposed {
                                let ar = ap.add(off + r * rs);
                                let wp = wt.as_ptr().add(c * k);
                                for j in (0..k).step_by(W) {
                                    acc = $fma($load(ar.add(j)), $load(wp.add(j)), acc);
                                }
                            }
                            out[r * n + c] += hsum(acc);
                        }
                    }
                }

                #[target_feature(enable = $feat)]
                #[allow(clippy::too_many_arguments)]
                pub(super) unsafe fn grad_dot(
                    a: &[f32],
                    offset: usize,
                    rs: usize,
                    rows: usize,
                    k: usize,
                    n: usize,
                    dz: &[f32],
                    dw: &mut [f32],
                ) {
                    const JB: usize = 4;
                    let ap = a.as_ptr().add(offset);
                    for c in 0..n {
                        let mut j0 = 0;
                        while j0 < k {
                            let nv = ((k - j0) / W).min(JB);
                            let mut acc = [$set1(0.0); JB];
                            for r in 0..rows {
                                let x = $set1(*dz.get_unchecked(r * n + c));
                                let ar = ap.add(r * rs + j0);
                                for v in 0..JB {
                                    if v < nv {
                                        acc[v] = $fma($load(ar.add(v * W)), x, acc[v]);
                                    }
                                }
                            }
                            for v in 0..nv {
                                let lanes: [f32; W] = core::mem::transmute(acc[v]);
                                for (l, &val) in lanes.iter().enumerate() {
                                    dw[(j0 + v * W + l) * n + c] += val;
                                }
                            }
                            j0 += nv * W;
                        }
                    }
                }

                #[target_feature(enable = $feat)]
                pub(super) unsafe fn conv(a: &[f32], rs: usize, rows: usize, k: usize, n: usize, taps: &[Tap<'_, f32>], out: &mut [f32]) {
                    const R: usize = $rc;
                    let ap = a.as_ptr();
                    let op = out.as_mut_ptr();
                    for c0 in (0..n).step_by(LANES) {
                        let shifted: Vec<(usize, *const f32)> =
                            taps.iter().map(|t| (t.offset, t.weight.as_ptr().add(c0))).collect();
                        let mut r = 0;
                        while r + R <= rows {
                            conv_tile::<R>(ap.add(r * rs), rs, k, n, &shifted, op.add(r * n + c0));
                            r += R;
                        }
                        while r < rows {
                            conv_tile::<1>(ap.add(r * rs), rs, k, n, &shifted, op.add(r * n + c0));
                            r += 1;
                        }
                    }
                }

                #[target_feature(enable = $feat)]
                #[allow(clippy::too_many_arguments)]
                pub(super) unsafe fn grad(
                    a: &[f32],
                    offset: usize,
                    rs: usize,
                    rows: usize,
                    k: usize,
                    n: usize,
                    dz: &[f32],
                    dw: &mut [f32],
                ) {
                    const R: usize = $rg;
                    let ap = a.as_ptr().add(offset);
                    let wp = dw.as_mut_ptr();
                    for c0 in (0..n).step_by(LANES) {
                        let mut j = 0;
                        while j + R <= k {
                            grad_tile::<R>(ap.add(j), rs, rows, n, dz.as_ptr().add(c0), wp.add(j * n + c0));
                            j += R;
                        }
                        while j + 4 <= k {
                            grad_tile::<4>(ap.add(j), rs, rows, n, dz.as_ptr().add(c0), wp.add(j * n + c0));
                            j += 4;
                        }
                        while j < k {
                            grad_tile::<1>(ap.add(j), rs, rows, n, dz.as_ptr().add(c0), wp.add(j * n + c0));
                            j += 1;
                        }
                    }
                }
            }
        };
    }

    tiles!(avx512, "avx512f", __m512, 16, _mm512_loadu_ps, _mm512_storeu_ps, _mm512_set1_ps, _mm512_fmadd_ps, 12, 16);
    tiles!(avx2, "avx2,fma", __m256, 8, _mm256_loadu_ps, _mm256_storeu_ps, _mm256_set1_ps, _mm256_fmadd_ps, 6, 6);

    /// Bounds were checked by the caller.
    pub(crate) fn row_conv(a: &[f32], rs: usize, rows: usize, k: usize, n: usize, taps: &[Tap<'_, f32>], out: &mut [f32]) -> bool {
        let wide = n % LANES == 0;
        match level() {
            Level::Avx512 if wide => unsafe { avx512::conv(a, rs, rows, k, n, taps, out) },
            Level::Avx2 if wide => unsafe { avx2::conv(a, rs, rows, k, n, taps, out) },
            Level::Avx512 if k % avx512::WIDTH == 0 => unsafe { avx512::conv_dot(a, rs, rows, k, n, taps, out) },
            Level::Avx2 if k % avx2::WIDTH == 0 => unsafe { avx2::conv_dot(a, rs, rows, k, n, taps, out) },
            _ => return false,
        }
        true
    }

    /// Bounds were checked by the caller.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn row_conv_weight_grad(
        a: &[f32],
        offset: usize,
        rs: usize,
        rows: usize,
        k: usize,
        n: usize,
        dz: &[f32],
        dw: &mut [f32],
    ) -> bool {
        let wide = n % LANES == 0;
        match level() {
            Level::Avx512 if wide => unsafe { avx512::grad(a, offset, rs, rows, k, n, dz, dw) },
            Level::Avx2 if wide => unsafe { avx2::grad(a, offset, rs, rows, k, n, dz, dw) },
            Level::Avx512 if k % avx512::WIDTH == 0 => unsafe { avx512::grad_dot(a, offset, rs, rows, k, n, dz, dw) },
            Level::Avx2 if k % avx2::WIDTH == 0 => unsafe { avx2::grad_dot(a, offset, rs, rows, k, n, dz, dw) },
            _ => return false,
        }
        true
    }
}
