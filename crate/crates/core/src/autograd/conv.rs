//! im2col / col2im kernels and the convolution routines built on them.
//!
//! All routines take a single `[C, H, W]` image; the engine never batches.
//! Work is split into bands of output rows so the column buffer stays below
//! `CHUNK_ELEMS` regardless of image size.

use crate::tensor::{gemm, MatRef, Scalar};

const CHUNK_ELEMS: usize = 1 << 21;

/// Geometry of a zero-padded strided convolution over a `[C, H, W]` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

pub(crate) fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl ConvGeom {
    pub fn new(channels: usize, in_h: usize, in_w: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        let out_h = conv_out_len(in_h, kernel, stride, pad)?;
        let out_w = conv_out_len(in_w, kernel, stride, pad)?;
        Some(ConvGeom { channels, in_h, in_w, kernel, stride, pad, out_h, out_w })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn rows_per_chunk(&self) -> usize {
        (CHUNK_ELEMS / (self.col_rows() * self.out_w).max(1)).clamp(1, self.out_h.max(1))
    }

    /// Output columns `[lo, hi)` whose input column index is in bounds for
    /// kernel offset `kx`.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if p > kx { (p - kx).div_ceil(s) } else { 0 };
        let hi = if self.in_w + p > kx { ((self.in_w - 1 + p - kx) / s + 1).min(self.out_w) } else { 0 };
        (lo.min(hi), hi)
    }
}

/// Unfolds output rows `[oy0, oy1)` into `cols`, laid out `[C*k*k, rows*out_w]`.
pub(crate) fn im2col<T: Scalar>(g: &ConvGeom, src: &[T], oy0: usize, oy1: usize, cols: &mut [T]) {
    let (k, s, ow) = (g.kernel, g.stride, g.out_w);
    let l = (oy1 - oy0) * ow;
    debug_assert!(cols.len() >= g.col_rows() * l);
    for c in 0..g.channels {
        let plane = &src[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let r = (c * k + ky) * k + kx;
                let row = &mut cols[r * l..(r + 1) * l];
                let (lo, hi) = g.valid_cols(kx);
                for (j, oy) in (oy0..oy1).enumerate() {
                    let dst = &mut row[j * ow..(j + 1) * ow];
                    let iy = (oy * s + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if lo >= hi {
                        continue;
                    }
                    let ix0 = lo * s + kx - g.pad;
                    if s == 1 {
                        dst[lo..hi].copy_from_slice(&src_row[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (d, ix) in dst[lo..hi].iter_mut().zip((ix0..).step_by(s)) {
                            *d = src_row[ix];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds `cols` back into `dst`.
pub(crate) fn col2im_add<T: Scalar>(g: &ConvGeom, cols: &[T], oy0: usize, oy1: usize, dst: &mut [T]) {
    let (k, s, ow) = (g.kernel, g.stride, g.out_w);
    let l = (oy1 - oy0) * ow;
    for c in 0..g.channels {
        let plane = &mut dst[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let r = (c * k + ky) * k + kx;
                let row = &cols[r * l..(r + 1) * l];
                let (lo, hi) = g.valid_cols(kx);
                if lo >= hi {
                    continue;
                }
                for (j, oy) in (oy0..oy1).enumerate() {
                    let iy = (oy * s + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src = &row[j * ow..(j + 1) * ow];
                    let dst_row = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let ix0 = lo * s + kx - g.pad;
                    for (v, ix) in src[lo..hi].iter().zip((ix0..).step_by(s)) {
                        dst_row[ix] += *v;
                    }
                }
            }
        }
    }
}

fn band<T>(data: &[T], offset: usize, rows: usize, cols: usize, row_stride: usize) -> MatRef<'_, T> {
    MatRef { data: &data[offset..], rows, cols, row_stride, col_stride: 1 }
}

/// Forward convolution. `weight` is `[C_out, C_in, k, k]`.
pub(crate) fn conv2d_forward<T: Scalar>(g: &ConvGeom, x: &[T], weight: &[T], c_out: usize, out: &mut [T]) {
    let kr = g.col_rows();
    let plane = g.out_h * g.out_w;
    let rpc = g.rows_per_chunk();
    let mut cols = vec![T::zero(); kr * rpc * g.out_w];
    let wmat = MatRef::row_major(weight, c_out, kr);
    for oy0 in (0..g.out_h).step_by(rpc) {
        let oy1 = (oy0 + rpc).min(g.out_h);
        let l = (oy1 - oy0) * g.out_w;
        im2col(g, x, oy0, oy1, &mut cols[..kr * l]);
        gemm(
            T::one(),
            wmat,
            MatRef::row_major(&cols[..kr * l], kr, l),
            T::zero(),
            &mut out[oy0 * g.out_w..],
            plane,
        );
    }
}

/// Gradients of [`conv2d_forward`]. `grad_w` is accumulated into; `grad_x`
/// (when requested) is accumulated into as well.
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    weight: &[T],
    c_out: usize,
    grad_out: &[T],
    grad_w: Option<&mut [T]>,
    grad_x: Option<&mut [T]>,
) {
    let kr = g.col_rows();
    let plane = g.out_h * g.out_w;
    let rpc = g.rows_per_chunk();
    let mut cols = vec![T::zero(); kr * rpc * g.out_w];
    let wmat = MatRef::row_major(weight, c_out, kr);
    let mut grad_w = grad_w;
    let mut grad_x = grad_x;
    for oy0 in (0..g.out_h).step_by(rpc) {
        let oy1 = (oy0 + rpc).min(g.out_h);
        let l = (oy1 - oy0) * g.out_w;
        let gout = band(grad_out, oy0 * g.out_w, c_out, l, plane);
        if let Some(gw) = grad_w.as_deref_mut() {
            im2col(g, x, oy0, oy1, &mut cols[..kr * l]);
            gemm(T::one(), gout, MatRef::row_major(&cols[..kr * l], kr, l).t(), T::one(), gw, kr);
        }
        if let Some(gx) = grad_x.as_deref_mut() {
            gemm(T::one(), wmat.t(), gout, T::zero(), &mut cols[..kr * l], l);
            col2im_add(g, &cols[..kr * l], oy0, oy1, gx);
        }
    }
}

/// Forward transposed convolution. `g` describes the *adjoint* convolution:
/// its input is the `[C_out, H_out, W_out]` result and its output grid is the
/// `[C_in, H, W]` argument. `weight` is `[C_in, C_out, k, k]`.
pub(crate) fn conv_transpose2d_forward<T: Scalar>(g: &ConvGeom, x: &[T], weight: &[T], c_in: usize, out: &mut [T]) {
    let kr = g.col_rows();
    let plane = g.out_h * g.out_w;
    let rpc = g.rows_per_chunk();
    let mut cols = vec![T::zero(); kr * rpc * g.out_w];
    let wmat = MatRef::row_major(weight, c_in, kr);
    for iy0 in (0..g.out_h).step_by(rpc) {
        let iy1 = (iy0 + rpc).min(g.out_h);
        let l = (iy1 - iy0) * g.out_w;
        gemm(T::one(), wmat.t(), band(x, iy0 * g.out_w, c_in, l, plane), T::zero(), &mut cols[..kr * l], l);
        col2im_add(g, &cols[..kr * l], iy0, iy1, out);
    }
}

pub(crate) fn conv_transpose2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    weight: &[T],
    c_in: usize,
    grad_out: &[T],
    grad_w: Option<&mut [T]>,
    grad_x: Option<&mut [T]>,
) {
    let kr = g.col_rows();
    let plane = g.out_h * g.out_w;
    let rpc = g.rows_per_chunk();
    let mut cols = vec![T::zero(); kr * rpc * g.out_w];
    let wmat = MatRef::row_major(weight, c_in, kr);
    let mut grad_w = grad_w;
    let mut grad_x = grad_x;
    for iy0 in (0..g.out_h).step_by(rpc) {
        let iy1 = (iy0 + rpc).min(g.out_h);
        let l = (iy1 - iy0) * g.out_w;
        im2col(g, grad_out, iy0, iy1, &mut cols[..kr * l]);
        let dcols = MatRef::row_major(&cols[..kr * l], kr, l);
        if let Some(gx) = grad_x.as_deref_mut() {
            gemm(T::one(), wmat, dcols, T::one(), &mut gx[iy0 * g.out_w..], plane);
        }
        if let Some(gw) = grad_w.as_deref_mut() {
            gemm(T::one(), band(x, iy0 * g.out_w, c_in, l, plane), dcols.t(), T::one(), gw, kr);
        }
    }
}
