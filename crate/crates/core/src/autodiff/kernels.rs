//! Raw numeric kernels behind the graph operators.

use crate::error::{Error, Result};
use crate::scalar::{canonical_sum, Scalar};

/// Index plan for an equal-rank broadcast between two operands.
pub(crate) struct Broadcast {
    pub out_shape: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
}

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for d in (0..shape.len()).rev() {
        strides[d] = acc;
        acc *= shape[d];
    }
    strides
}

impl Broadcast {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!("broadcast needs equal ranks, got {a:?} and {b:?}")));
        }
        let mut out_shape = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let d = match (x, y) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => return Err(Error::Shape(format!("cannot broadcast {a:?} with {b:?}"))),
            };
            out_shape.push(d);
        }
        let mask = |shape: &[usize]| {
            let mut s = contiguous_strides(shape);
            for (d, st) in s.iter_mut().enumerate() {
                if shape[d] == 1 {
                    *st = 0;
                }
            }
            s
        };
        Ok(Self { a_strides: mask(a), b_strides: mask(b), out_shape })
    }

    pub fn len(&self) -> usize {
        self.out_shape.iter().product()
    }

    /// Calls `f(out_index, a_index, b_index)` for every output element in order.
    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let rank = self.out_shape.len();
        if rank == 0 {
            f(0, 0, 0);
            return;
        }
        let total = self.len();
        if total == 0 {
            return;
        }
        if self.a_strides == self.b_strides && !self.out_shape.contains(&1) {
            // identical shapes: a flat walk
            for i in 0..total {
                f(i, i, i);
            }
            return;
        }
        let last = self.out_shape[rank - 1];
        let (sa, sb) = (self.a_strides[rank - 1], self.b_strides[rank - 1]);
        let mut idx = vec![0usize; rank - 1];
        let (mut oa, mut ob) = (0usize, 0usize);
        for outer in 0..total / last {
            let base = outer * last;
            for j in 0..last {
                f(base + j, oa + j * sa, ob + j * sb);
            }
            for d in (0..rank - 1).rev() {
                idx[d] += 1;
                oa += self.a_strides[d];
                ob += self.b_strides[d];
                if idx[d] < self.out_shape[d] {
                    break;
                }
                oa -= self.a_strides[d] * self.out_shape[d];
                ob -= self.b_strides[d] * self.out_shape[d];
                idx[d] = 0;
            }
        }
    }
}

/// Geometry of a "same"-padded 2-D convolution in NHWC layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub ho: usize,
    pub wo: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    /// `input` is `[n, h, w, cin]`, `kernel` is `[kh, kw, cin, cout]`.
    pub fn new(input: &[usize], kernel: &[usize], stride: usize) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 {
            return Err(Error::Shape(format!(
                "conv expects rank-4 input and kernel, got {input:?} and {kernel:?}"
            )));
        }
        if !(1..=2).contains(&stride) {
            return Err(Error::InvalidArgument(format!("stride must be 1 or 2, got {stride}")));
        }
        let (n, h, w, cin) = (input[0], input[1], input[2], input[3]);
        let (kh, kw, kcin, cout) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kcin != cin {
            return Err(Error::Shape(format!(
                "kernel expects {kcin} input channels, input has {cin}"
            )));
        }
        let ho = h.div_ceil(stride);
        let wo = w.div_ceil(stride);
        let pad_h = ((ho.saturating_sub(1)) * stride + kh).saturating_sub(h);
        let pad_w = ((wo.saturating_sub(1)) * stride + kw).saturating_sub(w);
        Ok(Self { n, h, w, cin, kh, kw, cout, stride, ho, wo, pad_top: pad_h / 2, pad_left: pad_w / 2 })
    }

    pub fn rows(&self) -> usize {
        self.n * self.ho * self.wo
    }

    pub fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    /// Input coordinate for output position `o` and kernel tap `k`, if inside.
    #[inline]
    fn source(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + k) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

impl ConvGeom {
    /// Images per chunk so a chunk's patch matrix stays cache-sized.
    pub fn chunk_images(&self) -> usize {
        (CHUNK_ROWS / (self.ho * self.wo).max(1)).clamp(1, self.n.max(1))
    }

    /// Same geometry restricted to `n` images.
    pub fn with_images(&self, n: usize) -> Self {
        Self { n, ..*self }
    }

    pub fn input_len(&self) -> usize {
        self.h * self.w * self.cin
    }

    pub fn output_len(&self) -> usize {
        self.ho * self.wo * self.cout
    }
}

const CHUNK_ROWS: usize = 512;

/// Forward convolution: `[n,h,w,cin] ⋆ [kh,kw,cin,cout]`.
pub(crate) fn conv_forward<T: Scalar>(x: &[T], kernel: &[T], g: &ConvGeom) -> Vec<T> {
    let mut out = vec![T::zero(); g.n * g.output_len()];
    let step = g.chunk_images();
    let mut cols = Vec::new();
    for start in (0..g.n).step_by(step) {
        let cg = g.with_images(step.min(g.n - start));
        im2col_into(&x[start * g.input_len()..(start + cg.n) * g.input_len()], &cg, &mut cols);
        let dst = &mut out[start * g.output_len()..(start + cg.n) * g.output_len()];
        T::gemm(cg.rows(), g.patch(), g.cout, T::one(), &cols, g.patch() as isize, 1, kernel, g.cout as isize, 1, T::zero(), dst, g.cout as isize, 1);
    }
    out
}

/// Adjoint of [`conv_forward`] in its input: `[n,ho,wo,cout] → [n,h,w,cin]`.
pub(crate) fn conv_input_adjoint<T: Scalar>(y: &[T], kernel: &[T], g: &ConvGeom) -> Vec<T> {
    let mut out = vec![T::zero(); g.n * g.input_len()];
    let step = g.chunk_images();
    let mut cols = vec![T::zero(); g.with_images(step.min(g.n)).rows() * g.patch()];
    for start in (0..g.n).step_by(step) {
        let cg = g.with_images(step.min(g.n - start));
        let cols = &mut cols[..cg.rows() * g.patch()];
        let src = &y[start * g.output_len()..(start + cg.n) * g.output_len()];
        // beta = 0: the buffer is overwritten, never read
        T::gemm(cg.rows(), g.cout, g.patch(), T::one(), src, g.cout as isize, 1, kernel, 1, g.cout as isize, T::zero(), cols, g.patch() as isize, 1);
        let dst = &mut out[start * g.input_len()..(start + cg.n) * g.input_len()];
        col2im_into(cols, &cg, dst);
    }
    out
}

/// Kernel gradient `Σ patches(x)ᵀ · y` with `x` `[n,h,w,cin]` and `y` `[n,ho,wo,cout]`.
pub(crate) fn conv_kernel_grad<T: Scalar>(x: &[T], y: &[T], g: &ConvGeom) -> Vec<T> {
    let mut dk = vec![T::zero(); g.patch() * g.cout];
    let step = g.chunk_images();
    let mut cols = Vec::new();
    for start in (0..g.n).step_by(step) {
        let cg = g.with_images(step.min(g.n - start));
        im2col_into(&x[start * g.input_len()..(start + cg.n) * g.input_len()], &cg, &mut cols);
        let src = &y[start * g.output_len()..(start + cg.n) * g.output_len()];
        T::gemm(g.patch(), cg.rows(), g.cout, T::one(), &cols, 1, g.patch() as isize, src, g.cout as isize, 1, T::one(), &mut dk, g.cout as isize, 1);
    }
    dk
}

/// Unfolds `[n, h, w, cin]` into patch rows `[n·ho·wo, kh·kw·cin]`, replacing
/// the contents of `cols`.
fn im2col_into<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut Vec<T>) {
    cols.clear();
    cols.reserve(g.rows() * g.patch());
    let zeros = vec![T::zero(); g.kw * g.cin];
    for b in 0..g.n {
        let img = &x[b * g.h * g.w * g.cin..(b + 1) * g.h * g.w * g.cin];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                for ky in 0..g.kh {
                    let Some(iy) = ConvGeom::source(oy, ky, g.stride, g.pad_top, g.h) else {
                        cols.extend_from_slice(&zeros);
                        continue;
                    };
                    for kx in 0..g.kw {
                        match ConvGeom::source(ox, kx, g.stride, g.pad_left, g.w) {
                            Some(ix) => {
                                let s = (iy * g.w + ix) * g.cin;
                                cols.extend_from_slice(&img[s..s + g.cin]);
                            }
                            None => cols.extend_from_slice(&zeros[..g.cin]),
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_into`]: scatters patch rows into `x`, summing overlaps.
fn col2im_into<T: Scalar>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    let patch = g.patch();
    let mut row = 0;
    for b in 0..g.n {
        let img = &mut x[b * g.h * g.w * g.cin..(b + 1) * g.h * g.w * g.cin];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let src = &cols[row * patch..(row + 1) * patch];
                for ky in 0..g.kh {
                    let Some(iy) = ConvGeom::source(oy, ky, g.stride, g.pad_top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = ConvGeom::source(ox, kx, g.stride, g.pad_left, g.w) else {
                            continue;
                        };
                        let d = (iy * g.w + ix) * g.cin;
                        let s = (ky * g.kw + kx) * g.cin;
                        for (acc, &v) in img[d..d + g.cin].iter_mut().zip(&src[s..s + g.cin]) {
                            *acc = *acc + v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Row-major `[m,k] × [k,n]` into a fresh buffer.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, n as isize, 1, T::zero(), &mut c, n as isize, 1);
    c
}

/// Row-major `[m,k] × [n,k]ᵀ` into a fresh buffer.
pub(crate) fn matmul_bt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, 1, k as isize, T::zero(), &mut c, n as isize, 1);
    c
}

/// Row-major `[k,m]ᵀ × [k,n]` into a fresh buffer.
pub(crate) fn matmul_at<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a, 1, m as isize, b, n as isize, 1, T::zero(), &mut c, n as isize, 1);
    c
}

pub(crate) fn softmax_forward<T: Scalar>(x: &[T], outer: usize, dim: usize, inner: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    let mut lane = vec![T::zero(); dim];
    let mut scratch = vec![T::zero(); dim];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * dim * inner + j * inner + i;
            let max = (0..dim).map(|j| x[at(j)]).fold(T::neg_infinity(), T::max);
            for (j, l) in lane.iter_mut().enumerate() {
                *l = (x[at(j)] - max).exp();
            }
            scratch.copy_from_slice(&lane);
            let total = canonical_sum(&mut scratch);
            for (j, &l) in lane.iter().enumerate() {
                y[at(j)] = l / total;
            }
        }
    }
    y
}

pub(crate) fn softmax_backward<T: Scalar>(
    y: &[T],
    g: &[T],
    outer: usize,
    dim: usize,
    inner: usize,
) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * dim * inner + j * inner + i;
            let dot: T = (0..dim).map(|j| y[at(j)] * g[at(j)]).sum();
            for j in 0..dim {
                dx[at(j)] = y[at(j)] * (g[at(j)] - dot);
            }
        }
    }
    dx
}

pub(crate) fn sum_axis<T: Scalar>(x: &[T], outer: usize, dim: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); outer * inner];
    let mut lane = vec![T::zero(); dim];
    for o in 0..outer {
        for i in 0..inner {
            for (j, l) in lane.iter_mut().enumerate() {
                *l = x[o * dim * inner + j * inner + i];
            }
            out[o * inner + i] = canonical_sum(&mut lane);
        }
    }
    out
}

/// Layer normalisation over contiguous rows of width `c`; returns `(y, rstd)`.
pub(crate) fn layer_norm_forward<T: Scalar>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    c: usize,
    eps: T,
) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / c;
    let cf = T::from_usize(c).unwrap();
    let mut y = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * c..(r + 1) * c];
        let mean = row.iter().copied().sum::<T>() / cf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
        let s = T::one() / (var + eps).sqrt();
        for j in 0..c {
            y[r * c + j] = (row[j] - mean) * s * gain[j] + bias[j];
        }
        rstd.push(s);
    }
    (y, rstd)
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn layer_norm_backward<T: Scalar>(
    x: &[T],
    gain: &[T],
    rstd: &[T],
    g: &[T],
    c: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / c;
    let cf = T::from_usize(c).unwrap();
    let mut dx = vec![T::zero(); x.len()];
    let mut dgain = vec![T::zero(); c];
    let mut dbias = vec![T::zero(); c];
    let mut xhat = vec![T::zero(); c];
    let mut dxhat = vec![T::zero(); c];
    for r in 0..rows {
        let row = &x[r * c..(r + 1) * c];
        let gr = &g[r * c..(r + 1) * c];
        let mean = row.iter().copied().sum::<T>() / cf;
        let s = rstd[r];
        for j in 0..c {
            xhat[j] = (row[j] - mean) * s;
            dxhat[j] = gr[j] * gain[j];
            dgain[j] = dgain[j] + gr[j] * xhat[j];
            dbias[j] = dbias[j] + gr[j];
        }
        let mean_d = dxhat.iter().copied().sum::<T>() / cf;
        let mean_dx = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / cf;
        for j in 0..c {
            dx[r * c + j] = s * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
    }
    (dx, dgain, dbias)
}
