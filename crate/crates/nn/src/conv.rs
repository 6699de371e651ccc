//! im2col convolution kernels for NCHW tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;

/// Zero padding on each side of the spatial axes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn same(p: usize) -> Self {
        Self { top: p, bottom: p, left: p, right: p }
    }

    /// Bottom/right padding that rounds `(h, w)` up to multiples of `stride`.
    pub fn to_multiple(h: usize, w: usize, stride: usize) -> Self {
        Self { top: 0, bottom: h.next_multiple_of(stride) - h, left: 0, right: w.next_multiple_of(stride) - w }
    }
}

/// Geometry of one convolution, in the direction input -> output of the
/// forward (non-transposed) map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: Padding,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvShape {
    pub fn new(channels: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: Padding) -> Result<Self> {
        if stride == 0 || kh == 0 || kw == 0 {
            return Err(Error::Shape("kernel size and stride must be positive".into()));
        }
        let ph = h + pad.top + pad.bottom;
        let pw = w + pad.left + pad.right;
        if ph < kh || pw < kw {
            return Err(Error::Shape(format!("kernel {kh}x{kw} larger than padded input {ph}x{pw}")));
        }
        Ok(Self { channels, h, w, kh, kw, stride, pad, out_h: (ph - kh) / stride + 1, out_w: (pw - kw) / stride + 1 })
    }

    /// Rows of the column matrix.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Whether the column matrix is the input itself.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == Padding::default()
    }

    /// Calls `f(column-matrix row, output offset, input offset, count)` for
    /// each run of valid taps; within a run the output index advances by 1
    /// and the input index by the stride.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let s = self.stride;
        // First output index whose tap `o * s + k - pad` is >= 0, and one
        // past the last whose tap is < len.
        let valid = |k: usize, pad: usize, len: usize, out: usize| {
            let lo = pad.saturating_sub(k).div_ceil(s);
            let hi = if len + pad > k { ((len + pad - k - 1) / s + 1).min(out) } else { 0 };
            (lo, hi.max(lo))
        };
        for c in 0..self.channels {
            for ki in 0..self.kh {
                let (oi0, oi1) = valid(ki, self.pad.top, self.h, self.out_h);
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let (oj0, oj1) = valid(kj, self.pad.left, self.w, self.out_w);
                    if oj0 == oj1 {
                        continue;
                    }
                    for oi in oi0..oi1 {
                        let ii = oi * s + ki - self.pad.top;
                        let jj = oj0 * s + kj - self.pad.left;
                        f(row, oi * self.out_w + oj0, (c * self.h + ii) * self.w + jj, oj1 - oj0);
                    }
                }
            }
        }
    }

    /// Unfolds one `(C, H, W)` sample into a `(C*kh*kw, out_h*out_w)` matrix.
    pub fn im2col<T: Float>(&self, x: &[T], cols: &mut [T]) {
        cols.fill(T::zero());
        let n = self.out_len();
        let s = self.stride;
        self.for_each_run(|row, o, i, len| {
            let dst = &mut cols[row * n + o..row * n + o + len];
            if s == 1 {
                dst.copy_from_slice(&x[i..i + len]);
            } else {
                for (d, v) in dst.iter_mut().zip(x[i..].iter().step_by(s)) {
                    *d = *v;
                }
            }
        });
    }

    /// Adjoint of [`im2col`](Self::im2col): accumulates columns into `x`.
    pub fn col2im<T: Float>(&self, cols: &[T], x: &mut [T]) {
        let n = self.out_len();
        let s = self.stride;
        self.for_each_run(|row, o, i, len| {
            let src = &cols[row * n + o..row * n + o + len];
            for (d, v) in x[i..].iter_mut().step_by(s).zip(src) {
                *d = *d + *v;
            }
        });
    }
}

fn add_bias<T: Float>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn bias_grad<T: Float>(dy: &[T], db: &mut [T], plane: usize) {
    for (chunk, g) in dy.chunks(plane).zip(db.iter_mut()) {
        *g = *g + chunk.iter().copied().sum::<T>();
    }
}

/// Cross-correlation. `x` is `(N, Cin, H, W)`, `w` is `(Cout, Cin, kh, kw)`.
pub fn conv2d_forward<T: Float>(s: &ConvShape, batch: usize, cout: usize, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let (k, n) = (s.patch_len(), s.out_len());
    let in_len = s.channels * s.h * s.w;
    let mut out = vec![T::zero(); batch * cout * n];
    let mut cols = if s.is_pointwise() { Vec::new() } else { vec![T::zero(); k * n] };
    for bi in 0..batch {
        let xs = &x[bi * in_len..(bi + 1) * in_len];
        let ys = &mut out[bi * cout * n..(bi + 1) * cout * n];
        let src = if s.is_pointwise() {
            xs
        } else {
            s.im2col(xs, &mut cols);
            &cols
        };
        T::gemm(cout, k, n, T::one(), w, false, src, false, T::zero(), ys);
        if let Some(b) = b {
            add_bias(ys, b, n);
        }
    }
    out
}

/// Gradients of [`conv2d_forward`]; each output is computed only when requested.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Float>(
    s: &ConvShape,
    batch: usize,
    cout: usize,
    x: &[T],
    w: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let (k, n) = (s.patch_len(), s.out_len());
    let in_len = s.channels * s.h * s.w;
    let mut cols = vec![T::zero(); k * n];
    for bi in 0..batch {
        let dys = &dy[bi * cout * n..(bi + 1) * cout * n];
        if let Some(dw) = dw.as_deref_mut() {
            let xs = &x[bi * in_len..(bi + 1) * in_len];
            let src = if s.is_pointwise() {
                xs
            } else {
                s.im2col(xs, &mut cols);
                &cols
            };
            T::gemm(cout, n, k, T::one(), dys, false, src, true, T::one(), dw);
        }
        if let Some(db) = db.as_deref_mut() {
            bias_grad(dys, db, n);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxs = &mut dx[bi * in_len..(bi + 1) * in_len];
            if s.is_pointwise() {
                T::gemm(k, cout, n, T::one(), w, true, dys, false, T::one(), dxs);
            } else {
                T::gemm(k, cout, n, T::one(), w, true, dys, false, T::zero(), &mut cols);
                s.col2im(&cols, dxs);
            }
        }
    }
}

/// Transposed convolution, the adjoint of [`conv2d_forward`] without bias.
/// `s` describes the matching forward conv whose *input* is this op's
/// output, so `s.channels` is Cout here and `(s.out_h, s.out_w)` the input
/// spatial size. `x` is `(N, Cin, out_h, out_w)`, `w` is `(Cin, Cout, kh, kw)`.
pub fn conv_transpose2d_forward<T: Float>(s: &ConvShape, batch: usize, cin: usize, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let (k, n) = (s.patch_len(), s.out_len());
    let out_plane = s.h * s.w;
    let out_len = s.channels * out_plane;
    let mut out = vec![T::zero(); batch * out_len];
    let mut cols = vec![T::zero(); k * n];
    for bi in 0..batch {
        let xs = &x[bi * cin * n..(bi + 1) * cin * n];
        let ys = &mut out[bi * out_len..(bi + 1) * out_len];
        T::gemm(k, cin, n, T::one(), w, true, xs, false, T::zero(), &mut cols);
        s.col2im(&cols, ys);
        if let Some(b) = b {
            add_bias(ys, b, out_plane);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_backward<T: Float>(
    s: &ConvShape,
    batch: usize,
    cin: usize,
    x: &[T],
    w: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let (k, n) = (s.patch_len(), s.out_len());
    let out_plane = s.h * s.w;
    let out_len = s.channels * out_plane;
    let mut cols = vec![T::zero(); k * n];
    for bi in 0..batch {
        let dys = &dy[bi * out_len..(bi + 1) * out_len];
        if let Some(db) = db.as_deref_mut() {
            bias_grad(dys, db, out_plane);
        }
        if dx.is_none() && dw.is_none() {
            continue;
        }
        s.im2col(dys, &mut cols);
        if let Some(dx) = dx.as_deref_mut() {
            T::gemm(cin, k, n, T::one(), w, false, &cols, false, T::one(), &mut dx[bi * cin * n..(bi + 1) * cin * n]);
        }
        if let Some(dw) = dw.as_deref_mut() {
            T::gemm(cin, n, k, T::one(), &x[bi * cin * n..(bi + 1) * cin * n], false, &cols, true, T::one(), dw);
        }
    }
}
