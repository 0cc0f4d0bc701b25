//! Convolution kernels built on im2col/col2im and a single-precision GEMM.
//!
//! Work is split into bands of output rows so the column buffer stays small
//! regardless of image size. Every output element is produced by exactly one
//! GEMM call with a fixed reduction order, which keeps results bit-stable from
//! run to run.

use super::tensor::{Shape, Tensor};

const COLUMN_BUDGET: usize = 1 << 18;

/// Geometry of a strided 2-D correlation from an input plane to an output plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Output size of a convolution; `None` when the kernel does not fit.
    pub fn forward(
        channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
    ) -> Option<Self> {
        let ph = in_h + 2 * pad;
        let pw = in_w + 2 * pad;
        if stride == 0 || kernel == 0 || ph < kernel || pw < kernel {
            return None;
        }
        Some(Self {
            channels,
            kernel,
            stride,
            pad,
            in_h,
            in_w,
            out_h: (ph - kernel) / stride + 1,
            out_w: (pw - kernel) / stride + 1,
        })
    }

    /// Geometry whose *output* is the transposed convolution's input.
    pub fn transposed(
        channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
    ) -> Option<Self> {
        let big_h = ((in_h.checked_sub(1)?) * stride + kernel).checked_sub(2 * pad)?;
        let big_w = ((in_w.checked_sub(1)?) * stride + kernel).checked_sub(2 * pad)?;
        let g = Self::forward(channels, kernel, stride, pad, big_h, big_w)?;
        debug_assert_eq!((g.out_h, g.out_w), (in_h, in_w));
        Some(g)
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn band_rows(&self) -> usize {
        (COLUMN_BUDGET / (self.patch_len() * self.out_w).max(1)).clamp(1, self.out_h)
    }

    fn bands(&self) -> impl Iterator<Item = (usize, usize)> {
        let step = self.band_rows();
        let out_h = self.out_h;
        (0..out_h)
            .step_by(step)
            .map(move |r0| (r0, (r0 + step).min(out_h)))
    }
}

/// Gather input patches for output rows `r0..r1` into `cols` laid out as
/// `[channels * k * k, (r1 - r0) * out_w]`.
fn im2col(input: &[f32], g: &ConvGeometry, r0: usize, r1: usize, cols: &mut [f32]) {
    let len = (r1 - r0) * g.out_w;
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * len..(row + 1) * len];
                for (ri, oy) in (r0..r1).enumerate() {
                    let out_row = &mut dst[ri * g.out_w..(ri + 1) * g.out_w];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix >= 0 && (ix as usize) < g.in_w {
                            src[ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add the inverse of [`im2col`].
fn col2im(cols: &[f32], g: &ConvGeometry, r0: usize, r1: usize, output: &mut [f32]) {
    let len = (r1 - r0) * g.out_w;
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut output[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * len..(row + 1) * len];
                for (ri, oy) in (r0..r1).enumerate() {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let col_row = &src[ri * g.out_w..(ri + 1) * g.out_w];
                    for (ox, v) in col_row.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Row-major strided matrix view used by [`gemm`].
#[derive(Clone, Copy)]
struct View {
    rs: usize,
    cs: usize,
}

/// `c = alpha * a(m×k) * b(k×n) + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    av: View,
    b: &[f32],
    bv: View,
    beta: f32,
    c: &mut [f32],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |v: View, rows: usize, cols: usize| (rows - 1) * v.rs + (cols - 1) * v.cs;
    assert!(k == 0 || last(av, m, k) < a.len(), "gemm: lhs out of bounds");
    assert!(k == 0 || last(bv, k, n) < b.len(), "gemm: rhs out of bounds");
    assert!(last(cv, m, n) < c.len(), "gemm: output out of bounds");
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr(),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr(),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// Hyperparameters of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn weight_len(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel * self.kernel
    }

    pub fn weight_shape(&self, transposed: bool) -> Vec<usize> {
        if transposed {
            vec![self.in_channels, self.out_channels, self.kernel, self.kernel]
        } else {
            vec![self.out_channels, self.in_channels, self.kernel, self.kernel]
        }
    }

    pub fn output_shape(&self, input: Shape, transposed: bool) -> Option<Shape> {
        if input.c != self.in_channels {
            return None;
        }
        let (h, w) = if transposed {
            let g = ConvGeometry::transposed(
                self.out_channels,
                self.kernel,
                self.stride,
                self.pad,
                input.h,
                input.w,
            )?;
            (g.in_h, g.in_w)
        } else {
            let g = ConvGeometry::forward(
                self.in_channels,
                self.kernel,
                self.stride,
                self.pad,
                input.h,
                input.w,
            )?;
            (g.out_h, g.out_w)
        };
        Some(Shape::new(input.n, self.out_channels, h, w))
    }
}

fn add_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (ch, b) in out.chunks_mut(plane).zip(bias) {
        for v in ch {
            *v += b;
        }
    }
}

fn accumulate_bias_grad(dy: &[f32], db: &mut [f32], plane: usize) {
    for (ch, g) in dy.chunks(plane).zip(db.iter_mut()) {
        let s: f64 = ch.iter().map(|&v| v as f64).sum();
        *g += s as f32;
    }
}

/// Forward pass of a strided convolution with weight `[out, in, k, k]`.
///
/// Panics when the input channels do not match `spec`.
pub fn conv2d(x: &Tensor, spec: &ConvSpec, weight: &[f32], bias: &[f32]) -> Tensor {
    let s = x.shape();
    let g = ConvGeometry::forward(spec.in_channels, spec.kernel, spec.stride, spec.pad, s.h, s.w)
        .expect("convolution kernel larger than padded input");
    assert_eq!(s.c, spec.in_channels);
    let out_shape = Shape::new(s.n, spec.out_channels, g.out_h, g.out_w);
    let mut out = Tensor::zeros(out_shape);
    let patch = g.patch_len();
    let plane = g.out_h * g.out_w;
    let mut cols = vec![0.0f32; patch * g.band_rows() * g.out_w];
    for n in 0..s.n {
        let xin = x.item(n);
        let yout = out.item_mut(n);
        for (r0, r1) in g.bands() {
            let len = (r1 - r0) * g.out_w;
            im2col(xin, &g, r0, r1, &mut cols[..patch * len]);
            gemm(
                spec.out_channels,
                patch,
                len,
                weight,
                View { rs: patch, cs: 1 },
                &cols[..patch * len],
                View { rs: len, cs: 1 },
                0.0,
                &mut yout[r0 * g.out_w..],
                View { rs: plane, cs: 1 },
            );
        }
        add_bias(yout, bias, plane);
    }
    out
}

/// Backward pass of [`conv2d`]. Accumulates into `dw`/`db` when given and
/// returns the input gradient when `need_dx` is set.
pub fn conv2d_backward(
    x: &Tensor,
    dy: &Tensor,
    spec: &ConvSpec,
    weight: &[f32],
    mut grads: Option<(&mut [f32], &mut [f32])>,
    need_dx: bool,
) -> Option<Tensor> {
    let s = x.shape();
    let g = ConvGeometry::forward(spec.in_channels, spec.kernel, spec.stride, spec.pad, s.h, s.w)
        .expect("convolution kernel larger than padded input");
    let patch = g.patch_len();
    let plane = g.out_h * g.out_w;
    let mut dx = need_dx.then(|| Tensor::zeros(s));
    if grads.is_none() && dx.is_none() {
        return None;
    }
    let mut cols = vec![0.0f32; patch * g.band_rows() * g.out_w];
    let mut dcols = vec![0.0f32; if need_dx { cols.len() } else { 0 }];
    for n in 0..s.n {
        let xin = x.item(n);
        let dyn_ = dy.item(n);
        if let Some((_, db)) = grads.as_mut() {
            accumulate_bias_grad(dyn_, db, plane);
        }
        for (r0, r1) in g.bands() {
            let len = (r1 - r0) * g.out_w;
            let dy_band = &dyn_[r0 * g.out_w..];
            if let Some((dw, _)) = grads.as_mut() {
                im2col(xin, &g, r0, r1, &mut cols[..patch * len]);
                gemm(
                    spec.out_channels,
                    len,
                    patch,
                    dy_band,
                    View { rs: plane, cs: 1 },
                    &cols[..patch * len],
                    View { rs: 1, cs: len },
                    1.0,
                    dw,
                    View { rs: patch, cs: 1 },
                );
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    patch,
                    spec.out_channels,
                    len,
                    weight,
                    View { rs: 1, cs: patch },
                    dy_band,
                    View { rs: plane, cs: 1 },
                    0.0,
                    &mut dcols[..patch * len],
                    View { rs: len, cs: 1 },
                );
                col2im(&dcols[..patch * len], &g, r0, r1, dx.item_mut(n));
            }
        }
    }
    dx
}

/// Forward pass of a transposed convolution with weight `[in, out, k, k]`.
pub fn conv_transpose2d(x: &Tensor, spec: &ConvSpec, weight: &[f32], bias: &[f32]) -> Tensor {
    let s = x.shape();
    assert_eq!(s.c, spec.in_channels);
    let g = ConvGeometry::transposed(spec.out_channels, spec.kernel, spec.stride, spec.pad, s.h, s.w)
        .expect("invalid transposed convolution geometry");
    let out_shape = Shape::new(s.n, spec.out_channels, g.in_h, g.in_w);
    let mut out = Tensor::zeros(out_shape);
    let patch = g.patch_len();
    let plane_in = s.h * s.w;
    let mut cols = vec![0.0f32; patch * g.band_rows() * g.out_w];
    for n in 0..s.n {
        let xin = x.item(n);
        let yout = out.item_mut(n);
        for (r0, r1) in g.bands() {
            let len = (r1 - r0) * g.out_w;
            gemm(
                patch,
                spec.in_channels,
                len,
                weight,
                View { rs: 1, cs: patch },
                &xin[r0 * s.w..],
                View { rs: plane_in, cs: 1 },
                0.0,
                &mut cols[..patch * len],
                View { rs: len, cs: 1 },
            );
            col2im(&cols[..patch * len], &g, r0, r1, yout);
        }
        add_bias(yout, bias, g.in_h * g.in_w);
    }
    out
}

/// Backward pass of [`conv_transpose2d`].
pub fn conv_transpose2d_backward(
    x: &Tensor,
    dy: &Tensor,
    spec: &ConvSpec,
    weight: &[f32],
    mut grads: Option<(&mut [f32], &mut [f32])>,
    need_dx: bool,
) -> Option<Tensor> {
    let s = x.shape();
    let g = ConvGeometry::transposed(spec.out_channels, spec.kernel, spec.stride, spec.pad, s.h, s.w)
        .expect("invalid transposed convolution geometry");
    let patch = g.patch_len();
    let plane_in = s.h * s.w;
    let mut dx = need_dx.then(|| Tensor::zeros(s));
    if grads.is_none() && dx.is_none() {
        return None;
    }
    let mut cols = vec![0.0f32; patch * g.band_rows() * g.out_w];
    for n in 0..s.n {
        let xin = x.item(n);
        let dyn_ = dy.item(n);
        if let Some((_, db)) = grads.as_mut() {
            accumulate_bias_grad(dyn_, db, g.in_h * g.in_w);
        }
        for (r0, r1) in g.bands() {
            let len = (r1 - r0) * g.out_w;
            im2col(dyn_, &g, r0, r1, &mut cols[..patch * len]);
            if let Some(dx) = dx.as_mut() {
                gemm(
                    spec.in_channels,
                    patch,
                    len,
                    weight,
                    View { rs: patch, cs: 1 },
                    &cols[..patch * len],
                    View { rs: len, cs: 1 },
                    0.0,
                    &mut dx.item_mut(n)[r0 * s.w..],
                    View { rs: plane_in, cs: 1 },
                );
            }
            if let Some((dw, _)) = grads.as_mut() {
                gemm(
                    spec.in_channels,
                    len,
                    patch,
                    &xin[r0 * s.w..],
                    View { rs: plane_in, cs: 1 },
                    &cols[..patch * len],
                    View { rs: 1, cs: len },
                    1.0,
                    dw,
                    View { rs: patch, cs: 1 },
                );
            }
        }
    }
    dx
}
