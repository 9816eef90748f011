//! Forward and backward kernels for the layer primitives.
//!
//! Every backward function takes the forward *input* and the gradient of
//! the output, accumulates parameter gradients in place and returns the
//! gradient with respect to the input.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

const PIXEL_NORM_EPS: f64 = 1e-8;
const MBSTD_EPS: f64 = 1e-8;

#[inline]
fn axpy<T: Scalar>(out: &mut [T], a: T, x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Dot product with four independent accumulators (fixed order, so the
/// result is reproducible).
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for (j, slot) in acc.iter_mut().enumerate() {
            *slot += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Column range `[lo, hi)` of output pixels whose input `x + dx` is in bounds.
#[inline]
fn valid_range(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

/// Same-padded, stride-1 square convolution. `weight` is laid out
/// `[cout][cin][k][k]` and multiplied by `scale` at runtime.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, weight: &[T], bias: &[T], cout: usize, k: usize, scale: T) -> Tensor<T> {
    let (n, cin, h, w) = (x.n, x.c, x.h, x.w);
    let pad = (k / 2) as isize;
    let plane = h * w;
    let mut out = Tensor::zeros(n, cout, h, w);
    for s in 0..n {
        let xin = x.sample_slice(s);
        let yout = out.sample_slice_mut(s);
        for o in 0..cout {
            let oplane = &mut yout[o * plane..(o + 1) * plane];
            oplane.iter_mut().for_each(|v| *v = bias[o]);
            for i in 0..cin {
                let iplane = &xin[i * plane..(i + 1) * plane];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    let (y_lo, y_hi) = valid_range(h, dy);
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let (x_lo, x_hi) = valid_range(w, dx);
                        let wv = weight[((o * cin + i) * k + ky) * k + kx] * scale;
                        for y in y_lo..y_hi {
                            let sy = (y as isize + dy) as usize;
                            let orow = &mut oplane[y * w + x_lo..y * w + x_hi];
                            let start = (sy * w) as isize + x_lo as isize + dx;
                            let irow = &iplane[start as usize..start as usize + (x_hi - x_lo)];
                            axpy(orow, wv, irow);
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &[T],
    cout: usize,
    k: usize,
    scale: T,
    grad_out: &Tensor<T>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let (n, cin, h, w) = (x.n, x.c, x.h, x.w);
    let pad = (k / 2) as isize;
    let plane = h * w;
    let mut grad_in = Tensor::zeros(n, cin, h, w);
    for s in 0..n {
        let xin = x.sample_slice(s);
        let g = grad_out.sample_slice(s);
        let gin = grad_in.sample_slice_mut(s);
        for o in 0..cout {
            let gplane = &g[o * plane..(o + 1) * plane];
            grad_bias[o] += gplane.iter().copied().sum::<T>();
            for i in 0..cin {
                let iplane = &xin[i * plane..(i + 1) * plane];
                let giplane = &mut gin[i * plane..(i + 1) * plane];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    let (y_lo, y_hi) = valid_range(h, dy);
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let (x_lo, x_hi) = valid_range(w, dx);
                        let widx = ((o * cin + i) * k + ky) * k + kx;
                        let wv = weight[widx] * scale;
                        let mut acc = T::zero();
                        for y in y_lo..y_hi {
                            let sy = (y as isize + dy) as usize;
                            let grow = &gplane[y * w + x_lo..y * w + x_hi];
                            let start = ((sy * w) as isize + x_lo as isize + dx) as usize;
                            let len = x_hi - x_lo;
                            acc += dot(grow, &iplane[start..start + len]);
                            axpy(&mut giplane[start..start + len], wv, grow);
                        }
                        grad_weight[widx] += acc * scale;
                    }
                }
            }
        }
    }
    grad_in
}

/// Fully connected layer on `n × fin` rows; `weight` is `[fout][fin]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, weight: &[T], bias: &[T], fout: usize, scale: T) -> Tensor<T> {
    let fin = x.sample_len();
    let mut out = Tensor::zeros(x.n, fout, 1, 1);
    for s in 0..x.n {
        let xin = x.sample_slice(s);
        let y = out.sample_slice_mut(s);
        for o in 0..fout {
            y[o] = bias[o] + scale * dot(&weight[o * fin..(o + 1) * fin], xin);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &[T],
    fout: usize,
    scale: T,
    grad_out: &Tensor<T>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let fin = x.sample_len();
    let mut grad_in = Tensor::zeros(x.n, x.c, x.h, x.w);
    for s in 0..x.n {
        let xin = x.sample_slice(s);
        let g = grad_out.sample_slice(s);
        let gin = grad_in.sample_slice_mut(s);
        for o in 0..fout {
            let go = g[o];
            grad_bias[o] += go;
            let row = &weight[o * fin..(o + 1) * fin];
            axpy(gin, go * scale, row);
            axpy(&mut grad_weight[o * fin..(o + 1) * fin], go * scale, xin);
        }
    }
    grad_in
}

pub fn leaky_relu_forward<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, slope: T, grad_out: &Tensor<T>) -> Tensor<T> {
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { g * slope })
}

pub fn tanh_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

pub fn tanh_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    x.zip_map(grad_out, |v, g| {
        let t = v.tanh();
        g * (T::one() - t * t)
    })
}

#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn sigmoid_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

pub fn sigmoid_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    x.zip_map(grad_out, |v, g| {
        let s = sigmoid(v);
        g * s * (T::one() - s)
    })
}

/// Normalizes each pixel's feature vector to unit RMS across channels.
pub fn pixel_norm_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    let plane = x.plane();
    let inv_c = T::one() / T::from_usize_lossy(x.c);
    let eps = T::lit(PIXEL_NORM_EPS);
    for s in 0..x.n {
        let xs = x.sample_slice(s);
        let ys = out.sample_slice_mut(s);
        for p in 0..plane {
            let mut m = T::zero();
            for c in 0..x.c {
                let v = xs[c * plane + p];
                m += v * v;
            }
            let r = T::one() / (m * inv_c + eps).sqrt();
            for c in 0..x.c {
                ys[c * plane + p] = xs[c * plane + p] * r;
            }
        }
    }
    out
}

pub fn pixel_norm_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut grad_in = Tensor::zeros(x.n, x.c, x.h, x.w);
    let plane = x.plane();
    let inv_c = T::one() / T::from_usize_lossy(x.c);
    let eps = T::lit(PIXEL_NORM_EPS);
    for s in 0..x.n {
        let xs = x.sample_slice(s);
        let gs = grad_out.sample_slice(s);
        let gi = grad_in.sample_slice_mut(s);
        for p in 0..plane {
            let mut m = T::zero();
            let mut gx = T::zero();
            for c in 0..x.c {
                let v = xs[c * plane + p];
                m += v * v;
                gx += gs[c * plane + p] * v;
            }
            let r = T::one() / (m * inv_c + eps).sqrt();
            let coef = r * r * r * inv_c * gx;
            for c in 0..x.c {
                gi[c * plane + p] = r * gs[c * plane + p] - coef * xs[c * plane + p];
            }
        }
    }
    grad_in
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h2, w2) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.n, x.c, h2, w2);
    for s in 0..x.n {
        for c in 0..x.c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    *out.at_mut(s, c, y, xx) = x.at(s, c, y / 2, xx / 2);
                }
            }
        }
    }
    out
}

pub fn upsample_backward<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (grad_out.h / 2, grad_out.w / 2);
    let mut grad_in = Tensor::zeros(grad_out.n, grad_out.c, h, w);
    for s in 0..grad_out.n {
        for c in 0..grad_out.c {
            for y in 0..grad_out.h {
                for xx in 0..grad_out.w {
                    *grad_in.at_mut(s, c, y / 2, xx / 2) += grad_out.at(s, c, y, xx);
                }
            }
        }
    }
    grad_in
}

/// 2×2 average pooling.
pub fn downsample_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x.h / 2, x.w / 2);
    let quarter = T::lit(0.25);
    let mut out = Tensor::zeros(x.n, x.c, h, w);
    for s in 0..x.n {
        for c in 0..x.c {
            for y in 0..h {
                for xx in 0..w {
                    let v = x.at(s, c, 2 * y, 2 * xx)
                        + x.at(s, c, 2 * y, 2 * xx + 1)
                        + x.at(s, c, 2 * y + 1, 2 * xx)
                        + x.at(s, c, 2 * y + 1, 2 * xx + 1);
                    *out.at_mut(s, c, y, xx) = v * quarter;
                }
            }
        }
    }
    out
}

pub fn downsample_backward<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
    let quarter = T::lit(0.25);
    let mut grad_in = Tensor::zeros(grad_out.n, grad_out.c, grad_out.h * 2, grad_out.w * 2);
    for s in 0..grad_out.n {
        for c in 0..grad_out.c {
            for y in 0..grad_in.h {
                for xx in 0..grad_in.w {
                    *grad_in.at_mut(s, c, y, xx) = grad_out.at(s, c, y / 2, xx / 2) * quarter;
                }
            }
        }
    }
    grad_in
}

/// Appends one channel holding the batch standard deviation averaged over
/// all features and positions.
pub fn minibatch_std_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let stat = minibatch_std_stat(x);
    let mut out = Tensor::zeros(x.n, x.c + 1, x.h, x.w);
    let per = x.sample_len();
    for s in 0..x.n {
        let dst = out.sample_slice_mut(s);
        dst[..per].copy_from_slice(x.sample_slice(s));
        dst[per..].iter_mut().for_each(|v| *v = stat);
    }
    out
}

fn minibatch_std_stat<T: Scalar>(x: &Tensor<T>) -> T {
    let per = x.sample_len();
    let nb = T::from_usize_lossy(x.n);
    let eps = T::lit(MBSTD_EPS);
    let mut total = T::zero();
    for f in 0..per {
        let mean = (0..x.n).map(|s| x.data[s * per + f]).sum::<T>() / nb;
        let var = (0..x.n).map(|s| (x.data[s * per + f] - mean).powi(2)).sum::<T>() / nb;
        total += (var + eps).sqrt();
    }
    total / T::from_usize_lossy(per)
}

pub fn minibatch_std_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let per = x.sample_len();
    let plane = x.plane();
    let nb = T::from_usize_lossy(x.n);
    let eps = T::lit(MBSTD_EPS);
    let mut grad_in = Tensor::zeros(x.n, x.c, x.h, x.w);
    let mut g_stat = T::zero();
    for s in 0..x.n {
        let g = grad_out.sample_slice(s);
        grad_in.sample_slice_mut(s).copy_from_slice(&g[..per]);
        g_stat += g[per..per + plane].iter().copied().sum::<T>();
    }
    let k = g_stat / (T::from_usize_lossy(per) * nb);
    for f in 0..per {
        let mean = (0..x.n).map(|s| x.data[s * per + f]).sum::<T>() / nb;
        let var = (0..x.n).map(|s| (x.data[s * per + f] - mean).powi(2)).sum::<T>() / nb;
        let sd = (var + eps).sqrt();
        for s in 0..x.n {
            grad_in.data[s * per + f] += k * (x.data[s * per + f] - mean) / sd;
        }
    }
    grad_in
}

/// `alpha·a + (1 − alpha)·b`.
pub fn lerp<T: Scalar>(b: &Tensor<T>, a: &Tensor<T>, alpha: T) -> Tensor<T> {
    let one_minus = T::one() - alpha;
    a.zip_map(b, |va, vb| alpha * va + one_minus * vb)
}

pub fn scaled<T: Scalar>(x: &Tensor<T>, k: T) -> Tensor<T> {
    x.map(|v| v * k)
}

pub fn add_into<T: Scalar>(acc: &mut Tensor<T>, other: &Tensor<T>) {
    for (a, &b) in acc.data.iter_mut().zip(&other.data) {
        *a += b;
    }
}
