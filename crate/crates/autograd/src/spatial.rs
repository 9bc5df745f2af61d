//! Spatial operators over NCHW tensors: convolution, horizontal warping,
//! soft-argmin disparity regression, box filtering, bilinear upsampling and
//! the small structural ops the loss terms need.

use std::rc::Rc;

use crate::backward::GradSink;
use crate::error::{shape_err, Error, Result};
use crate::op::Op;
use crate::tensor::{real, Real, Tensor};

fn dims4<T: Real>(t: &Tensor<T>, op: &'static str) -> Result<[usize; 4]> {
    match t.shape() {
        [n, c, h, w] => Ok([*n, *c, *h, *w]),
        s => shape_err(op, format!("expected rank-4 NCHW, got {:?}", s)),
    }
}

/// Run `f` over consecutive same-size planes of `buf`, optionally in
/// parallel. Planes are disjoint and each keeps its sequential inner loop,
/// so the result is identical in both modes.
fn plane_for_each<T: Send>(buf: &mut [T], plane: usize, f: impl Fn(usize, &mut [T]) + Sync) {
    debug_assert!(plane > 0 && buf.len() % plane == 0);
    if crate::parallel_enabled() && buf.len() > plane {
        use rayon::prelude::*;
        buf.par_chunks_mut(plane).enumerate().for_each(|(i, c)| f(i, c));
    } else {
        for (i, c) in buf.chunks_mut(plane).enumerate() {
            f(i, c);
        }
    }
}

/// Clamped linear-interpolation coordinates along one axis.
fn lerp_coords<T: Real>(x: T, len: usize) -> (usize, usize, T) {
    if len == 1 {
        return (0, 0, T::zero());
    }
    let max = real::<T>((len - 1) as f64);
    let xc = if x < T::zero() {
        T::zero()
    } else if x > max {
        max
    } else {
        x
    };
    let mut i0 = xc.floor().to_usize().unwrap_or(0);
    if i0 > len - 2 {
        i0 = len - 2;
    }
    let f = xc - real::<T>(i0 as f64);
    (i0, i0 + 1, f)
}

/// Valid output range along one spatial axis so that
/// `o*stride + k - padding` stays inside `[0, in_len)`.
fn out_bounds(k: usize, padding: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if k >= padding { 0 } else { (padding - k + stride - 1) / stride };
    if in_len + padding <= k {
        return (0, 0);
    }
    let hi = ((in_len - 1 + padding - k) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

fn conv_out_len(in_len: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = in_len + 2 * padding;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// 2-D cross-correlation convolution over NCHW input with OIHW weights.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let [n, ci, h, w] = dims4(input, "conv2d")?;
    let [co, ci_w, kh, kw] = dims4(weight, "conv2d")?;
    if ci != ci_w {
        return shape_err("conv2d", format!("input channels {} vs weight channels {}", ci, ci_w));
    }
    if stride == 0 {
        return shape_err("conv2d", "stride must be >= 1".into());
    }
    if let Some(b) = bias {
        if b.shape() != [co] {
            return shape_err("conv2d", format!("bias shape {:?}, expected [{}]", b.shape(), co));
        }
    }
    let (h_out, w_out) = match (conv_out_len(h, kh, stride, padding), conv_out_len(w, kw, stride, padding)) {
        (Some(a), Some(b)) if a >= 1 && b >= 1 => (a, b),
        _ => {
            return shape_err(
                "conv2d",
                format!("kernel {}x{} too large for {}x{} input with padding {}", kh, kw, h, w, padding),
            )
        }
    };

    let iv = input.values();
    let wv = weight.values();
    let bv = bias.map(|b| b.values());
    let mut out = vec![T::zero(); n * co * h_out * w_out];
    let plane = h_out * w_out;
    plane_for_each(&mut out, plane, |idx, out_plane| {
        let ni = idx / co;
        let oc = idx % co;
        if let Some(bv) = bv {
            out_plane.fill(bv[oc]);
        }
        for c in 0..ci {
            let in_plane = &iv[(ni * ci + c) * h * w..][..h * w];
            for ky in 0..kh {
                let (oy_lo, oy_hi) = out_bounds(ky, padding, stride, h, h_out);
                for kx in 0..kw {
                    let wgt = wv[((oc * ci + c) * kh + ky) * kw + kx];
                    let (ox_lo, ox_hi) = out_bounds(kx, padding, stride, w, w_out);
                    let x_off = kx as isize - padding as isize;
                    for oy in oy_lo..oy_hi {
                        let iy = (oy * stride + ky - padding) * w;
                        let out_row = &mut out_plane[oy * w_out..][..w_out];
                        for ox in ox_lo..ox_hi {
                            let ix = (ox * stride) as isize + x_off;
                            out_row[ox] = out_row[ox] + wgt * in_plane[iy + ix as usize];
                        }
                    }
                }
            }
        }
    });

    let track = input.requires_grad() || weight.requires_grad() || bias.map_or(false, |b| b.requires_grad());
    Ok(Tensor::result(vec![n, co, h_out, w_out], out, track, || Op::Conv2d {
        input: input.clone(),
        weight: weight.clone(),
        bias: bias.cloned(),
        stride,
        padding,
    }))
}

pub(crate) fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
    grad: &[T],
    sink: &mut GradSink<T>,
) {
    let [n, ci, h, w] = dims4(input, "conv2d").expect("checked at forward");
    let [co, _, kh, kw] = dims4(weight, "conv2d").expect("checked at forward");
    let h_out = conv_out_len(h, kh, stride, padding).unwrap();
    let w_out = conv_out_len(w, kw, stride, padding).unwrap();
    let iv = input.values();
    let wv = weight.values();

    if let Some(b) = bias {
        if b.requires_grad() {
            let mut gb = vec![T::zero(); co];
            for ni in 0..n {
                for oc in 0..co {
                    let g_plane = &grad[(ni * co + oc) * h_out * w_out..][..h_out * w_out];
                    let mut acc = T::zero();
                    for &g in g_plane {
                        acc = acc + g;
                    }
                    gb[oc] = gb[oc] + acc;
                }
            }
            sink.add(b, gb);
        }
    }

    if weight.requires_grad() {
        let mut gw = vec![T::zero(); weight.numel()];
        plane_for_each(&mut gw, ci * kh * kw, |oc, gw_plane| {
            for ni in 0..n {
                let g_plane = &grad[(ni * co + oc) * h_out * w_out..][..h_out * w_out];
                for c in 0..ci {
                    let in_plane = &iv[(ni * ci + c) * h * w..][..h * w];
                    for ky in 0..kh {
                        let (oy_lo, oy_hi) = out_bounds(ky, padding, stride, h, h_out);
                        for kx in 0..kw {
                            let (ox_lo, ox_hi) = out_bounds(kx, padding, stride, w, w_out);
                            let x_off = kx as isize - padding as isize;
                            let mut acc = T::zero();
                            for oy in oy_lo..oy_hi {
                                let iy = (oy * stride + ky - padding) * w;
                                let g_row = &g_plane[oy * w_out..][..w_out];
                                for ox in ox_lo..ox_hi {
                                    let ix = (ox * stride) as isize + x_off;
                                    acc = acc + g_row[ox] * in_plane[iy + ix as usize];
                                }
                            }
                            let slot = &mut gw_plane[(c * kh + ky) * kw + kx];
                            *slot = *slot + acc;
                        }
                    }
                }
            }
        });
        sink.add(weight, gw);
    }

    if input.requires_grad() {
        let mut gi = vec![T::zero(); input.numel()];
        plane_for_each(&mut gi, h * w, |idx, gi_plane| {
            let ni = idx / ci;
            let c = idx % ci;
            for oc in 0..co {
                let g_plane = &grad[(ni * co + oc) * h_out * w_out..][..h_out * w_out];
                for ky in 0..kh {
                    let (oy_lo, oy_hi) = out_bounds(ky, padding, stride, h, h_out);
                    for kx in 0..kw {
                        let wgt = wv[((oc * ci + c) * kh + ky) * kw + kx];
                        let (ox_lo, ox_hi) = out_bounds(kx, padding, stride, w, w_out);
                        let x_off = kx as isize - padding as isize;
                        for oy in oy_lo..oy_hi {
                            let iy = (oy * stride + ky - padding) * w;
                            let g_row = &g_plane[oy * w_out..][..w_out];
                            for ox in ox_lo..ox_hi {
                                let ix = ((ox * stride) as isize + x_off) as usize;
                                gi_plane[iy + ix] = gi_plane[iy + ix] + wgt * g_row[ox];
                            }
                        }
                    }
                }
            }
        });
        sink.add(input, gi);
    }
}

/// Sample `source` at `(x - disparity(x, y), y)` with bilinear interpolation
/// along x. Out-of-range samples clamp to the border and are reported in the
/// returned validity mask (1 = in range). Differentiable w.r.t. both inputs;
/// the mask never carries gradient.
pub fn warp_horizontal<T: Real>(
    source: &Tensor<T>,
    disparity: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = dims4(source, "warp_horizontal")?;
    let [nd, cd, hd, wd] = dims4(disparity, "warp_horizontal")?;
    if nd != n || cd != 1 || hd != h || wd != w {
        return shape_err(
            "warp_horizontal",
            format!("disparity shape {:?} does not match source {:?}", disparity.shape(), source.shape()),
        );
    }
    if w < 2 {
        return shape_err("warp_horizontal", "source width must be >= 2".into());
    }
    if disparity.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDisparity);
    }

    let sv = source.values();
    let dv = disparity.values();
    let w_max = real::<T>((w - 1) as f64);
    let mut out = vec![T::zero(); source.numel()];
    let mut valid = vec![T::zero(); disparity.numel()];
    for ni in 0..n {
        for y in 0..h {
            let drow = &dv[(ni * h + y) * w..][..w];
            let vrow = &mut valid[(ni * h + y) * w..][..w];
            for x in 0..w {
                let xs = real::<T>(x as f64) - drow[x];
                if xs >= T::zero() && xs <= w_max {
                    vrow[x] = T::one();
                }
                let (x0, x1, f) = lerp_coords(xs, w);
                for ch in 0..c {
                    let srow = &sv[((ni * c + ch) * h + y) * w..][..w];
                    out[((ni * c + ch) * h + y) * w + x] = (T::one() - f) * srow[x0] + f * srow[x1];
                }
            }
        }
    }

    let track = source.requires_grad() || disparity.requires_grad();
    let warped = Tensor::result(source.shape().to_vec(), out, track, || Op::WarpH {
        source: source.clone(),
        disparity: disparity.clone(),
    });
    let mask = Tensor::from_vec(disparity.shape(), valid)?;
    Ok((warped, mask))
}

pub(crate) fn warp_backward<T: Real>(
    source: &Tensor<T>,
    disparity: &Tensor<T>,
    grad: &[T],
    sink: &mut GradSink<T>,
) {
    let [n, c, h, w] = dims4(source, "warp_horizontal").expect("checked at forward");
    let sv = source.values();
    let dv = disparity.values();
    let w_max = real::<T>((w - 1) as f64);
    let need_src = source.requires_grad();
    let need_disp = disparity.requires_grad();
    let mut gs = if need_src { vec![T::zero(); source.numel()] } else { Vec::new() };
    let mut gd = if need_disp { vec![T::zero(); disparity.numel()] } else { Vec::new() };

    for ni in 0..n {
        for y in 0..h {
            let drow = &dv[(ni * h + y) * w..][..w];
            for x in 0..w {
                let xs = real::<T>(x as f64) - drow[x];
                let (x0, x1, f) = lerp_coords(xs, w);
                let interior = xs > T::zero() && xs < w_max;
                let mut slope_dot = T::zero();
                for ch in 0..c {
                    let base = ((ni * c + ch) * h + y) * w;
                    let g = grad[base + x];
                    if need_src {
                        gs[base + x0] = gs[base + x0] + (T::one() - f) * g;
                        gs[base + x1] = gs[base + x1] + f * g;
                    }
                    if need_disp && interior {
                        let srow = &sv[base..][..w];
                        slope_dot = slope_dot + g * (srow[x1] - srow[x0]);
                    }
                }
                if need_disp && interior {
                    // d(sample)/d(disparity) = -d(sample)/d(xs)
                    gd[(ni * h + y) * w + x] = -slope_dot;
                }
            }
        }
    }
    if need_src {
        sink.add(source, gs);
    }
    if need_disp {
        sink.add(disparity, gd);
    }
}

/// Softmax over negated costs, then the expected disparity index:
/// out(p) = sum_d d * softmax(-cost)_d, in [0, D-1].
pub fn soft_argmin<T: Real>(cost: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, d, h, w] = dims4(cost, "soft_argmin")?;
    if d < 2 {
        return shape_err("soft_argmin", format!("need >= 2 disparity hypotheses, got {}", d));
    }
    let cv = cost.values();
    let plane = h * w;
    let mut probs = vec![T::zero(); cost.numel()];
    let mut out = vec![T::zero(); n * plane];
    for ni in 0..n {
        for p in 0..plane {
            let mut zmax = T::neg_infinity();
            for di in 0..d {
                let z = -cv[(ni * d + di) * plane + p];
                if z > zmax {
                    zmax = z;
                }
            }
            let mut total = T::zero();
            for di in 0..d {
                let e = (-cv[(ni * d + di) * plane + p] - zmax).exp();
                probs[(ni * d + di) * plane + p] = e;
                total = total + e;
            }
            let mut expect = T::zero();
            for di in 0..d {
                let s = probs[(ni * d + di) * plane + p] / total;
                probs[(ni * d + di) * plane + p] = s;
                expect = expect + real::<T>(di as f64) * s;
            }
            out[ni * plane + p] = expect;
        }
    }
    let probs = Rc::new(probs);
    let track = cost.requires_grad();
    Ok(Tensor::result(vec![n, 1, h, w], out, track, || Op::SoftArgmin {
        cost: cost.clone(),
        probs,
    }))
}

pub(crate) fn soft_argmin_backward<T: Real>(
    cost: &Tensor<T>,
    probs: &[T],
    out: &[T],
    grad: &[T],
    sink: &mut GradSink<T>,
) {
    let [n, d, h, w] = dims4(cost, "soft_argmin").expect("checked at forward");
    let plane = h * w;
    let mut gc = vec![T::zero(); cost.numel()];
    for ni in 0..n {
        for p in 0..plane {
            let g = grad[ni * plane + p];
            let e = out[ni * plane + p];
            for di in 0..d {
                let idx = (ni * d + di) * plane + p;
                gc[idx] = g * probs[idx] * (e - real::<T>(di as f64));
            }
        }
    }
    sink.add(cost, gc);
}

/// 3x3 local mean with clamp-to-edge sampling; output keeps the input size.
pub fn box_mean3<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = dims4(x, "box_mean3")?;
    let xv = x.values();
    let ninth = real::<T>(1.0 / 9.0);
    let mut out = vec![T::zero(); x.numel()];
    let plane = h * w;
    plane_for_each(&mut out, plane, |idx, out_plane| {
        let in_plane = &xv[idx * plane..][..plane];
        for y in 0..h {
            for xx in 0..w {
                let mut acc = T::zero();
                for dy in -1i32..=1 {
                    let cy = (y as i32 + dy).clamp(0, h as i32 - 1) as usize;
                    for dx in -1i32..=1 {
                        let cx = (xx as i32 + dx).clamp(0, w as i32 - 1) as usize;
                        acc = acc + in_plane[cy * w + cx];
                    }
                }
                out_plane[y * w + xx] = acc * ninth;
            }
        }
    });
    let _ = (n, c);
    Ok(Tensor::result(x.shape().to_vec(), out, x.requires_grad(), || Op::BoxMean3(x.clone())))
}

pub(crate) fn box_mean3_backward<T: Real>(x: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
    let [_, _, h, w] = dims4(x, "box_mean3").expect("checked at forward");
    let ninth = real::<T>(1.0 / 9.0);
    let plane = h * w;
    let mut gx = vec![T::zero(); x.numel()];
    plane_for_each(&mut gx, plane, |idx, gx_plane| {
        let g_plane = &grad[idx * plane..][..plane];
        for y in 0..h {
            for xx in 0..w {
                let v = g_plane[y * w + xx] * ninth;
                for dy in -1i32..=1 {
                    let cy = (y as i32 + dy).clamp(0, h as i32 - 1) as usize;
                    for dx in -1i32..=1 {
                        let cx = (xx as i32 + dx).clamp(0, w as i32 - 1) as usize;
                        gx_plane[cy * w + cx] = gx_plane[cy * w + cx] + v;
                    }
                }
            }
        }
    });
    sink.add(x, gx);
}

/// Bilinear upsampling by an integer factor (half-pixel-centre mapping).
pub fn upsample_bilinear<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = dims4(x, "upsample_bilinear")?;
    if factor == 0 {
        return shape_err("upsample_bilinear", "factor must be >= 1".into());
    }
    let (ho, wo) = (h * factor, w * factor);
    let ytab = coord_table::<T>(h, ho);
    let xtab = coord_table::<T>(w, wo);
    let xv = x.values();
    let mut out = vec![T::zero(); n * c * ho * wo];
    plane_for_each(&mut out, ho * wo, |idx, out_plane| {
        let in_plane = &xv[idx * h * w..][..h * w];
        for yo in 0..ho {
            let (y0, y1, fy) = ytab[yo];
            for xo in 0..wo {
                let (x0, x1, fx) = xtab[xo];
                let top = (T::one() - fx) * in_plane[y0 * w + x0] + fx * in_plane[y0 * w + x1];
                let bot = (T::one() - fx) * in_plane[y1 * w + x0] + fx * in_plane[y1 * w + x1];
                out_plane[yo * wo + xo] = (T::one() - fy) * top + fy * bot;
            }
        }
    });
    let _ = (n, c);
    Ok(Tensor::result(vec![n, c, ho, wo], out, x.requires_grad(), || Op::Upsample {
        input: x.clone(),
        factor,
    }))
}

fn coord_table<T: Real>(in_len: usize, out_len: usize) -> Vec<(usize, usize, T)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| lerp_coords(real::<T>((o as f64 + 0.5) * scale - 0.5), in_len))
        .collect()
}

pub(crate) fn upsample_backward<T: Real>(x: &Tensor<T>, factor: usize, grad: &[T], sink: &mut GradSink<T>) {
    let [_, _, h, w] = dims4(x, "upsample_bilinear").expect("checked at forward");
    let (ho, wo) = (h * factor, w * factor);
    let ytab = coord_table::<T>(h, ho);
    let xtab = coord_table::<T>(w, wo);
    let mut gx = vec![T::zero(); x.numel()];
    plane_for_each(&mut gx, h * w, |idx, gx_plane| {
        let g_plane = &grad[idx * ho * wo..][..ho * wo];
        for yo in 0..ho {
            let (y0, y1, fy) = ytab[yo];
            for xo in 0..wo {
                let (x0, x1, fx) = xtab[xo];
                let g = g_plane[yo * wo + xo];
                gx_plane[y0 * w + x0] = gx_plane[y0 * w + x0] + (T::one() - fy) * (T::one() - fx) * g;
                gx_plane[y0 * w + x1] = gx_plane[y0 * w + x1] + (T::one() - fy) * fx * g;
                gx_plane[y1 * w + x0] = gx_plane[y1 * w + x0] + fy * (T::one() - fx) * g;
                gx_plane[y1 * w + x1] = gx_plane[y1 * w + x1] + fy * fx * g;
            }
        }
    });
    sink.add(x, gx);
}

/// Reverse the tensor along its last (width) axis.
pub fn flip_x<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() < 1 {
        return shape_err("flip_x", "rank must be >= 1".into());
    }
    Ok(Tensor::result(x.shape().to_vec(), flip_last(x.values(), x.shape()), x.requires_grad(), || {
        Op::FlipX(x.clone())
    }))
}

fn flip_last<T: Real>(vals: &[T], shape: &[usize]) -> Vec<T> {
    let w = *shape.last().unwrap();
    let mut out = vec![T::zero(); vals.len()];
    for (row_out, row_in) in out.chunks_mut(w).zip(vals.chunks(w)) {
        for (i, v) in row_in.iter().enumerate() {
            row_out[w - 1 - i] = *v;
        }
    }
    out
}

pub(crate) fn flip_x_backward<T: Real>(x: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
    sink.add(x, flip_last(grad, x.shape()));
}

/// Forward difference along width: out(x) = in(x+1) - in(x), last column 0.
pub fn forward_diff_x<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, _, _, w] = dims4(x, "forward_diff_x")?;
    let vals = x.values();
    let mut out = vec![T::zero(); x.numel()];
    for (row_out, row_in) in out.chunks_mut(w).zip(vals.chunks(w)) {
        for i in 0..w - 1 {
            row_out[i] = row_in[i + 1] - row_in[i];
        }
    }
    Ok(Tensor::result(x.shape().to_vec(), out, x.requires_grad(), || Op::DiffX(x.clone())))
}

/// Forward difference along height: out(y) = in(y+1) - in(y), last row 0.
pub fn forward_diff_y<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = dims4(x, "forward_diff_y")?;
    let vals = x.values();
    let mut out = vec![T::zero(); x.numel()];
    let plane = h * w;
    for p in 0..n * c {
        let src = &vals[p * plane..][..plane];
        let dst = &mut out[p * plane..][..plane];
        for y in 0..h - 1 {
            for i in 0..w {
                dst[y * w + i] = src[(y + 1) * w + i] - src[y * w + i];
            }
        }
    }
    Ok(Tensor::result(x.shape().to_vec(), out, x.requires_grad(), || Op::DiffY(x.clone())))
}

pub(crate) fn diff_backward<T: Real>(x: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>, along_x: bool) {
    let [n, c, h, w] = dims4(x, "forward_diff").expect("checked at forward");
    let mut gx = vec![T::zero(); x.numel()];
    if along_x {
        for (g_row, gx_row) in grad.chunks(w).zip(gx.chunks_mut(w)) {
            for i in 0..w {
                let mut acc = T::zero();
                if i > 0 {
                    acc = acc + g_row[i - 1];
                }
                if i < w - 1 {
                    acc = acc - g_row[i];
                }
                gx_row[i] = acc;
            }
        }
    } else {
        let plane = h * w;
        for p in 0..n * c {
            let g_plane = &grad[p * plane..][..plane];
            let gx_plane = &mut gx[p * plane..][..plane];
            for y in 0..h {
                for i in 0..w {
                    let mut acc = T::zero();
                    if y > 0 {
                        acc = acc + g_plane[(y - 1) * w + i];
                    }
                    if y < h - 1 {
                        acc = acc - g_plane[y * w + i];
                    }
                    gx_plane[y * w + i] = acc;
                }
            }
        }
    }
    sink.add(x, gx);
}

/// Concatenate along the channel axis.
pub fn concat_channels<T: Real>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if xs.is_empty() {
        return shape_err("concat_channels", "no inputs".into());
    }
    let [n, _, h, w] = dims4(xs[0], "concat_channels")?;
    let mut c_total = 0;
    for x in xs {
        let [nx, cx, hx, wx] = dims4(x, "concat_channels")?;
        if nx != n || hx != h || wx != w {
            return shape_err(
                "concat_channels",
                format!("{:?} incompatible with {:?}", x.shape(), xs[0].shape()),
            );
        }
        c_total += cx;
    }
    let plane = h * w;
    let mut out = vec![T::zero(); n * c_total * plane];
    for ni in 0..n {
        let mut c_at = 0;
        for x in xs {
            let cx = x.shape()[1];
            let src = &x.values()[ni * cx * plane..][..cx * plane];
            out[(ni * c_total + c_at) * plane..][..cx * plane].copy_from_slice(src);
            c_at += cx;
        }
    }
    let track = xs.iter().any(|x| x.requires_grad());
    Ok(Tensor::result(vec![n, c_total, h, w], out, track, || {
        Op::ConcatC(xs.iter().map(|x| (*x).clone()).collect())
    }))
}

pub(crate) fn concat_backward<T: Real>(
    xs: &[Tensor<T>],
    out_shape: &[usize],
    grad: &[T],
    sink: &mut GradSink<T>,
) {
    let (n, c_total, h, w) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let plane = h * w;
    let mut c_at = 0;
    for x in xs {
        let cx = x.shape()[1];
        if x.requires_grad() {
            let mut gx = vec![T::zero(); x.numel()];
            for ni in 0..n {
                let src = &grad[(ni * c_total + c_at) * plane..][..cx * plane];
                gx[ni * cx * plane..][..cx * plane].copy_from_slice(src);
            }
            sink.add(x, gx);
        }
        c_at += cx;
    }
}
