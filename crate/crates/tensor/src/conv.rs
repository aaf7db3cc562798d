//! 2D convolution, transposed convolution, and average pooling.
//!
//! Kernels are plain nested loops arranged so the innermost loop walks
//! contiguous memory. Reduction order is fixed, so results are
//! deterministic for a given input.

use crate::error::{config_err, shape_err, Result, TensorError};
use crate::tape::{accumulate, Tape, Var};
use crate::tensor::Tensor;

fn dims4(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(shape_err(op, format!("expected rank-4 tensor, got {s:?}")));
    }
    Ok((s[0], s[1], s[2], s[3]))
}

/// out[n,o,oh,ow] = bias[o] + sum over c,kh,kw of x * w
fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor> {
    let (n, c, h, wd) = dims4("conv2d", x)?;
    let (oc, wc, kh, kw) = dims4("conv2d", w)?;
    if wc != c {
        return Err(TensorError::DimMismatch {
            op: "conv2d",
            axis: 1,
            left: c,
            right: wc,
        });
    }
    if b.shape() != [oc] {
        return Err(shape_err(
            "conv2d",
            format!("bias shape {:?} does not match {oc} output channels", b.shape()),
        ));
    }
    let (sh, sw) = stride;
    let (ph, pw) = pad;
    if sh == 0 || sw == 0 {
        return Err(config_err("conv2d", "zero stride"));
    }
    if h + 2 * ph < kh || wd + 2 * pw < kw {
        return Err(shape_err(
            "conv2d",
            format!("kernel {kh}x{kw} does not fit padded input {}x{}", h + 2 * ph, wd + 2 * pw),
        ));
    }
    let oh = (h + 2 * ph - kh) / sh + 1;
    let ow = (wd + 2 * pw - kw) / sw + 1;
    let mut out = vec![0.0f32; n * oc * oh * ow];
    let xd = x.data();
    let wdat = w.data();
    let bd = b.data();
    for ni in 0..n {
        for o in 0..oc {
            let out_plane = &mut out[(ni * oc + o) * oh * ow..(ni * oc + o + 1) * oh * ow];
            out_plane.fill(bd[o]);
            for ci in 0..c {
                let x_plane = &xd[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                for khi in 0..kh {
                    for kwi in 0..kw {
                        let wv = wdat[((o * c + ci) * kh + khi) * kw + kwi];
                        if wv == 0.0 {
                            continue;
                        }
                        // Valid output column range for this kernel tap.
                        let (ow_lo, ow_hi) = tap_range(kwi, pw, sw, wd, ow);
                        for ohi in 0..oh {
                            let ih = (ohi * sh + khi) as isize - ph as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let x_row = &x_plane[ih as usize * wd..(ih as usize + 1) * wd];
                            let o_row = &mut out_plane[ohi * ow..(ohi + 1) * ow];
                            // tap_range guarantees owi*sw + kwi >= pw here.
                            if sw == 1 {
                                let shift = ow_lo + kwi - pw;
                                let x_seg = &x_row[shift..shift + (ow_hi - ow_lo)];
                                let o_seg = &mut o_row[ow_lo..ow_hi];
                                for (o_v, x_v) in o_seg.iter_mut().zip(x_seg) {
                                    *o_v += wv * x_v;
                                }
                            } else {
                                for owi in ow_lo..ow_hi {
                                    o_row[owi] += wv * x_row[owi * sw + kwi - pw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, oc, oh, ow], out)
}

/// Output columns `ow` for which `ow*sw + kwi - pw` lands inside `[0, wd)`.
fn tap_range(kwi: usize, pw: usize, sw: usize, wd: usize, ow: usize) -> (usize, usize) {
    let lo = if kwi >= pw {
        0
    } else {
        (pw - kwi).div_ceil(sw)
    };
    let hi_raw = wd as isize - 1 - kwi as isize + pw as isize;
    if hi_raw < 0 {
        return (0, 0);
    }
    let hi = (hi_raw as usize / sw + 1).min(ow);
    (lo.min(hi), hi)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
    need_gx: bool,
    need_gw: bool,
) -> (Option<Tensor>, Option<Tensor>, Tensor) {
    let (n, c, h, wd) = {
        let s = x.shape();
        (s[0], s[1], s[2], s[3])
    };
    let (oc, _, kh, kw) = {
        let s = w.shape();
        (s[0], s[1], s[2], s[3])
    };
    let (oh, ow) = {
        let s = grad_out.shape();
        (s[2], s[3])
    };
    let (sh, sw) = stride;
    let (ph, pw) = pad;
    let xd = x.data();
    let wdat = w.data();
    let gd = grad_out.data();

    let mut gb = vec![0.0f32; oc];
    for ni in 0..n {
        for o in 0..oc {
            let g_plane = &gd[(ni * oc + o) * oh * ow..(ni * oc + o + 1) * oh * ow];
            let mut acc = 0.0f32;
            for &v in g_plane {
                acc += v;
            }
            gb[o] += acc;
        }
    }

    let gx = if need_gx {
        let mut gx = vec![0.0f32; n * c * h * wd];
        for ni in 0..n {
            for o in 0..oc {
                let g_plane = &gd[(ni * oc + o) * oh * ow..(ni * oc + o + 1) * oh * ow];
                for ci in 0..c {
                    let gx_plane =
                        &mut gx[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                    for khi in 0..kh {
                        for kwi in 0..kw {
                            let wv = wdat[((o * c + ci) * kh + khi) * kw + kwi];
                            if wv == 0.0 {
                                continue;
                            }
                            let (ow_lo, ow_hi) = tap_range(kwi, pw, sw, wd, ow);
                            for ohi in 0..oh {
                                let ih = (ohi * sh + khi) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let gx_row = &mut gx_plane
                                    [ih as usize * wd..(ih as usize + 1) * wd];
                                let g_row = &g_plane[ohi * ow..(ohi + 1) * ow];
                                if sw == 1 {
                                    let shift = ow_lo + kwi - pw;
                                    let gx_seg = &mut gx_row[shift..shift + (ow_hi - ow_lo)];
                                    let g_seg = &g_row[ow_lo..ow_hi];
                                    for (gx_v, g_v) in gx_seg.iter_mut().zip(g_seg) {
                                        *gx_v += wv * g_v;
                                    }
                                } else {
                                    for owi in ow_lo..ow_hi {
                                        gx_row[owi * sw + kwi - pw] += wv * g_row[owi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(Tensor::new(vec![n, c, h, wd], gx).expect("shape"))
    } else {
        None
    };

    let gw = if need_gw {
        let mut gw = vec![0.0f32; oc * c * kh * kw];
        for ni in 0..n {
            for o in 0..oc {
                let g_plane = &gd[(ni * oc + o) * oh * ow..(ni * oc + o + 1) * oh * ow];
                for ci in 0..c {
                    let x_plane = &xd[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                    for khi in 0..kh {
                        for kwi in 0..kw {
                            let (ow_lo, ow_hi) = tap_range(kwi, pw, sw, wd, ow);
                            let mut acc = 0.0f32;
                            for ohi in 0..oh {
                                let ih = (ohi * sh + khi) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let x_row =
                                    &x_plane[ih as usize * wd..(ih as usize + 1) * wd];
                                let g_row = &g_plane[ohi * ow..(ohi + 1) * ow];
                                if sw == 1 {
                                    let shift = ow_lo + kwi - pw;
                                    let x_seg = &x_row[shift..shift + (ow_hi - ow_lo)];
                                    let g_seg = &g_row[ow_lo..ow_hi];
                                    for (g_v, x_v) in g_seg.iter().zip(x_seg) {
                                        acc += g_v * x_v;
                                    }
                                } else {
                                    for owi in ow_lo..ow_hi {
                                        acc += g_row[owi] * x_row[owi * sw + kwi - pw];
                                    }
                                }
                            }
                            gw[((o * c + ci) * kh + khi) * kw + kwi] += acc;
                        }
                    }
                }
            }
        }
        Some(Tensor::new(vec![oc, c, kh, kw], gw).expect("shape"))
    } else {
        None
    };

    (gx, gw, Tensor::new(vec![oc], gb).expect("shape"))
}

impl Tape {
    /// 2D convolution over `[N,C,H,W]` input with `[O,C,kh,kw]` weights.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var> {
        let out = conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push_op(
            out,
            &[x, w, b],
            Box::new(move |tape, g, grads| {
                let need_gx = tape.needs_grad(x);
                let need_gw = tape.needs_grad(w);
                let (gx, gw, gb) = conv2d_backward(
                    tape.value(x),
                    tape.value(w),
                    g,
                    stride,
                    pad,
                    need_gx,
                    need_gw,
                );
                if let Some(gx) = gx {
                    accumulate(grads, x, gx);
                }
                if let Some(gw) = gw {
                    accumulate(grads, w, gw);
                }
                if tape.needs_grad(b) {
                    accumulate(grads, b, gb);
                }
            }),
        ))
    }

    /// Transposed convolution with kernel size equal to stride, so each
    /// input pixel expands into a disjoint `sh x sw` output block.
    /// Weights are `[C_in, C_out, kh, kw]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: (usize, usize),
    ) -> Result<Var> {
        let (n, c, h, wd) = dims4("conv_transpose2d", self.value(x))?;
        let (wc, oc, kh, kw) = dims4("conv_transpose2d", self.value(w))?;
        if wc != c {
            return Err(TensorError::DimMismatch {
                op: "conv_transpose2d",
                axis: 1,
                left: c,
                right: wc,
            });
        }
        let (sh, sw) = stride;
        if (kh, kw) != (sh, sw) {
            return Err(config_err(
                "conv_transpose2d",
                format!("kernel {kh}x{kw} must equal stride {sh}x{sw}"),
            ));
        }
        if self.value(b).shape() != [oc] {
            return Err(shape_err(
                "conv_transpose2d",
                format!("bias shape {:?} does not match {oc} output channels", self.value(b).shape()),
            ));
        }
        let (out_h, out_w) = (h * sh, wd * sw);
        let mut out = vec![0.0f32; n * oc * out_h * out_w];
        {
            let xd = self.value(x).data();
            let wdat = self.value(w).data();
            let bd = self.value(b).data();
            for ni in 0..n {
                for o in 0..oc {
                    let out_plane = &mut out
                        [(ni * oc + o) * out_h * out_w..(ni * oc + o + 1) * out_h * out_w];
                    out_plane.fill(bd[o]);
                    for ci in 0..c {
                        let x_plane =
                            &xd[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                        for khi in 0..kh {
                            for kwi in 0..kw {
                                let wv = wdat[((ci * oc + o) * kh + khi) * kw + kwi];
                                if wv == 0.0 {
                                    continue;
                                }
                                for ihi in 0..h {
                                    let x_row = &x_plane[ihi * wd..(ihi + 1) * wd];
                                    let orow_base = (ihi * sh + khi) * out_w + kwi;
                                    for iwi in 0..wd {
                                        out_plane[orow_base + iwi * sw] += wv * x_row[iwi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![n, oc, out_h, out_w], out)?;
        Ok(self.push_op(
            out,
            &[x, w, b],
            Box::new(move |tape, g, grads| {
                let tx = tape.value(x);
                let tw = tape.value(w);
                let gd = g.data();
                let (n, c, h, wd) = (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
                let oc = tw.shape()[1];
                let (out_h, out_w) = (h * sh, wd * sw);
                if tape.needs_grad(x) {
                    let mut gx = vec![0.0f32; tx.numel()];
                    let wdat = tw.data();
                    for ni in 0..n {
                        for ci in 0..c {
                            let gx_plane =
                                &mut gx[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                            for o in 0..oc {
                                let g_plane = &gd[(ni * oc + o) * out_h * out_w
                                    ..(ni * oc + o + 1) * out_h * out_w];
                                for khi in 0..kh {
                                    for kwi in 0..kw {
                                        let wv =
                                            wdat[((ci * oc + o) * kh + khi) * kw + kwi];
                                        if wv == 0.0 {
                                            continue;
                                        }
                                        for ihi in 0..h {
                                            let grow_base =
                                                (ihi * sh + khi) * out_w + kwi;
                                            let gx_row =
                                                &mut gx_plane[ihi * wd..(ihi + 1) * wd];
                                            for iwi in 0..wd {
                                                gx_row[iwi] +=
                                                    wv * g_plane[grow_base + iwi * sw];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    accumulate(
                        grads,
                        x,
                        Tensor::new(vec![n, c, h, wd], gx).expect("shape"),
                    );
                }
                if tape.needs_grad(w) {
                    let mut gw = vec![0.0f32; tw.numel()];
                    let xd = tx.data();
                    for ni in 0..n {
                        for ci in 0..c {
                            let x_plane =
                                &xd[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                            for o in 0..oc {
                                let g_plane = &gd[(ni * oc + o) * out_h * out_w
                                    ..(ni * oc + o + 1) * out_h * out_w];
                                for khi in 0..kh {
                                    for kwi in 0..kw {
                                        let mut acc = 0.0f32;
                                        for ihi in 0..h {
                                            let grow_base =
                                                (ihi * sh + khi) * out_w + kwi;
                                            let x_row =
                                                &x_plane[ihi * wd..(ihi + 1) * wd];
                                            for iwi in 0..wd {
                                                acc += x_row[iwi]
                                                    * g_plane[grow_base + iwi * sw];
                                            }
                                        }
                                        gw[((ci * oc + o) * kh + khi) * kw + kwi] += acc;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(
                        grads,
                        w,
                        Tensor::new(tw.shape().to_vec(), gw).expect("shape"),
                    );
                }
                if tape.needs_grad(b) {
                    let mut gb = vec![0.0f32; oc];
                    for ni in 0..n {
                        for o in 0..oc {
                            let g_plane = &gd[(ni * oc + o) * out_h * out_w
                                ..(ni * oc + o + 1) * out_h * out_w];
                            let mut acc = 0.0f32;
                            for &v in g_plane {
                                acc += v;
                            }
                            gb[o] += acc;
                        }
                    }
                    accumulate(grads, b, Tensor::new(vec![oc], gb).expect("shape"));
                }
            }),
        ))
    }

    /// Average pooling; spatial dims must be divisible by the kernel.
    pub fn avg_pool2d(&mut self, x: Var, kernel: (usize, usize)) -> Result<Var> {
        let (n, c, h, wd) = dims4("avg_pool2d", self.value(x))?;
        let (kh, kw) = kernel;
        if kh == 0 || kw == 0 {
            return Err(config_err("avg_pool2d", "zero kernel"));
        }
        if h % kh != 0 || wd % kw != 0 {
            return Err(shape_err(
                "avg_pool2d",
                format!("spatial dims {h}x{wd} not divisible by kernel {kh}x{kw}"),
            ));
        }
        let (oh, ow) = (h / kh, wd / kw);
        let inv = 1.0 / (kh * kw) as f32;
        let mut out = vec![0.0f32; n * c * oh * ow];
        {
            let xd = self.value(x).data();
            for plane in 0..n * c {
                let x_plane = &xd[plane * h * wd..(plane + 1) * h * wd];
                let o_plane = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
                for ohi in 0..oh {
                    for khi in 0..kh {
                        let x_row = &x_plane[(ohi * kh + khi) * wd..(ohi * kh + khi + 1) * wd];
                        let o_row = &mut o_plane[ohi * ow..(ohi + 1) * ow];
                        for owi in 0..ow {
                            let mut acc = 0.0f32;
                            for kwi in 0..kw {
                                acc += x_row[owi * kw + kwi];
                            }
                            o_row[owi] += acc;
                        }
                    }
                }
                for v in o_plane.iter_mut() {
                    *v *= inv;
                }
            }
        }
        let out = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let tx = tape.value(x);
                let (h, wd) = (tx.shape()[2], tx.shape()[3]);
                let (oh, ow) = (h / kh, wd / kw);
                let planes = tx.shape()[0] * tx.shape()[1];
                let inv = 1.0 / (kh * kw) as f32;
                let gd = g.data();
                let mut gx = vec![0.0f32; tx.numel()];
                for plane in 0..planes {
                    let g_plane = &gd[plane * oh * ow..(plane + 1) * oh * ow];
                    let gx_plane = &mut gx[plane * h * wd..(plane + 1) * h * wd];
                    for ohi in 0..oh {
                        let g_row = &g_plane[ohi * ow..(ohi + 1) * ow];
                        for khi in 0..kh {
                            let gx_row = &mut gx_plane
                                [(ohi * kh + khi) * wd..(ohi * kh + khi + 1) * wd];
                            for owi in 0..ow {
                                let gv = g_row[owi] * inv;
                                for kwi in 0..kw {
                                    gx_row[owi * kw + kwi] += gv;
                                }
                            }
                        }
                    }
                }
                accumulate(
                    grads,
                    x,
                    Tensor::new(tx.shape().to_vec(), gx).expect("shape"),
                );
            }),
        ))
    }
}
