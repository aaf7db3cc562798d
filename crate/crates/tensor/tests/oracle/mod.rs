//! Independent f64 reference implementations and a central-difference
//! driver. Everything here is deliberately naive (nested loops, no reuse
//! of the library's kernels) so it can serve as an oracle for the f32
//! implementation.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct ConvSpec {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl ConvSpec {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad.0 - self.kh) / self.stride.0 + 1,
            (self.w + 2 * self.pad.1 - self.kw) / self.stride.1 + 1,
        )
    }
}

/// Brute-force convolution: walks every output element and every kernel
/// tap with explicit bounds checks.
pub fn conv2d_ref(x: &[f64], w: &[f64], b: &[f64], s: &ConvSpec) -> Vec<f64> {
    let (oh, ow) = s.out_hw();
    let mut out = vec![0.0; s.n * s.oc * oh * ow];
    for n in 0..s.n {
        for o in 0..s.oc {
            for ohi in 0..oh {
                for owi in 0..ow {
                    let mut acc = b[o];
                    for c in 0..s.c {
                        for khi in 0..s.kh {
                            for kwi in 0..s.kw {
                                let ih = (ohi * s.stride.0 + khi) as isize - s.pad.0 as isize;
                                let iw = (owi * s.stride.1 + kwi) as isize - s.pad.1 as isize;
                                if ih < 0 || iw < 0 || ih >= s.h as isize || iw >= s.w as isize
                                {
                                    continue;
                                }
                                let xv = x[((n * s.c + c) * s.h + ih as usize) * s.w
                                    + iw as usize];
                                let wv = w[((o * s.c + c) * s.kh + khi) * s.kw + kwi];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((n * s.oc + o) * oh + ohi) * ow + owi] = acc;
                }
            }
        }
    }
    out
}

/// Transposed convolution with kernel == stride (disjoint output blocks).
/// Weights are `[C_in, C_out, kh, kw]`.
pub fn conv_transpose2d_ref(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    n: usize,
    c: usize,
    h: usize,
    wd: usize,
    oc: usize,
    stride: (usize, usize),
) -> Vec<f64> {
    let (sh, sw) = stride;
    let (out_h, out_w) = (h * sh, wd * sw);
    let mut out = vec![0.0; n * oc * out_h * out_w];
    for ni in 0..n {
        for o in 0..oc {
            for ohi in 0..out_h {
                for owi in 0..out_w {
                    out[((ni * oc + o) * out_h + ohi) * out_w + owi] = b[o];
                }
            }
            for ci in 0..c {
                for ihi in 0..h {
                    for iwi in 0..wd {
                        let xv = x[((ni * c + ci) * h + ihi) * wd + iwi];
                        for khi in 0..sh {
                            for kwi in 0..sw {
                                let wv = w[((ci * oc + o) * sh + khi) * sw + kwi];
                                out[((ni * oc + o) * out_h + ihi * sh + khi) * out_w
                                    + iwi * sw
                                    + kwi] += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn avg_pool2d_ref(
    x: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let (oh, ow) = (h / kh, w / kw);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        for ohi in 0..oh {
            for owi in 0..ow {
                let mut acc = 0.0;
                for khi in 0..kh {
                    for kwi in 0..kw {
                        acc += x[(p * h + ohi * kh + khi) * w + owi * kw + kwi];
                    }
                }
                out[(p * oh + ohi) * ow + owi] = acc / (kh * kw) as f64;
            }
        }
    }
    out
}

/// Training-mode batch norm over [N,C,H,W].
pub fn batch_norm_ref(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    n: usize,
    c: usize,
    plane: usize,
    eps: f64,
) -> Vec<f64> {
    let m = (n * plane) as f64;
    let mut out = vec![0.0; x.len()];
    for ci in 0..c {
        let mut mu = 0.0;
        for ni in 0..n {
            for i in 0..plane {
                mu += x[(ni * c + ci) * plane + i];
            }
        }
        mu /= m;
        let mut var = 0.0;
        for ni in 0..n {
            for i in 0..plane {
                let d = x[(ni * c + ci) * plane + i] - mu;
                var += d * d;
            }
        }
        var /= m;
        let inv = 1.0 / (var + eps).sqrt();
        for ni in 0..n {
            for i in 0..plane {
                let idx = (ni * c + ci) * plane + i;
                out[idx] = gamma[ci] * (x[idx] - mu) * inv + beta[ci];
            }
        }
    }
    out
}

pub fn linear_ref(x: &[f64], w: &[f64], b: Option<&[f64]>, rows: usize, d_in: usize, d_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * d_out];
    for r in 0..rows {
        for o in 0..d_out {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for i in 0..d_in {
                acc += x[r * d_in + i] * w[o * d_in + i];
            }
            out[r * d_out + o] = acc;
        }
    }
    out
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Explicit gate-equation LSTM in f64. Gate packing i,f,g,o matches the
/// implementation contract. Returns the hidden sequence [T,B,H].
#[allow(clippy::too_many_arguments)]
pub fn lstm_ref(
    x: &[f64],
    w_input: &[f64],
    w_hidden: &[f64],
    bias: &[f64],
    h0: &[f64],
    c0: &[f64],
    t_len: usize,
    batch: usize,
    d_in: usize,
    hidden: usize,
) -> Vec<f64> {
    let mut h = h0.to_vec();
    let mut c = c0.to_vec();
    let mut out = Vec::with_capacity(t_len * batch * hidden);
    for t in 0..t_len {
        let xt = &x[t * batch * d_in..(t + 1) * batch * d_in];
        let mut h_new = vec![0.0; batch * hidden];
        let mut c_new = vec![0.0; batch * hidden];
        for bi in 0..batch {
            for hi in 0..hidden {
                let mut gates = [0.0f64; 4];
                for (gi, gate) in gates.iter_mut().enumerate() {
                    let row = gi * hidden + hi;
                    let mut acc = bias[row];
                    for di in 0..d_in {
                        acc += w_input[row * d_in + di] * xt[bi * d_in + di];
                    }
                    for hj in 0..hidden {
                        acc += w_hidden[row * hidden + hj] * h[bi * hidden + hj];
                    }
                    *gate = acc;
                }
                let i_g = sigmoid(gates[0]);
                let f_g = sigmoid(gates[1]);
                let g_g = gates[2].tanh();
                let o_g = sigmoid(gates[3]);
                let cv = f_g * c[bi * hidden + hi] + i_g * g_g;
                c_new[bi * hidden + hi] = cv;
                h_new[bi * hidden + hi] = o_g * cv.tanh();
            }
        }
        out.extend_from_slice(&h_new);
        h = h_new;
        c = c_new;
    }
    out
}

pub fn mse_ref(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

/// Central finite differences of a scalar f64 function, step 1e-3.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-3;
    let mut base = x.to_vec();
    let mut grads = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let keep = base[i];
        base[i] = keep + h;
        let fp = f(&base);
        base[i] = keep - h;
        let fm = f(&base);
        base[i] = keep;
        grads.push((fp - fm) / (2.0 * h));
    }
    grads
}

/// Relative error with a floor so that near-zero pairs compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub fn assert_close_slice(analytic: &[f32], reference: &[f64], tol: f64, what: &str) {
    assert_eq!(analytic.len(), reference.len(), "{what}: length mismatch");
    let mut worst = 0.0f64;
    let mut worst_idx = 0usize;
    for (i, (&a, &r)) in analytic.iter().zip(reference).enumerate() {
        let e = rel_err(a as f64, r);
        if e > worst {
            worst = e;
            worst_idx = i;
        }
    }
    assert!(
        worst < tol,
        "{what}: worst rel err {worst:.3e} at index {worst_idx} \
         (analytic {}, reference {})",
        analytic[worst_idx],
        reference[worst_idx]
    );
}

pub fn rand_vec_f32(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random values bounded away from zero, for ReLU-adjacent FD checks.
pub fn rand_vec_away_from_zero(rng: &mut ChaCha8Rng, n: usize, margin: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let v: f32 = rng.gen_range(margin..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}
