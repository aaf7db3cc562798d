//! Batch normalization over `[N,C,H,W]` with per-channel affine.

use crate::error::{shape_err, Result};
use crate::tape::{accumulate, Tape, Var};
use crate::tensor::Tensor;

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

/// Running mean/variance, updated in training mode with momentum 0.9 and
/// consumed in eval mode. Freshly initialized stats are mean 0, var 1.
#[derive(Debug, Clone)]
pub struct BnRunning {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl BnRunning {
    pub fn new(channels: usize) -> Self {
        BnRunning {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

impl Tape {
    /// Batch normalization. In training mode, normalizes with batch
    /// statistics and updates `running` in place; in eval mode, uses
    /// `running` as-is.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut BnRunning,
        training: bool,
    ) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() != 4 {
            return Err(shape_err(
                "batch_norm",
                format!("expected rank-4 input, got {s:?}"),
            ));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(shape_err(
                "batch_norm",
                format!(
                    "gamma/beta shapes {:?}/{:?} do not match {c} channels",
                    self.value(gamma).shape(),
                    self.value(beta).shape()
                ),
            ));
        }
        if running.mean.len() != c || running.var.len() != c {
            return Err(shape_err(
                "batch_norm",
                format!("running stats length {} does not match {c} channels", running.mean.len()),
            ));
        }
        let plane = h * w;
        let m = (n * plane) as f64;

        let (mean, var) = if training {
            let xd = tx.data();
            let mut mean = vec![0.0f32; c];
            let mut var = vec![0.0f32; c];
            for ci in 0..c {
                let mut acc = 0.0f64;
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for &v in &xd[base..base + plane] {
                        acc += v as f64;
                    }
                }
                let mu = acc / m;
                let mut vacc = 0.0f64;
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for &v in &xd[base..base + plane] {
                        let d = v as f64 - mu;
                        vacc += d * d;
                    }
                }
                mean[ci] = mu as f32;
                var[ci] = (vacc / m) as f32;
            }
            for ci in 0..c {
                running.mean[ci] = BN_MOMENTUM * running.mean[ci] + (1.0 - BN_MOMENTUM) * mean[ci];
                running.var[ci] = BN_MOMENTUM * running.var[ci] + (1.0 - BN_MOMENTUM) * var[ci];
            }
            (mean, var)
        } else {
            (running.mean.clone(), running.var.clone())
        };

        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gd = self.value(gamma).data().to_vec();
        let bd = self.value(beta).data().to_vec();
        let xd = self.value(x).data();
        let mut xhat = vec![0.0f32; tx.numel()];
        let mut out = vec![0.0f32; tx.numel()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                let (mu, is, ga, be) = (mean[ci], inv_std[ci], gd[ci], bd[ci]);
                for i in base..base + plane {
                    let xh = (xd[i] - mu) * is;
                    xhat[i] = xh;
                    out[i] = ga * xh + be;
                }
            }
        }
        let out = Tensor::new(s.to_vec(), out)?;
        let xhat = Tensor::new(s.to_vec(), xhat)?;

        Ok(self.push_op(
            out,
            &[x, gamma, beta],
            Box::new(move |tape, g, grads| {
                let tx = tape.value(x);
                let s = tx.shape();
                let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
                let m = (n * plane) as f32;
                let gdat = g.data();
                let xh = xhat.data();
                let ga = tape.value(gamma).data();

                // Per-channel sums of g and g*xhat.
                let mut sum_g = vec![0.0f32; c];
                let mut sum_gx = vec![0.0f32; c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        let mut sg = 0.0f32;
                        let mut sgx = 0.0f32;
                        for i in base..base + plane {
                            sg += gdat[i];
                            sgx += gdat[i] * xh[i];
                        }
                        sum_g[ci] += sg;
                        sum_gx[ci] += sgx;
                    }
                }
                if tape.needs_grad(gamma) {
                    accumulate(grads, gamma, Tensor::new(vec![c], sum_gx.clone()).expect("shape"));
                }
                if tape.needs_grad(beta) {
                    accumulate(grads, beta, Tensor::new(vec![c], sum_g.clone()).expect("shape"));
                }
                if tape.needs_grad(x) {
                    let mut gx = vec![0.0f32; tx.numel()];
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * plane;
                            let scale = ga[ci] * inv_std[ci];
                            if training {
                                let mg = sum_g[ci] / m;
                                let mgx = sum_gx[ci] / m;
                                for i in base..base + plane {
                                    gx[i] = scale * (gdat[i] - mg - xh[i] * mgx);
                                }
                            } else {
                                for i in base..base + plane {
                                    gx[i] = scale * gdat[i];
                                }
                            }
                        }
                    }
                    accumulate(grads, x, Tensor::new(s.to_vec(), gx).expect("shape"));
                }
            }),
        ))
    }
}
