//! Affine map over the last axis.

use crate::error::{Result, TensorError};
use crate::tape::{accumulate, Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    /// `y[..., o] = bias[o] + sum_i x[..., i] * w[o, i]` with `w: [D_out, D_in]`.
    ///
    /// Leading axes are treated as a flat batch.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let tx = self.value(x);
        let tw = self.value(w);
        let ws = tw.shape();
        if ws.len() != 2 {
            return Err(TensorError::Shape {
                op: "linear",
                msg: format!("weight must be rank 2, got {ws:?}"),
            });
        }
        let (d_out, d_in) = (ws[0], ws[1]);
        let x_in = *tx.shape().last().ok_or(TensorError::Shape {
            op: "linear",
            msg: "input must have at least one axis".into(),
        })?;
        if x_in != d_in {
            return Err(TensorError::DimMismatch {
                op: "linear",
                axis: tx.rank() - 1,
                left: x_in,
                right: d_in,
            });
        }
        if let Some(b) = bias {
            let bs = self.value(b).shape();
            if bs != [d_out] {
                return Err(TensorError::Shape {
                    op: "linear",
                    msg: format!("bias shape {bs:?} does not match D_out {d_out}"),
                });
            }
        }
        let rows = tx.numel() / d_in;
        let mut out = vec![0.0f32; rows * d_out];
        {
            let xd = tx.data();
            let wd = tw.data();
            for r in 0..rows {
                let x_row = &xd[r * d_in..(r + 1) * d_in];
                let o_row = &mut out[r * d_out..(r + 1) * d_out];
                for (o, o_v) in o_row.iter_mut().enumerate() {
                    let w_row = &wd[o * d_in..(o + 1) * d_in];
                    let mut acc = 0.0f32;
                    for (xv, wv) in x_row.iter().zip(w_row) {
                        acc += xv * wv;
                    }
                    *o_v = acc;
                }
            }
            if let Some(b) = bias {
                let bd = self.value(b).data();
                for r in 0..rows {
                    let o_row = &mut out[r * d_out..(r + 1) * d_out];
                    for (o_v, b_v) in o_row.iter_mut().zip(bd) {
                        *o_v += b_v;
                    }
                }
            }
        }
        let mut out_shape = tx.shape().to_vec();
        *out_shape.last_mut().unwrap() = d_out;
        let out = Tensor::new(out_shape, out)?;
        let parents: Vec<Var> = match bias {
            Some(b) => vec![x, w, b],
            None => vec![x, w],
        };
        Ok(self.push_op(
            out,
            &parents,
            Box::new(move |tape, g, grads| {
                let tx = tape.value(x);
                let tw = tape.value(w);
                let (d_out, d_in) = (tw.shape()[0], tw.shape()[1]);
                let rows = tx.numel() / d_in;
                let gd = g.data();
                if tape.needs_grad(x) {
                    let wd = tw.data();
                    let mut gx = vec![0.0f32; tx.numel()];
                    for r in 0..rows {
                        let g_row = &gd[r * d_out..(r + 1) * d_out];
                        let gx_row = &mut gx[r * d_in..(r + 1) * d_in];
                        for (o, &gv) in g_row.iter().enumerate() {
                            if gv == 0.0 {
                                continue;
                            }
                            let w_row = &wd[o * d_in..(o + 1) * d_in];
                            for (gx_v, w_v) in gx_row.iter_mut().zip(w_row) {
                                *gx_v += gv * w_v;
                            }
                        }
                    }
                    accumulate(
                        grads,
                        x,
                        Tensor::new(tx.shape().to_vec(), gx).expect("shape"),
                    );
                }
                if tape.needs_grad(w) {
                    let xd = tx.data();
                    let mut gw = vec![0.0f32; d_out * d_in];
                    for r in 0..rows {
                        let g_row = &gd[r * d_out..(r + 1) * d_out];
                        let x_row = &xd[r * d_in..(r + 1) * d_in];
                        for (o, &gv) in g_row.iter().enumerate() {
                            if gv == 0.0 {
                                continue;
                            }
                            let gw_row = &mut gw[o * d_in..(o + 1) * d_in];
                            for (gw_v, x_v) in gw_row.iter_mut().zip(x_row) {
                                *gw_v += gv * x_v;
                            }
                        }
                    }
                    accumulate(
                        grads,
                        w,
                        Tensor::new(vec![d_out, d_in], gw).expect("shape"),
                    );
                }
                if let Some(b) = bias {
                    if tape.needs_grad(b) {
                        let mut gb = vec![0.0f32; d_out];
                        for r in 0..rows {
                            let g_row = &gd[r * d_out..(r + 1) * d_out];
                            for (gb_v, g_v) in gb.iter_mut().zip(g_row) {
                                *gb_v += g_v;
                            }
                        }
                        accumulate(grads, b, Tensor::new(vec![d_out], gb).expect("shape"));
                    }
                }
            }),
        ))
    }
}
