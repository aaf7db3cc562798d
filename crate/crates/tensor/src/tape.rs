//! Reverse-mode automatic differentiation tape.
//!
//! Forward operations execute eagerly and record a backward closure. The
//! tape is in topological order by construction, so `backward` is a single
//! reverse sweep that accumulates gradients additively across fan-out.

use crate::error::{shape_err, Result, TensorError};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&Tape, &Tensor, &mut Vec<Option<Tensor>>)>;

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) needs_grad: bool,
    pub(crate) param: Option<ParamId>,
    back: Option<BackFn>,
}

/// Records one forward pass; dropped and rebuilt per training step.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by `Var`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

pub(crate) fn accumulate(grads: &mut [Option<Tensor>], var: Var, delta: Tensor) {
    match &mut grads[var.0] {
        Some(g) => {
            debug_assert_eq!(g.shape(), delta.shape());
            for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
                *gi += di;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a recorded node.
    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn needs_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    /// Record a constant leaf (no gradient tracking).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false, None)
    }

    /// Record a gradient-tracked leaf without a backing parameter.
    pub fn leaf_grad(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true, None)
    }

    /// Bind a parameter onto the tape. When `trainable`, its gradient is
    /// collected by [`Tape::collect_param_grads`] after a backward pass.
    pub fn bind(&mut self, params: &ParamSet, id: ParamId, trainable: bool) -> Var {
        let value = params.get(id).value.clone();
        if trainable {
            self.push_leaf(value, true, Some(id))
        } else {
            self.push_leaf(value, false, None)
        }
    }

    fn push_leaf(&mut self, value: Tensor, needs_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            needs_grad,
            param,
            back: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push_op(
        &mut self,
        value: Tensor,
        parents: &[Var],
        back: BackFn,
    ) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            needs_grad,
            param: None,
            back: if needs_grad { Some(back) } else { None },
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar loss. Every gradient-tracked node
    /// reachable from `loss` receives a gradient; fan-out accumulates.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_val = self.value(loss);
        if loss_val.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_val.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_val.shape(), 1.0));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if let Some(back) = &node.back {
                back(self, &g, &mut grads);
            }
            // Leaves keep their gradient for collection.
            if node.back.is_none() {
                grads[id] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    /// Scatter leaf gradients back into their bound parameters (additive).
    pub fn collect_param_grads(&self, grads: &Gradients, params: &mut ParamSet) -> Result<()> {
        for (id, node) in self.nodes.iter().enumerate() {
            if let Some(pid) = node.param {
                if let Some(g) = grads.grads[id].as_ref() {
                    params.accumulate_grad(pid, g)?;
                }
            }
        }
        Ok(())
    }

    // ---- elementwise ----------------------------------------------------

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push_op(
            out,
            &[a, b],
            Box::new(move |tape, g, grads| {
                if tape.needs_grad(a) {
                    accumulate(grads, a, g.clone());
                }
                if tape.needs_grad(b) {
                    accumulate(grads, b, g.clone());
                }
            }),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("sub", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push_op(
            out,
            &[a, b],
            Box::new(move |tape, g, grads| {
                if tape.needs_grad(a) {
                    accumulate(grads, a, g.clone());
                }
                if tape.needs_grad(b) {
                    let mut neg = g.clone();
                    for v in neg.data_mut() {
                        *v = -*v;
                    }
                    accumulate(grads, b, neg);
                }
            }),
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push_op(
            out,
            &[a, b],
            Box::new(move |tape, g, grads| {
                if tape.needs_grad(a) {
                    let tb = tape.value(b);
                    let mut d = g.clone();
                    for (v, y) in d.data_mut().iter_mut().zip(tb.data()) {
                        *v *= y;
                    }
                    accumulate(grads, a, d);
                }
                if tape.needs_grad(b) {
                    let ta = tape.value(a);
                    let mut d = g.clone();
                    for (v, x) in d.data_mut().iter_mut().zip(ta.data()) {
                        *v *= x;
                    }
                    accumulate(grads, b, d);
                }
            }),
        ))
    }

    pub fn add_scalar(&mut self, x: Var, c: f32) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v + c).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        self.push_op(
            out,
            &[x],
            Box::new(move |_, g, grads| accumulate(grads, x, g.clone())),
        )
    }

    pub fn mul_scalar(&mut self, x: Var, c: f32) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * c).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        self.push_op(
            out,
            &[x],
            Box::new(move |_, g, grads| {
                let mut d = g.clone();
                for v in d.data_mut() {
                    *v *= c;
                }
                accumulate(grads, x, d);
            }),
        )
    }

    /// Natural logarithm. Caller guarantees strictly positive input (the
    /// log-magnitude path floors at 1e-7 before calling this).
    pub fn log(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v.ln()).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let tx = tape.value(x);
                let mut d = g.clone();
                for (v, xv) in d.data_mut().iter_mut().zip(tx.data()) {
                    *v /= xv;
                }
                accumulate(grads, x, d);
            }),
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v.max(0.0)).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let tx = tape.value(x);
                let mut d = g.clone();
                for (v, xv) in d.data_mut().iter_mut().zip(tx.data()) {
                    if *xv <= 0.0 {
                        *v = 0.0;
                    }
                }
                accumulate(grads, x, d);
            }),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx
            .data()
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        // Backward reads its own saved output: the node id is the next slot.
        let y = Var(self.nodes.len());
        self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let ty = tape.value(y);
                let mut d = g.clone();
                for (v, s) in d.data_mut().iter_mut().zip(ty.data()) {
                    *v *= s * (1.0 - s);
                }
                accumulate(grads, x, d);
            }),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v.tanh()).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        let y = Var(self.nodes.len());
        self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let ty = tape.value(y);
                let mut d = g.clone();
                for (v, t) in d.data_mut().iter_mut().zip(ty.data()) {
                    *v *= 1.0 - t * t;
                }
                accumulate(grads, x, d);
            }),
        )
    }

    /// Per-last-axis affine map: `y[..., f] = x[..., f] * scale[f] + shift[f]`.
    pub fn affine_last(&mut self, x: Var, scale: Vec<f32>, shift: Vec<f32>) -> Result<Var> {
        let tx = self.value(x);
        let last = *tx.shape().last().ok_or_else(|| {
            shape_err("affine_last", "input must have at least one axis")
        })?;
        if scale.len() != last || shift.len() != last {
            return Err(shape_err(
                "affine_last",
                format!(
                    "coefficient lengths {}/{} do not match last axis {last}",
                    scale.len(),
                    shift.len()
                ),
            ));
        }
        let mut data = Vec::with_capacity(tx.numel());
        for row in tx.data().chunks_exact(last) {
            for (v, (s, b)) in row.iter().zip(scale.iter().zip(&shift)) {
                data.push(v * s + b);
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let scale_back = scale;
        Ok(self.push_op(
            out,
            &[x],
            Box::new(move |_, g, grads| {
                let mut d = g.clone();
                let last = scale_back.len();
                for row in d.data_mut().chunks_exact_mut(last) {
                    for (v, s) in row.iter_mut().zip(&scale_back) {
                        *v *= s;
                    }
                }
                accumulate(grads, x, d);
            }),
        ))
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum_all(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let s: f64 = tx.data().iter().map(|&v| v as f64).sum();
        let out = Tensor::scalar(s as f32);
        self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let gv = g.data()[0];
                let shape = tape.value(x).shape().to_vec();
                accumulate(grads, x, Tensor::full(&shape, gv));
            }),
        )
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let n = tx.numel();
        let s: f64 = tx.data().iter().map(|&v| v as f64).sum();
        let out = Tensor::scalar((s / n as f64) as f32);
        self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let gv = g.data()[0] / n as f32;
                let shape = tape.value(x).shape().to_vec();
                accumulate(grads, x, Tensor::full(&shape, gv));
            }),
        )
    }

    /// Mean squared error over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_same_shape("mse_loss", pred, target)?;
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean_all(sq))
    }

    // ---- shape ops -------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let tx = self.value(x);
        let numel: usize = shape.iter().product();
        if numel != tx.numel() {
            return Err(shape_err(
                "reshape",
                format!("cannot view {:?} as {shape:?}", tx.shape()),
            ));
        }
        let out = Tensor::new(shape, tx.data().to_vec())?;
        Ok(self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let shape = tape.value(x).shape().to_vec();
                let d = g.clone().reshaped(shape).expect("same numel");
                accumulate(grads, x, d);
            }),
        ))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if axis >= tx.rank() {
            return Err(shape_err(
                "narrow",
                format!("axis {axis} out of range for rank {}", tx.rank()),
            ));
        }
        let (outer, dim, inner) = Tensor::axis_split(tx.shape(), axis);
        if start + len > dim {
            return Err(shape_err(
                "narrow",
                format!("slice {start}..{} exceeds axis extent {dim}", start + len),
            ));
        }
        let mut shape = tx.shape().to_vec();
        shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        let src = tx.data();
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let out = Tensor::new(shape, data)?;
        Ok(self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let tx = tape.value(x);
                let (outer, dim, inner) = Tensor::axis_split(tx.shape(), axis);
                let mut d = Tensor::zeros(tx.shape());
                let dst = d.data_mut();
                let gsrc = g.data();
                for o in 0..outer {
                    let dbase = (o * dim + start) * inner;
                    let sbase = o * len * inner;
                    dst[dbase..dbase + len * inner]
                        .copy_from_slice(&gsrc[sbase..sbase + len * inner]);
                }
                accumulate(grads, x, d);
            }),
        ))
    }

    /// Concatenate along `axis`; all other dims must match.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() {
            return Err(shape_err("concat", "empty input list"));
        }
        let first = self.value(inputs[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(shape_err(
                "concat",
                format!("axis {axis} out of range for rank {}", first.len()),
            ));
        }
        let mut axis_total = 0usize;
        for &v in inputs {
            let s = self.value(v).shape();
            if s.len() != first.len() {
                return Err(shape_err(
                    "concat",
                    format!("rank mismatch: {:?} vs {:?}", first, s),
                ));
            }
            for (ax, (&a, &b)) in first.iter().zip(s.iter()).enumerate() {
                if ax != axis && a != b {
                    return Err(TensorError::DimMismatch {
                        op: "concat",
                        axis: ax,
                        left: a,
                        right: b,
                    });
                }
            }
            axis_total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = axis_total;
        let (outer, _, inner) = Tensor::axis_split(&shape, axis);
        let mut data = vec![0.0f32; outer * axis_total * inner];
        let mut offset = 0usize;
        for &v in inputs {
            let tv = self.value(v);
            let len = tv.shape()[axis];
            let src = tv.data();
            for o in 0..outer {
                let dbase = (o * axis_total + offset) * inner;
                let sbase = o * len * inner;
                data[dbase..dbase + len * inner]
                    .copy_from_slice(&src[sbase..sbase + len * inner]);
            }
            offset += len;
        }
        let out = Tensor::new(shape, data)?;
        let inputs_back: Vec<Var> = inputs.to_vec();
        Ok(self.push_op(
            out,
            inputs,
            Box::new(move |tape, g, grads| {
                let gshape = g.shape().to_vec();
                let (outer, total, inner) = Tensor::axis_split(&gshape, axis);
                let gsrc = g.data();
                let mut offset = 0usize;
                for &v in &inputs_back {
                    let len = tape.value(v).shape()[axis];
                    if tape.needs_grad(v) {
                        let mut shape = gshape.clone();
                        shape[axis] = len;
                        let mut d = Tensor::zeros(&shape);
                        let dst = d.data_mut();
                        for o in 0..outer {
                            let sbase = (o * total + offset) * inner;
                            let dbase = o * len * inner;
                            dst[dbase..dbase + len * inner]
                                .copy_from_slice(&gsrc[sbase..sbase + len * inner]);
                        }
                        accumulate(grads, v, d);
                    }
                    offset += len;
                }
            }),
        ))
    }

    /// Reorder axes. `perm[i]` names the source axis that becomes axis `i`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let rank = tx.rank();
        if perm.len() != rank {
            return Err(shape_err(
                "permute",
                format!("perm {perm:?} does not match rank {rank}"),
            ));
        }
        let mut seen = vec![false; rank];
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(shape_err("permute", format!("invalid perm {perm:?}")));
            }
            seen[p] = true;
        }
        let out = permute_tensor(tx, perm);
        let perm_owned = perm.to_vec();
        Ok(self.push_op(
            out,
            &[x],
            Box::new(move |_, g, grads| {
                // Inverse permutation maps the gradient back.
                let mut inv = vec![0usize; perm_owned.len()];
                for (i, &p) in perm_owned.iter().enumerate() {
                    inv[p] = i;
                }
                accumulate(grads, x, permute_tensor(g, &inv));
            }),
        ))
    }

    /// Append a trailing axis of extent `n` by replication.
    pub fn broadcast_last(&mut self, x: Var, n: usize) -> Result<Var> {
        if n == 0 {
            return Err(shape_err("broadcast_last", "extent must be positive"));
        }
        let tx = self.value(x);
        let mut shape = tx.shape().to_vec();
        shape.push(n);
        let mut data = Vec::with_capacity(tx.numel() * n);
        for &v in tx.data() {
            data.extend(std::iter::repeat(v).take(n));
        }
        let out = Tensor::new(shape, data)?;
        Ok(self.push_op(
            out,
            &[x],
            Box::new(move |tape, g, grads| {
                let shape = tape.value(x).shape().to_vec();
                let mut d = Tensor::zeros(&shape);
                for (dv, chunk) in d.data_mut().iter_mut().zip(g.data().chunks_exact(n)) {
                    let mut acc = 0.0f32;
                    for &c in chunk {
                        acc += c;
                    }
                    *dv = acc;
                }
                accumulate(grads, x, d);
            }),
        ))
    }
}

fn permute_tensor(t: &Tensor, perm: &[usize]) -> Tensor {
    let src_shape = t.shape();
    let rank = src_shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| src_shape[p]).collect();
    // Row-major strides of the source.
    let mut src_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        src_strides[i] = src_strides[i + 1] * src_shape[i + 1];
    }
    let step: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let mut out = vec![0.0f32; t.numel()];
    let src = t.data();
    // Odometer walk over the output index space.
    let mut idx = vec![0usize; rank];
    let mut src_off = 0usize;
    for slot in out.iter_mut() {
        *slot = src[src_off];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src_off += step[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src_off -= step[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    Tensor::new(out_shape, out).expect("same numel")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf_grad(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let loss = tape.sum_all(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn fanout_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf_grad(t(&[1], &[3.0]));
        let y = tape.add(x, x).unwrap();
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf_grad(t(&[2], &[1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn mse_trivial_values() {
        let mut tape = Tape::new();
        let p = tape.leaf_grad(t(&[3], &[5.0, 5.0, 5.0]));
        let q = tape.input(t(&[3], &[3.0, 3.0, 3.0]));
        let loss = tape.mse_loss(p, q).unwrap();
        assert_eq!(tape.value(loss).item().unwrap(), 4.0);
        let same = {
            let mut tape = Tape::new();
            let a = tape.leaf_grad(t(&[2], &[1.0, -2.0]));
            let b = tape.input(t(&[2], &[1.0, -2.0]));
            let l = tape.mse_loss(a, b).unwrap();
            tape.value(l).item().unwrap()
        };
        assert_eq!(same, 0.0);
    }

    #[test]
    fn mse_gradient_closed_form() {
        let mut tape = Tape::new();
        let p = tape.leaf_grad(t(&[2], &[1.0, 4.0]));
        let q = tape.input(t(&[2], &[0.0, 2.0]));
        let loss = tape.mse_loss(p, q).unwrap();
        let grads = tape.backward(loss).unwrap();
        // d/dp mean((p-q)^2) = 2 (p-q) / n
        assert_eq!(grads.get(p).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn concat_shapes_and_backward() {
        let mut tape = Tape::new();
        let a = tape.leaf_grad(Tensor::full(&[1, 2, 4, 4], 1.0));
        let b = tape.leaf_grad(Tensor::full(&[1, 2, 4, 4], 2.0));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).shape(), &[1, 4, 4, 4]);
        let loss = tape.sum_all(c);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(a).unwrap().data().iter().all(|&v| v == 1.0));
        assert!(grads.get(b).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn concat_single_input_is_identity() {
        let mut tape = Tape::new();
        let a = tape.input(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let c = tape.concat(&[a], 0).unwrap();
        assert_eq!(tape.value(c), tape.value(a));
    }

    #[test]
    fn concat_mismatch_names_axis() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::zeros(&[1, 2, 3]));
        let b = tape.input(Tensor::zeros(&[1, 2, 4]));
        let err = tape.concat(&[a, b], 1).unwrap_err();
        match err {
            TensorError::DimMismatch { axis, .. } => assert_eq!(axis, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn narrow_then_backward_pads_zeros() {
        let mut tape = Tape::new();
        let x = tape.leaf_grad(t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let y = tape.narrow(x, 1, 1, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 3.0]);
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn permute_roundtrip() {
        let mut tape = Tape::new();
        let x = tape.input(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let y = tape.permute(x, &[1, 0]).unwrap();
        assert_eq!(tape.value(y).shape(), &[3, 2]);
        assert_eq!(tape.value(y).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let z = tape.permute(y, &[1, 0]).unwrap();
        assert_eq!(tape.value(z).data(), tape.value(x).data());
    }

    #[test]
    fn broadcast_last_replicates_and_sums_back() {
        let mut tape = Tape::new();
        let x = tape.leaf_grad(t(&[2], &[1.0, 2.0]));
        let y = tape.broadcast_last(x, 3).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 3]);
        assert_eq!(tape.value(y).data(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn activations_trivial_values() {
        let mut tape = Tape::new();
        let x = tape.input(t(&[3], &[-3.0, 0.0, 3.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 3.0]);
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(s).data()[1], 0.5);
        let sd = tape.value(s).data();
        assert!(sd.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
