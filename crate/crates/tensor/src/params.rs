//! Named trainable parameters and non-trainable state buffers.

use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Index of a parameter within a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named trainable tensor. `grad` is `None` until a backward pass has
/// accumulated into it; it is cleared again by the optimizer step.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

/// Ordered collection of parameters with unique names.
///
/// Iteration order is creation order, which makes initialization and
/// optimizer updates deterministic for a fixed model build sequence.
#[derive(Debug, Default, Clone)]
pub struct ParamSet {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::Contract(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id.0);
        self.params.push(Parameter {
            name,
            value,
            grad: None,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Add `delta` into the parameter's gradient, creating it if absent.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor) -> Result<()> {
        let param = &mut self.params[id.0];
        if param.value.shape() != delta.shape() {
            return Err(TensorError::Contract(format!(
                "gradient shape {:?} does not match parameter {:?} of shape {:?}",
                delta.shape(),
                param.name,
                param.value.shape()
            )));
        }
        match &mut param.grad {
            Some(g) => {
                for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gi += di;
                }
            }
            None => param.grad = Some(delta.clone()),
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Global L2 norm over all gradients. Missing gradients count as zero.
    pub fn grad_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for p in &self.params {
            if let Some(g) = &p.grad {
                for &v in g.data() {
                    acc += (v as f64) * (v as f64);
                }
            }
        }
        acc.sqrt()
    }

    /// Scale all gradients in place (used for gradient clipping).
    pub fn scale_grads(&mut self, factor: f32) {
        for p in &mut self.params {
            if let Some(g) = &mut p.grad {
                for v in g.data_mut() {
                    *v *= factor;
                }
            }
        }
    }
}

/// Named non-trainable tensors (e.g. batch-norm running statistics).
#[derive(Debug, Default, Clone)]
pub struct BufferSet {
    buffers: Vec<(String, Tensor)>,
    by_name: HashMap<String, usize>,
}

/// Index of a buffer within a [`BufferSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

impl BufferSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<BufferId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::Contract(format!(
                "duplicate buffer name {name:?}"
            )));
        }
        let id = BufferId(self.buffers.len());
        self.by_name.insert(name.clone(), id.0);
        self.buffers.push((name, value));
        Ok(id)
    }

    pub fn get(&self, id: BufferId) -> &Tensor {
        &self.buffers[id.0].1
    }

    pub fn get_mut(&mut self, id: BufferId) -> &mut Tensor {
        &mut self.buffers[id.0].1
    }

    pub fn id_by_name(&self, name: &str) -> Option<BufferId> {
        self.by_name.get(name).copied().map(BufferId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.buffers.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.buffers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }
}
