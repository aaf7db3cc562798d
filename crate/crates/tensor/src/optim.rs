//! Adam optimizer with bias correction.

use crate::error::{Result, TensorError};
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Adam with the standard first/second-moment estimates and bias
/// correction. Gradients are consumed (cleared) by each step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f32, beta1: f32, beta2: f32, eps: f32) -> Self {
        let m = params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        let v = params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m,
            v,
        }
    }

    /// Defaults used throughout training: lr 1e-3, betas (0.9, 0.999), eps 1e-8.
    pub fn with_defaults(params: &ParamSet) -> Self {
        Self::new(params, 1e-3, 0.9, 0.999, 1e-8)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter. Errors if any parameter is missing
    /// its gradient (stale-grad guard); zeroes all gradients afterwards.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for p in params.iter() {
            if p.grad.is_none() {
                return Err(TensorError::Contract(format!(
                    "adam_step: parameter {:?} has no accumulated gradient",
                    p.name
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - (self.beta1 as f64).powf(t);
        let bc2 = 1.0 - (self.beta2 as f64).powf(t);
        for (idx, p) in params.iter_mut().enumerate() {
            let grad = p.grad.as_ref().expect("checked above");
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let w = p.value.data_mut();
            for i in 0..w.len() {
                let g = grad.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] as f64 / bc1;
                let v_hat = v[i] as f64 / bc2;
                w[i] -= (self.lr as f64 * m_hat / (v_hat.sqrt() + self.eps as f64)) as f32;
            }
            p.grad = None;
        }
        Ok(())
    }

    /// Moment buffers as (name, tensor) pairs for checkpointing, using
    /// `.m` / `.v` suffixes on the parameter names.
    pub fn export_state(&self, params: &ParamSet) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for (idx, p) in params.iter().enumerate() {
            out.push((format!("{}.m", p.name), self.m[idx].clone()));
            out.push((format!("{}.v", p.name), self.v[idx].clone()));
        }
        out
    }

    /// Restore moment buffers and step counter saved by `export_state`.
    pub fn import_state(
        &mut self,
        params: &ParamSet,
        entries: &[(String, Tensor)],
        step: u64,
    ) -> Result<()> {
        use std::collections::HashMap;
        let map: HashMap<&str, &Tensor> =
            entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (idx, p) in params.iter().enumerate() {
            let m = map
                .get(format!("{}.m", p.name).as_str())
                .ok_or_else(|| TensorError::Format(format!("missing moment {}.m", p.name)))?;
            let v = map
                .get(format!("{}.v", p.name).as_str())
                .ok_or_else(|| TensorError::Format(format!("missing moment {}.v", p.name)))?;
            if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(TensorError::Format(format!(
                    "moment shape mismatch for {}",
                    p.name
                )));
            }
            self.m[idx] = (*m).clone();
            self.v[idx] = (*v).clone();
        }
        self.step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f32) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::scalar(value)).unwrap();
        ps
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut ps = single_param(1.25);
        let id = ps.ids().next().unwrap();
        ps.accumulate_grad(id, &Tensor::scalar(0.0)).unwrap();
        let mut adam = Adam::with_defaults(&ps);
        adam.step(&mut ps).unwrap();
        assert_eq!(ps.get(id).value.data()[0], 1.25);
    }

    #[test]
    fn first_step_moves_by_exactly_lr() {
        // With grad 1 on the first step, m_hat = 1 and v_hat = 1, so the
        // update magnitude is lr / (1 + eps) ~= lr.
        let mut ps = single_param(0.0);
        let id = ps.ids().next().unwrap();
        ps.accumulate_grad(id, &Tensor::scalar(1.0)).unwrap();
        let mut adam = Adam::with_defaults(&ps);
        adam.step(&mut ps).unwrap();
        let w = ps.get(id).value.data()[0];
        assert!((w + 1e-3).abs() < 1e-8, "w = {w}");
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut ps = single_param(0.0);
        let mut adam = Adam::with_defaults(&ps);
        assert!(matches!(
            adam.step(&mut ps),
            Err(TensorError::Contract(_))
        ));
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // f(w) = (w - 3)^2, grad = 2 (w - 3)
        let mut ps = single_param(0.0);
        let id = ps.ids().next().unwrap();
        let mut adam = Adam::new(&ps, 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..50 {
            let w = ps.get(id).value.data()[0];
            ps.accumulate_grad(id, &Tensor::scalar(2.0 * (w - 3.0))).unwrap();
            adam.step(&mut ps).unwrap();
        }
        let w = ps.get(id).value.data()[0];
        assert!((w - 3.0).abs() < 0.5, "w = {w}");
    }

    #[test]
    fn grads_zeroed_after_step() {
        let mut ps = single_param(0.0);
        let id = ps.ids().next().unwrap();
        ps.accumulate_grad(id, &Tensor::scalar(1.0)).unwrap();
        let mut adam = Adam::with_defaults(&ps);
        adam.step(&mut ps).unwrap();
        assert!(ps.get(id).grad.is_none());
    }
}
