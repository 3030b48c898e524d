use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{dim_err, PaadError, Result};

/// Handle into a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Param<F: Real> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    m: Tensor<F>,
    v: Tensor<F>,
    grad_ready: bool,
}

impl<F: Real> Param<F> {
    pub fn has_grad(&self) -> bool {
        self.grad_ready
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameter tensors with gradient accumulators and Adam moments.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<F: Real> {
    params: Vec<Param<F>>,
    step: u64,
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet {
            params: Vec::new(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name: name.into(),
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            value,
            grad_ready: false,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.params.iter_mut()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].grad
    }

    /// Mutable gradient accumulator; marks the gradient as populated.
    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        let p = &mut self.params[id.0];
        p.grad_ready = true;
        &mut p.grad
    }

    /// Moves a gradient accumulator out so it can be written while parameter
    /// values stay borrowed; pair with [`ParamSet::put_grad`].
    pub fn take_grad(&mut self, id: ParamId) -> Tensor<F> {
        std::mem::take(&mut self.params[id.0].grad)
    }

    pub fn put_grad(&mut self, id: ParamId, grad: Tensor<F>) {
        let p = &mut self.params[id.0];
        p.grad = grad;
        p.grad_ready = true;
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, name: &str) -> Option<&Param<F>> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Replace a parameter value, keeping its shape.
    pub fn set_value(&mut self, name: &str, value: Tensor<F>) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| PaadError::State(format!("unknown parameter {name}")))?;
        if p.value.shape() != value.shape() {
            return dim_err(format!(
                "parameter {name}: expected {:?}, got {:?}",
                p.value.shape(),
                value.shape()
            ));
        }
        p.value = value;
        Ok(())
    }

    /// Clears every gradient accumulator and its populated flag.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(F::zero());
            p.grad_ready = false;
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// One bias-corrected Adam update; clears gradients afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if let Some(p) = self.params.iter().find(|p| !p.grad_ready) {
            return Err(PaadError::State(format!(
                "parameter {} has no gradient",
                p.name
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let correction1 = 1.0 - b1.powi(t);
        let correction2 = 1.0 - b2.powi(t);
        let lr = F::c(cfg.lr);
        let eps = F::c(cfg.eps);
        let (fb1, fb2) = (F::c(b1), F::c(b2));
        let (one_b1, one_b2) = (F::c(1.0 - b1), F::c(1.0 - b2));
        let (c1, c2) = (F::c(correction1), F::c(correction2));
        for p in &mut self.params {
            let values = p.value.data_mut();
            let grads = p.grad.data();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = fb1 * m[i] + one_b1 * g;
                v[i] = fb2 * v[i] + one_b2 * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut ps = ParamSet::<f32>::new();
        let id = ps.add("w", Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap());
        let before = ps.value(id).clone();
        ps.grad_mut(id);
        ps.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(ps.value(id), &before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Hand-computed: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1,
        // update = lr / (1 + eps).
        let mut ps = ParamSet::<f64>::new();
        let id = ps.add("w", Tensor::scalar(1.0));
        ps.grad_mut(id).data_mut()[0] = 1.0;
        let cfg = AdamConfig::default();
        ps.adam_step(&cfg).unwrap();
        let expected = 1.0 - cfg.lr / (1.0 + cfg.eps);
        assert!((ps.value(id).data()[0] - expected).abs() < 1e-15);
        assert_eq!(ps.grad(id).data()[0], 0.0);
    }

    #[test]
    fn identical_params_get_identical_updates() {
        let mut ps = ParamSet::<f32>::new();
        let a = ps.add("a", Tensor::from_vec(&[2], vec![0.3, -0.7]).unwrap());
        let b = ps.add("b", Tensor::from_vec(&[2], vec![0.3, -0.7]).unwrap());
        for _ in 0..5 {
            for id in [a, b] {
                ps.grad_mut(id).data_mut().copy_from_slice(&[0.25, -1.5]);
            }
            ps.adam_step(&AdamConfig::default()).unwrap();
        }
        assert_eq!(ps.value(a), ps.value(b));
    }

    #[test]
    fn missing_gradient_is_a_state_error() {
        let mut ps = ParamSet::<f32>::new();
        ps.add("w", Tensor::scalar(1.0));
        let err = ps.adam_step(&AdamConfig::default()).unwrap_err();
        assert!(matches!(err, PaadError::State(_)));
    }
}
