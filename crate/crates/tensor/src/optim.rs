use std::collections::BTreeMap;

use crate::element::Element;
use crate::error::{contract, dim_err, Result};
use crate::tensor::Tensor;

/// Adam hyperparameters plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

impl OptimizerHyper {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(lr > 0.0 && eps > 0.0) {
            return Err(contract("adam", "lr and eps must be positive"));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(contract("adam", "betas must lie in [0, 1)"));
        }
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
        })
    }

    /// `lr`, β₁ = 0.9, β₂ = 0.99, ε = 1e-8.
    pub fn with_lr(lr: f64) -> Result<Self> {
        Self::new(lr, 0.9, 0.99, 1e-8)
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Element> AdamMoments<T> {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Ok(Self {
            m: Tensor::zeros(shape)?,
            v: Tensor::zeros(shape)?,
        })
    }
}

/// One bias-corrected Adam update of `param` at step `step` (1-based).
pub fn adam_update<T: Element>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    moments: &mut AdamMoments<T>,
    hyper: &OptimizerHyper,
    step: u64,
) -> Result<()> {
    if param.shape() != grad.shape() || moments.m.shape() != param.shape() {
        return Err(dim_err("adam_step", param.shape(), grad.shape()));
    }
    let t = step.max(1) as i32;
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let p = param.data_mut();
    let m = moments.m.data_mut();
    let v = moments.v.data_mut();
    for i in 0..p.len() {
        let g = grad.data()[i].to_f64();
        let mi = b1 * m[i].to_f64() + (1.0 - b1) * g;
        let vi = b2 * v[i].to_f64() + (1.0 - b2) * g * g;
        m[i] = T::from_f64(mi);
        v[i] = T::from_f64(vi);
        let update = hyper.lr * (mi / c1) / ((vi / c2).sqrt() + hyper.eps);
        p[i] = T::from_f64(p[i].to_f64() - update);
    }
    Ok(())
}

/// Adam over a named set of parameters.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub hyper: OptimizerHyper,
    state: BTreeMap<String, AdamMoments<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(hyper: OptimizerHyper) -> Self {
        Self {
            hyper,
            state: BTreeMap::new(),
        }
    }

    /// Advances the step counter and updates every `(name, param)` that has a
    /// gradient in `grad`.
    pub fn step<'a, I, G>(&mut self, params: I, grad: G) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a mut Tensor<T>)>,
        G: Fn(&str) -> Option<&'a Tensor<T>>,
    {
        self.hyper.step += 1;
        let step = self.hyper.step;
        for (name, param) in params {
            let Some(g) = grad(name) else { continue };
            let moments = match self.state.get_mut(name) {
                Some(m) => m,
                None => self
                    .state
                    .entry(name.to_string())
                    .or_insert(AdamMoments::zeros(param.shape())?),
            };
            adam_update(param, g, moments, &self.hyper, step)?;
        }
        Ok(())
    }

    pub fn moments(&self, name: &str) -> Option<&AdamMoments<T>> {
        self.state.get(name)
    }
}
