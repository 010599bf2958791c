//! First-order optimizers over lists of parameter tensors.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

fn check_shapes(params: &[&mut Tensor], grads: &[Tensor], state: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return shape_err(format!(
            "{} params, {} grads, {} state tensors",
            params.len(),
            grads.len(),
            state.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state[i].shape() {
            return shape_err(format!(
                "param {i}: {:?} vs grad {:?}",
                p.shape(),
                g.shape()
            ));
        }
    }
    Ok(())
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(learning_rate: f64, shapes: &[Vec<usize>]) -> Self {
        let zeros: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Reset moments for any parameter whose shape changed (e.g. after a
    /// spline grid was extended).
    pub fn sync_shapes(&mut self, shapes: &[Vec<usize>]) {
        self.m.resize(shapes.len(), Tensor::zeros(&[1]));
        self.v.resize(shapes.len(), Tensor::zeros(&[1]));
        for (i, s) in shapes.iter().enumerate() {
            if self.m[i].shape() != s.as_slice() {
                self.m[i] = Tensor::zeros(s);
                self.v[i] = Tensor::zeros(s);
            }
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(params, grads, &self.m)?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gd[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                pd[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Nesterov momentum: `v ← μv − η∇f(θ + μv); θ ← θ + v`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NesterovState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl NesterovState {
    pub fn new(learning_rate: f64, momentum: f64, shapes: &[Vec<usize>]) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// The point `θ + μv` where the caller must evaluate the gradient.
    pub fn lookahead(&self, params: &[&Tensor]) -> Vec<Tensor> {
        params
            .iter()
            .zip(&self.velocity)
            .map(|(p, v)| {
                let mut out = (*p).clone();
                for (o, vv) in out.data_mut().iter_mut().zip(v.data()) {
                    *o += self.momentum * vv;
                }
                out
            })
            .collect()
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads_at_lookahead: &[Tensor]) -> Result<()> {
        check_shapes(params, grads_at_lookahead, &self.velocity)?;
        for ((p, g), v) in params
            .iter_mut()
            .zip(grads_at_lookahead)
            .zip(self.velocity.iter_mut())
        {
            for ((pv, gv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(v.data_mut().iter_mut())
            {
                *vv = self.momentum * *vv - self.learning_rate * gv;
                *pv += *vv;
            }
        }
        Ok(())
    }
}
