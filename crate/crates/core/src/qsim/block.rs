use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::circuits::sel_gates;
use super::state::{amplitude_embed, ry_template_gates, Gate, Statevector};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How classical values enter the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Embedding {
    /// `2^n` values as normalised amplitudes.
    Amplitude,
    /// `n` values as RY angles on `|0…0⟩`.
    Angle,
}

/// Embedding → strongly entangling layers → `⟨Z⟩` on every wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumBlock {
    pub n_qubits: usize,
    pub layers: usize,
    pub range: usize,
    pub ry_template: bool,
    pub embedding: Embedding,
}

/// Jacobian `∂outputs/∂params` by the two-term shift rule, `[n_params][n_out]`.
/// Valid when every parameter is the angle of exactly one Pauli rotation.
pub fn parameter_shift<F>(params: &[f64], f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut p = params.to_vec();
    let mut jac = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        p[k] = params[k] + FRAC_PI_2;
        let plus = f(&p)?;
        p[k] = params[k] - FRAC_PI_2;
        let minus = f(&p)?;
        p[k] = params[k];
        jac.push(plus.iter().zip(&minus).map(|(a, b)| 0.5 * (a - b)).collect());
    }
    Ok(jac)
}

impl QuantumBlock {
    pub fn new(n_qubits: usize, layers: usize) -> Self {
        Self {
            n_qubits,
            layers,
            range: 1,
            ry_template: true,
            embedding: Embedding::Amplitude,
        }
    }

    pub fn input_width(&self) -> usize {
        match self.embedding {
            Embedding::Amplitude => 1 << self.n_qubits,
            Embedding::Angle => self.n_qubits,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.layers * self.n_qubits * 3
    }

    fn prepare(&self, inputs: &[f64]) -> Result<Statevector> {
        match self.embedding {
            Embedding::Amplitude => amplitude_embed(inputs, self.n_qubits, self.ry_template),
            Embedding::Angle => {
                if inputs.len() != self.n_qubits {
                    return Err(Error::Capacity {
                        len: inputs.len(),
                        n_qubits: self.n_qubits,
                    });
                }
                let mut s = Statevector::zero(self.n_qubits);
                for (wire, &theta) in inputs.iter().enumerate() {
                    s.apply(&Gate::Ry { wire, theta })?;
                }
                Ok(s)
            }
        }
    }

    fn readout(&self, s: &Statevector) -> Result<Vec<f64>> {
        (0..self.n_qubits).map(|w| s.expval_z(w)).collect()
    }

    /// Per-wire `⟨Z⟩` after the circuit.
    pub fn run(&self, inputs: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.prepare(inputs)?;
        s.apply_all(&sel_gates(self.n_qubits, self.layers, self.range, weights)?)?;
        self.readout(&s)
    }

    /// Full gate list including the embedding template, for dumps.
    pub fn circuit(&self, weights: &[f64]) -> Result<Vec<Gate>> {
        let mut g = if self.ry_template && self.embedding == Embedding::Amplitude {
            ry_template_gates(self.n_qubits)
        } else {
            Vec::new()
        };
        g.extend(sel_gates(self.n_qubits, self.layers, self.range, weights)?);
        Ok(g)
    }

    /// `[n_qubits, n_weights]` Jacobian of the outputs with respect to the
    /// circuit weights, by parameter shift.
    pub fn parameter_shift_gradient(&self, inputs: &[f64], weights: &[f64]) -> Result<Tensor> {
        let jac = parameter_shift(weights, |w| self.run(inputs, w))?;
        let (np, no) = (weights.len(), self.n_qubits);
        let mut out = vec![0.0; no * np];
        for (k, col) in jac.iter().enumerate() {
            for (w, v) in col.iter().enumerate() {
                out[w * np + k] = *v;
            }
        }
        Tensor::new(vec![no, np], out)
    }

    /// Vector–Jacobian product for upstream `g` on the outputs. Returns
    /// `(input grad, weight grad)`.
    pub fn vjp(&self, inputs: &[f64], weights: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if g.len() != self.n_qubits {
            return Err(Error::Shape(format!("quantum block upstream grad of {}", g.len())));
        }
        let dot = |v: &[f64]| v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
        let gw: Vec<f64> = parameter_shift(weights, |w| self.run(inputs, w))?
            .iter()
            .map(|col| dot(col))
            .collect();
        let gx = match self.embedding {
            Embedding::Angle => parameter_shift(inputs, |x| self.run(x, weights))?
                .iter()
                .map(|col| dot(col))
                .collect(),
            Embedding::Amplitude => self.amplitude_input_grad(inputs, weights, g)?,
        };
        Ok((gx, gw))
    }

    fn amplitude_input_grad(&self, inputs: &[f64], weights: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        amplitude_vjp(inputs, self.n_qubits, &self.circuit(weights)?, g)
    }
}

/// Input gradient of `Σ_w g_w ⟨Z_w⟩` for the state `V·x/‖x‖`, where `gates`
/// is `V`. With `φ = x/‖x‖` real, `∂(φᵀMφ)/∂φ = 2 Re(V† Σ g_w Z_w ψ)`, which
/// is then pulled back through the normalisation.
pub fn amplitude_vjp(inputs: &[f64], n_qubits: usize, gates: &[Gate], g: &[f64]) -> Result<Vec<f64>> {
    let norm = inputs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut psi = amplitude_embed(inputs, n_qubits, false)?;
    psi.apply_all(gates)?;
    let n = n_qubits;
    let chi: Vec<Complex64> = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let z: f64 = g
                .iter()
                .enumerate()
                .map(|(w, &gw)| if i & (1 << (n - 1 - w)) == 0 { gw } else { -gw })
                .sum();
            a * z
        })
        .collect();
    let mut back = Statevector::unchecked(n, chi);
    for gate in gates.iter().rev() {
        back.apply(&gate.inverse())?;
    }
    let gphi: Vec<f64> = back.amplitudes()[..inputs.len()].iter().map(|a| 2.0 * a.re).collect();
    let phi: Vec<f64> = inputs.iter().map(|v| v / norm).collect();
    let proj: f64 = gphi.iter().zip(&phi).map(|(a, b)| a * b).sum();
    Ok(gphi.iter().zip(&phi).map(|(gp, p)| (gp - p * proj) / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_gradient, relative_error};
    use crate::rng::RngStream;

    #[test]
    fn outputs_bounded_and_scale_invariant() {
        let b = QuantumBlock::new(4, 1);
        let mut rng = RngStream::new(1, 0);
        let x: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let w: Vec<f64> = (0..12).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let y = b.run(&x, &w).unwrap();
        assert!(y.iter().all(|v| v.abs() <= 1.0));
        let x10: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        let y10 = b.run(&x10, &w).unwrap();
        for (a, c) in y.iter().zip(&y10) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        for emb in [Embedding::Amplitude, Embedding::Angle] {
            let mut b = QuantumBlock::new(3, 2);
            b.embedding = emb;
            let mut rng = RngStream::new(7, 0);
            let x: Vec<f64> = (0..b.input_width()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let w: Vec<f64> = (0..b.weight_count()).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let g: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let f = |xx: &[f64], ww: &[f64]| -> Result<f64> {
                Ok(b.run(xx, ww)?.iter().zip(&g).map(|(a, c)| a * c).sum())
            };
            let (gx, gw) = b.vjp(&x, &w, &g).unwrap();
            let xt = Tensor::new(vec![x.len()], x.clone()).unwrap();
            let wt = Tensor::new(vec![w.len()], w.clone()).unwrap();
            let fdx = finite_diff_gradient(|t| f(t.data(), &w), &xt, 1e-6).unwrap();
            let fdw = finite_diff_gradient(|t| f(&x, t.data()), &wt, 1e-6).unwrap();
            assert!(relative_error(&gx, fdx.data(), 1e-8) < 1e-7, "{emb:?} input");
            assert!(relative_error(&gw, fdw.data(), 1e-8) < 1e-7, "{emb:?} weights");
        }
    }
}
