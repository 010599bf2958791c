use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pure state of `n_qubits`, qubit 0 being the most significant bit of the
/// basis index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

/// Supported gates. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gate {
    Ry { wire: usize, theta: f64 },
    Rz { wire: usize, phi: f64 },
    U3 { wire: usize, theta: f64, phi: f64, lambda: f64 },
    Cnot { control: usize, target: usize },
}

pub type Mat2 = [[Complex64; 2]; 2];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

impl Gate {
    pub fn wires(&self) -> Vec<usize> {
        match *self {
            Gate::Ry { wire, .. } | Gate::Rz { wire, .. } | Gate::U3 { wire, .. } => vec![wire],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Gate::Ry { theta, .. } => vec![theta],
            Gate::Rz { phi, .. } => vec![phi],
            Gate::U3 { theta, phi, lambda, .. } => vec![theta, phi, lambda],
            Gate::Cnot { .. } => vec![],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::Ry { .. } => "ry",
            Gate::Rz { .. } => "rz",
            Gate::U3 { .. } => "u3",
            Gate::Cnot { .. } => "cnot",
        }
    }

    /// 2×2 matrix of a single-qubit gate; `None` for CNOT.
    pub fn matrix(&self) -> Option<Mat2> {
        match *self {
            Gate::Ry { theta, .. } => {
                let (s, co) = (theta / 2.0).sin_cos();
                Some([[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]])
            }
            Gate::Rz { phi, .. } => Some([
                [Complex64::from_polar(1.0, -phi / 2.0), c(0.0, 0.0)],
                [c(0.0, 0.0), Complex64::from_polar(1.0, phi / 2.0)],
            ]),
            Gate::U3 { theta, phi, lambda, .. } => {
                let (s, co) = (theta / 2.0).sin_cos();
                Some([
                    [c(co, 0.0), -Complex64::from_polar(s, lambda)],
                    [Complex64::from_polar(s, phi), Complex64::from_polar(co, phi + lambda)],
                ])
            }
            Gate::Cnot { .. } => None,
        }
    }

    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Ry { wire, theta } => Gate::Ry { wire, theta: -theta },
            Gate::Rz { wire, phi } => Gate::Rz { wire, phi: -phi },
            Gate::U3 { wire, theta, phi, lambda } => Gate::U3 {
                wire,
                theta: -theta,
                phi: -lambda,
                lambda: -phi,
            },
            g @ Gate::Cnot { .. } => g,
        }
    }
}

impl Statevector {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    /// Wrap amplitudes; they must have length `2^n` and unit norm.
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::Shape(format!("{} amplitudes for {n_qubits} qubits", amps.len())));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Embedding(format!("state norm² = {norm}")));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Unnormalised vector, used for adjoint propagation.
    pub(crate) fn unchecked(n_qubits: usize, amps: Vec<Complex64>) -> Self {
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_wire(&self, w: usize) -> Result<()> {
        if w >= self.n_qubits {
            return Err(Error::Wire(format!("wire {w} on {} qubits", self.n_qubits)));
        }
        Ok(())
    }

    fn stride(&self, w: usize) -> usize {
        1 << (self.n_qubits - 1 - w)
    }

    pub fn apply_matrix(&mut self, wire: usize, m: &Mat2) -> Result<()> {
        self.check_wire(wire)?;
        let s = self.stride(wire);
        for base in (0..self.amps.len()).filter(|i| i & s == 0) {
            let (a0, a1) = (self.amps[base], self.amps[base | s]);
            self.amps[base] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[base | s] = m[1][0] * a0 + m[1][1] * a1;
        }
        Ok(())
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        match *gate {
            Gate::Cnot { control, target } => {
                self.check_wire(control)?;
                self.check_wire(target)?;
                if control == target {
                    return Err(Error::Wire(format!("CNOT control = target = {control}")));
                }
                let (sc, st) = (self.stride(control), self.stride(target));
                for i in 0..self.amps.len() {
                    if i & sc != 0 && i & st == 0 {
                        self.amps.swap(i, i | st);
                    }
                }
                Ok(())
            }
            Gate::Ry { wire, .. } | Gate::Rz { wire, .. } | Gate::U3 { wire, .. } => {
                let m = gate.matrix().expect("single-qubit gate");
                self.apply_matrix(wire, &m)
            }
        }
    }

    pub fn apply_all(&mut self, gates: &[Gate]) -> Result<()> {
        gates.iter().try_for_each(|g| self.apply(g))
    }

    /// `⟨Z_wire⟩ = Σ |αᵢ|² (±1)`.
    pub fn expval_z(&self, wire: usize) -> Result<f64> {
        self.check_wire(wire)?;
        let s = self.stride(wire);
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & s == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// `(P(0), P(1))` of measuring qubit 0.
    pub fn class_probabilities(&self) -> (f64, f64) {
        let s = self.stride(0);
        let p1: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & s != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        (1.0 - p1, p1)
    }
}

/// Pad `features` to `2^n`, normalise, and optionally apply the RY(π/2)
/// template on every qubit.
pub fn amplitude_embed(features: &[f64], n_qubits: usize, ry_template: bool) -> Result<Statevector> {
    let dim = 1usize << n_qubits;
    if features.len() > dim {
        return Err(Error::Capacity {
            len: features.len(),
            n_qubits,
        });
    }
    let norm = features.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("embedding input".into()));
    }
    if norm == 0.0 {
        return Err(Error::Embedding("cannot embed the zero vector".into()));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    for (a, &f) in amps.iter_mut().zip(features) {
        *a = Complex64::new(f / norm, 0.0);
    }
    let mut state = Statevector { n_qubits, amps };
    if ry_template {
        state.apply_all(&ry_template_gates(n_qubits))?;
    }
    Ok(state)
}

pub fn ry_template_gates(n_qubits: usize) -> Vec<Gate> {
    (0..n_qubits)
        .map(|wire| Gate::Ry {
            wire,
            theta: std::f64::consts::FRAC_PI_2,
        })
        .collect()
}

/// `U·U† − I` max-abs deviation for a 2×2 matrix.
pub fn unitarity_defect(m: &Mat2) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let v: Complex64 = (0..2).map(|k| m[i][k] * m[j][k].conj()).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}
