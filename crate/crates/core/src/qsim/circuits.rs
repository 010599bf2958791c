use serde::{Deserialize, Serialize};

use super::state::{Gate, Statevector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    Sel,
    Mera,
    Mps,
    Ttn,
}

impl std::str::FromStr for AnsatzKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sel" => Ok(AnsatzKind::Sel),
            "mera" => Ok(AnsatzKind::Mera),
            "mps" => Ok(AnsatzKind::Mps),
            "ttn" => Ok(AnsatzKind::Ttn),
            other => Err(Error::Spec(format!("unknown ansatz '{other}'"))),
        }
    }
}

impl std::fmt::Display for AnsatzKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AnsatzKind::Sel => "sel",
            AnsatzKind::Mera => "mera",
            AnsatzKind::Mps => "mps",
            AnsatzKind::Ttn => "ttn",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub kind: AnsatzKind,
    pub layers: usize,
    /// Entangler range, SEL only.
    pub range: usize,
}

impl AnsatzSpec {
    pub fn new(kind: AnsatzKind, layers: usize) -> Self {
        Self { kind, layers, range: 1 }
    }

    /// Two-qubit blocks `(a, b)` of one layer: RY on `a` and `b`, then
    /// CNOT(a → b). Blocks are oriented so information flows toward wire 0.
    pub fn blocks(&self, n: usize) -> Result<Vec<(usize, usize)>> {
        match self.kind {
            AnsatzKind::Sel => Ok(Vec::new()),
            AnsatzKind::Mps => {
                if n < 2 {
                    return Err(Error::Spec("MPS needs at least 2 qubits".into()));
                }
                Ok((1..n).rev().map(|q| (q, q - 1)).collect())
            }
            AnsatzKind::Ttn | AnsatzKind::Mera => {
                if n < 2 || !n.is_power_of_two() {
                    return Err(Error::Spec(format!("{} needs a power-of-two qubit count, got {n}", self.kind)));
                }
                let mut out = Vec::new();
                let mut s = 1;
                while s < n {
                    if self.kind == AnsatzKind::Mera {
                        let mut i = 0;
                        while i + 2 * s < n {
                            out.push((i + 2 * s, i + s));
                            i += 2 * s;
                        }
                    }
                    let mut i = 0;
                    while i + s < n {
                        out.push((i + s, i));
                        i += 2 * s;
                    }
                    s *= 2;
                }
                Ok(out)
            }
        }
    }

    pub fn param_count(&self, n: usize) -> Result<usize> {
        match self.kind {
            AnsatzKind::Sel => Ok(self.layers * n * 3),
            _ => Ok(self.layers * 2 * self.blocks(n)?.len()),
        }
    }

    /// Gate list for `params` (flat; SEL uses `[L, n, 3]` order).
    pub fn gates(&self, n: usize, params: &[f64]) -> Result<Vec<Gate>> {
        let want = self.param_count(n)?;
        if params.len() != want {
            return Err(Error::Shape(format!(
                "{} with L = {} on {n} qubits takes {want} params, got {}",
                self.kind,
                self.layers,
                params.len()
            )));
        }
        if self.kind == AnsatzKind::Sel {
            return sel_gates(n, self.layers, self.range, params);
        }
        let blocks = self.blocks(n)?;
        let mut gates = Vec::with_capacity(self.layers * blocks.len() * 3);
        let mut k = 0;
        for _ in 0..self.layers {
            for &(a, b) in &blocks {
                gates.push(Gate::Ry { wire: a, theta: params[k] });
                gates.push(Gate::Ry { wire: b, theta: params[k + 1] });
                gates.push(Gate::Cnot { control: a, target: b });
                k += 2;
            }
        }
        Ok(gates)
    }
}

/// Strongly entangling layers: U3 on every qubit, then CNOT(q, q + r mod n).
pub fn sel_gates(n: usize, layers: usize, range: usize, weights: &[f64]) -> Result<Vec<Gate>> {
    if weights.len() != layers * n * 3 {
        return Err(Error::Shape(format!(
            "SEL weights: {} values for [{layers}, {n}, 3]",
            weights.len()
        )));
    }
    let mut gates = Vec::with_capacity(layers * n * 2);
    for l in 0..layers {
        for q in 0..n {
            let w = &weights[(l * n + q) * 3..(l * n + q + 1) * 3];
            gates.push(Gate::U3 {
                wire: q,
                theta: w[0],
                phi: w[1],
                lambda: w[2],
            });
        }
        if n > 1 {
            for q in 0..n {
                let t = (q + range) % n;
                if t != q {
                    gates.push(Gate::Cnot { control: q, target: t });
                }
            }
        }
    }
    Ok(gates)
}

pub fn sel_circuit(state: &mut Statevector, weights: &[f64], layers: usize, range: usize) -> Result<()> {
    let gates = sel_gates(state.n_qubits(), layers, range, weights)?;
    state.apply_all(&gates)
}

pub fn ansatz_circuit(state: &mut Statevector, spec: &AnsatzSpec, params: &[f64]) -> Result<()> {
    let gates = spec.gates(state.n_qubits(), params)?;
    state.apply_all(&gates)
}

#[derive(Serialize)]
struct GateRecord<'a> {
    kind: &'a str,
    wires: Vec<usize>,
    params: Vec<f64>,
}

/// JSON gate list `[{"kind", "wires", "params"}, ...]`.
pub fn dump_circuit(gates: &[Gate]) -> Result<String> {
    let recs: Vec<GateRecord> = gates
        .iter()
        .map(|g| GateRecord {
            kind: g.name(),
            wires: g.wires(),
            params: g.params(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&recs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(gates: &[Gate]) -> (usize, usize) {
        let ry = gates.iter().filter(|g| matches!(g, Gate::Ry { .. })).count();
        (ry, gates.len() - ry)
    }

    #[test]
    fn mps_block_count() {
        let spec = AnsatzSpec::new(AnsatzKind::Mps, 1);
        let g = spec.gates(4, &[0.0; 6]).unwrap();
        assert_eq!(count(&g), (6, 3));
    }

    #[test]
    fn ttn_tree_shape() {
        let spec = AnsatzSpec::new(AnsatzKind::Ttn, 1);
        assert_eq!(spec.blocks(4).unwrap(), vec![(1, 0), (3, 2), (2, 0)]);
    }

    #[test]
    fn mera_adds_disentangler() {
        let spec = AnsatzSpec::new(AnsatzKind::Mera, 1);
        assert_eq!(spec.blocks(4).unwrap(), vec![(2, 1), (1, 0), (3, 2), (2, 0)]);
        assert!(spec.blocks(6).is_err());
    }

    #[test]
    fn sel_zero_layers_is_identity() {
        let mut s = Statevector::zero(3);
        s.apply(&Gate::Ry { wire: 1, theta: 0.4 }).unwrap();
        let before = s.clone();
        sel_circuit(&mut s, &[], 0, 1).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn dump_lists_gates() {
        let js = dump_circuit(&[Gate::Cnot { control: 0, target: 1 }]).unwrap();
        assert!(js.contains("\"cnot\"") && js.contains("\"wires\""));
    }
}
