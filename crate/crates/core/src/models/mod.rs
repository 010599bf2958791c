//! Architectures: the two channels, the dual-channel network, its MLP
//! counterpart, tensor-network VQCs and a logistic baseline, all behind one
//! forward/backward contract.

mod build;
mod checkpoint;
mod layer;
mod logistic;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{AnsatzKind, Embedding};
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use layer::{Dense, Layer, LayerCache, Mode, QuantumSplit, VqcLayer};
pub use logistic::fit_logistic;
pub use model::{ForwardCache, Model, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BilstmKannet,
    QdenseKannet,
    QcKannet,
    KacqDcnn,
    KacqMlp,
    Vqc(AnsatzKind),
    Logistic,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        Ok(match s.as_str() {
            "bilstm_kannet" => ModelKind::BilstmKannet,
            "qdense_kannet" => ModelKind::QdenseKannet,
            "qc_kannet" => ModelKind::QcKannet,
            "kacq_dcnn" => ModelKind::KacqDcnn,
            "kacq_mlp" => ModelKind::KacqMlp,
            "logistic" => ModelKind::Logistic,
            other => match other.strip_prefix("vqc_") {
                Some(a) => ModelKind::Vqc(a.parse()?),
                None => return Err(Error::Param(format!("unknown model kind '{other}'"))),
            },
        })
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::BilstmKannet => f.write_str("bilstm_kannet"),
            ModelKind::QdenseKannet => f.write_str("qdense_kannet"),
            ModelKind::QcKannet => f.write_str("qc_kannet"),
            ModelKind::KacqDcnn => f.write_str("kacq_dcnn"),
            ModelKind::KacqMlp => f.write_str("kacq_mlp"),
            ModelKind::Vqc(a) => write!(f, "vqc_{a}"),
            ModelKind::Logistic => f.write_str("logistic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lstm_units: usize,
    pub dense_units: usize,
    pub kan_units_1: usize,
    pub kan_units_2: usize,
    pub qdense_units_1: usize,
    pub qdense_units_2: usize,
    pub qdense_units_out: usize,
    pub conv_filters: usize,
    pub dropout_rate: f64,
    pub n_qubits: usize,
    pub quantum_layers: usize,
    pub grid_size: usize,
    pub spline_degree: usize,
    pub join_units: usize,
    /// Width multiplier for the MLP counterpart; `None` searches for the
    /// value that matches the KAN model's parameter count.
    pub mlp_width_scale: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lstm_units: 64,
            dense_units: 320,
            kan_units_1: 256,
            kan_units_2: 32,
            qdense_units_1: 112,
            qdense_units_2: 176,
            qdense_units_out: 112,
            conv_filters: 96,
            dropout_rate: 0.2,
            n_qubits: 4,
            quantum_layers: 1,
            grid_size: 3,
            spline_degree: 3,
            join_units: 64,
            mlp_width_scale: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("lstm_units", self.lstm_units),
            ("dense_units", self.dense_units),
            ("kan_units_1", self.kan_units_1),
            ("kan_units_2", self.kan_units_2),
            ("qdense_units_1", self.qdense_units_1),
            ("qdense_units_2", self.qdense_units_2),
            ("qdense_units_out", self.qdense_units_out),
            ("conv_filters", self.conv_filters),
            ("n_qubits", self.n_qubits),
            ("quantum_layers", self.quantum_layers),
            ("grid_size", self.grid_size),
            ("join_units", self.join_units),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Param(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Param(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        if self.n_qubits > 12 {
            return Err(Error::Param(format!("{} qubits is beyond the simulator budget", self.n_qubits)));
        }
        if let Some(s) = self.mlp_width_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Param(format!("mlp width scale {s}")));
            }
        }
        Ok(())
    }

    /// Width of the layer feeding the three quantum blocks.
    pub fn pre_quantum_width(&self, embedding: Embedding) -> usize {
        3 * match embedding {
            Embedding::Amplitude => 1 << self.n_qubits,
            Embedding::Angle => self.n_qubits,
        }
    }

    /// Tiny configuration for gradient checks and smoke tests.
    pub fn tiny() -> Self {
        Self {
            lstm_units: 4,
            dense_units: 8,
            kan_units_1: 8,
            kan_units_2: 4,
            qdense_units_1: 4,
            qdense_units_2: 8,
            qdense_units_out: 8,
            conv_filters: 4,
            dropout_rate: 0.2,
            n_qubits: 2,
            quantum_layers: 1,
            grid_size: 3,
            spline_degree: 3,
            join_units: 8,
            mlp_width_scale: None,
        }
    }
}

/// Structural switches for the ablation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Variant {
    pub bidirectional: bool,
    pub lstm_layers: usize,
    pub classical_kan: bool,
    pub quantum_kan: bool,
    pub quantum: bool,
    pub dropout: bool,
    pub embedding: Embedding,
    pub ry_template: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Self {
            bidirectional: true,
            lstm_layers: 2,
            classical_kan: true,
            quantum_kan: true,
            quantum: true,
            dropout: true,
            embedding: Embedding::Amplitude,
            ry_template: true,
        }
    }
}

/// The ablation rows: name, model kind and structural variant.
pub fn ablations() -> Vec<(&'static str, ModelKind, Variant)> {
    let base = Variant::default();
    vec![
        ("kacq_dcnn", ModelKind::KacqDcnn, base.clone()),
        ("mlp_version", ModelKind::KacqMlp, base.clone()),
        ("lstm_for_bilstm", ModelKind::KacqDcnn, Variant { bidirectional: false, ..base.clone() }),
        ("minus_one_bilstm", ModelKind::KacqDcnn, Variant { lstm_layers: 1, ..base.clone() }),
        ("minus_all_bilstm", ModelKind::KacqDcnn, Variant { lstm_layers: 0, ..base.clone() }),
        ("minus_classical_kan", ModelKind::KacqDcnn, Variant { classical_kan: false, ..base.clone() }),
        ("minus_quantum_kan", ModelKind::KacqDcnn, Variant { quantum_kan: false, ..base.clone() }),
        ("minus_quantum_layers", ModelKind::KacqDcnn, Variant { quantum: false, ..base.clone() }),
        ("minus_dropout", ModelKind::KacqDcnn, Variant { dropout: false, ..base.clone() }),
        ("angle_embedding", ModelKind::KacqDcnn, Variant { embedding: Embedding::Angle, ..base }),
    ]
}

/// Class-1 score `out₁ / (out₀ + out₁)` per row of a `[batch, 2]` output.
pub fn class1_scores(probs: &Tensor) -> Vec<f64> {
    (0..probs.dim0())
        .map(|r| {
            let row = probs.row(r);
            let s = row[0] + row[1];
            if s > 0.0 {
                row[1] / s
            } else {
                0.5
            }
        })
        .collect()
}

/// Label 1 iff the class-1 score is strictly above `tau`.
pub fn predict_labels(probs: &Tensor, tau: f64) -> Vec<u8> {
    class1_scores(probs).into_iter().map(|s| u8::from(s > tau)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_rule() {
        let p = Tensor::from_rows(&[vec![0.2, 0.9], vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
        assert_eq!(predict_labels(&p, 0.5), vec![1, 0, 0]);
        assert_eq!(predict_labels(&p, 1.0), vec![0, 0, 0]);
    }

    #[test]
    fn kind_round_trip() {
        for k in ["kacq_dcnn", "kacq-mlp", "vqc_mera", "logistic", "qc_kannet"] {
            let kind: ModelKind = k.parse().unwrap();
            assert_eq!(kind.to_string(), k.replace('-', "_"));
        }
        assert!("resnet".parse::<ModelKind>().is_err());
    }
}
