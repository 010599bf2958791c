use super::layer::{Layer, QuantumSplit, VqcLayer};
use super::{Hyperparams, Variant};
use crate::error::{Error, Result};
use crate::kan::{Conv1dKan, SplineGrid};
use crate::qsim::{AnsatzSpec, QuantumBlock};
use crate::recurrent::BiLstm;
use crate::tensor::Activation;

/// Tracks the running feature shape while layers are appended.
pub(super) struct Stack<'a> {
    hp: &'a Hyperparams,
    variant: &'a Variant,
    /// Width multiplier applied to dense layers that stand in for KAN layers.
    scale: f64,
    /// Trailing shape after the batch axis.
    shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl<'a> Stack<'a> {
    pub fn new(hp: &'a Hyperparams, variant: &'a Variant, scale: f64, shape: Vec<usize>) -> Self {
        Self {
            hp,
            variant,
            scale,
            shape,
            layers: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    fn grid(&self) -> SplineGrid {
        SplineGrid::new(-1.0, 1.0, self.hp.grid_size, self.hp.spline_degree)
    }

    fn set_width(&mut self, w: usize) {
        *self.shape.last_mut().expect("non-empty shape") = w;
    }

    pub fn dense(&mut self, out: usize, act: Activation) -> &mut Self {
        self.layers.push(Layer::dense(self.width(), out, act));
        self.set_width(out);
        self
    }

    /// DenseKAN, or a ReLU dense layer of scaled width when `kan` is off.
    /// `fixed` pins the width (the pre-quantum layer must stay `3·2^n`).
    pub fn kan(&mut self, out: usize, kan: bool, fixed: bool) -> &mut Self {
        if kan {
            self.layers.push(Layer::dense_kan(self.width(), out, self.grid()));
            self.set_width(out);
            self
        } else {
            let w = if fixed {
                out
            } else {
                ((out as f64 * self.scale).round() as usize).max(1)
            };
            self.dense(w, Activation::Relu)
        }
    }

    pub fn dropout(&mut self) -> &mut Self {
        if self.variant.dropout && self.hp.dropout_rate > 0.0 {
            self.layers.push(Layer::Dropout {
                rate: self.hp.dropout_rate,
            });
        }
        self
    }

    pub fn flatten(&mut self) -> &mut Self {
        self.layers.push(Layer::Flatten);
        self.shape = vec![self.shape.iter().product()];
        self
    }

    pub fn bilstm(&mut self) -> &mut Self {
        let l = BiLstm::new(self.hp.lstm_units, self.width(), self.variant.bidirectional);
        let out = l.out_dim();
        self.layers.push(Layer::Recurrent(l));
        self.set_width(out);
        self
    }

    pub fn conv(&mut self, kernel: usize, stride: usize) -> Result<&mut Self> {
        if self.shape.len() != 2 {
            return Err(Error::Param("Conv1DKAN needs a [L, C] input".into()));
        }
        let (len, c) = (self.shape[0], self.shape[1]);
        let layer = Conv1dKan::new(c, self.hp.conv_filters, kernel, stride, self.grid());
        let lo = layer.out_len(len).map_err(|_| {
            Error::Param(format!("sequence of {len} too short for kernel {kernel}"))
        })?;
        self.layers.push(Layer::Conv1dKan(layer));
        self.shape = vec![lo, self.hp.conv_filters];
        Ok(self)
    }

    /// Pre-quantum layer, three quantum blocks, concatenation. Without the
    /// quantum variant only the pre-quantum layer remains.
    pub fn quantum(&mut self, kan: bool) -> &mut Self {
        let width = self.hp.pre_quantum_width(self.variant.embedding);
        self.kan(width, kan, true);
        if self.variant.quantum {
            let mut block = QuantumBlock::new(self.hp.n_qubits, self.hp.quantum_layers);
            block.embedding = self.variant.embedding;
            block.ry_template = self.variant.ry_template;
            let q = QuantumSplit::new(block, 3);
            let out = q.out_dim();
            self.layers.push(Layer::Quantum(q));
            self.set_width(out);
        }
        self
    }
}

pub(super) fn bilstm_channel(s: &mut Stack<'_>) {
    let hp = s.hp;
    let kan = s.variant.classical_kan;
    for _ in 0..s.variant.lstm_layers {
        s.bilstm();
    }
    s.flatten()
        .dense(hp.dense_units, Activation::Relu)
        .dropout()
        .kan(hp.kan_units_1, kan, false)
        .dropout()
        .kan(hp.kan_units_2, kan, false)
        .dropout();
}

pub(super) fn qdense_channel(s: &mut Stack<'_>) {
    let hp = s.hp;
    let kan = s.variant.quantum_kan;
    s.kan(hp.qdense_units_1, kan, false)
        .flatten()
        .dropout()
        .kan(hp.qdense_units_2, kan, false)
        .dropout()
        .quantum(kan)
        .kan(hp.qdense_units_out, kan, false)
        .dropout()
        .kan(hp.kan_units_2, kan, false)
        .dropout();
}

pub(super) fn qc_channel(s: &mut Stack<'_>) -> Result<()> {
    let hp = s.hp;
    s.conv(3, 2)?.conv(2, 2)?;
    s.flatten()
        .quantum(true)
        .kan(hp.kan_units_1, true, false)
        .dropout()
        .kan(hp.kan_units_2, true, false)
        .dropout();
    Ok(())
}

pub(super) fn vqc_layers(hp: &Hyperparams, variant: &Variant, ansatz: crate::qsim::AnsatzKind, n_features: usize) -> Result<Vec<Layer>> {
    if n_features > 1 << hp.n_qubits {
        return Err(Error::Capacity {
            len: n_features,
            n_qubits: hp.n_qubits,
        });
    }
    let mut v = VqcLayer::new(AnsatzSpec::new(ansatz, hp.quantum_layers), hp.n_qubits)?;
    v.ry_template = variant.ry_template;
    Ok(vec![Layer::Vqc(v)])
}
