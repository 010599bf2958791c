use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::kan::{Conv1dKan, Conv1dKanCache, DenseKan, DenseKanCache, SplineGrid, INIT_SIGMA};
use crate::par;
use crate::qsim::{amplitude_embed, amplitude_vjp, parameter_shift, AnsatzSpec, Embedding, QuantumBlock};
use crate::recurrent::{BiLstm, BiLstmCache};
use crate::rng::RngStream;
use crate::tensor::{Activation, Tensor};

/// Forward mode. Training draws dropout masks from the given stream and keeps
/// the caches backward needs.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut RngStream),
}

/// Affine map on the last axis followed by an activation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    /// `[in, out]`
    pub w: Tensor,
    /// `[out]`
    pub b: Tensor,
    pub act: Activation,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, act: Activation) -> Self {
        Self {
            w: Tensor::zeros(&[in_dim, out_dim]),
            b: Tensor::zeros(&[out_dim]),
            act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[1]
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(&mut self, rng: &mut RngStream) {
        let bound = (6.0 / (self.in_dim() + self.out_dim()) as f64).sqrt();
        for w in self.w.data_mut() {
            *w = rng.uniform(-bound, bound);
        }
        self.b.data_mut().iter_mut().for_each(|b| *b = 0.0);
    }

    fn pre(&self, x: &Tensor) -> Result<(Vec<usize>, Vec<f64>)> {
        let (n, m) = (self.in_dim(), self.out_dim());
        if x.rank() == 0 || x.last_dim() != n {
            return shape_err(format!("dense expects last dim {n}, got {:?}", x.shape()));
        }
        let rows = x.len() / n;
        let (w, b) = (self.w.data(), self.b.data());
        let mut z = vec![0.0; rows * m];
        par::for_each_chunk_mut(&mut z, m.max(1), |r, zr| {
            zr.copy_from_slice(b);
            for (k, &xv) in x.data()[r * n..(r + 1) * n].iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (o, &wv) in zr.iter_mut().zip(&w[k * m..(k + 1) * m]) {
                    *o += xv * wv;
                }
            }
        });
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("rank > 0") = m;
        Ok((shape, z))
    }

    fn backward(&self, x: &Tensor, z: &[f64], y: &[f64], gout: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (n, m) = (self.in_dim(), self.out_dim());
        let rows = x.len() / n;
        if gout.len() != rows * m {
            return shape_err("dense upstream grad");
        }
        let gz: Vec<f64> = gout
            .data()
            .iter()
            .zip(z.iter().zip(y))
            .map(|(g, (&zv, &yv))| g * self.act.grad(zv, yv))
            .collect();
        let w = self.w.data();
        let mut gx = vec![0.0; rows * n];
        par::for_each_chunk_mut(&mut gx, n.max(1), |r, gr| {
            let g = &gz[r * m..(r + 1) * m];
            for (k, o) in gr.iter_mut().enumerate() {
                *o = w[k * m..(k + 1) * m].iter().zip(g).map(|(a, b)| a * b).sum();
            }
        });
        let mut gw = vec![0.0; n * m];
        par::for_each_chunk_mut(&mut gw, m.max(1), |k, row| {
            for r in 0..rows {
                let xv = x.data()[r * n + k];
                if xv == 0.0 {
                    continue;
                }
                for (o, &g) in row.iter_mut().zip(&gz[r * m..(r + 1) * m]) {
                    *o += xv * g;
                }
            }
        });
        let mut gb = vec![0.0; m];
        for r in 0..rows {
            for (o, &g) in gb.iter_mut().zip(&gz[r * m..(r + 1) * m]) {
                *o += g;
            }
        }
        Ok((
            Tensor::new(x.shape().to_vec(), gx)?,
            vec![Tensor::new(vec![n, m], gw)?, Tensor::new(vec![m], gb)?],
        ))
    }
}

/// Split the last axis into `parts` equal segments, run each through its
/// own quantum block, and concatenate the per-wire readouts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantumSplit {
    pub block: QuantumBlock,
    /// One `[L, n, 3]` weight tensor per segment.
    pub weights: Vec<Tensor>,
}

impl QuantumSplit {
    pub fn new(block: QuantumBlock, parts: usize) -> Self {
        let shape = [block.layers, block.n_qubits, 3];
        Self {
            block,
            weights: vec![Tensor::zeros(&shape); parts],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.len() * self.block.input_width()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.len() * self.block.n_qubits
    }

    /// Weights ~ U(0, 2π).
    pub fn init(&mut self, rng: &mut RngStream) {
        for w in &mut self.weights {
            for v in w.data_mut() {
                *v = rng.uniform(0.0, std::f64::consts::TAU);
            }
        }
    }

    /// An all-zero amplitude segment has no direction to embed; it is read
    /// as `|0…0⟩` and passes no gradient back.
    fn segment_is_null(&self, seg: &[f64]) -> bool {
        self.block.embedding == Embedding::Amplitude && seg.iter().all(|&v| v == 0.0)
    }

    fn run_segment(&self, seg: &[f64], w: &Tensor) -> Result<Vec<f64>> {
        if self.segment_is_null(seg) {
            let mut e0 = vec![0.0; seg.len()];
            e0[0] = 1.0;
            return self.block.run(&e0, w.data());
        }
        self.block.run(seg, w.data())
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.in_dim() {
            return shape_err(format!("quantum split expects [batch, {}], got {:?}", self.in_dim(), x.shape()));
        }
        let (b, wi) = (x.shape()[0], self.block.input_width());
        let rows = par::try_map_range(b, |r| {
            let xr = x.row(r);
            let mut out = Vec::with_capacity(self.out_dim());
            for (p, w) in self.weights.iter().enumerate() {
                out.extend(self.run_segment(&xr[p * wi..(p + 1) * wi], w)?);
            }
            Ok::<_, Error>(out)
        })?;
        Tensor::new(vec![b, self.out_dim()], rows.into_iter().flatten().collect())
    }

    fn backward(&self, x: &Tensor, gout: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (b, wi, wo) = (x.shape()[0], self.block.input_width(), self.block.n_qubits);
        let parts = self.weights.len();
        let rows = par::try_map_range(b, |r| {
            let xr = x.row(r);
            let gr = gout.row(r);
            let mut gx = vec![0.0; self.in_dim()];
            let mut gw = Vec::with_capacity(parts);
            for (p, w) in self.weights.iter().enumerate() {
                let seg = &xr[p * wi..(p + 1) * wi];
                let g = &gr[p * wo..(p + 1) * wo];
                if self.segment_is_null(seg) {
                    let mut e0 = vec![0.0; wi];
                    e0[0] = 1.0;
                    let (_, gwp) = self.block.vjp(&e0, w.data(), g)?;
                    gw.push(gwp);
                } else {
                    let (gxp, gwp) = self.block.vjp(seg, w.data(), g)?;
                    gx[p * wi..(p + 1) * wi].copy_from_slice(&gxp);
                    gw.push(gwp);
                }
            }
            Ok::<_, Error>((gx, gw))
        })?;
        let mut gx = Vec::with_capacity(b * self.in_dim());
        let mut gws: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        for (gxr, gwr) in rows {
            gx.extend(gxr);
            for (acc, v) in gws.iter_mut().zip(gwr) {
                for (a, b) in acc.iter_mut().zip(v) {
                    *a += b;
                }
            }
        }
        let grads = gws
            .into_iter()
            .zip(&self.weights)
            .map(|(g, w)| Tensor::new(w.shape().to_vec(), g))
            .collect::<Result<Vec<_>>>()?;
        Ok((Tensor::new(x.shape().to_vec(), gx)?, grads))
    }
}

/// Variational classifier: amplitude embedding → ansatz → `p = (1 − ⟨Z₀⟩)/2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqcLayer {
    pub spec: AnsatzSpec,
    pub n_qubits: usize,
    pub ry_template: bool,
    pub params: Tensor,
}

impl VqcLayer {
    pub fn new(spec: AnsatzSpec, n_qubits: usize) -> Result<Self> {
        let n = spec.param_count(n_qubits)?;
        Ok(Self {
            spec,
            n_qubits,
            ry_template: false,
            params: Tensor::zeros(&[n]),
        })
    }

    pub fn init(&mut self, rng: &mut RngStream) {
        for v in self.params.data_mut() {
            *v = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI);
        }
    }

    fn gates(&self, params: &[f64]) -> Result<Vec<crate::qsim::Gate>> {
        let mut g = if self.ry_template {
            crate::qsim::ry_template_gates(self.n_qubits)
        } else {
            Vec::new()
        };
        g.extend(self.spec.gates(self.n_qubits, params)?);
        Ok(g)
    }

    /// Class-1 probability for one feature vector.
    pub fn predict_one(&self, x: &[f64], params: &[f64]) -> Result<f64> {
        let mut s = amplitude_embed(x, self.n_qubits, false)?;
        s.apply_all(&self.gates(params)?)?;
        Ok((1.0 - s.expval_z(0)?) / 2.0)
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let b = x.dim0();
        let p = par::try_map_range(b, |r| self.predict_one(x.row(r), self.params.data()))?;
        Tensor::new(vec![b, 1], p)
    }

    fn backward(&self, x: &Tensor, gout: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let b = x.dim0();
        let rows = par::try_map_range(b, |r| {
            let xr = x.row(r);
            let g = gout.data()[r];
            let jac = parameter_shift(self.params.data(), |p| Ok(vec![self.predict_one(xr, p)?]))?;
            let gw: Vec<f64> = jac.iter().map(|c| g * c[0]).collect();
            let gx = amplitude_vjp(xr, self.n_qubits, &self.gates(self.params.data())?, &[-0.5 * g])?;
            Ok::<_, Error>((gx, gw))
        })?;
        let mut gx = Vec::with_capacity(x.len());
        let mut gw = vec![0.0; self.params.len()];
        for (gxr, gwr) in rows {
            gx.extend(gxr);
            for (a, v) in gw.iter_mut().zip(gwr) {
                *a += v;
            }
        }
        Ok((
            Tensor::new(x.shape().to_vec(), gx)?,
            vec![Tensor::new(self.params.shape().to_vec(), gw)?],
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    DenseKan(DenseKan),
    Conv1dKan(Conv1dKan),
    Recurrent(BiLstm),
    Dropout { rate: f64 },
    Flatten,
    Quantum(QuantumSplit),
    Vqc(VqcLayer),
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense { x: Tensor, z: Vec<f64>, y: Vec<f64> },
    DenseKan(DenseKanCache),
    Conv1dKan(Conv1dKanCache),
    Recurrent(BiLstmCache),
    Dropout(Vec<f64>),
    Flatten(Vec<usize>),
    Quantum(Tensor),
    Vqc(Tensor, Vec<usize>),
}

impl Layer {
    pub fn dense(in_dim: usize, out_dim: usize, act: Activation) -> Self {
        Layer::Dense(Dense::new(in_dim, out_dim, act))
    }

    pub fn dense_kan(in_dim: usize, out_dim: usize, grid: SplineGrid) -> Self {
        Layer::DenseKan(DenseKan::new(in_dim, out_dim, grid))
    }

    pub fn init(&mut self, rng: &mut RngStream) {
        match self {
            Layer::Dense(d) => d.init(rng),
            Layer::DenseKan(k) => k.edges.init(rng, INIT_SIGMA),
            Layer::Conv1dKan(k) => k.edges.init(rng, INIT_SIGMA),
            Layer::Recurrent(r) => r.init(rng),
            Layer::Quantum(q) => q.init(rng),
            Layer::Vqc(v) => v.init(rng),
            Layer::Dropout { .. } | Layer::Flatten => {}
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.w, &d.b],
            Layer::DenseKan(k) => vec![&k.edges.coef, &k.edges.base_w, &k.edges.scale_w],
            Layer::Conv1dKan(k) => vec![&k.edges.coef, &k.edges.base_w, &k.edges.scale_w],
            Layer::Recurrent(r) => r.params(),
            Layer::Quantum(q) => q.weights.iter().collect(),
            Layer::Vqc(v) => vec![&v.params],
            Layer::Dropout { .. } | Layer::Flatten => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(d) => vec![&mut d.w, &mut d.b],
            Layer::DenseKan(k) => vec![&mut k.edges.coef, &mut k.edges.base_w, &mut k.edges.scale_w],
            Layer::Conv1dKan(k) => vec![&mut k.edges.coef, &mut k.edges.base_w, &mut k.edges.scale_w],
            Layer::Recurrent(r) => r.params_mut(),
            Layer::Quantum(q) => q.weights.iter_mut().collect(),
            Layer::Vqc(v) => vec![&mut v.params],
            Layer::Dropout { .. } | Layer::Flatten => vec![],
        }
    }

    pub fn kan_edges_mut(&mut self) -> Option<&mut crate::kan::KanEdges> {
        match self {
            Layer::DenseKan(k) => Some(&mut k.edges),
            Layer::Conv1dKan(k) => Some(&mut k.edges),
            _ => None,
        }
    }

    /// Forward one layer; returns a cache in train mode.
    pub fn forward(&self, x: Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, Option<LayerCache>)> {
        let train = matches!(mode, Mode::Train(_));
        match self {
            Layer::Dense(d) => {
                let (shape, z) = d.pre(&x)?;
                let y: Vec<f64> = z.iter().map(|&v| d.act.apply(v)).collect();
                let out = Tensor::new(shape, y.clone())?;
                Ok((out, train.then(|| LayerCache::Dense { x, z, y })))
            }
            Layer::DenseKan(k) => {
                if train {
                    let (y, c) = k.forward_train(&x)?;
                    Ok((y, Some(LayerCache::DenseKan(c))))
                } else {
                    Ok((k.forward(&x)?, None))
                }
            }
            Layer::Conv1dKan(k) => {
                if train {
                    let (y, c) = k.forward_train(&x)?;
                    Ok((y, Some(LayerCache::Conv1dKan(c))))
                } else {
                    Ok((k.forward(&x)?, None))
                }
            }
            Layer::Recurrent(r) => {
                if train {
                    let (y, c) = r.forward_train(&x)?;
                    Ok((y, Some(LayerCache::Recurrent(c))))
                } else {
                    Ok((r.forward(&x)?, None))
                }
            }
            Layer::Dropout { rate } => match mode {
                Mode::Train(rng) if *rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| if rng.uniform01() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let mut y = x;
                    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    Ok((y, Some(LayerCache::Dropout(mask))))
                }
                Mode::Train(_) => {
                    let n = x.len();
                    Ok((x, Some(LayerCache::Dropout(vec![1.0; n]))))
                }
                Mode::Infer => Ok((x, None)),
            },
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let b = x.dim0();
                let w = x.len() / b.max(1);
                let y = x.reshape(vec![b, w])?;
                Ok((y, train.then_some(LayerCache::Flatten(shape))))
            }
            Layer::Quantum(q) => {
                let y = q.forward(&x)?;
                Ok((y, train.then_some(LayerCache::Quantum(x))))
            }
            Layer::Vqc(v) => {
                let shape = x.shape().to_vec();
                let flat = {
                    let b = x.dim0();
                    let w = x.len() / b.max(1);
                    x.reshape(vec![b, w])?
                };
                let y = v.forward(&flat)?;
                Ok((y, train.then_some(LayerCache::Vqc(flat, shape))))
            }
        }
    }

    /// Returns the input gradient and this layer's parameter gradients in
    /// [`Layer::params`] order.
    pub fn backward(&self, cache: &LayerCache, gout: Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense { x, z, y }) => d.backward(x, z, y, &gout),
            (Layer::DenseKan(k), LayerCache::DenseKan(c)) => {
                let (g, e) = k.backward(c, &gout)?;
                Ok((g, vec![e.coef, e.base_w, e.scale_w]))
            }
            (Layer::Conv1dKan(k), LayerCache::Conv1dKan(c)) => {
                let (g, e) = k.backward(c, &gout)?;
                Ok((g, vec![e.coef, e.base_w, e.scale_w]))
            }
            (Layer::Recurrent(r), LayerCache::Recurrent(c)) => r.backward(c, &gout),
            (Layer::Dropout { .. }, LayerCache::Dropout(mask)) => {
                let mut g = gout;
                for (v, m) in g.data_mut().iter_mut().zip(mask) {
                    *v *= m;
                }
                Ok((g, vec![]))
            }
            (Layer::Flatten, LayerCache::Flatten(shape)) => Ok((gout.reshape(shape.clone())?, vec![])),
            (Layer::Quantum(q), LayerCache::Quantum(x)) => q.backward(x, &gout),
            (Layer::Vqc(v), LayerCache::Vqc(x, shape)) => {
                let (g, p) = v.backward(x, &gout)?;
                Ok((g.reshape(shape.clone())?, p))
            }
            _ => Err(Error::MissingCache),
        }
    }
}
