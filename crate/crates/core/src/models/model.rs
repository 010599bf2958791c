use serde::{Deserialize, Serialize};

use super::build::{bilstm_channel, qc_channel, qdense_channel, vqc_layers, Stack};
use super::layer::{Layer, LayerCache, Mode};
use super::{Hyperparams, ModelKind, Variant};
use crate::error::{shape_err, Error, Result};
use crate::kan::SplineGrid;
use crate::rng::RngStream;
use crate::tensor::{Activation, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Topology {
    Sequential(Vec<Layer>),
    /// Two channels on the same input, concatenated into a head.
    Dual {
        a: Vec<Layer>,
        b: Vec<Layer>,
        head: Vec<Layer>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub hp: Hyperparams,
    pub variant: Variant,
    pub seed: u64,
    pub n_features: usize,
    pub topology: Topology,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    branches: Vec<Vec<LayerCache>>,
    split: Option<usize>,
    expanded: bool,
}

const INIT_STREAM: u64 = 0x1A17;

impl Model {
    /// Build and initialise `kind` for inputs of shape `[batch, n_features, 1]`.
    pub fn build(kind: ModelKind, hp: &Hyperparams, variant: &Variant, n_features: usize, seed: u64) -> Result<Self> {
        hp.validate()?;
        if n_features == 0 {
            return Err(Error::Param("model needs at least one feature".into()));
        }
        if variant.lstm_layers > 8 {
            return Err(Error::Param(format!("{} LSTM layers", variant.lstm_layers)));
        }
        let mut hp = hp.clone();
        let mut variant = variant.clone();
        if kind == ModelKind::KacqMlp {
            variant.classical_kan = false;
            variant.quantum_kan = false;
            if hp.mlp_width_scale.is_none() {
                hp.mlp_width_scale = Some(matched_mlp_scale(&hp, &variant, n_features)?);
            }
        }
        let topology = topology(kind, &hp, &variant, n_features)?;
        let mut model = Self {
            kind,
            hp,
            variant,
            seed,
            n_features,
            topology,
        };
        let mut rng = RngStream::new(seed, INIT_STREAM);
        for l in model.layers_mut() {
            l.init(&mut rng);
        }
        Ok(model)
    }

    pub fn layers(&self) -> Vec<&Layer> {
        match &self.topology {
            Topology::Sequential(l) => l.iter().collect(),
            Topology::Dual { a, b, head } => a.iter().chain(b).chain(head).collect(),
        }
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Layer> {
        match &mut self.topology {
            Topology::Sequential(l) => l.iter_mut().collect(),
            Topology::Dual { a, b, head } => a.iter_mut().chain(b.iter_mut()).chain(head.iter_mut()).collect(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers().into_iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut().into_iter().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|p| p.shape().to_vec()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Spline grids of every KAN layer, in layer order.
    pub fn grids(&self) -> Vec<SplineGrid> {
        self.layers()
            .into_iter()
            .filter_map(|l| match l {
                Layer::DenseKan(k) => Some(k.edges.grid),
                Layer::Conv1dKan(k) => Some(k.edges.grid),
                _ => None,
            })
            .collect()
    }

    /// Replace the grids (resizing coefficient tensors), e.g. when loading.
    pub fn set_grids(&mut self, grids: &[SplineGrid]) -> Result<()> {
        let mut edges: Vec<_> = self.layers_mut().into_iter().filter_map(|l| l.kan_edges_mut()).collect();
        if edges.len() != grids.len() {
            return Err(Error::Checkpoint(format!("{} grids for {} KAN layers", grids.len(), edges.len())));
        }
        for (e, g) in edges.iter_mut().zip(grids) {
            e.grid = *g;
            e.coef = Tensor::zeros(&[e.out_dim, e.in_dim, g.n_basis()]);
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 3 || x.shape()[1] != self.n_features || x.shape()[2] != 1 {
            return shape_err(format!(
                "model expects [batch, {}, 1], got {:?}",
                self.n_features,
                x.shape()
            ));
        }
        Ok(())
    }

    /// `[batch, 2]` sigmoid outputs; the cache is kept only in train mode.
    pub fn forward(&self, x: &Tensor, mut mode: Mode<'_>) -> Result<(Tensor, Option<ForwardCache>)> {
        self.check_input(x)?;
        let train = matches!(mode, Mode::Train(_));
        let mut branches = Vec::new();
        let (out, split) = match &self.topology {
            Topology::Sequential(layers) => {
                let (y, c) = run(layers, x.clone(), &mut mode)?;
                branches.push(c);
                (y, None)
            }
            Topology::Dual { a, b, head } => {
                let (ya, ca) = run(a, x.clone(), &mut mode)?;
                let (yb, cb) = run(b, x.clone(), &mut mode)?;
                let wa = ya.last_dim();
                let joined = concat(&ya, &yb)?;
                let (y, ch) = run(head, joined, &mut mode)?;
                branches.extend([ca, cb, ch]);
                (y, Some(wa))
            }
        };
        let expanded = out.last_dim() == 1;
        let probs = if expanded {
            let b = out.dim0();
            let data = out.data().iter().flat_map(|&p| [1.0 - p, p]).collect();
            Tensor::new(vec![b, 2], data)?
        } else {
            out
        };
        probs.check_finite("model output")?;
        let cache = train.then_some(ForwardCache {
            branches,
            split,
            expanded,
        });
        Ok((probs, cache))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, Mode::Infer)?.0)
    }

    /// Parameter gradients, in [`Model::params`] order.
    pub fn backward(&self, cache: &ForwardCache, dprobs: &Tensor) -> Result<Vec<Tensor>> {
        let g = if cache.expanded {
            let b = dprobs.dim0();
            let d = (0..b).map(|r| dprobs.data()[2 * r + 1] - dprobs.data()[2 * r]).collect();
            Tensor::new(vec![b, 1], d)?
        } else {
            dprobs.clone()
        };
        match &self.topology {
            Topology::Sequential(layers) => {
                let c = cache.branches.first().ok_or(Error::MissingCache)?;
                Ok(back(layers, c, g)?.1)
            }
            Topology::Dual { a, b, head } => {
                if cache.branches.len() != 3 {
                    return Err(Error::MissingCache);
                }
                let (gj, gh) = back(head, &cache.branches[2], g)?;
                let wa = cache.split.ok_or(Error::MissingCache)?;
                let (ga, gb) = split(&gj, wa)?;
                let (_, gbp) = back(b, &cache.branches[1], gb)?;
                let (_, gap) = back(a, &cache.branches[0], ga)?;
                Ok(gap.into_iter().chain(gbp).chain(gh).collect())
            }
        }
    }

    /// Extend KAN grids to cover the activations seen on `x`. Returns whether
    /// any parameter shape changed.
    pub fn grid_update(&mut self, x: &Tensor, max_grid: usize) -> Result<bool> {
        self.check_input(x)?;
        let inputs: Vec<Vec<f64>> = match &self.topology {
            Topology::Sequential(l) => kan_inputs(l, x.clone())?.1,
            Topology::Dual { a, b, head } => {
                let (ya, mut ia) = kan_inputs(a, x.clone())?;
                let (yb, ib) = kan_inputs(b, x.clone())?;
                let (_, ih) = kan_inputs(head, concat(&ya, &yb)?)?;
                ia.extend(ib);
                ia.extend(ih);
                ia
            }
        };
        let mut changed = false;
        let edges: Vec<_> = self.layers_mut().into_iter().filter_map(|l| l.kan_edges_mut()).collect();
        for (e, acts) in edges.into_iter().zip(&inputs) {
            changed |= e.grid_update_capped(acts, max_grid)?;
        }
        Ok(changed)
    }
}

fn run(layers: &[Layer], mut x: Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, Vec<LayerCache>)> {
    let mut caches = Vec::new();
    for l in layers {
        let (y, c) = l.forward(x, mode)?;
        caches.extend(c);
        x = y;
    }
    Ok((x, caches))
}

fn back(layers: &[Layer], caches: &[LayerCache], mut g: Tensor) -> Result<(Tensor, Vec<Tensor>)> {
    if caches.len() != layers.len() {
        return Err(Error::MissingCache);
    }
    let mut grads: Vec<Vec<Tensor>> = Vec::with_capacity(layers.len());
    for (l, c) in layers.iter().zip(caches).rev() {
        let (gi, gp) = l.backward(c, g)?;
        grads.push(gp);
        g = gi;
    }
    grads.reverse();
    Ok((g, grads.into_iter().flatten().collect()))
}

fn kan_inputs(layers: &[Layer], mut x: Tensor) -> Result<(Tensor, Vec<Vec<f64>>)> {
    let mut out = Vec::new();
    for l in layers {
        if matches!(l, Layer::DenseKan(_) | Layer::Conv1dKan(_)) {
            out.push(x.data().to_vec());
        }
        x = l.forward(x, &mut Mode::Infer)?.0;
    }
    Ok((x, out))
}

fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.dim0() != b.dim0() {
        return shape_err(format!("concat {:?} with {:?}", a.shape(), b.shape()));
    }
    let (wa, wb) = (a.shape()[1], b.shape()[1]);
    let mut data = Vec::with_capacity(a.len() + b.len());
    for r in 0..a.dim0() {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    Tensor::new(vec![a.dim0(), wa + wb], data)
}

fn split(g: &Tensor, wa: usize) -> Result<(Tensor, Tensor)> {
    let (b, w) = (g.dim0(), g.last_dim());
    let mut ga = Vec::with_capacity(b * wa);
    let mut gb = Vec::with_capacity(b * (w - wa));
    for r in 0..b {
        ga.extend_from_slice(&g.row(r)[..wa]);
        gb.extend_from_slice(&g.row(r)[wa..]);
    }
    Ok((Tensor::new(vec![b, wa], ga)?, Tensor::new(vec![b, w - wa], gb)?))
}

fn topology(kind: ModelKind, hp: &Hyperparams, variant: &Variant, n_features: usize) -> Result<Topology> {
    let scale = hp.mlp_width_scale.unwrap_or(1.0);
    let input = vec![n_features, 1];
    let channel = |f: &dyn Fn(&mut Stack<'_>) -> Result<()>| -> Result<(Vec<Layer>, usize)> {
        let mut s = Stack::new(hp, variant, scale, input.clone());
        f(&mut s)?;
        let w = s.width();
        Ok((s.layers, w))
    };
    let with_head = |(mut layers, w): (Vec<Layer>, usize)| {
        layers.push(Layer::dense(w, 2, Activation::Sigmoid));
        Topology::Sequential(layers)
    };
    Ok(match kind {
        ModelKind::BilstmKannet => with_head(channel(&|s| {
            bilstm_channel(s);
            Ok(())
        })?),
        ModelKind::QdenseKannet => with_head(channel(&|s| {
            qdense_channel(s);
            Ok(())
        })?),
        ModelKind::QcKannet => with_head(channel(&|s| qc_channel(s))?),
        ModelKind::KacqDcnn | ModelKind::KacqMlp => {
            let (a, wa) = channel(&|s| {
                bilstm_channel(s);
                Ok(())
            })?;
            let (b, wb) = channel(&|s| {
                qdense_channel(s);
                Ok(())
            })?;
            let head = vec![
                Layer::dense(wa + wb, hp.join_units, Activation::Relu),
                Layer::dense(hp.join_units, 2, Activation::Sigmoid),
            ];
            Topology::Dual { a, b, head }
        }
        ModelKind::Vqc(ansatz) => Topology::Sequential(vqc_layers(hp, variant, ansatz, n_features)?),
        ModelKind::Logistic => Topology::Sequential(vec![
            Layer::Flatten,
            Layer::dense(n_features, 1, Activation::Sigmoid),
        ]),
    })
}

fn count(kind: ModelKind, hp: &Hyperparams, variant: &Variant, n_features: usize) -> Result<usize> {
    let t = topology(kind, hp, variant, n_features)?;
    let layers: Vec<&Layer> = match &t {
        Topology::Sequential(l) => l.iter().collect(),
        Topology::Dual { a, b, head } => a.iter().chain(b).chain(head).collect(),
    };
    Ok(layers.iter().flat_map(|l| l.params()).map(|p| p.len()).sum())
}

/// Width multiplier for the MLP counterpart whose parameter count is
/// closest to the KAN model built from the same settings.
fn matched_mlp_scale(hp: &Hyperparams, variant: &Variant, n_features: usize) -> Result<f64> {
    let kan_variant = Variant {
        classical_kan: true,
        quantum_kan: true,
        ..variant.clone()
    };
    let target = count(ModelKind::KacqDcnn, hp, &kan_variant, n_features)? as f64;
    let at = |s: f64| -> Result<f64> {
        let h = Hyperparams {
            mlp_width_scale: Some(s),
            ..hp.clone()
        };
        Ok(count(ModelKind::KacqMlp, &h, variant, n_features)? as f64)
    };
    let (mut lo, mut hi) = (0.05, 1.0);
    while at(hi)? < target {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Param("cannot match MLP parameter count".into()));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = if (at(lo)? - target).abs() <= (at(hi)? - target).abs() { lo } else { hi };
    Ok(best)
}
