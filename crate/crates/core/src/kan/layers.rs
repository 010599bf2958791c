use serde::{Deserialize, Serialize};

use super::edges::{EdgeCache, EdgeGrads, KanEdges};
use super::spline::SplineGrid;
use crate::error::{shape_err, Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Fully connected KAN layer acting on the last axis of its input, so a
/// `[batch, T, n]` tensor is transformed step by step into `[batch, T, m]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseKan {
    pub edges: KanEdges,
}

#[derive(Debug, Clone)]
pub struct DenseKanCache {
    in_shape: Vec<usize>,
    edges: EdgeCache,
}

impl DenseKan {
    pub fn new(in_dim: usize, out_dim: usize, grid: SplineGrid) -> Self {
        Self {
            edges: KanEdges::zeros(in_dim, out_dim, grid),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.edges.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.edges.out_dim
    }

    fn out_shape(&self, x: &Tensor) -> Result<Vec<usize>> {
        if x.rank() == 0 || x.last_dim() != self.in_dim() {
            return shape_err(format!(
                "DenseKAN expects last dim {}, got {:?}",
                self.in_dim(),
                x.shape()
            ));
        }
        let mut s = x.shape().to_vec();
        *s.last_mut().expect("rank > 0") = self.out_dim();
        Ok(s)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let shape = self.out_shape(x)?;
        let (y, _) = self.edges.forward(x.data(), false)?;
        Tensor::new(shape, y)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, DenseKanCache)> {
        let shape = self.out_shape(x)?;
        let (y, cache) = self.edges.forward(x.data(), true)?;
        let cache = DenseKanCache {
            in_shape: x.shape().to_vec(),
            edges: cache.ok_or(Error::MissingCache)?,
        };
        Ok((Tensor::new(shape, y)?, cache))
    }

    pub fn backward(&self, cache: &DenseKanCache, gout: &Tensor) -> Result<(Tensor, EdgeGrads)> {
        let (gin, grads) = self.edges.backward(&cache.edges, gout.data())?;
        Ok((Tensor::new(cache.in_shape.clone(), gin)?, grads))
    }
}

/// Valid (unpadded) 1-D convolution whose taps are KAN edge functions over
/// each `K × C` window. Input `[batch, L, C]`, output `[batch, L', F]` with
/// `L' = (L − K) / S + 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1dKan {
    pub edges: KanEdges,
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct Conv1dKanCache {
    batch: usize,
    len: usize,
    edges: EdgeCache,
}

impl Conv1dKan {
    pub fn new(channels: usize, filters: usize, kernel: usize, stride: usize, grid: SplineGrid) -> Self {
        assert!(kernel > 0 && stride > 0, "kernel and stride must be positive");
        Self {
            edges: KanEdges::zeros(kernel * channels, filters, grid),
            kernel,
            stride,
            channels,
        }
    }

    pub fn filters(&self) -> usize {
        self.edges.out_dim
    }

    pub fn out_len(&self, len: usize) -> Result<usize> {
        if len < self.kernel {
            return shape_err(format!("sequence length {len} < kernel {}", self.kernel));
        }
        Ok((len - self.kernel) / self.stride + 1)
    }

    fn im2col(&self, x: &Tensor) -> Result<(usize, usize, usize, Vec<f64>)> {
        if x.rank() != 3 || x.shape()[2] != self.channels {
            return shape_err(format!(
                "Conv1DKAN expects [batch, L, {}], got {:?}",
                self.channels,
                x.shape()
            ));
        }
        let (b, l, c) = (x.shape()[0], x.shape()[1], self.channels);
        let lo = self.out_len(l)?;
        let w = self.kernel * c;
        let mut cols = Vec::with_capacity(b * lo * w);
        for bi in 0..b {
            for t in 0..lo {
                let start = (bi * l + t * self.stride) * c;
                cols.extend_from_slice(&x.data()[start..start + w]);
            }
        }
        Ok((b, l, lo, cols))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, _, lo, cols) = self.im2col(x)?;
        let (y, _) = self.edges.forward(&cols, false)?;
        Tensor::new(vec![b, lo, self.filters()], y)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, Conv1dKanCache)> {
        let (b, l, lo, cols) = self.im2col(x)?;
        let (y, cache) = self.edges.forward(&cols, true)?;
        let cache = Conv1dKanCache {
            batch: b,
            len: l,
            edges: cache.ok_or(Error::MissingCache)?,
        };
        Ok((Tensor::new(vec![b, lo, self.filters()], y)?, cache))
    }

    pub fn backward(&self, cache: &Conv1dKanCache, gout: &Tensor) -> Result<(Tensor, EdgeGrads)> {
        let (gcols, grads) = self.edges.backward(&cache.edges, gout.data())?;
        let (b, l, c) = (cache.batch, cache.len, self.channels);
        let lo = self.out_len(l)?;
        let w = self.kernel * c;
        let mut gin = vec![0.0; b * l * c];
        for bi in 0..b {
            for t in 0..lo {
                let start = (bi * l + t * self.stride) * c;
                let src = &gcols[(bi * lo + t) * w..(bi * lo + t + 1) * w];
                for (g, s) in gin[start..start + w].iter_mut().zip(src) {
                    *g += s;
                }
            }
        }
        Ok((Tensor::new(vec![b, l, c], gin)?, grads))
    }
}

/// Draw initial parameters for a block of KAN edges.
pub fn init_kan(edges: &mut KanEdges, rng: &mut RngStream, sigma: f64) {
    edges.init(rng, sigma);
}
