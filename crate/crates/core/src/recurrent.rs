//! LSTM cell and bidirectional wrapper with hand-written BPTT.
//!
//! Gate rows are stacked `[f; i; C; o]`, each `units` tall, acting on the
//! concatenation `[h_prev; x_t]`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::par;
use crate::rng::RngStream;
use crate::tensor::{sigmoid, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmParams {
    pub units: usize,
    pub in_dim: usize,
    /// `[4·units, units + in_dim]`
    pub w: Tensor,
    /// `[4·units]`
    pub b: Tensor,
}

impl LstmParams {
    pub fn zeros(units: usize, in_dim: usize) -> Self {
        Self {
            units,
            in_dim,
            w: Tensor::zeros(&[4 * units, units + in_dim]),
            b: Tensor::zeros(&[4 * units]),
        }
    }

    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(&mut self, rng: &mut RngStream) {
        let bound = 1.0 / ((self.units + self.in_dim) as f64).sqrt();
        for w in self.w.data_mut() {
            *w = rng.uniform(-bound, bound);
        }
        self.b.data_mut().iter_mut().for_each(|b| *b = 0.0);
    }

    fn width(&self) -> usize {
        self.units + self.in_dim
    }

    /// Pre-activations `W·[h; x] + b`.
    fn gates(&self, z: &[f64]) -> Vec<f64> {
        let n = self.width();
        let w = self.w.data();
        self.b
            .data()
            .iter()
            .enumerate()
            .map(|(r, &b)| b + w[r * n..(r + 1) * n].iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// One step of the cell. Returns `(h_t, c_t)`.
pub fn lstm_step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != p.in_dim || h_prev.len() != p.units || c_prev.len() != p.units {
        return shape_err(format!(
            "lstm_step: x {}, h {}, c {} for units {} in_dim {}",
            x.len(),
            h_prev.len(),
            c_prev.len(),
            p.units,
            p.in_dim
        ));
    }
    let z: Vec<f64> = h_prev.iter().chain(x).copied().collect();
    let st = step_inner(p, &z, c_prev);
    Ok((st.h, st.c))
}

#[derive(Debug, Clone)]
struct StepState {
    z: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
}

fn step_inner(p: &LstmParams, z: &[f64], c_prev: &[f64]) -> StepState {
    let u = p.units;
    let a = p.gates(z);
    let f: Vec<f64> = a[..u].iter().map(|&v| sigmoid(v)).collect();
    let i: Vec<f64> = a[u..2 * u].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = a[2 * u..3 * u].iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = a[3 * u..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..u).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..u).map(|k| o[k] * tc[k]).collect();
    StepState {
        z: z.to_vec(),
        f,
        i,
        g,
        o,
        c_prev: c_prev.to_vec(),
        c,
        tc,
        h,
    }
}

/// Run one direction over a `[T, C]` sequence (already in processing order).
fn run_sequence(p: &LstmParams, seq: &[f64], steps: usize) -> Vec<StepState> {
    let (u, c) = (p.units, p.in_dim);
    let mut h = vec![0.0; u];
    let mut cs = vec![0.0; u];
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let z: Vec<f64> = h.iter().chain(&seq[t * c..(t + 1) * c]).copied().collect();
        let st = step_inner(p, &z, &cs);
        h.clone_from(&st.h);
        cs.clone_from(&st.c);
        out.push(st);
    }
    out
}

/// BPTT for one direction. `gh[t]` is the upstream gradient on `h_t` in
/// processing order. Returns `(dW, db, dx)` with `dx` in processing order.
fn backprop_sequence(p: &LstmParams, states: &[StepState], gh: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (u, c) = (p.units, p.in_dim);
    let n = p.width();
    let w = p.w.data();
    let mut dw = vec![0.0; 4 * u * n];
    let mut db = vec![0.0; 4 * u];
    let mut dx = vec![0.0; states.len() * c];
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut da = vec![0.0; 4 * u];
    for t in (0..states.len()).rev() {
        let s = &states[t];
        for k in 0..u {
            let dh = gh[t * u + k] + dh_next[k];
            let dc = dc_next[k] + dh * s.o[k] * (1.0 - s.tc[k] * s.tc[k]);
            da[k] = dc * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
            da[u + k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
            da[2 * u + k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
            da[3 * u + k] = dh * s.tc[k] * s.o[k] * (1.0 - s.o[k]);
            dc_next[k] = dc * s.f[k];
        }
        let mut dz = vec![0.0; n];
        for (r, &d) in da.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            db[r] += d;
            let wr = &w[r * n..(r + 1) * n];
            for ((dwv, dzv), (&wv, &zv)) in dw[r * n..(r + 1) * n]
                .iter_mut()
                .zip(dz.iter_mut())
                .zip(wr.iter().zip(&s.z))
            {
                *dwv += d * zv;
                *dzv += d * wv;
            }
        }
        dh_next.copy_from_slice(&dz[..u]);
        dx[t * c..(t + 1) * c].copy_from_slice(&dz[u..]);
    }
    (dw, db, dx)
}

/// Bidirectional (or, for ablations, unidirectional) LSTM returning the full
/// sequence: `[batch, T, C] → [batch, T, 2·units]` with the forward half first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: LstmParams,
    pub backward: Option<LstmParams>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    batch: usize,
    steps: usize,
    fwd: Vec<Vec<StepState>>,
    bwd: Vec<Vec<StepState>>,
}

/// Parameter gradients in the order of [`BiLstm::params`].
pub type BiLstmGrads = Vec<Tensor>;

impl BiLstm {
    pub fn new(units: usize, in_dim: usize, bidirectional: bool) -> Self {
        Self {
            forward: LstmParams::zeros(units, in_dim),
            backward: bidirectional.then(|| LstmParams::zeros(units, in_dim)),
        }
    }

    pub fn init(&mut self, rng: &mut RngStream) {
        self.forward.init(rng);
        if let Some(b) = &mut self.backward {
            b.init(rng);
        }
    }

    pub fn units(&self) -> usize {
        self.forward.units
    }

    pub fn out_dim(&self) -> usize {
        self.units() * if self.backward.is_some() { 2 } else { 1 }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.forward.w, &self.forward.b];
        if let Some(b) = &self.backward {
            v.push(&b.w);
            v.push(&b.b);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.forward.w, &mut self.forward.b];
        if let Some(b) = &mut self.backward {
            v.push(&mut b.w);
            v.push(&mut b.b);
        }
        v
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        if x.rank() != 3 || x.shape()[2] != self.forward.in_dim {
            return shape_err(format!(
                "BiLSTM expects [batch, T, {}], got {:?}",
                self.forward.in_dim,
                x.shape()
            ));
        }
        let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if t == 0 {
            return Err(Error::Degenerate("empty sequence".into()));
        }
        Ok((b, t, c))
    }

    fn run(&self, x: &Tensor) -> Result<(Tensor, BiLstmCache)> {
        let (b, t, c) = self.check(x)?;
        let u = self.units();
        let od = self.out_dim();
        let rows = par::map_range(b, |r| {
            let seq = &x.data()[r * t * c..(r + 1) * t * c];
            let fwd = run_sequence(&self.forward, seq, t);
            let bwd = self.backward.as_ref().map(|p| {
                let rev: Vec<f64> = (0..t).rev().flat_map(|s| seq[s * c..(s + 1) * c].to_vec()).collect();
                run_sequence(p, &rev, t)
            });
            (fwd, bwd)
        });
        let mut out = vec![0.0; b * t * od];
        let mut cache = BiLstmCache {
            batch: b,
            steps: t,
            fwd: Vec::with_capacity(b),
            bwd: Vec::with_capacity(b),
        };
        for (r, (fwd, bwd)) in rows.into_iter().enumerate() {
            for s in 0..t {
                let base = (r * t + s) * od;
                out[base..base + u].copy_from_slice(&fwd[s].h);
                if let Some(bw) = &bwd {
                    out[base + u..base + 2 * u].copy_from_slice(&bw[t - 1 - s].h);
                }
            }
            cache.fwd.push(fwd);
            cache.bwd.push(bwd.unwrap_or_default());
        }
        Ok((Tensor::new(vec![b, t, od], out)?, cache))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.run(x)?.0)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, BiLstmCache)> {
        self.run(x)
    }

    pub fn backward(&self, cache: &BiLstmCache, gout: &Tensor) -> Result<(Tensor, BiLstmGrads)> {
        let (b, t) = (cache.batch, cache.steps);
        let (u, c, od) = (self.units(), self.forward.in_dim, self.out_dim());
        if gout.len() != b * t * od {
            return shape_err(format!("BiLSTM upstream grad {:?}", gout.shape()));
        }
        let g = gout.data();
        let per_row = par::map_range(b, |r| {
            let gh_f: Vec<f64> = (0..t)
                .flat_map(|s| g[(r * t + s) * od..(r * t + s) * od + u].to_vec())
                .collect();
            let (dwf, dbf, dxf) = backprop_sequence(&self.forward, &cache.fwd[r], &gh_f);
            let mut dx = dxf;
            let bw = self.backward.as_ref().map(|p| {
                let gh_b: Vec<f64> = (0..t)
                    .rev()
                    .flat_map(|s| g[(r * t + s) * od + u..(r * t + s + 1) * od].to_vec())
                    .collect();
                let (dwb, dbb, dxb) = backprop_sequence(p, &cache.bwd[r], &gh_b);
                for s in 0..t {
                    for k in 0..c {
                        dx[s * c + k] += dxb[(t - 1 - s) * c + k];
                    }
                }
                (dwb, dbb)
            });
            (dwf, dbf, dx, bw)
        });
        let mut gw_f = vec![0.0; self.forward.w.len()];
        let mut gb_f = vec![0.0; self.forward.b.len()];
        let mut gw_b = vec![0.0; if self.backward.is_some() { gw_f.len() } else { 0 }];
        let mut gb_b = vec![0.0; if self.backward.is_some() { gb_f.len() } else { 0 }];
        let mut gin = Vec::with_capacity(b * t * c);
        for (dwf, dbf, dx, bw) in per_row {
            add_into(&mut gw_f, &dwf);
            add_into(&mut gb_f, &dbf);
            if let Some((dwb, dbb)) = bw {
                add_into(&mut gw_b, &dwb);
                add_into(&mut gb_b, &dbb);
            }
            gin.extend(dx);
        }
        let mut grads = vec![
            Tensor::new(self.forward.w.shape().to_vec(), gw_f)?,
            Tensor::new(self.forward.b.shape().to_vec(), gb_f)?,
        ];
        if let Some(p) = &self.backward {
            grads.push(Tensor::new(p.w.shape().to_vec(), gw_b)?);
            grads.push(Tensor::new(p.b.shape().to_vec(), gb_b)?);
        }
        Ok((Tensor::new(vec![b, t, c], gin)?, grads))
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}
