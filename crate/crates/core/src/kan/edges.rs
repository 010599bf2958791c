use serde::{Deserialize, Serialize};

use super::spline::SplineGrid;
use crate::error::{shape_err, Error, Result};
use crate::linalg;
use crate::par;
use crate::rng::RngStream;
use crate::tensor::{silu, silu_grad, Tensor};

/// Edge functions `φ_ij(x) = w_b[i,j]·SiLU(x) + w_s[i,j]·Σ_k a[i,j,k] B_k(x)`
/// for every (output i, input j) pair, summed over j. Shared by the dense
/// and convolutional KAN layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KanEdges {
    pub in_dim: usize,
    pub out_dim: usize,
    pub grid: SplineGrid,
    /// `[out, in, n_basis]`
    pub coef: Tensor,
    /// `[out, in]`
    pub base_w: Tensor,
    /// `[out, in]`
    pub scale_w: Tensor,
}

/// Everything backward needs from a forward pass over `rows` inputs.
#[derive(Debug, Clone)]
pub struct EdgeCache {
    rows: usize,
    basis: Vec<f64>,
    dbasis: Vec<f64>,
    silu: Vec<f64>,
    dsilu: Vec<f64>,
}

/// Gradients for one `KanEdges` block.
#[derive(Debug, Clone)]
pub struct EdgeGrads {
    pub coef: Tensor,
    pub base_w: Tensor,
    pub scale_w: Tensor,
}

impl KanEdges {
    /// Zero-initialised edges; see [`KanEdges::init`].
    pub fn zeros(in_dim: usize, out_dim: usize, grid: SplineGrid) -> Self {
        Self {
            in_dim,
            out_dim,
            grid,
            coef: Tensor::zeros(&[out_dim, in_dim, grid.n_basis()]),
            base_w: Tensor::zeros(&[out_dim, in_dim]),
            scale_w: Tensor::zeros(&[out_dim, in_dim]),
        }
    }

    /// Spline coefficients ~ N(0, σ²), base weights ~ U(±1/√in), scales = 1.
    pub fn init(&mut self, rng: &mut RngStream, sigma: f64) {
        for c in self.coef.data_mut() {
            *c = rng.normal(0.0, sigma);
        }
        let bound = 1.0 / (self.in_dim as f64).sqrt();
        for w in self.base_w.data_mut() {
            *w = rng.uniform(-bound, bound);
        }
        self.scale_w.data_mut().iter_mut().for_each(|s| *s = 1.0);
    }

    pub fn n_params(&self) -> usize {
        self.coef.len() + self.base_w.len() + self.scale_w.len()
    }

    /// Forward over `x` laid out as `[rows, in_dim]`; returns `[rows, out_dim]`.
    pub fn forward(&self, x: &[f64], want_cache: bool) -> Result<(Vec<f64>, Option<EdgeCache>)> {
        let (n, m, nb) = (self.in_dim, self.out_dim, self.grid.n_basis());
        if n == 0 || x.len() % n != 0 {
            return shape_err(format!("KAN input of {} values for in_dim {n}", x.len()));
        }
        let rows = x.len() / n;
        let per_row = par::map_range(rows, |r| {
            let xr = &x[r * n..(r + 1) * n];
            let mut basis = vec![0.0; n * nb];
            let mut dbasis = if want_cache { vec![0.0; n * nb] } else { Vec::new() };
            let mut scratch = Vec::with_capacity(nb + 2 * self.grid.degree);
            let mut s = vec![0.0; n];
            let mut ds = if want_cache { vec![0.0; n] } else { Vec::new() };
            for j in 0..n {
                let b = &mut basis[j * nb..(j + 1) * nb];
                if want_cache {
                    self.grid
                        .eval_into(xr[j], b, Some(&mut dbasis[j * nb..(j + 1) * nb]), &mut scratch);
                    ds[j] = silu_grad(xr[j]);
                } else {
                    self.grid.eval_into(xr[j], b, None, &mut scratch);
                }
                s[j] = silu(xr[j]);
            }
            let mut y = vec![0.0; m];
            let coef = self.coef.data();
            let (bw, sw) = (self.base_w.data(), self.scale_w.data());
            for (i, yi) in y.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..n {
                    let c = &coef[(i * n + j) * nb..(i * n + j + 1) * nb];
                    let b = &basis[j * nb..(j + 1) * nb];
                    let spline: f64 = c.iter().zip(b).map(|(c, b)| c * b).sum();
                    acc += bw[i * n + j] * s[j] + sw[i * n + j] * spline;
                }
                *yi = acc;
            }
            (y, basis, dbasis, s, ds)
        });
        let mut out = Vec::with_capacity(rows * m);
        if !want_cache {
            for (y, ..) in per_row {
                out.extend(y);
            }
            return Ok((out, None));
        }
        let mut cache = EdgeCache {
            rows,
            basis: Vec::with_capacity(rows * n * nb),
            dbasis: Vec::with_capacity(rows * n * nb),
            silu: Vec::with_capacity(rows * n),
            dsilu: Vec::with_capacity(rows * n),
        };
        for (y, b, db, s, ds) in per_row {
            out.extend(y);
            cache.basis.extend(b);
            cache.dbasis.extend(db);
            cache.silu.extend(s);
            cache.dsilu.extend(ds);
        }
        Ok((out, Some(cache)))
    }

    /// Returns the input gradient `[rows, in_dim]` and parameter gradients.
    pub fn backward(&self, cache: &EdgeCache, gout: &[f64]) -> Result<(Vec<f64>, EdgeGrads)> {
        let (n, m, nb) = (self.in_dim, self.out_dim, self.grid.n_basis());
        let rows = cache.rows;
        if gout.len() != rows * m {
            return shape_err(format!("KAN upstream grad {} vs {}x{m}", gout.len(), rows));
        }
        if cache.basis.len() != rows * n * nb {
            return Err(Error::Shape("KAN cache does not match the current grid".into()));
        }
        let coef = self.coef.data();
        let (bw, sw) = (self.base_w.data(), self.scale_w.data());

        // Parameter gradients, one output unit per task.
        let per_unit = par::map_range(m, |i| {
            let mut dc = vec![0.0; n * nb];
            let mut db = vec![0.0; n];
            let mut ds = vec![0.0; n];
            for r in 0..rows {
                let g = gout[r * m + i];
                if g == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let b = &cache.basis[(r * n + j) * nb..(r * n + j + 1) * nb];
                    let c = &coef[(i * n + j) * nb..(i * n + j + 1) * nb];
                    let spline: f64 = c.iter().zip(b).map(|(c, b)| c * b).sum();
                    let gs = g * sw[i * n + j];
                    for (d, bk) in dc[j * nb..(j + 1) * nb].iter_mut().zip(b) {
                        *d += gs * bk;
                    }
                    db[j] += g * cache.silu[r * n + j];
                    ds[j] += g * spline;
                }
            }
            (dc, db, ds)
        });
        let mut gcoef = Vec::with_capacity(m * n * nb);
        let mut gbase = Vec::with_capacity(m * n);
        let mut gscale = Vec::with_capacity(m * n);
        for (dc, db, ds) in per_unit {
            gcoef.extend(dc);
            gbase.extend(db);
            gscale.extend(ds);
        }

        // Input gradients, one row per task.
        let gin: Vec<f64> = par::map_range(rows, |r| {
            let mut gx = vec![0.0; n];
            for i in 0..m {
                let g = gout[r * m + i];
                if g == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let d = &cache.dbasis[(r * n + j) * nb..(r * n + j + 1) * nb];
                    let c = &coef[(i * n + j) * nb..(i * n + j + 1) * nb];
                    let dspline: f64 = c.iter().zip(d).map(|(c, d)| c * d).sum();
                    gx[j] += g * (bw[i * n + j] * cache.dsilu[r * n + j] + sw[i * n + j] * dspline);
                }
            }
            gx
        })
        .into_iter()
        .flatten()
        .collect();

        Ok((
            gin,
            EdgeGrads {
                coef: Tensor::new(vec![m, n, nb], gcoef)?,
                base_w: Tensor::new(vec![m, n], gbase)?,
                scale_w: Tensor::new(vec![m, n], gscale)?,
            },
        ))
    }

    /// Extend the grid to cover `activations` (plus a 10% margin) when they
    /// leave the current domain. Knot spacing is kept, so the grid grows by
    /// whole intervals, and the coefficients are refit by least squares on
    /// probes inside the old domain. Returns whether anything changed.
    pub fn grid_update(&mut self, activations: &[f64]) -> Result<bool> {
        self.grid_update_capped(activations, usize::MAX)
    }

    /// As [`KanEdges::grid_update`], but never lets the interval count grow
    /// past `max_grid`; the extension is then shared between the two sides in
    /// proportion to what each needed.
    pub fn grid_update_capped(&mut self, activations: &[f64], max_grid: usize) -> Result<bool> {
        if activations.is_empty() {
            return Err(Error::Param("grid update needs a non-empty activation sample".into()));
        }
        let (lo, hi) = activations
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite("grid update activations".into()));
        }
        if hi - lo <= 0.0 || (lo >= self.grid.t_min && hi <= self.grid.t_max) {
            return Ok(false);
        }
        let margin = 0.1 * (hi - lo);
        let old = self.grid;
        let h = old.spacing();
        let extra_left = if lo < old.t_min {
            ((old.t_min - (lo - margin)) / h).ceil() as usize
        } else {
            0
        };
        let extra_right = if hi > old.t_max {
            ((hi + margin - old.t_max) / h).ceil() as usize
        } else {
            0
        };
        let (mut extra_left, mut extra_right) = (extra_left, extra_right);
        let room = max_grid.saturating_sub(old.grid_size);
        if extra_left + extra_right > room {
            let total = extra_left + extra_right;
            extra_left = extra_left * room / total;
            extra_right = room - extra_left;
            if extra_right > 0 && hi <= old.t_max {
                extra_left += extra_right;
                extra_right = 0;
            }
        }
        if extra_left + extra_right == 0 {
            return Ok(false);
        }
        let new = SplineGrid::new(
            old.t_min - extra_left as f64 * h,
            old.t_max + extra_right as f64 * h,
            old.grid_size + extra_left + extra_right,
            old.degree,
        );
        let transfer = refit_transfer(&old, &new)?;
        let (nb_old, nb_new) = (old.n_basis(), new.n_basis());
        let edges = self.in_dim * self.out_dim;
        let mut coef = vec![0.0; edges * nb_new];
        let old_coef = self.coef.data();
        for e in 0..edges {
            let src = &old_coef[e * nb_old..(e + 1) * nb_old];
            let dst = &mut coef[e * nb_new..(e + 1) * nb_new];
            for (q, d) in dst.iter_mut().enumerate() {
                *d = transfer[q * nb_old..(q + 1) * nb_old]
                    .iter()
                    .zip(src)
                    .map(|(t, s)| t * s)
                    .sum();
            }
        }
        self.coef = Tensor::new(vec![self.out_dim, self.in_dim, nb_new], coef)?;
        self.grid = new;
        Ok(true)
    }
}

/// Matrix `T [nb_new × nb_old]` such that `c_new = T·c_old` is the
/// least-squares refit of an old-grid spline onto the new grid, using probe
/// points inside the old domain. New basis functions with no support there
/// get zero coefficients.
fn refit_transfer(old: &SplineGrid, new: &SplineGrid) -> Result<Vec<f64>> {
    let (nb_old, nb_new) = (old.n_basis(), new.n_basis());
    let probes = 24 * nb_old.max(4);
    let xs: Vec<f64> = (0..probes)
        .map(|i| old.t_min + (old.t_max - old.t_min) * (i as f64 + 0.5) / probes as f64)
        .collect();
    let tol = 1e-12 * new.spacing();
    let active: Vec<usize> = (0..nb_new)
        .filter(|&q| new.knot(q + new.degree + 1) > old.t_min + tol && new.knot(q) < old.t_max - tol)
        .collect();
    let na = active.len();
    let a_rows: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let b = new.basis(x);
            active.iter().map(|&q| b[q]).collect()
        })
        .collect();
    let old_rows: Vec<Vec<f64>> = xs.iter().map(|&x| old.basis(x)).collect();
    let mut ata = vec![0.0; na * na];
    for row in &a_rows {
        for i in 0..na {
            for j in 0..na {
                ata[i * na + j] += row[i] * row[j];
            }
        }
    }
    let mut transfer = vec![0.0; nb_new * nb_old];
    for k in 0..nb_old {
        let mut atb = vec![0.0; na];
        for (row, orow) in a_rows.iter().zip(&old_rows) {
            for i in 0..na {
                atb[i] += row[i] * orow[k];
            }
        }
        let sol = linalg::solve(ata.clone(), atb)?;
        for (i, &q) in active.iter().enumerate() {
            transfer[q * nb_old + k] = sol[i];
        }
    }
    Ok(transfer)
}
