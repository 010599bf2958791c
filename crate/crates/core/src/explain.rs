//! Shapley attributions (exact enumeration and permutation sampling) and
//! LIME-style weighted ridge surrogates for any class-1 probability model.

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, FeatureMatrix};
use crate::error::{Error, Result};
use crate::linalg::weighted_ridge;
use crate::models::{class1_scores, Model};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const MAX_EXACT_FEATURES: usize = 16;

/// Batch scorer returning one class-1 probability per row.
pub trait Scorer: Sync {
    fn score(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>>;
}

impl<F> Scorer for F
where
    F: Fn(&[Vec<f64>]) -> Result<Vec<f64>> + Sync,
{
    fn score(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        self(rows)
    }
}

impl Scorer for Model {
    fn score(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let d = rows[0].len();
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = Tensor::new(vec![rows.len(), d, 1], data)?;
        Ok(class1_scores(&self.predict(&x)?))
    }
}

/// Score in chunks so huge enumerations don't materialise one giant batch.
fn score_chunked(model: &dyn Scorer, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    const CHUNK: usize = 2048;
    let mut out = Vec::with_capacity(rows.len());
    for c in rows.chunks(CHUNK) {
        let s = model.score(c)?;
        if s.len() != c.len() {
            return Err(Error::Shape(format!("scorer returned {} values for {} rows", s.len(), c.len())));
        }
        out.extend(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    /// Value of the empty coalition: the model at the background mean.
    pub base: f64,
    pub fx: f64,
    /// Mean model output over the background rows.
    pub background_expectation: f64,
    /// Standard errors of the sampled estimator.
    pub std_err: Option<Vec<f64>>,
}

fn column_means(background: &[Vec<f64>], d: usize) -> Result<Vec<f64>> {
    if background.is_empty() {
        return Err(Error::Param("empty background".into()));
    }
    if background.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(format!("background rows must have {d} features")));
    }
    let n = background.len() as f64;
    Ok((0..d).map(|j| background.iter().map(|r| r[j]).sum::<f64>() / n).collect())
}

fn expectation(model: &dyn Scorer, background: &[Vec<f64>]) -> Result<f64> {
    let s = score_chunked(model, background)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Exact Shapley values over all `2^d` coalitions; absent features take
/// their background mean.
pub fn shapley_exact(model: &dyn Scorer, x: &[f64], background: &[Vec<f64>]) -> Result<Attribution> {
    let d = x.len();
    if d == 0 {
        return Err(Error::Param("no features to attribute".into()));
    }
    if d > MAX_EXACT_FEATURES {
        return Err(Error::Param(format!(
            "{d} features is too many for exact enumeration; use the sampled estimator"
        )));
    }
    let means = column_means(background, d)?;
    let rows: Vec<Vec<f64>> = (0..1usize << d)
        .map(|s| (0..d).map(|j| if s >> j & 1 == 1 { x[j] } else { means[j] }).collect())
        .collect();
    let v = score_chunked(model, &rows)?;
    // w(|S|) = |S|! (d − |S| − 1)! / d!
    let fact: Vec<f64> = (0..=d).scan(1.0, |f, k| {
        let cur = *f;
        *f *= (k + 1) as f64;
        Some(cur)
    })
    .collect();
    let w: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - s - 1] / fact[d]).collect();
    let phi = crate::par::map_range(d, |j| {
        let bit = 1usize << j;
        (0..1usize << d)
            .filter(|s| s & bit == 0)
            .map(|s| w[s.count_ones() as usize] * (v[s | bit] - v[s]))
            .sum()
    });
    Ok(Attribution {
        phi,
        base: v[0],
        fx: v[(1 << d) - 1],
        background_expectation: expectation(model, background)?,
        std_err: None,
    })
}

/// Permutation-sampling estimate from `m` random feature orderings.
pub fn shapley_sampled(
    model: &dyn Scorer,
    x: &[f64],
    background: &[Vec<f64>],
    m: usize,
    seed: u64,
) -> Result<Attribution> {
    let d = x.len();
    if m == 0 {
        return Err(Error::Param("need at least one permutation".into()));
    }
    let means = column_means(background, d)?;
    let mut rng = RngStream::new(seed, 0x5A4B);
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut base = 0.0;
    let mut fx = 0.0;
    const PERMS_PER_BATCH: usize = 64;
    let mut done = 0;
    while done < m {
        let b = PERMS_PER_BATCH.min(m - done);
        let perms: Vec<Vec<usize>> = (0..b).map(|_| rng.permutation(d)).collect();
        let mut rows = Vec::with_capacity(b * (d + 1));
        for p in &perms {
            let mut z = means.clone();
            rows.push(z.clone());
            for &j in p {
                z[j] = x[j];
                rows.push(z.clone());
            }
        }
        let v = score_chunked(model, &rows)?;
        for (k, p) in perms.iter().enumerate() {
            let o = k * (d + 1);
            base = v[o];
            fx = v[o + d];
            for (step, &j) in p.iter().enumerate() {
                let delta = v[o + step + 1] - v[o + step];
                sum[j] += delta;
                sum_sq[j] += delta * delta;
            }
        }
        done += b;
    }
    let mf = m as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / mf).collect();
    let std_err = phi
        .iter()
        .zip(&sum_sq)
        .map(|(mean, sq)| {
            if m < 2 {
                return f64::INFINITY;
            }
            let var = ((sq - mf * mean * mean) / (mf - 1.0)).max(0.0);
            (var / mf).sqrt()
        })
        .collect();
    Ok(Attribution {
        phi,
        base,
        fx,
        background_expectation: expectation(model, background)?,
        std_err: Some(std_err),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSurrogate {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub kernel_width: f64,
    /// Weighted R² on the perturbation sample.
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75·√d`.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            kernel_width: None,
            ridge: 1e-3,
            seed: 0,
        }
    }
}

/// Fit a locally weighted linear surrogate around `x`. Continuous columns are
/// perturbed with Gaussian noise of the training std; coded columns are
/// resampled from the training marginal.
pub fn lime_explain(model: &dyn Scorer, x: &[f64], training: &FeatureMatrix, cfg: &LimeConfig) -> Result<LocalSurrogate> {
    let d = x.len();
    if training.n_cols() != d || training.n_rows() == 0 {
        return Err(Error::Shape(format!(
            "training matrix is {}×{} for a {d}-feature instance",
            training.n_rows(),
            training.n_cols()
        )));
    }
    if cfg.n_samples < d + 2 {
        return Err(Error::Param(format!("{} LIME samples for {d} features", cfg.n_samples)));
    }
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let c = training.column(j);
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
        })
        .collect();
    let width = cfg.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    if !(width > 0.0) {
        return Err(Error::Param(format!("kernel width {width}")));
    }
    let mut rng = RngStream::new(cfg.seed, 0x117E);
    let mut samples = Vec::with_capacity(cfg.n_samples);
    samples.push(x.to_vec());
    for _ in 1..cfg.n_samples {
        let z: Vec<f64> = (0..d)
            .map(|j| match training.column_kinds[j] {
                ColumnKind::Continuous => x[j] + rng.normal(0.0, std[j]),
                _ => training.values[rng.below(training.n_rows())][j],
            })
            .collect();
        samples.push(z);
    }
    let y = score_chunked(model, &samples)?;
    let weights: Vec<f64> = samples
        .iter()
        .map(|z| {
            let dist2: f64 = (0..d)
                .filter(|&j| std[j] > 0.0)
                .map(|j| ((z[j] - x[j]) / std[j]).powi(2))
                .sum();
            (-dist2 / (width * width)).exp()
        })
        .collect();
    let design: Vec<Vec<f64>> = samples
        .iter()
        .map(|z| {
            let mut r = z.clone();
            r.push(1.0);
            r
        })
        .collect();
    let mut penalize = vec![true; d];
    penalize.push(false);
    let beta = weighted_ridge(&design, &y, &weights, cfg.ridge, &penalize)
        .map_err(|e| Error::Degenerate(format!("perturbation covariance: {e}")))?;
    let pred: Vec<f64> = design.iter().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect();
    let wsum: f64 = weights.iter().sum();
    let ybar = weights.iter().zip(&y).map(|(w, v)| w * v).sum::<f64>() / wsum;
    let ss_res: f64 = weights.iter().zip(&y).zip(&pred).map(|((w, a), b)| w * (a - b) * (a - b)).sum();
    let ss_tot: f64 = weights.iter().zip(&y).map(|(w, a)| w * (a - ybar) * (a - ybar)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let intercept = beta[d];
    Ok(LocalSurrogate {
        weights: beta[..d].to_vec(),
        intercept,
        kernel_width: width,
        r2,
    })
}
