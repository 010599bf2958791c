use crate::error::{shape_err, Error, Result};
use crate::tensor::sigmoid;

/// Full-batch logistic regression by Newton's method with a small ridge
/// penalty on the weights. Returns `(weights, bias)`.
pub fn fit_logistic(x: &[Vec<f64>], y: &[u8], ridge: f64) -> Result<(Vec<f64>, f64)> {
    if x.is_empty() || x.len() != y.len() {
        return shape_err(format!("{} rows for {} labels", x.len(), y.len()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return shape_err("ragged design matrix");
    }
    let p = d + 1;
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let mut g = vec![0.0; p];
        let mut h = vec![0.0; p * p];
        for (row, &t) in x.iter().zip(y) {
            let z: f64 = beta[d] + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            let mu = sigmoid(z);
            let w = (mu * (1.0 - mu)).max(1e-10);
            let r = mu - f64::from(t);
            let feat = |j: usize| if j == d { 1.0 } else { row[j] };
            for i in 0..p {
                let fi = feat(i);
                g[i] += r * fi;
                for j in 0..p {
                    h[i * p + j] += w * fi * feat(j);
                }
            }
        }
        for i in 0..d {
            g[i] += ridge * beta[i];
            h[i * p + i] += ridge;
        }
        h[d * p + d] += 1e-9;
        let step = crate::linalg::solve(h, g)?;
        let mut max = 0.0f64;
        for (b, s) in beta.iter_mut().zip(&step) {
            *b -= s;
            max = max.max(s.abs());
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Divergence("logistic regression diverged".into()));
        }
        if max < 1e-10 {
            break;
        }
    }
    let bias = beta.pop().unwrap_or(0.0);
    Ok((beta, bias))
}
