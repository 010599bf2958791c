//! Small dense solves for least-squares refits (spline grids, LIME).

use crate::error::{Error, Result};

/// Solve `A x = b` for square row-major `A` by Gaussian elimination with
/// partial pivoting.
pub fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::Shape(format!("solve: A has {} entries for n = {n}", a.len())));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[piv * n + col].abs() <= 1e-14 * scale {
            return Err(Error::Degenerate(format!("singular system at column {col}")));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Ok(x)
}

/// Weighted ridge least squares: minimise `Σ wᵢ (yᵢ − zᵢ·β)² + λ‖β_pen‖²`
/// where `design` rows are `zᵢ` and `penalize[k]` selects which
/// coefficients carry the penalty.
pub fn weighted_ridge(
    design: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    lambda: f64,
    penalize: &[bool],
) -> Result<Vec<f64>> {
    let p = penalize.len();
    let mut ata = vec![0.0; p * p];
    let mut atb = vec![0.0; p];
    for ((z, &yi), &wi) in design.iter().zip(y).zip(weights) {
        if z.len() != p {
            return Err(Error::Shape("ridge design row width".into()));
        }
        for i in 0..p {
            let wz = wi * z[i];
            atb[i] += wz * yi;
            for j in 0..p {
                ata[i * p + j] += wz * z[j];
            }
        }
    }
    for (k, &pen) in penalize.iter().enumerate() {
        if pen {
            ata[k * p + k] += lambda;
        }
    }
    solve(ata, atb)
}
