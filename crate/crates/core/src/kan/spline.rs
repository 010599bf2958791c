use serde::{Deserialize, Serialize};

/// Uniform B-spline grid over `[t_min, t_max]` with `grid_size` intervals,
/// extended by `degree` knots on each side (`G + 2p + 1` knots, `G + p`
/// basis functions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub grid_size: usize,
    pub degree: usize,
}

impl Default for SplineGrid {
    fn default() -> Self {
        Self::new(-1.0, 1.0, 3, 3)
    }
}

impl SplineGrid {
    pub fn new(t_min: f64, t_max: f64, grid_size: usize, degree: usize) -> Self {
        assert!(t_max > t_min && grid_size > 0, "invalid spline grid");
        Self {
            t_min,
            t_max,
            grid_size,
            degree,
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.t_max - self.t_min) / self.grid_size as f64
    }

    pub fn n_basis(&self) -> usize {
        self.grid_size + self.degree
    }

    pub fn knot(&self, k: usize) -> f64 {
        self.t_min + (k as f64 - self.degree as f64) * self.spacing()
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..self.grid_size + 2 * self.degree + 1)
            .map(|k| self.knot(k))
            .collect()
    }

    /// Basis values at `x` (Cox–de Boor on the extended knots).
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.n_basis()];
        let mut scratch = Vec::new();
        self.eval_into(x, &mut b, None, &mut scratch);
        b
    }

    /// Basis values and their derivatives at `x`.
    pub fn basis_with_derivative(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let mut b = vec![0.0; self.n_basis()];
        let mut d = vec![0.0; self.n_basis()];
        let mut scratch = Vec::new();
        self.eval_into(x, &mut b, Some(&mut d), &mut scratch);
        (b, d)
    }

    /// Allocation-free evaluation for hot loops; `scratch` is reused.
    pub fn eval_into(
        &self,
        x: f64,
        basis: &mut [f64],
        deriv: Option<&mut [f64]>,
        scratch: &mut Vec<f64>,
    ) {
        let p = self.degree;
        let n0 = self.grid_size + 2 * p;
        let h = self.spacing();
        scratch.clear();
        scratch.extend((0..n0).map(|k| {
            if self.knot(k) <= x && x < self.knot(k + 1) {
                1.0
            } else {
                0.0
            }
        }));
        // After raising to degree d, scratch[0..n0-d] holds B_{k,d}.
        for d in 1..p {
            self.raise(scratch, d, d as f64 * h, x);
        }
        if let Some(dv) = deriv {
            if p == 0 {
                dv.iter_mut().for_each(|v| *v = 0.0);
            } else {
                // B'_{k,p} = p/(p h) (B_{k,p-1} − B_{k+1,p-1})
                for k in 0..n0 - p {
                    dv[k] = (scratch[k] - scratch[k + 1]) / h;
                }
            }
        }
        if p > 0 {
            self.raise(scratch, p, p as f64 * h, x);
        }
        basis.copy_from_slice(&scratch[..n0 - p]);
    }

    fn raise(&self, b: &mut [f64], d: usize, denom: f64, x: f64) {
        let count = self.grid_size + 2 * self.degree - d;
        for k in 0..count {
            let left = (x - self.knot(k)) / denom * b[k];
            let right = (self.knot(k + d + 1) - x) / denom * b[k + 1];
            b[k] = left + right;
        }
    }

    /// Spline value `Σ c_k B_k(x)`.
    pub fn eval_spline(&self, coef: &[f64], x: f64) -> f64 {
        self.basis(x).iter().zip(coef).map(|(b, c)| b * c).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knot_vector_layout() {
        let g = SplineGrid::default();
        let k = g.knots();
        assert_eq!(k.len(), 3 + 6 + 1);
        assert!((k[3] + 1.0).abs() < 1e-15 && (k[6] - 1.0).abs() < 1e-15);
        assert!(k.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn partition_of_unity_midpoint() {
        let g = SplineGrid::default();
        let s: f64 = g.basis(0.0).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_of_unity_at_domain_ends() {
        let g = SplineGrid::new(-2.0, 5.0, 7, 3);
        for x in [g.t_min, g.t_max] {
            let s: f64 = g.basis(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x = {x}, sum = {s}");
        }
    }

    #[test]
    fn degree_zero_is_indicator() {
        let g = SplineGrid::new(-1.0, 1.0, 4, 0);
        let b = g.basis(0.1);
        assert_eq!(b, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn basis_nonnegative_in_domain() {
        let g = SplineGrid::default();
        for i in 0..=200 {
            let x = -1.0 + 2.0 * i as f64 / 200.0;
            assert!(g.basis(x).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let g = SplineGrid::new(-1.0, 1.0, 5, 3);
        let h = 1e-6;
        for &x in &[-0.93, -0.41, 0.05, 0.33, 0.77, 1.4, -1.6] {
            let (_, d) = g.basis_with_derivative(x);
            let bp = g.basis(x + h);
            let bm = g.basis(x - h);
            for k in 0..g.n_basis() {
                let fd = (bp[k] - bm[k]) / (2.0 * h);
                assert!((fd - d[k]).abs() < 1e-6, "k={k} x={x}: {fd} vs {}", d[k]);
            }
        }
    }

    #[test]
    fn vanishes_beyond_extended_knots() {
        let g = SplineGrid::default();
        assert!(g.basis(10.0).iter().all(|&v| v == 0.0));
    }
}
