//! Kolmogorov–Arnold layers: learnable B-spline edge functions with a SiLU
//! residual branch.

mod edges;
mod layers;
mod spline;

pub use edges::{EdgeCache, EdgeGrads, KanEdges};
pub use layers::{init_kan, Conv1dKan, Conv1dKanCache, DenseKan, DenseKanCache};
pub use spline::SplineGrid;

/// Standard deviation of the initial spline coefficients.
pub const INIT_SIGMA: f64 = 0.1;
