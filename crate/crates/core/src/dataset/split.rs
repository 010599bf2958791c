use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratio: f64,
    pub seed: u64,
    pub k_folds: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            seed: 0,
            k_folds: 10,
        }
    }
}

fn by_class(labels: &[u8], rng: &mut RngStream) -> [Vec<usize>; 2] {
    let mut cls: [Vec<usize>; 2] = Default::default();
    for (i, &y) in labels.iter().enumerate() {
        cls[usize::from(y)].push(i);
    }
    for c in &mut cls {
        rng.shuffle(c);
    }
    cls
}

/// Stratified `(first, second)` index partition with `round(ratio·n_c)` rows
/// of each class in the first part. Both parts are returned sorted.
pub fn stratified_indices(labels: &[u8], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Param(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut rng = RngStream::new(seed, 0x5B11);
    let cls = by_class(labels, &mut rng);
    if let Some(c) = cls.iter().position(|c| c.len() < 2) {
        return Err(Error::Param(format!("class {c} has fewer than 2 samples")));
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for c in &cls {
        let take = ((c.len() as f64 * ratio).round() as usize).clamp(1, c.len() - 1);
        a.extend_from_slice(&c[..take]);
        b.extend_from_slice(&c[take..]);
    }
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

/// `k` stratified folds as `(train, test)` index pairs. Rows of each class are
/// dealt round-robin, continuing across classes so fold sizes differ by at
/// most one. `k = n` gives leave-one-out.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::Param(format!("k = {k} folds; need at least 2")));
    }
    let mut rng = RngStream::new(seed, 0xF01D);
    let cls = by_class(labels, &mut rng);
    let minority = cls[0].len().min(cls[1].len());
    if k > n || (k != n && k > minority) {
        return Err(Error::Param(format!("k = {k} exceeds the minority class count {minority}")));
    }
    let mut fold_of = vec![0usize; n];
    let mut slot = 0;
    for c in &cls {
        for &i in c {
            fold_of[i] = slot % k;
            slot += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
            (train, test)
        })
        .collect())
}
