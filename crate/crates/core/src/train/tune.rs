use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::models::{Hyperparams, Model, ModelKind, Variant};
use crate::par;
use crate::rng::RngStream;

use super::{evaluate, fit, TrainConfig};

pub const RUNG_EPOCHS: [usize; 2] = [3, 10];
const TRIAL_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

fn steps(lo: usize, hi: usize, step: usize) -> Vec<usize> {
    (lo..=hi).step_by(step).collect()
}

impl SearchSpace {
    pub fn new(dims: &[(&str, Vec<usize>)]) -> Self {
        Self {
            dims: dims
                .iter()
                .map(|(n, v)| Dimension {
                    name: (*n).to_string(),
                    values: v.clone(),
                })
                .collect(),
        }
    }

    /// Grids for each architecture.
    pub fn for_kind(kind: ModelKind) -> Self {
        let lstm = [
            ("lstm_units", steps(32, 128, 32)),
            ("dense_units", steps(128, 512, 64)),
            ("kan_units_1", steps(32, 256, 32)),
        ];
        let qdense = [
            ("qdense_units_1", steps(16, 256, 32)),
            ("qdense_units_2", steps(16, 256, 32)),
            ("qdense_units_out", steps(16, 256, 32)),
        ];
        match kind {
            ModelKind::BilstmKannet => Self::new(&lstm),
            ModelKind::QdenseKannet => Self::new(&qdense),
            ModelKind::QcKannet => Self::new(&[("conv_filters", steps(32, 128, 32)), ("kan_units_1", steps(32, 256, 32))]),
            ModelKind::KacqDcnn | ModelKind::KacqMlp => Self::new(&[lstm, qdense].concat()),
            ModelKind::Vqc(_) => Self::new(&[("quantum_layers", steps(1, 4, 1))]),
            ModelKind::Logistic => Self::default(),
        }
    }

    pub fn size(&self) -> usize {
        if self.dims.is_empty() {
            return 0;
        }
        self.dims.iter().map(|d| d.values.len()).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.size() == 0 {
            return Err(Error::Param("empty search space".into()));
        }
        for d in &self.dims {
            set_field(&mut Hyperparams::default(), &d.name, 1)?;
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<usize> {
        self.dims.iter().map(|d| d.values[rng.below(d.values.len())]).collect()
    }

    pub fn apply(&self, base: &Hyperparams, choice: &[usize]) -> Result<Hyperparams> {
        let mut hp = base.clone();
        for (d, &v) in self.dims.iter().zip(choice) {
            set_field(&mut hp, &d.name, v)?;
        }
        Ok(hp)
    }

    fn named(&self, choice: &[usize]) -> BTreeMap<String, usize> {
        self.dims.iter().zip(choice).map(|(d, &v)| (d.name.clone(), v)).collect()
    }
}

fn set_field(hp: &mut Hyperparams, name: &str, v: usize) -> Result<()> {
    let slot = match name {
        "lstm_units" => &mut hp.lstm_units,
        "dense_units" => &mut hp.dense_units,
        "kan_units_1" => &mut hp.kan_units_1,
        "kan_units_2" => &mut hp.kan_units_2,
        "qdense_units_1" => &mut hp.qdense_units_1,
        "qdense_units_2" => &mut hp.qdense_units_2,
        "qdense_units_out" => &mut hp.qdense_units_out,
        "conv_filters" => &mut hp.conv_filters,
        "n_qubits" => &mut hp.n_qubits,
        "quantum_layers" => &mut hp.quantum_layers,
        "grid_size" => &mut hp.grid_size,
        "join_units" => &mut hp.join_units,
        _ => return Err(Error::Param(format!("'{name}' is not a tunable hyperparameter"))),
    };
    *slot = v;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingResult {
    pub winner: usize,
    /// `scores[candidate][rung]`, `None` once a candidate is dropped.
    pub scores: Vec<Vec<Option<f64>>>,
}

/// Successive halving: every survivor is scored at each rung and the top
/// third (rounded up) moves on. Ties go to the lower index.
pub fn successive_halving<F>(n: usize, rungs: &[usize], eval: F) -> Result<HalvingResult>
where
    F: Fn(usize, usize) -> Result<f64> + Sync + Send,
{
    if n == 0 || rungs.is_empty() {
        return Err(Error::Param("successive halving needs at least one candidate and one rung".into()));
    }
    let mut scores = vec![vec![None; rungs.len()]; n];
    let mut alive: Vec<usize> = (0..n).collect();
    for (r, &epochs) in rungs.iter().enumerate() {
        let got = par::try_map_range(alive.len(), |i| eval(alive[i], epochs))?;
        for (&c, &s) in alive.iter().zip(&got) {
            scores[c][r] = Some(s);
        }
        let mut ranked: Vec<(usize, f64)> = alive.iter().copied().zip(got).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let keep = if r + 1 == rungs.len() { 1 } else { alive.len().div_ceil(3) };
        alive = ranked.into_iter().take(keep).map(|(c, _)| c).collect();
        alive.sort_unstable();
    }
    Ok(HalvingResult { winner: alive[0], scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub choice: BTreeMap<String, usize>,
    pub scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub best: Hyperparams,
    pub best_index: usize,
    pub rung_epochs: Vec<usize>,
    pub trials: Vec<TrialRecord>,
}

const TRIAL_STREAM: u64 = 0x7E5E;

/// Sample `budget` configurations (duplicates dropped) and race them by
/// validation accuracy.
#[allow(clippy::too_many_arguments)]
pub fn tune(
    kind: ModelKind,
    space: &SearchSpace,
    base: &Hyperparams,
    variant: &Variant,
    train: &FeatureMatrix,
    val: &FeatureMatrix,
    train_cfg: &TrainConfig,
    budget: usize,
    seed: u64,
) -> Result<TuneReport> {
    if budget < 1 {
        return Err(Error::Param("tuning budget must allow at least one trial".into()));
    }
    space.validate()?;
    let mut rng = RngStream::new(seed, TRIAL_STREAM);
    let mut choices: Vec<Vec<usize>> = Vec::new();
    for _ in 0..budget {
        let c = space.sample(&mut rng);
        if !choices.contains(&c) {
            choices.push(c);
        }
    }
    let hps = choices.iter().map(|c| space.apply(base, c)).collect::<Result<Vec<_>>>()?;
    let result = successive_halving(hps.len(), &RUNG_EPOCHS, |i, epochs| {
        let trial_seed = RngStream::new(seed, TRIAL_STREAM).child(i as u64).next_u64();
        let model = Model::build(kind, &hps[i], variant, train.n_cols(), trial_seed)?;
        let cfg = TrainConfig {
            max_epochs: epochs,
            early_stop_patience: TRIAL_PATIENCE,
            seed: trial_seed,
            ..train_cfg.clone()
        };
        let (best, _) = fit(model, train, Some(val), &cfg)?;
        Ok(evaluate(&best, val, 0.5)?.accuracy)
    })?;
    let trials = choices
        .iter()
        .zip(result.scores)
        .enumerate()
        .map(|(index, (c, scores))| TrialRecord {
            index,
            choice: space.named(c),
            scores,
        })
        .collect();
    Ok(TuneReport {
        best: hps[result.winner].clone(),
        best_index: result.winner,
        rung_epochs: RUNG_EPOCHS.to_vec(),
        trials,
    })
}
