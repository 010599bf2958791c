use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_folds, FeatureMatrix, PipelineConfig, Preprocessor};
use crate::error::{Error, Result};
use crate::metrics::{mean_std, MetricsReport};
use crate::models::{Hyperparams, Model, ModelKind, Variant};
use crate::par;
use crate::rng::RngStream;

use super::{evaluate, fit, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<MetricsReport>,
    pub summary: Vec<MetricSummary>,
}

impl CvReport {
    pub fn from_folds(folds: Vec<MetricsReport>) -> Self {
        let summary = MetricsReport::COLUMNS
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let v: Vec<f64> = folds.iter().map(|f| f.values()[j]).collect();
                let (mean, std) = mean_std(&v);
                MetricSummary {
                    metric: (*name).to_string(),
                    mean,
                    std,
                }
            })
            .collect();
        Self {
            k: folds.len(),
            folds,
            summary,
        }
    }

    /// Per-fold values of one metric, in fold order.
    pub fn metric(&self, name: &str) -> Option<Vec<f64>> {
        let j = MetricsReport::COLUMNS.iter().position(|c| *c == name)?;
        Some(self.folds.iter().map(|f| f.values()[j]).collect())
    }
}

/// Stratified k-fold driver. `run(fold, train, test)` receives the raw
/// (encoded, unscaled) partitions; folds run in parallel and are reported in
/// order.
pub fn cross_validate_with<F>(data: &FeatureMatrix, k: usize, seed: u64, run: F) -> Result<CvReport>
where
    F: Fn(usize, FeatureMatrix, FeatureMatrix) -> Result<MetricsReport> + Sync + Send,
{
    if k < 2 {
        return Err(Error::Param(format!("k = {k} folds")));
    }
    let folds = stratified_folds(&data.labels, k, seed)?;
    let reports = par::try_map_range(folds.len(), |i| {
        let (tr, te) = &folds[i];
        run(i, data.select(tr), data.select(te)).map_err(|e| Error::Fold {
            index: i,
            source: Box::new(e),
        })
    })?;
    Ok(CvReport::from_folds(reports))
}

const FOLD_STREAM: u64 = 0xC5F0;

/// Fresh model per fold, preprocessing refit on each training fold,
/// evaluated at τ = 0.5 on the held-out fold.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    kind: ModelKind,
    hp: &Hyperparams,
    variant: &Variant,
    data: &FeatureMatrix,
    pipeline: &PipelineConfig,
    train_cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    cross_validate_with(data, k, seed, |i, train, test| {
        let fold_seed = RngStream::new(seed, FOLD_STREAM).child(i as u64).next_u64();
        let mut rng = RngStream::new(fold_seed, 0x5307E);
        let (_, train, test) = Preprocessor::fit_transform(train, test, pipeline, &mut rng)?;
        let model = Model::build(kind, hp, variant, train.n_cols(), fold_seed)?;
        let cfg = TrainConfig {
            seed: fold_seed,
            ..train_cfg.clone()
        };
        let (best, _) = fit(model, &train, None, &cfg)?;
        evaluate(&best, &test, 0.5)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{clean_and_encode, synthetic_heart, Encoding};

    fn report(scores: &[f64], labels: &[u8]) -> MetricsReport {
        MetricsReport::compute(scores, labels, 0.5).unwrap()
    }

    #[test]
    fn summary_oracle() {
        let r = report(&[0.2, 0.8, 0.6, 0.4], &[0, 1, 0, 1]);
        let same = CvReport::from_folds(vec![r.clone(); 10]);
        assert!(same.summary.iter().all(|s| s.std == 0.0));
        assert_eq!(same.summary[3].mean, 0.5);
        // accuracies 1, .75, .5, .5 → mean .6875, population std √(0.04296875)
        let folds = vec![
            report(&[0.1, 0.9, 0.2, 0.8], &[0, 1, 0, 1]),
            report(&[0.1, 0.9, 0.6, 0.8], &[0, 1, 0, 1]),
            r.clone(),
            r,
        ];
        let cv = CvReport::from_folds(folds);
        let acc = &cv.summary[3];
        assert_eq!(acc.metric, "accuracy");
        assert!((acc.mean - 0.6875).abs() < 1e-15);
        assert!((acc.std - 0.04296875f64.sqrt()).abs() < 1e-15);
        assert_eq!(cv.metric("accuracy").unwrap(), vec![1.0, 0.75, 0.5, 0.5]);
    }

    #[test]
    fn ten_folds_on_918_rows() {
        let (m, _) = clean_and_encode(synthetic_heart(940, 3), Encoding::Ordinal).unwrap();
        let m = m.select(&(0..918).collect::<Vec<_>>());
        let cv = cross_validate_with(&m, 10, 1, |_, tr, te| {
            assert!(te.n_rows() == 91 || te.n_rows() == 92, "{}", te.n_rows());
            assert_eq!(tr.n_rows() + te.n_rows(), 918);
            Ok(report(&[0.2, 0.8], &[0, 1]))
        })
        .unwrap();
        assert_eq!(cv.k, 10);
        let err = cross_validate_with(&m, 10, 1, |i, _, _| {
            if i == 3 {
                Err(Error::Degenerate("boom".into()))
            } else {
                Ok(report(&[0.2, 0.8], &[0, 1]))
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Fold { index: 3, .. }));
        assert!(cross_validate_with(&m, 1, 1, |_, _, _| unreachable!()).is_err());
    }

    #[test]
    fn logistic_cv_is_deterministic() {
        let (m, _) = clean_and_encode(synthetic_heart(200, 4), Encoding::Ordinal).unwrap();
        let cfg = TrainConfig {
            max_epochs: 4,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let run = || {
            cross_validate(
                ModelKind::Logistic,
                &Hyperparams::default(),
                &Variant::default(),
                &m,
                &PipelineConfig::default(),
                &cfg,
                3,
                7,
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.folds.len(), 3);
        assert!(a.summary[3].mean > 0.5);
    }
}
