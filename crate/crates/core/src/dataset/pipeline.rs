use serde::{Deserialize, Serialize};

use super::matrix::{
    add_interactions, default_interactions, encode_features, smote_balance, ColumnKind, Encoding, FeatureMatrix,
    IqrCaps, MinMaxScaler,
};
use super::records::{deduplicate, impute_missing, LoadOptions, RawRecord, ANGINA, CHEST_PAIN, RESTING_ECG, SEX, ST_SLOPE};
use super::split::stratified_indices;
use crate::error::{Error, Result};
use crate::models::fit_logistic;
use crate::rng::RngStream;
use crate::tensor::sigmoid;

pub const BASELINE_COLUMN: &str = "BaselineProb";
const BASELINE_RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub load: LoadOptions,
    pub encoding: Encoding,
    pub cap_outliers: bool,
    pub smote: bool,
    pub smote_k: usize,
    pub interactions: bool,
    /// Append a logistic baseline's class-1 probability as a feature.
    pub augment: bool,
    pub split_ratio: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            load: LoadOptions::default(),
            encoding: Encoding::Ordinal,
            cap_outliers: true,
            smote: false,
            smote_k: 5,
            interactions: false,
            augment: true,
            split_ratio: 0.8,
        }
    }
}

/// Append the fitted baseline's class-1 probability to `train` and `test`.
pub fn augment_with_baseline(train: &mut FeatureMatrix, test: &mut FeatureMatrix) -> Result<(Vec<f64>, f64)> {
    let (w, b) = fit_logistic(&train.values, &train.labels, BASELINE_RIDGE)?;
    for m in [&mut *train, &mut *test] {
        for row in &mut m.values {
            let z = b + row.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>();
            row.push(sigmoid(z));
        }
        m.column_names.push(BASELINE_COLUMN.into());
        m.column_kinds.push(ColumnKind::Continuous);
    }
    Ok((w, b))
}

/// State fitted on a training partition and replayed on held-out rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub caps: Option<IqrCaps>,
    pub scaler: MinMaxScaler,
    pub interactions: Vec<(String, String)>,
    pub baseline: Option<(Vec<f64>, f64)>,
}

impl Preprocessor {
    /// Fit on `train`, transform both partitions. SMOTE only touches `train`.
    pub fn fit_transform(
        mut train: FeatureMatrix,
        mut test: FeatureMatrix,
        cfg: &PipelineConfig,
        rng: &mut RngStream,
    ) -> Result<(Self, FeatureMatrix, FeatureMatrix)> {
        if train.n_rows() == 0 {
            return Err(Error::Param("empty training partition".into()));
        }
        let caps = cfg.cap_outliers.then(|| IqrCaps::fit(&train));
        if let Some(c) = &caps {
            c.apply(&mut train);
            c.apply(&mut test);
        }
        let scaler = MinMaxScaler::fit(&train);
        scaler.apply(&mut train);
        scaler.apply(&mut test);
        let interactions = if cfg.interactions { default_interactions(cfg.encoding) } else { Vec::new() };
        if !interactions.is_empty() {
            train = add_interactions(train, &interactions)?;
            test = add_interactions(test, &interactions)?;
        }
        if cfg.smote {
            train = smote_balance(&train, cfg.smote_k, rng)?;
        }
        let baseline = if cfg.augment {
            Some(augment_with_baseline(&mut train, &mut test)?)
        } else {
            None
        };
        let pre = Self {
            caps,
            scaler,
            interactions,
            baseline,
        };
        Ok((pre, train, test))
    }
}

/// Dedup, impute and encode, in that order.
pub fn clean_and_encode(records: Vec<RawRecord>, encoding: Encoding) -> Result<(FeatureMatrix, usize)> {
    let deduped = deduplicate(records);
    let n = deduped.len();
    Ok((encode_features(&impute_missing(deduped)?, encoding)?, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeTables {
    pub sex: Vec<String>,
    pub chest_pain_type: Vec<String>,
    pub resting_ecg: Vec<String>,
    pub exercise_angina: Vec<String>,
    pub st_slope: Vec<String>,
}

impl CodeTables {
    pub fn standard() -> Self {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect();
        Self {
            sex: v(&SEX),
            chest_pain_type: v(&CHEST_PAIN),
            resting_ecg: v(&RESTING_ECG),
            exercise_angina: v(&ANGINA),
            st_slope: v(&ST_SLOPE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessManifest {
    pub seed: u64,
    pub config: PipelineConfig,
    pub rows_raw: usize,
    pub rows_unique: usize,
    pub rows_train: usize,
    pub rows_test: usize,
    pub train_class_counts: [usize; 2],
    pub test_class_counts: [usize; 2],
    pub column_names: Vec<String>,
    pub column_kinds: Vec<ColumnKind>,
    pub codes: CodeTables,
    pub preprocessor: Preprocessor,
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub manifest: PreprocessManifest,
}

/// The full pipeline on raw records: clean, encode, stratified split, then
/// fit the preprocessing on the training part.
pub fn prepare(records: Vec<RawRecord>, cfg: &PipelineConfig, seed: u64) -> Result<Prepared> {
    let rows_raw = records.len();
    let (full, rows_unique) = clean_and_encode(records, cfg.encoding)?;
    let (tr, te) = stratified_indices(&full.labels, cfg.split_ratio, seed)?;
    let mut rng = RngStream::new(seed, 0x5307E);
    let (pre, train, test) = Preprocessor::fit_transform(full.select(&tr), full.select(&te), cfg, &mut rng)?;
    let manifest = PreprocessManifest {
        seed,
        config: cfg.clone(),
        rows_raw,
        rows_unique,
        rows_train: train.n_rows(),
        rows_test: test.n_rows(),
        train_class_counts: train.class_counts(),
        test_class_counts: test.class_counts(),
        column_names: train.column_names.clone(),
        column_kinds: train.column_kinds.clone(),
        codes: CodeTables::standard(),
        preprocessor: pre,
        train_index: tr,
        test_index: te,
    };
    Ok(Prepared { train, test, manifest })
}
