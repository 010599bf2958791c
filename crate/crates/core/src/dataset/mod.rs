//! Heart-disease CSV ingestion and preprocessing.

mod matrix;
mod pipeline;
mod records;
mod split;
mod synth;

pub use matrix::{
    add_interactions, cap_outliers_iqr, default_interactions, encode_features, quantile, scale_minmax, smote_balance,
    ColumnKind, Encoding, FeatureMatrix, IqrCaps, MinMaxScaler,
};
pub use pipeline::{
    augment_with_baseline, clean_and_encode, prepare, CodeTables, PipelineConfig, PreprocessManifest, Prepared,
    Preprocessor, BASELINE_COLUMN,
};
pub use records::{
    deduplicate, impute_missing, load_records, parse_records, write_records, LoadOptions, RawRecord, HEADER,
};
pub use split::{stratified_folds, stratified_indices, SplitSpec};
pub use synth::synthetic_heart;

/// Stratified split of a matrix into `(train, test)`.
pub fn stratified_split(m: &FeatureMatrix, spec: &SplitSpec) -> crate::Result<(FeatureMatrix, FeatureMatrix)> {
    let (a, b) = stratified_indices(&m.labels, spec.ratio, spec.seed)?;
    Ok((m.select(&a), m.select(&b)))
}
