use serde::{Deserialize, Serialize};

use super::records::{RawRecord, CHEST_PAIN, RESTING_ECG, ST_SLOPE};
use crate::error::{shape_err, Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
    Ordinal,
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    Ordinal,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub column_names: Vec<String>,
    pub column_kinds: Vec<ColumnKind>,
}

impl FeatureMatrix {
    pub fn new(values: Vec<Vec<f64>>, labels: Vec<u8>, column_names: Vec<String>, column_kinds: Vec<ColumnKind>) -> Result<Self> {
        let m = Self {
            values,
            labels,
            column_names,
            column_kinds,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.labels.len() {
            return shape_err(format!("{} rows for {} labels", self.values.len(), self.labels.len()));
        }
        let c = self.column_names.len();
        if self.column_kinds.len() != c {
            return shape_err("column names and kinds differ in length");
        }
        if let Some(i) = self.values.iter().position(|r| r.len() != c) {
            return shape_err(format!("row {i} has {} values for {c} columns", self.values[i].len()));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::Param("labels must be 0 or 1".into()));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("unknown column '{name}'")))
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            column_names: self.column_names.clone(),
            column_kinds: self.column_kinds.clone(),
        }
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        [self.labels.len() - ones, ones]
    }

    /// Model input `[rows, cols, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let data: Vec<f64> = self.values.iter().flatten().copied().collect();
        Tensor::new(vec![self.n_rows(), self.n_cols(), 1], data).expect("validated matrix")
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head = self.column_names.clone();
        head.push("HeartDisease".into());
        wr.write_record(&head)?;
        for (row, y) in self.values.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(y.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn code(v: Option<u8>) -> f64 {
    f64::from(v.expect("imputed record"))
}

fn num(v: Option<f64>) -> f64 {
    v.expect("imputed record")
}

/// Turn imputed records into a matrix. Ordinal mode keeps the eleven
/// attributes in input order; one-hot mode expands the three multi-category
/// columns into indicators.
pub fn encode_features(records: &[RawRecord], mode: Encoding) -> Result<FeatureMatrix> {
    if let Some(i) = records.iter().position(has_missing) {
        return Err(Error::Imputation(format!("record {i} still has missing fields")));
    }
    use ColumnKind::*;
    let mut names: Vec<String> = Vec::new();
    let mut kinds = Vec::new();
    let mut push = |n: &str, k: ColumnKind| {
        names.push(n.to_string());
        kinds.push(k);
    };
    let multi = |n: &str, vocab: &[&str], push: &mut dyn FnMut(&str, ColumnKind)| match mode {
        Encoding::Ordinal => push(n, Ordinal),
        Encoding::OneHot => vocab.iter().for_each(|v| push(&format!("{n}_{v}"), OneHot)),
    };
    push("Age", Continuous);
    push("Sex", Binary);
    multi("ChestPainType", &CHEST_PAIN, &mut push);
    push("RestingBP", Continuous);
    push("Cholesterol", Continuous);
    push("FastingBS", Binary);
    multi("RestingECG", &RESTING_ECG, &mut push);
    push("MaxHR", Continuous);
    push("ExerciseAngina", Binary);
    push("Oldpeak", Continuous);
    multi("ST_Slope", &ST_SLOPE, &mut push);

    let cat = |v: Option<u8>, k: usize, out: &mut Vec<f64>| match mode {
        Encoding::Ordinal => out.push(code(v)),
        Encoding::OneHot => out.extend((0..k).map(|i| f64::from(u8::from(code(v) as usize == i)))),
    };
    let values = records
        .iter()
        .map(|r| {
            let mut row = vec![num(r.age), code(r.sex)];
            cat(r.chest_pain_type, CHEST_PAIN.len(), &mut row);
            row.extend([num(r.resting_bp), num(r.cholesterol), code(r.fasting_bs)]);
            cat(r.resting_ecg, RESTING_ECG.len(), &mut row);
            row.extend([num(r.max_hr), code(r.exercise_angina), num(r.oldpeak)]);
            cat(r.st_slope, ST_SLOPE.len(), &mut row);
            row
        })
        .collect();
    let labels = records.iter().map(|r| r.heart_disease).collect();
    FeatureMatrix::new(values, labels, names, kinds)
}

fn has_missing(r: &RawRecord) -> bool {
    [r.age, r.resting_bp, r.cholesterol, r.max_hr, r.oldpeak].iter().any(Option::is_none)
        || [r.sex, r.chest_pain_type, r.fasting_bs, r.resting_ecg, r.exercise_angina, r.st_slope]
            .iter()
            .any(Option::is_none)
}

/// Type-7 quantile (linear interpolation between order statistics).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Winsorizing bounds `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]` per continuous column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqrCaps {
    pub bounds: Vec<Option<(f64, f64)>>,
}

impl IqrCaps {
    pub fn fit(m: &FeatureMatrix) -> Self {
        let bounds = (0..m.n_cols())
            .map(|j| {
                if m.column_kinds[j] != ColumnKind::Continuous || m.n_rows() == 0 {
                    return None;
                }
                let mut col = m.column(j);
                col.sort_by(f64::total_cmp);
                let (q1, q3) = (quantile(&col, 0.25), quantile(&col, 0.75));
                let iqr = q3 - q1;
                Some((q1 - 1.5 * iqr, q3 + 1.5 * iqr))
            })
            .collect();
        Self { bounds }
    }

    pub fn apply(&self, m: &mut FeatureMatrix) {
        for row in &mut m.values {
            for (v, b) in row.iter_mut().zip(&self.bounds) {
                if let Some((lo, hi)) = b {
                    *v = v.clamp(*lo, *hi);
                }
            }
        }
    }
}

pub fn cap_outliers_iqr(mut m: FeatureMatrix) -> FeatureMatrix {
    IqrCaps::fit(&m).apply(&mut m);
    m
}

/// Per-column `(min, max)` fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub ranges: Vec<(f64, f64)>,
}

impl MinMaxScaler {
    pub fn fit(m: &FeatureMatrix) -> Self {
        let ranges = (0..m.n_cols())
            .map(|j| {
                m.values
                    .iter()
                    .map(|r| r[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            })
            .collect();
        Self { ranges }
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for (v, &(lo, hi)) in row.iter_mut().zip(&self.ranges) {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
    }

    pub fn apply(&self, m: &mut FeatureMatrix) {
        for row in &mut m.values {
            self.transform_row(row);
        }
    }
}

pub fn scale_minmax(mut m: FeatureMatrix) -> (FeatureMatrix, MinMaxScaler) {
    let s = MinMaxScaler::fit(&m);
    s.apply(&mut m);
    (m, s)
}

pub fn add_interactions(mut m: FeatureMatrix, pairs: &[(String, String)]) -> Result<FeatureMatrix> {
    let idx = pairs
        .iter()
        .map(|(a, b)| Ok((m.column_index(a)?, m.column_index(b)?)))
        .collect::<Result<Vec<_>>>()?;
    for row in &mut m.values {
        let extra: Vec<f64> = idx.iter().map(|&(a, b)| row[a] * row[b]).collect();
        row.extend(extra);
    }
    for (a, b) in pairs {
        m.column_names.push(format!("{a}*{b}"));
        m.column_kinds.push(ColumnKind::Continuous);
    }
    Ok(m)
}

/// `(Age, MaxHR)` and `(ChestPainType, ExerciseAngina)`; under one-hot
/// encoding the chest-pain term uses the asymptomatic indicator.
pub fn default_interactions(encoding: Encoding) -> Vec<(String, String)> {
    let cp = match encoding {
        Encoding::Ordinal => "ChestPainType",
        Encoding::OneHot => "ChestPainType_ASY",
    };
    vec![("Age".into(), "MaxHR".into()), (cp.into(), "ExerciseAngina".into())]
}

/// Oversample the minority class to the majority count by interpolating
/// towards one of its `k` nearest minority neighbours.
pub fn smote_balance(m: &FeatureMatrix, k: usize, rng: &mut RngStream) -> Result<FeatureMatrix> {
    let counts = m.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::Param("SMOTE needs both classes".into()));
    }
    if counts[0] == counts[1] {
        return Ok(m.clone());
    }
    let minority = u8::from(counts[1] < counts[0]);
    let pool: Vec<usize> = (0..m.n_rows()).filter(|&i| m.labels[i] == minority).collect();
    if pool.len() <= k || k == 0 {
        return Err(Error::Param(format!("SMOTE with k = {k} needs more than {} minority rows", pool.len())));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let neighbours: Vec<Vec<usize>> = crate::par::map_slice(&pool, |&i| {
        let mut d: Vec<(f64, usize)> = pool
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| (dist(&m.values[i], &m.values[j]), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(k).map(|x| x.1).collect()
    });
    let need = counts[1 - minority as usize] - pool.len();
    let mut out = m.clone();
    for _ in 0..need {
        let p = rng.below(pool.len());
        let nn = neighbours[p][rng.below(k)];
        let u = rng.uniform01();
        let (x, z) = (&m.values[pool[p]], &m.values[nn]);
        out.values.push(x.iter().zip(z).map(|(a, b)| a + u * (b - a)).collect());
        out.labels.push(minority);
    }
    Ok(out)
}
