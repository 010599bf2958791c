use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: [&str; 12] = [
    "Age",
    "Sex",
    "ChestPainType",
    "RestingBP",
    "Cholesterol",
    "FastingBS",
    "RestingECG",
    "MaxHR",
    "ExerciseAngina",
    "Oldpeak",
    "ST_Slope",
    "HeartDisease",
];

/// Category vocabularies in ordinal-code order.
pub const SEX: [&str; 2] = ["M", "F"];
pub const CHEST_PAIN: [&str; 4] = ["ASY", "ATA", "NAP", "TA"];
pub const RESTING_ECG: [&str; 3] = ["Normal", "ST", "LVH"];
pub const ANGINA: [&str; 2] = ["N", "Y"];
pub const ST_SLOPE: [&str; 3] = ["Down", "Flat", "Up"];

/// One patient row. Categorical fields hold their ordinal code; `None` marks
/// a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub age: Option<f64>,
    pub sex: Option<u8>,
    pub chest_pain_type: Option<u8>,
    pub resting_bp: Option<f64>,
    pub cholesterol: Option<f64>,
    pub fasting_bs: Option<u8>,
    pub resting_ecg: Option<u8>,
    pub max_hr: Option<f64>,
    pub exercise_angina: Option<u8>,
    pub oldpeak: Option<f64>,
    pub st_slope: Option<u8>,
    pub heart_disease: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    /// Read `Cholesterol = 0` and `RestingBP = 0` as missing.
    pub zero_is_missing: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { zero_is_missing: true }
    }
}

pub fn load_records(path: &Path, opts: LoadOptions) -> Result<Vec<RawRecord>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_records(f, opts)
}

pub fn parse_records<R: Read>(reader: R, opts: LoadOptions) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut pos = [usize::MAX; 12];
    for (i, h) in headers.iter().enumerate() {
        let Some(j) = HEADER.iter().position(|c| *c == h) else {
            return Err(Error::Schema(format!("unknown column '{h}'")));
        };
        pos[j] = i;
    }
    if let Some(j) = pos.iter().position(|&p| p == usize::MAX) {
        return Err(Error::Schema(format!("missing column '{}'", HEADER[j])));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            msg: e.to_string(),
        })?;
        let cell = |j: usize| -> Option<&str> {
            let s = row.get(pos[j]).unwrap_or("");
            (!s.is_empty() && !s.eq_ignore_ascii_case("na")).then_some(s)
        };
        let perr = |msg: String| Error::Parse { row: row_no, msg };
        let num = |j: usize| -> Result<Option<f64>> {
            cell(j)
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| perr(format!("{}: '{s}' is not a number", HEADER[j])))
                })
                .transpose()
        };
        let cat = |j: usize, vocab: &[&str]| -> Result<Option<u8>> {
            cell(j)
                .map(|s| {
                    vocab
                        .iter()
                        .position(|v| *v == s)
                        .map(|p| p as u8)
                        .ok_or_else(|| perr(format!("{}: unknown category '{s}'", HEADER[j])))
                })
                .transpose()
        };
        let flag = |j: usize| -> Result<Option<u8>> {
            cell(j)
                .map(|s| match s {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    _ => Err(perr(format!("{}: expected 0 or 1, got '{s}'", HEADER[j]))),
                })
                .transpose()
        };
        let sentinel = |v: Option<f64>| if opts.zero_is_missing && v == Some(0.0) { None } else { v };
        let heart_disease = flag(11)?.ok_or_else(|| perr("HeartDisease is missing".into()))?;
        out.push(RawRecord {
            age: num(0)?,
            sex: cat(1, &SEX)?,
            chest_pain_type: cat(2, &CHEST_PAIN)?,
            resting_bp: sentinel(num(3)?),
            cholesterol: sentinel(num(4)?),
            fasting_bs: flag(5)?,
            resting_ecg: cat(6, &RESTING_ECG)?,
            max_hr: num(7)?,
            exercise_angina: cat(8, &ANGINA)?,
            oldpeak: num(9)?,
            st_slope: cat(10, &ST_SLOPE)?,
            heart_disease,
        });
    }
    Ok(out)
}

/// Write records back in the input CSV format (missing → empty cell).
pub fn write_records<W: std::io::Write>(records: &[RawRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(HEADER)?;
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let c = |v: Option<u8>, vocab: &[&str]| v.map(|x| vocab[x as usize].to_string()).unwrap_or_default();
    let b = |v: Option<u8>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        wr.write_record([
            f(r.age),
            c(r.sex, &SEX),
            c(r.chest_pain_type, &CHEST_PAIN),
            f(r.resting_bp),
            f(r.cholesterol),
            b(r.fasting_bs),
            c(r.resting_ecg, &RESTING_ECG),
            f(r.max_hr),
            c(r.exercise_angina, &ANGINA),
            f(r.oldpeak),
            c(r.st_slope, &ST_SLOPE),
            r.heart_disease.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Drop exact duplicates, keeping the first occurrence.
pub fn deduplicate(records: Vec<RawRecord>) -> Vec<RawRecord> {
    let mut seen = std::collections::HashSet::new();
    records
        .into_iter()
        .filter(|r| seen.insert(serde_json::to_string(r).expect("record serialises")))
        .collect()
}

/// Lower median of the present values.
fn lower_median(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// Most frequent code; ties go to the lexicographically first category name.
fn mode(values: impl Iterator<Item = u8>, vocab: &[&str]) -> Option<u8> {
    let mut counts: BTreeMap<&str, (usize, u8)> = BTreeMap::new();
    for v in values {
        counts.entry(vocab[v as usize]).or_insert((0, v)).0 += 1;
    }
    let best = counts.values().map(|c| c.0).max()?;
    counts.values().find(|c| c.0 == best).map(|c| c.1)
}

/// Fill numeric gaps with the column's lower median and categorical gaps with
/// its mode.
pub fn impute_missing(mut records: Vec<RawRecord>) -> Result<Vec<RawRecord>> {
    macro_rules! numeric {
        ($field:ident, $name:expr) => {
            if records.iter().any(|r| r.$field.is_none()) {
                let m = lower_median(records.iter().filter_map(|r| r.$field))
                    .ok_or_else(|| Error::Imputation(format!("column {} is entirely missing", $name)))?;
                for r in &mut records {
                    r.$field.get_or_insert(m);
                }
            }
        };
    }
    macro_rules! categorical {
        ($field:ident, $name:expr, $vocab:expr) => {
            if records.iter().any(|r| r.$field.is_none()) {
                let m = mode(records.iter().filter_map(|r| r.$field), $vocab)
                    .ok_or_else(|| Error::Imputation(format!("column {} is entirely missing", $name)))?;
                for r in &mut records {
                    r.$field.get_or_insert(m);
                }
            }
        };
    }
    numeric!(age, "Age");
    categorical!(sex, "Sex", &SEX);
    categorical!(chest_pain_type, "ChestPainType", &CHEST_PAIN);
    numeric!(resting_bp, "RestingBP");
    numeric!(cholesterol, "Cholesterol");
    categorical!(fasting_bs, "FastingBS", &["0", "1"]);
    categorical!(resting_ecg, "RestingECG", &RESTING_ECG);
    numeric!(max_hr, "MaxHR");
    categorical!(exercise_angina, "ExerciseAngina", &ANGINA);
    numeric!(oldpeak, "Oldpeak");
    categorical!(st_slope, "ST_Slope", &ST_SLOPE);
    Ok(records)
}
