use std::path::Path;

use anyhow::{bail, Context, Result};
use kacq::conformal::{calibrate, conformal_table, score_histogram, two_class, CalibrationMode};
use kacq::dataset::{
    clean_and_encode, parse_records, prepare, stratified_indices, synthetic_heart, write_records, PreprocessManifest,
    Prepared, RawRecord,
};
use kacq::explain::{lime_explain, shapley_exact, shapley_sampled, LimeConfig};
use kacq::metrics::{bonferroni, calibration_curve, paired_t_test, roc_curve, MetricsReport};
use kacq::models::{ablations, load_checkpoint, save_checkpoint, Hyperparams, Model, ModelKind, Variant};
use kacq::qsim::AnsatzKind;
use kacq::train::{cross_validate, evaluate, fit, predict_scores, CvReport, History, Loss, TrainConfig};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{fmt, Outputs};
use crate::{Command, UsageError};

const TAU: f64 = 0.5;
const CALIBRATION_BINS: usize = 10;
const CONFORMAL_SPLIT_STREAM: u64 = 0xCA11;
const PREPROCESS_FILE: &str = "preprocess.json";

pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    let mut outs = Outputs::new(&cfg.out)?;
    match cmd {
        Command::Preprocess => preprocess(cfg, &mut outs)?,
        Command::Train => train(cfg, &mut outs)?,
        Command::Evaluate { checkpoint } => evaluate_cmd(cfg, checkpoint, &mut outs)?,
        Command::Crossval => crossval(cfg, &mut outs)?,
        Command::Ablate => ablate(cfg, &mut outs)?,
        Command::BenchmarkVqc => benchmark_vqc(cfg, &mut outs)?,
        Command::Conformal { checkpoint } => conformal(cfg, checkpoint.as_deref(), &mut outs)?,
        Command::Explain { checkpoint } => explain(cfg, checkpoint.as_deref(), &mut outs)?,
        Command::Ttest {
            models,
            scores,
            metric,
            level,
        } => ttest(cfg, models.as_deref(), scores.as_deref(), metric, *level, &mut outs)?,
    }
    outs.finish(cmd.name(), cfg)
}

fn records(cfg: &RunConfig, outs: &mut Outputs) -> Result<Vec<RawRecord>> {
    if let Some(n) = cfg.synthetic_rows {
        let recs = synthetic_heart(n, cfg.seed);
        let mut buf = Vec::new();
        write_records(&recs, &mut buf)?;
        outs.input(Path::new(&format!("synthetic:{n}:{}", cfg.seed)), &buf);
        return Ok(recs);
    }
    let Some(path) = &cfg.data else {
        bail!(UsageError("no input: pass --data <csv> or --synthetic <rows>".into()));
    };
    let bytes = std::fs::read(path).map_err(|e| UsageError(format!("cannot read --data {}: {e}", path.display())))?;
    outs.input(path, &bytes);
    Ok(parse_records(&bytes[..], cfg.pipeline.load).with_context(|| format!("parsing {}", path.display()))?)
}

fn prepared(cfg: &RunConfig, outs: &mut Outputs) -> Result<Prepared> {
    Ok(prepare(records(cfg, outs)?, &cfg.pipeline, cfg.seed)?)
}

fn train_model(kind: ModelKind, hp: &Hyperparams, variant: &Variant, tc: &TrainConfig, p: &Prepared, seed: u64) -> Result<(Model, History)> {
    let model = Model::build(kind, hp, variant, p.train.n_cols(), seed)?;
    let tc = TrainConfig { seed, ..tc.clone() };
    Ok(fit(model, &p.train, None, &tc)?)
}

fn metric_header(first: &[&str]) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain(MetricsReport::COLUMNS.iter().map(|s| s.to_string()))
        .collect()
}

fn metric_row(first: Vec<String>, r: &MetricsReport) -> Vec<String> {
    first.into_iter().chain(r.values().iter().map(|v| fmt(*v))).collect()
}

fn write_matrix(outs: &mut Outputs, name: &str, m: &kacq::dataset::FeatureMatrix) -> Result<()> {
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    outs.bytes(name, &buf)
}

fn preprocess(cfg: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let p = prepared(cfg, outs)?;
    write_matrix(outs, "train.csv", &p.train)?;
    write_matrix(outs, "test.csv", &p.test)?;
    outs.json(PREPROCESS_FILE, &p.manifest)
}

/// Test report with ROC and reliability curves.
fn write_evaluation(outs: &mut Outputs, scores: &[f64], labels: &[u8], tau: f64) -> Result<MetricsReport> {
    let report = MetricsReport::compute(scores, labels, tau)?;
    outs.json("report.json", &report)?;
    let roc = roc_curve(scores, labels)?;
    let rows: Vec<Vec<String>> = roc.iter().map(|p| vec![fmt(p.threshold), fmt(p.fpr), fmt(p.tpr)]).collect();
    outs.csv("roc.csv", &["threshold".into(), "fpr".into(), "tpr".into()], &rows)?;
    let cal = calibration_curve(scores, labels, CALIBRATION_BINS)?;
    let rows: Vec<Vec<String>> = cal
        .iter()
        .map(|b| vec![fmt(b.mean_predicted), fmt(b.fraction_positive), b.count.to_string()])
        .collect();
    outs.csv(
        "calibration.csv",
        &["mean_predicted".into(), "fraction_positive".into(), "count".into()],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = scores
        .iter()
        .zip(labels)
        .map(|(s, y)| vec![fmt(*s), y.to_string(), u8::from(*s > tau).to_string()])
        .collect();
    outs.csv("predictions.csv", &["score".into(), "label".into(), "predicted".into()], &rows)?;
    Ok(report)
}

fn train(cfg: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let kind = cfg.model_kind()?;
    let p = prepared(cfg, outs)?;
    let (model, history) = train_model(kind, &cfg.hyperparams, &cfg.variant, &cfg.train, &p, cfg.seed)?;
    let dir = outs.dir.join("checkpoint");
    save_checkpoint(&model, Some(TAU), &dir)?;
    crate::output::write_atomic(&dir.join(PREPROCESS_FILE), serde_json::to_string_pretty(&p.manifest)?.as_bytes())?;
    outs.note("checkpoint/weights.bin");
    outs.note("checkpoint/manifest.json");
    outs.note("checkpoint/preprocess.json");
    let mut buf = Vec::new();
    history.write_csv(&mut buf)?;
    outs.bytes("history.csv", &buf)?;
    outs.json("history.json", &history)?;
    let scores = predict_scores(&model, &p.test)?;
    let r = write_evaluation(outs, &scores, &p.test.labels, TAU)?;
    eprintln!(
        "{kind}: {} parameters, {} epochs, test accuracy {:.4}, ROC-AUC {:.4}",
        model.param_count(),
        history.epochs.len(),
        r.accuracy,
        r.roc_auc
    );
    Ok(())
}

/// Model plus the exact partitions it was trained against.
fn load_trained(checkpoint: &Path, cfg: &RunConfig, outs: &mut Outputs) -> Result<(Model, Prepared, f64)> {
    if !checkpoint.is_dir() {
        bail!(UsageError(format!("checkpoint directory {} not found", checkpoint.display())));
    }
    outs.input_dir(checkpoint)?;
    let (model, ckm) = load_checkpoint(checkpoint)?;
    let text = std::fs::read_to_string(checkpoint.join(PREPROCESS_FILE))
        .with_context(|| format!("reading {}", checkpoint.join(PREPROCESS_FILE).display()))?;
    let pm: PreprocessManifest = serde_json::from_str(&text)?;
    let p = prepare(records(cfg, outs)?, &pm.config, pm.seed)?;
    if p.manifest != pm {
        bail!("the data does not reproduce the checkpoint's preprocessing (different file or rows)");
    }
    Ok((model, p, ckm.threshold.unwrap_or(TAU)))
}

fn model_for(cfg: &RunConfig, checkpoint: Option<&Path>, outs: &mut Outputs) -> Result<(Model, Prepared)> {
    match checkpoint {
        Some(c) => {
            let (m, p, _) = load_trained(c, cfg, outs)?;
            Ok((m, p))
        }
        None => {
            let p = prepared(cfg, outs)?;
            let (m, _) = train_model(cfg.model_kind()?, &cfg.hyperparams, &cfg.variant, &cfg.train, &p, cfg.seed)?;
            Ok((m, p))
        }
    }
}

fn evaluate_cmd(cfg: &RunConfig, checkpoint: &Path, outs: &mut Outputs) -> Result<()> {
    let (model, p, tau) = load_trained(checkpoint, cfg, outs)?;
    let scores = predict_scores(&model, &p.test)?;
    write_evaluation(outs, &scores, &p.test.labels, tau)?;
    Ok(())
}

fn cv_table(outs: &mut Outputs, name: &str, cv: &CvReport) -> Result<()> {
    let mut rows: Vec<Vec<String>> = cv
        .folds
        .iter()
        .enumerate()
        .map(|(i, r)| metric_row(vec![i.to_string()], r))
        .collect();
    rows.push(
        std::iter::once("mean".to_string())
            .chain(cv.summary.iter().map(|s| fmt(s.mean)))
            .collect(),
    );
    rows.push(
        std::iter::once("std".to_string())
            .chain(cv.summary.iter().map(|s| fmt(s.std)))
            .collect(),
    );
    outs.csv(name, &metric_header(&["fold"]), &rows)
}

fn run_cv(cfg: &RunConfig, model: &str, outs: &mut Outputs, data: &kacq::dataset::FeatureMatrix) -> Result<CvReport> {
    let kind: ModelKind = model.parse().map_err(|e| UsageError(format!("model '{model}': {e}")))?;
    let _ = outs;
    Ok(cross_validate(
        kind,
        &cfg.hyperparams,
        &cfg.variant,
        data,
        &cfg.pipeline,
        &cfg.train,
        cfg.k_folds,
        cfg.seed,
    )?)
}

fn crossval(cfg: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let (data, _) = clean_and_encode(records(cfg, outs)?, cfg.pipeline.encoding)?;
    let cv = run_cv(cfg, &cfg.model, outs, &data)?;
    outs.json("crossval.json", &cv)?;
    cv_table(outs, "crossval.csv", &cv)
}

#[derive(Serialize)]
struct AblationRow {
    variant: String,
    model: String,
    params: usize,
    seeds: Vec<u64>,
    runs: Vec<MetricsReport>,
    mean: Vec<f64>,
}

fn ablate(cfg: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let recs = records(cfg, outs)?;
    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let splits = seeds
        .iter()
        .map(|&s| prepare(recs.clone(), &cfg.pipeline, s))
        .collect::<kacq::Result<Vec<_>>>()?;
    let mut table = Vec::new();
    for (name, kind, variant) in ablations() {
        let mut runs = Vec::new();
        let mut params = 0;
        for (p, &s) in splits.iter().zip(&seeds) {
            let (m, _) = train_model(kind, &cfg.hyperparams, &variant, &cfg.train, p, s)?;
            params = m.param_count();
            runs.push(evaluate(&m, &p.test, TAU)?);
        }
        let mean = (0..MetricsReport::COLUMNS.len())
            .map(|j| runs.iter().map(|r| r.values()[j]).sum::<f64>() / runs.len() as f64)
            .collect();
        eprintln!("{name}: done");
        table.push(AblationRow {
            variant: name.into(),
            model: kind.to_string(),
            params,
            seeds: seeds.clone(),
            runs,
            mean,
        });
    }
    outs.json("ablation.json", &table)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            [r.variant.clone(), r.params.to_string()]
                .into_iter()
                .chain(r.mean.iter().map(|v| fmt(*v)))
                .collect()
        })
        .collect();
    outs.csv("ablation.csv", &metric_header(&["variant", "params"]), &rows)
}

#[derive(Serialize)]
struct VqcRow {
    ansatz: String,
    layers: usize,
    params: usize,
    final_train_loss: f64,
    report: MetricsReport,
}

fn benchmark_vqc(cfg: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let p = prepared(cfg, outs)?;
    let tc = TrainConfig {
        loss: Loss::Square,
        grid_update_every: 0,
        ..cfg.train.clone()
    };
    let mut table = Vec::new();
    for ansatz in [AnsatzKind::Mera, AnsatzKind::Mps, AnsatzKind::Ttn] {
        for layers in 1..=4 {
            let hp = Hyperparams {
                quantum_layers: layers,
                ..cfg.hyperparams.clone()
            };
            let (m, h) = train_model(ModelKind::Vqc(ansatz), &hp, &cfg.variant, &tc, &p, cfg.seed)?;
            let scores = predict_scores(&m, &p.test)?;
            if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                bail!("{ansatz} produced an invalid probability {s}");
            }
            table.push(VqcRow {
                ansatz: ansatz.to_string(),
                layers,
                params: m.param_count(),
                final_train_loss: h.epochs.last().map_or(f64::NAN, |e| e.train_loss),
                report: MetricsReport::compute(&scores, &p.test.labels, TAU)?,
            });
        }
    }
    outs.json("vqc_benchmark.json", &table)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| metric_row(vec![r.ansatz.clone(), r.layers.to_string(), r.params.to_string()], &r.report))
        .collect();
    outs.csv("vqc_benchmark.csv", &metric_header(&["ansatz", "layers", "params"]), &rows)
}

fn conformal(cfg: &RunConfig, checkpoint: Option<&Path>, outs: &mut Outputs) -> Result<()> {
    let (model, p) = model_for(cfg, checkpoint, outs)?;
    let (cal_idx, test_idx) = stratified_indices(&p.test.labels, 0.5, cfg.seed ^ CONFORMAL_SPLIT_STREAM)?;
    let (cal, test) = (p.test.select(&cal_idx), p.test.select(&test_idx));
    let cal_probs = two_class(&predict_scores(&model, &cal)?);
    let test_probs = two_class(&predict_scores(&model, &test)?);
    let mut reports = Vec::new();
    let mut hist_rows = Vec::new();
    for mode in [CalibrationMode::Standard, CalibrationMode::Mondrian] {
        reports.extend(conformal_table(&cal_probs, &cal.labels, &test_probs, &test.labels, &cfg.alphas, mode)?);
        let c = calibrate(&cal_probs, &cal.labels, mode)?;
        for (lo, hi, n) in score_histogram(&c, 20) {
            hist_rows.push(vec![format!("{mode:?}").to_lowercase(), fmt(lo), fmt(hi), n.to_string()]);
        }
    }
    outs.json("conformal.json", &reports)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                format!("{:?}", r.mode).to_lowercase(),
                fmt(r.alpha),
                r.q_hat.iter().map(|q| fmt(*q)).collect::<Vec<_>>().join(";"),
                fmt(r.error_rate),
                fmt(r.avg_set_size),
                fmt(r.singleton_fraction),
                r.empty_count.to_string(),
            ]
        })
        .collect();
    let header = ["mode", "alpha", "q_hat", "error_rate", "avg_set_size", "singleton_fraction", "empty"];
    outs.csv("conformal.csv", &header.map(String::from), &rows)?;
    outs.csv(
        "conformal_scores.csv",
        &["mode", "lower", "upper", "count"].map(String::from),
        &hist_rows,
    )
}

#[derive(Serialize)]
struct Explanation {
    instance: usize,
    features: Vec<String>,
    x: Vec<f64>,
    shapley: kacq::explain::Attribution,
    lime: kacq::explain::LocalSurrogate,
}

fn explain(cfg: &RunConfig, checkpoint: Option<&Path>, outs: &mut Outputs) -> Result<()> {
    let (model, p) = model_for(cfg, checkpoint, outs)?;
    let bg_n = cfg.explain.background.min(p.train.n_rows());
    let background: Vec<Vec<f64>> = p.train.values[..bg_n].to_vec();
    let n = cfg.explain.instances.min(p.test.n_rows());
    let lime_cfg = LimeConfig {
        n_samples: cfg.explain.lime_samples,
        seed: cfg.seed,
        ..LimeConfig::default()
    };
    let mut out = Vec::new();
    for i in 0..n {
        let x = &p.test.values[i];
        let shapley = if x.len() <= 16 {
            shapley_exact(&model, x, &background)?
        } else {
            shapley_sampled(&model, x, &background, cfg.explain.shapley_permutations, cfg.seed.wrapping_add(i as u64))?
        };
        let lime = lime_explain(&model, x, &p.train, &lime_cfg)?;
        out.push(Explanation {
            instance: i,
            features: p.test.column_names.clone(),
            x: x.clone(),
            shapley,
            lime,
        });
    }
    outs.json("explanations.json", &out)?;
    let header: Vec<String> = ["instance", "method", "base", "fx"]
        .iter()
        .map(|s| s.to_string())
        .chain(p.test.column_names.iter().cloned())
        .collect();
    let mut rows = Vec::new();
    for e in &out {
        rows.push(
            [e.instance.to_string(), "shapley".into(), fmt(e.shapley.base), fmt(e.shapley.fx)]
                .into_iter()
                .chain(e.shapley.phi.iter().map(|v| fmt(*v)))
                .collect(),
        );
        rows.push(
            [e.instance.to_string(), "lime".into(), fmt(e.lime.intercept), fmt(e.lime.r2)]
                .into_iter()
                .chain(e.lime.weights.iter().map(|v| fmt(*v)))
                .collect(),
        );
    }
    outs.csv("explanations.csv", &header, &rows)
}

#[derive(Serialize)]
struct TtestRow {
    reference: String,
    model: String,
    metric: String,
    t: f64,
    df: usize,
    p: f64,
    cohens_d: f64,
    mean_diff: f64,
    corrected_level: f64,
    significant: bool,
}

fn read_score_table(path: &Path, outs: &mut Outputs) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let bytes = std::fs::read(path).map_err(|e| UsageError(format!("cannot read --scores {}: {e}", path.display())))?;
    outs.input(path, &bytes);
    let text = String::from_utf8(bytes).context("scores file is not UTF-8")?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let names: Vec<String> = lines
        .next()
        .context("scores file is empty")?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); names.len()];
    for (i, line) in lines.enumerate() {
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != names.len() {
            bail!("scores row {} has {} values for {} models", i + 2, vals.len(), names.len());
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v.trim().parse::<f64>().with_context(|| format!("scores row {}: '{v}'", i + 2))?);
        }
    }
    Ok((names, cols))
}

fn ttest(
    cfg: &RunConfig,
    models: Option<&[String]>,
    scores: Option<&Path>,
    metric: &str,
    level: f64,
    outs: &mut Outputs,
) -> Result<()> {
    let (names, cols) = match (models, scores) {
        (_, Some(path)) => read_score_table(path, outs)?,
        (Some(models), None) => {
            if !MetricsReport::COLUMNS.contains(&metric) {
                bail!(UsageError(format!(
                    "unknown metric '{metric}'; choose one of {}",
                    MetricsReport::COLUMNS.join(", ")
                )));
            }
            let (data, _) = clean_and_encode(records(cfg, outs)?, cfg.pipeline.encoding)?;
            let mut cols = Vec::new();
            for m in models {
                let cv = run_cv(cfg, m, outs, &data)?;
                cols.push(cv.metric(metric).expect("metric checked above"));
            }
            (models.to_vec(), cols)
        }
        (None, None) => bail!(UsageError("ttest needs --models a,b,... or --scores <csv>".into())),
    };
    if names.len() < 2 {
        bail!(UsageError("ttest needs at least two models".into()));
    }
    let corrected = bonferroni(level, names.len() - 1);
    let mut rows = Vec::new();
    for (name, col) in names.iter().zip(&cols).skip(1) {
        let t = paired_t_test(&cols[0], col).with_context(|| format!("{} vs {name}", names[0]))?;
        rows.push(TtestRow {
            reference: names[0].clone(),
            model: name.clone(),
            metric: metric.into(),
            t: t.t,
            df: t.df,
            p: t.p,
            cohens_d: t.cohens_d,
            mean_diff: t.mean_diff,
            corrected_level: corrected,
            significant: t.p < corrected,
        });
    }
    outs.json("ttest.json", &rows)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.reference.clone(),
                r.model.clone(),
                fmt(r.t),
                r.df.to_string(),
                fmt(r.p),
                fmt(r.cohens_d),
                fmt(r.mean_diff),
                fmt(r.corrected_level),
                r.significant.to_string(),
            ]
        })
        .collect();
    let header = ["reference", "model", "t", "df", "p", "cohens_d", "mean_diff", "corrected_level", "significant"];
    outs.csv("ttest.csv", &header.map(String::from), &table)?;
    let fold_rows: Vec<Vec<String>> = (0..cols[0].len())
        .map(|i| cols.iter().map(|c| c.get(i).map_or(String::new(), |v| fmt(*v))).collect())
        .collect();
    outs.csv("ttest_folds.csv", &names, &fold_rows)
}
