//! Acceptance criteria 1 to 11. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 4, 5 and the heart-data half of 8 need the 918-row heart CSV
//! (`KACQ_HEART_CSV` or `data/heart.csv` at the workspace root). Without it
//! they report FAIL and do not fail the process; every other FAIL does.

use std::path::PathBuf;
use std::time::Instant;

use kacq::conformal::{calibrate, predict_sets, threshold, two_class, CalibrationMode, PredictionSet};
use kacq::dataset::{load_records, prepare, stratified_indices, synthetic_heart, ColumnKind, FeatureMatrix, PipelineConfig};
use kacq::explain::{lime_explain, shapley_exact, shapley_sampled, LimeConfig};
use kacq::kan::{Conv1dKan, KanEdges, SplineGrid};
use kacq::metrics::{confusion, kappa, macro_scores, mcc, paired_t_test, roc_auc, ConfusionMatrix};
use kacq::models::{save_checkpoint, Hyperparams, Layer, Mode, Model, ModelKind, QuantumSplit, Variant};
use kacq::qsim::{AnsatzKind, Gate, Mat2, QuantumBlock, Statevector};
use kacq::recurrent::BiLstm;
use kacq::tensor::{Activation, Tensor};
use kacq::train::{evaluate, fit, predict_scores, Loss, TrainConfig};
use kacq::RngStream;
use num_complex::Complex64;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Needs data that is not present.
    Unavailable(String),
}

type Check = Result<Outcome, String>;

fn pass(s: impl Into<String>) -> Check {
    Ok(Outcome::Pass(s.into()))
}

fn fail(s: impl Into<String>) -> Check {
    Ok(Outcome::Fail(s.into()))
}

fn heart_csv() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("KACQ_HEART_CSV") {
        let p = PathBuf::from(p);
        return p.is_file().then_some(p);
    }
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/heart.csv");
    p.is_file().then_some(p)
}

fn unavailable() -> Check {
    Ok(Outcome::Unavailable(
        "918-row heart CSV not found (set KACQ_HEART_CSV or add data/heart.csv); not evaluated".into(),
    ))
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

// ---------------------------------------------------------------- 1

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn unitarity(m: &Mat2) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let s: Complex64 = (0..2).map(|k| m[k][i].conj() * m[k][j]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - c(want, 0.0)).norm());
        }
    }
    worst
}

fn basis(n: usize, k: usize) -> Statevector {
    let mut a = vec![c(0.0, 0.0); 1 << n];
    a[k] = c(1.0, 0.0);
    Statevector::from_amplitudes(n, a).unwrap()
}

fn criterion_1() -> Check {
    let t0 = Instant::now();
    let mut rng = RngStream::new(1, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b, d) = (rng.uniform(-7.0, 7.0), rng.uniform(-7.0, 7.0), rng.uniform(-7.0, 7.0));
        for g in [
            Gate::Ry { wire: 0, theta: a },
            Gate::Rz { wire: 0, phi: b },
            Gate::U3 { wire: 0, theta: a, phi: b, lambda: d },
        ] {
            worst = worst.max(unitarity(&g.matrix().unwrap()));
        }
    }
    if worst >= 1e-12 {
        return fail(format!("unitarity defect {worst:e}"));
    }
    // CNOT truth table, control 0 (most significant) and target 1
    for (input, output) in [(0b00, 0b00), (0b01, 0b01), (0b10, 0b11), (0b11, 0b10)] {
        let mut s = basis(2, input);
        s.apply(&Gate::Cnot { control: 0, target: 1 }).map_err(e)?;
        if s.amplitudes() != basis(2, output).amplitudes() {
            return fail(format!("CNOT |{input:02b}⟩"));
        }
    }
    // identities
    for g in [Gate::Ry { wire: 0, theta: 0.0 }, Gate::U3 { wire: 0, theta: 0.0, phi: 0.0, lambda: 0.0 }] {
        for k in 0..2 {
            let mut s = basis(1, k);
            s.apply(&g).map_err(e)?;
            if s.amplitudes() != basis(1, k).amplitudes() {
                return fail(format!("{} identity", g.name()));
            }
        }
    }
    // flips: RY(π)|0⟩ = |1⟩, U3(π, 0, π) = X up to cos(π/2) ≈ 6e-17
    for g in [Gate::Ry { wire: 0, theta: std::f64::consts::PI }, Gate::U3 { wire: 0, theta: std::f64::consts::PI, phi: 0.0, lambda: std::f64::consts::PI }] {
        let mut s = basis(1, 0);
        s.apply(&g).map_err(e)?;
        let a = s.amplitudes();
        if a[0].norm() > 1e-16 || (a[1] - c(1.0, 0.0)).norm() > 1e-16 {
            return fail(format!("{} flip gave {a:?}", g.name()));
        }
    }
    // ⟨Z⟩ against the 16-term enumeration
    let mut zerr: f64 = 0.0;
    for _ in 0..200 {
        let raw: Vec<Complex64> = (0..16).map(|_| c(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0))).collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let amps: Vec<Complex64> = raw.iter().map(|z| z / norm).collect();
        let s = Statevector::from_amplitudes(4, amps.clone()).map_err(e)?;
        for w in 0..4 {
            let oracle: f64 = (0..16)
                .map(|i| {
                    let bit = (i >> (3 - w)) & 1;
                    amps[i].norm_sqr() * if bit == 0 { 1.0 } else { -1.0 }
                })
                .sum();
            zerr = zerr.max((s.expval_z(w).map_err(e)? - oracle).abs());
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    if zerr >= 1e-12 {
        return fail(format!("⟨Z⟩ error {zerr:e}"));
    }
    if dt >= 1.0 {
        return fail(format!("took {dt:.2} s"));
    }
    pass(format!("unitarity {worst:.1e}, ⟨Z⟩ error {zerr:.1e}, {dt:.3} s"))
}

// ---------------------------------------------------------------- 2

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / n.max(1e-8)
}

fn rand_tensor(rng: &mut RngStream, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

/// Worst relative error of input and parameter gradients of `Σ w·y`.
fn check_layer(layer: &mut Layer, x: &Tensor, seed: u64) -> Result<f64, String> {
    const EPS: f64 = 1e-6;
    let run = |l: &Layer, x: &Tensor| -> Result<(Tensor, Option<kacq::models::LayerCache>), String> {
        let mut r = RngStream::new(seed, 0);
        l.forward(x.clone(), &mut Mode::Train(&mut r)).map_err(e)
    };
    let (y, cache) = run(layer, x)?;
    let mut wr = RngStream::new(seed, 1);
    let w: Vec<f64> = (0..y.len()).map(|_| wr.uniform(-1.0, 1.0)).collect();
    let loss = |y: &Tensor| y.data().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let gout = Tensor::new(y.shape().to_vec(), w.clone()).unwrap();
    let (gx, gp) = layer.backward(cache.as_ref().unwrap(), gout).map_err(e)?;
    let mut worst: f64 = 0.0;
    let mut fd = vec![0.0; x.len()];
    let mut xp = x.clone();
    for i in 0..x.len() {
        let v = x.data()[i];
        xp.data_mut()[i] = v + EPS;
        let a = loss(&run(layer, &xp)?.0);
        xp.data_mut()[i] = v - EPS;
        let b = loss(&run(layer, &xp)?.0);
        xp.data_mut()[i] = v;
        fd[i] = (a - b) / (2.0 * EPS);
    }
    worst = worst.max(rel_err(gx.data(), &fd));
    for (k, g) in gp.iter().enumerate() {
        let mut fd = vec![0.0; g.len()];
        for (j, slot) in fd.iter_mut().enumerate() {
            let v = layer.params()[k].data()[j];
            layer.params_mut()[k].data_mut()[j] = v + EPS;
            let a = loss(&run(layer, x)?.0);
            layer.params_mut()[k].data_mut()[j] = v - EPS;
            let b = loss(&run(layer, x)?.0);
            layer.params_mut()[k].data_mut()[j] = v;
            *slot = (a - b) / (2.0 * EPS);
        }
        worst = worst.max(rel_err(g.data(), &fd));
    }
    Ok(worst)
}

fn check_model(model: &mut Model, x: &Tensor, seed: u64) -> Result<f64, String> {
    const EPS: f64 = 1e-6;
    let run = |m: &Model| -> Result<(Tensor, kacq::models::ForwardCache), String> {
        let mut r = RngStream::new(seed, 0);
        let (p, c) = m.forward(x, Mode::Train(&mut r)).map_err(e)?;
        Ok((p, c.unwrap()))
    };
    let (p, cache) = run(model)?;
    let mut wr = RngStream::new(seed, 1);
    let w: Vec<f64> = (0..p.len()).map(|_| wr.uniform(-1.0, 1.0)).collect();
    let loss = |y: &Tensor| y.data().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let grads = model.backward(&cache, &Tensor::new(p.shape().to_vec(), w.clone()).unwrap()).map_err(e)?;
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        let mut fd = vec![0.0; g.len()];
        for (j, slot) in fd.iter_mut().enumerate() {
            let v = model.params()[k].data()[j];
            model.params_mut()[k].data_mut()[j] = v + EPS;
            let a = loss(&run(model)?.0);
            model.params_mut()[k].data_mut()[j] = v - EPS;
            let b = loss(&run(model)?.0);
            model.params_mut()[k].data_mut()[j] = v;
            *slot = (a - b) / (2.0 * EPS);
        }
        worst = worst.max(rel_err(g.data(), &fd));
    }
    Ok(worst)
}

fn criterion_2() -> Check {
    let t0 = Instant::now();
    let mut rng = RngStream::new(2, 2);
    let acts = [Activation::Identity, Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Silu];
    let mut worst = std::collections::BTreeMap::<&str, f64>::new();
    let mut configs = 0;
    let mut note = |name: &'static str, v: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(v);
    };
    for cfg in 0..20u64 {
        let seed = 100 + cfg;
        let b = 1 + rng.below(3);
        // dense
        let (i, o) = (1 + rng.below(6), 1 + rng.below(5));
        let mut l = Layer::dense(i, o, acts[rng.below(acts.len())]);
        l.init(&mut RngStream::new(seed, 9));
        let x = rand_tensor(&mut rng, &[b, i], -1.3, 1.3);
        note("dense", check_layer(&mut l, &x, seed)?);
        // dense KAN, inputs partly outside the grid
        let (i, o) = (1 + rng.below(4), 1 + rng.below(4));
        let grid = SplineGrid::new(-1.0, 1.0, 2 + rng.below(5), 1 + rng.below(3));
        let mut l = Layer::dense_kan(i, o, grid);
        l.init(&mut RngStream::new(seed, 9));
        let x = rand_tensor(&mut rng, &[b, i], -1.5, 1.5);
        note("densekan", check_layer(&mut l, &x, seed)?);
        // conv1d KAN
        let (ch, f, k, s) = (1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(2));
        let len = k + rng.below(4);
        let mut l = Layer::Conv1dKan(Conv1dKan::new(ch, f, k, s, SplineGrid::new(-1.0, 1.0, 3, 3)));
        l.init(&mut RngStream::new(seed, 9));
        let x = rand_tensor(&mut rng, &[b, len, ch], -1.2, 1.2);
        note("conv1dkan", check_layer(&mut l, &x, seed)?);
        // (bi)LSTM
        let (u, i, t) = (1 + rng.below(4), 1 + rng.below(3), 1 + rng.below(4));
        let mut l = Layer::Recurrent(BiLstm::new(u, i, rng.bernoulli(0.7)));
        l.init(&mut RngStream::new(seed, 9));
        let x = rand_tensor(&mut rng, &[b, t, i], -1.0, 1.0);
        note("bilstm", check_layer(&mut l, &x, seed)?);
        // quantum block inside a layer (input VJP and weights)
        let (n, layers, parts) = (1 + rng.below(3), 1 + rng.below(2), 1 + rng.below(2));
        let block = QuantumBlock::new(n, layers);
        let mut l = Layer::Quantum(QuantumSplit::new(block, parts));
        l.init(&mut RngStream::new(seed, 9));
        let x = rand_tensor(&mut rng, &[b, parts * block.input_width()], 0.1, 1.0);
        note("quantum_layer", check_layer(&mut l, &x, seed)?);
        // parameter shift alone, tighter bound
        let inputs: Vec<f64> = (0..block.input_width()).map(|_| rng.uniform(0.1, 1.0)).collect();
        let weights: Vec<f64> = (0..block.weight_count()).map(|_| rng.uniform(0.0, 6.28)).collect();
        let ps = block.parameter_shift_gradient(&inputs, &weights).map_err(e)?;
        let np = weights.len();
        let mut fd = vec![0.0; n * np];
        let h = 1e-5;
        let mut wp = weights.clone();
        for k in 0..np {
            wp[k] = weights[k] + h;
            let a = block.run(&inputs, &wp).map_err(e)?;
            wp[k] = weights[k] - h;
            let bb = block.run(&inputs, &wp).map_err(e)?;
            wp[k] = weights[k];
            for w in 0..n {
                fd[w * np + k] = (a[w] - bb[w]) / (2.0 * h);
            }
        }
        note("parameter_shift", rel_err(ps.data(), &fd));
        configs += 6;
    }
    for cfg in 0..5u64 {
        let seed = 500 + cfg;
        let variant = Variant {
            bidirectional: cfg % 2 == 0,
            ..Variant::default()
        };
        let mut m = Model::build(ModelKind::KacqDcnn, &Hyperparams::tiny(), &variant, 4, seed).map_err(e)?;
        let x = rand_tensor(&mut rng, &[2, 4, 1], 0.05, 1.0);
        note("kacq_dcnn", check_model(&mut m, &x, seed)?);
        configs += 1;
    }
    let dt = t0.elapsed().as_secs_f64();
    let summary = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    let bad = worst
        .iter()
        .any(|(k, v)| *v >= if *k == "parameter_shift" { 1e-7 } else { 1e-5 });
    if bad || configs < 100 || dt >= 120.0 {
        return fail(format!("{configs} configurations, {dt:.1} s: {summary}"));
    }
    pass(format!("{configs} configurations in {dt:.1} s: {summary}"))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Check {
    let mut rng = RngStream::new(3, 3);
    let mut pu: f64 = 0.0;
    for k in 1..=3 {
        let g = SplineGrid::new(-1.0, 1.0, 5, k);
        for _ in 0..1000 {
            let x = rng.uniform(-1.0, 1.0);
            pu = pu.max((g.basis(x).iter().sum::<f64>() - 1.0).abs());
        }
    }
    if pu >= 1e-10 {
        return fail(format!("partition of unity off by {pu:e}"));
    }
    let mut worst_rms: f64 = 0.0;
    for trial in 0..10u64 {
        let (i, o) = (2, 3);
        let mut edges = KanEdges::zeros(i, o, SplineGrid::new(-1.0, 1.0, 3, 3));
        edges.init(&mut RngStream::new(trial, 1), 0.1);
        let probe: Vec<f64> = (0..400).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (before, _) = edges.forward(&probe, false).map_err(e)?;
        let acts: Vec<f64> = (0..50).map(|_| rng.uniform(-2.5, 3.0)).collect();
        if !edges.grid_update(&acts).map_err(e)? {
            return fail("grid update did not extend the domain");
        }
        let (after, _) = edges.forward(&probe, false).map_err(e)?;
        let rms = (before.iter().zip(&after).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / before.len() as f64).sqrt();
        worst_rms = worst_rms.max(rms);
    }
    if worst_rms >= 1e-6 {
        return fail(format!("grid update changed edge functions by RMS {worst_rms:e}"));
    }
    pass(format!("partition of unity {pu:.1e}, grid-update RMS {worst_rms:.1e}"))
}

// ---------------------------------------------------------------- 4, 5

fn heart_prepared(path: &PathBuf, seed: u64) -> Result<kacq::dataset::Prepared, String> {
    let cfg = PipelineConfig::default();
    prepare(load_records(path, cfg.load).map_err(e)?, &cfg, seed).map_err(e)
}

fn train_eval(kind: ModelKind, p: &kacq::dataset::Prepared, seed: u64) -> Result<kacq::metrics::MetricsReport, String> {
    let m = Model::build(kind, &Hyperparams::default(), &Variant::default(), p.train.n_cols(), seed).map_err(e)?;
    let (best, _) = fit(m, &p.train, None, &TrainConfig { seed, ..TrainConfig::default() }).map_err(e)?;
    evaluate(&best, &p.test, 0.5).map_err(e)
}

fn criterion_4() -> Check {
    let Some(path) = heart_csv() else { return unavailable() };
    let t0 = Instant::now();
    let p = heart_prepared(&path, 42)?;
    if p.manifest.rows_unique != 918 {
        return fail(format!("{} unique rows, expected 918", p.manifest.rows_unique));
    }
    let r = train_eval(ModelKind::KacqDcnn, &p, 42)?;
    let dt = t0.elapsed().as_secs_f64() / 60.0;
    let msg = format!("accuracy {:.4}, ROC-AUC {:.4}, {dt:.1} min", r.accuracy, r.roc_auc);
    if r.accuracy >= 0.85 && r.roc_auc >= 0.90 && dt <= 30.0 {
        pass(msg)
    } else {
        fail(msg)
    }
}

fn criterion_5() -> Check {
    let Some(path) = heart_csv() else { return unavailable() };
    let (mut kan, mut mlp) = (0.0, 0.0);
    for seed in 0..3u64 {
        let p = heart_prepared(&path, seed)?;
        kan += train_eval(ModelKind::KacqDcnn, &p, seed)?.accuracy / 3.0;
        mlp += train_eval(ModelKind::KacqMlp, &p, seed)?.accuracy / 3.0;
    }
    let msg = format!("KAN {kan:.4} vs MLP {mlp:.4}");
    if mlp - kan > 0.01 {
        fail(msg)
    } else {
        pass(msg)
    }
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Check {
    let mut rng = RngStream::new(6, 6);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let cm = ConfusionMatrix {
            tp: rng.below(60) as u64,
            fp: rng.below(60) as u64,
            fn_: rng.below(60) as u64,
            tn: rng.below(60) as u64,
        };
        let mut labels = Vec::new();
        let mut preds = Vec::new();
        for (y, p, n) in [(1u8, 1u8, cm.tp), (0, 1, cm.fp), (1, 0, cm.fn_), (0, 0, cm.tn)] {
            for _ in 0..n {
                labels.push(y);
                preds.push(p);
            }
        }
        if confusion(&labels, &preds).map_err(e)? != cm {
            return fail("confusion counts");
        }
        // brute force from the label vectors
        let count = |y: u8, p: u8| labels.iter().zip(&preds).filter(|(a, b)| **a == y && **b == p).count() as f64;
        let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        let mut prec = [0.0; 2];
        let mut rec = [0.0; 2];
        let mut f1 = [0.0; 2];
        for k in 0..2u8 {
            let tpk = count(k, k);
            let predicted_k = count(0, k) + count(1, k);
            let actual_k = count(k, 0) + count(k, 1);
            prec[k as usize] = div(tpk, predicted_k);
            rec[k as usize] = div(tpk, actual_k);
            f1[k as usize] = div(2.0 * prec[k as usize] * rec[k as usize], prec[k as usize] + rec[k as usize]);
        }
        let n = labels.len() as f64;
        let acc = div(count(0, 0) + count(1, 1), n);
        let (tp, fp, fn_, tn) = (count(1, 1), count(0, 1), count(1, 0), count(0, 0));
        let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        let mcc_o = div(tp * tn - fp * fn_, mcc_den);
        let po = acc;
        let pe = if n == 0.0 { 0.0 } else { ((tp + fp) / n) * ((tp + fn_) / n) + ((tn + fn_) / n) * ((tn + fp) / n) };
        let kappa_o = if n == 0.0 || pe == 1.0 { 0.0 } else { (po - pe) / (1.0 - pe) };
        let m = macro_scores(&cm);
        let got = [m.ma_p, m.ma_r, m.ma_f1, m.accuracy, mcc(&cm), kappa(&cm)];
        let want = [
            (prec[0] + prec[1]) / 2.0,
            (rec[0] + rec[1]) / 2.0,
            (f1[0] + f1[1]) / 2.0,
            acc,
            mcc_o,
            kappa_o,
        ];
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    if worst > 1e-12 {
        return fail(format!("metric disagreement {worst:e}"));
    }
    let mut auc_worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 2 + rng.below(80);
        let scores: Vec<f64> = (0..n).map(|_| (rng.uniform01() * 20.0).floor() / 20.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        labels[0] = 0;
        labels[1] = 1;
        let mut wins = 0.0;
        let (mut np, mut nn) = (0.0, 0.0);
        for i in 0..n {
            if labels[i] == 1 {
                np += 1.0;
            } else {
                nn += 1.0;
            }
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        auc_worst = auc_worst.max((roc_auc(&scores, &labels).map_err(e)? - wins / (np * nn)).abs());
    }
    if auc_worst >= 1e-12 {
        return fail(format!("ROC-AUC disagreement {auc_worst:e}"));
    }
    pass(format!("1000 confusion matrices (max diff {worst:.1e}), 200 AUC sets (max diff {auc_worst:.1e})"))
}

// ---------------------------------------------------------------- 7

/// `P(|T| < t)` for integer df by the closed-form trigonometric series.
fn t_central_mass(t: f64, df: usize) -> f64 {
    let th = (t.abs() / (df as f64).sqrt()).atan();
    let (s, co) = th.sin_cos();
    if df % 2 == 1 {
        let mut term = 1.0;
        let mut sum = if df >= 3 { 1.0 } else { 0.0 };
        let mut k = 1;
        while 2 * k < df - 1 {
            term *= (2 * k) as f64 / (2 * k + 1) as f64 * co * co;
            sum += term;
            k += 1;
        }
        2.0 / std::f64::consts::PI * (th + s * co * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while 2 * k < df {
            term *= (2 * k - 1) as f64 / (2 * k) as f64 * co * co;
            sum += term;
            k += 1;
        }
        s * sum
    }
}

fn criterion_7() -> Check {
    let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (
            vec![0.9203, 0.9185, 0.9221, 0.9199, 0.9230, 0.9178, 0.9210, 0.9195, 0.9225, 0.9187],
            vec![0.9001, 0.8954, 0.9032, 0.8987, 0.9013, 0.8976, 0.9020, 0.8990, 0.9008, 0.8969],
        ),
        (vec![1.0, 2.5, 3.1, 4.8, 5.0], vec![1.2, 2.0, 3.0, 4.0, 5.5]),
        (vec![0.1, 0.4, 0.35, 0.8], vec![0.12, 0.41, 0.30, 0.79]),
        (vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0], vec![2.7, 1.8, 2.8, 1.8, 2.8, 4.5, 9.0, 4.5]),
    ];
    let mut worst: f64 = 0.0;
    let mut df9 = false;
    for (a, b) in &cases {
        let k = a.len();
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / k as f64;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
        let t = mean / (sd / (k as f64).sqrt());
        let p = 1.0 - t_central_mass(t, k - 1);
        let r = paired_t_test(a, b).map_err(e)?;
        if r.df != k - 1 {
            return fail(format!("df {} for {k} pairs", r.df));
        }
        df9 |= k == 10 && r.df == 9;
        for (g, w) in [(r.t, t), (r.p, p), (r.cohens_d, mean / sd), (r.mean_diff, mean)] {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    if worst >= 1e-9 || !df9 {
        return fail(format!("worst deviation {worst:e}"));
    }
    pass(format!("t, df, d, p within {worst:.1e}; 10 folds give df = 9"))
}

// ---------------------------------------------------------------- 8

fn coverage(sets: &[PredictionSet], labels: &[u8]) -> usize {
    sets.iter().zip(labels).filter(|(s, y)| s.contains(**y)).count()
}

fn synthetic_scores(rng: &mut RngStream, n: usize) -> (Vec<[f64; 2]>, Vec<u8>) {
    let mut probs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let p = rng.uniform01();
        labels.push(u8::from(rng.bernoulli(0.1 + 0.8 * p)));
        probs.push([1.0 - p, p]);
    }
    (probs, labels)
}

fn criterion_8() -> Check {
    const ALPHAS: [f64; 3] = [0.05, 0.1, 0.2];
    const N: usize = 500;
    const SEEDS: u64 = 200;
    let mut lines = Vec::new();
    let mut ok = true;
    for mode in [CalibrationMode::Standard, CalibrationMode::Mondrian] {
        let mut covered = [0usize; 3];
        let mut min_cov = [1.0f64; 3];
        for seed in 0..SEEDS {
            let mut rng = RngStream::new(seed, 8);
            let (cp, cl) = synthetic_scores(&mut rng, N);
            let (tp, tl) = synthetic_scores(&mut rng, N);
            let cal = calibrate(&cp, &cl, mode).map_err(e)?;
            let mut prev: Option<Vec<PredictionSet>> = None;
            for (i, &a) in ALPHAS.iter().enumerate() {
                let sets = predict_sets(&tp, &threshold(&cal, a).map_err(e)?).map_err(e)?;
                let cov = coverage(&sets, &tl);
                covered[i] += cov;
                min_cov[i] = min_cov[i].min(cov as f64 / N as f64);
                if let Some(p) = &prev {
                    if !sets.iter().zip(p).all(|(s, q)| s.is_subset_of(q)) {
                        return fail(format!("{mode:?} sets not nested at α = {a}"));
                    }
                }
                prev = Some(sets);
            }
        }
        for (i, &a) in ALPHAS.iter().enumerate() {
            let cov = covered[i] as f64 / (SEEDS as usize * N) as f64;
            // calibration draw and test draw both contribute per seed
            let var = a * (1.0 - a) * (1.0 / (N + 2) as f64 + 1.0 / N as f64) / SEEDS as f64;
            let eps = 2.326 * var.sqrt();
            ok &= cov >= 1.0 - a - eps;
            lines.push(format!("{mode:?} α={a}: {cov:.4} (min seed {:.3})", min_cov[i]).to_lowercase());
        }
    }
    if !ok {
        return fail(lines.join("; "));
    }
    let synthetic = format!("synthetic coverage holds and sets nest; {}", lines.join("; "));
    let Some(path) = heart_csv() else {
        return Ok(Outcome::Unavailable(format!("{synthetic}; heart-data band not evaluated (CSV not found)")));
    };
    let p = heart_prepared(&path, 42)?;
    let m = Model::build(ModelKind::KacqDcnn, &Hyperparams::default(), &Variant::default(), p.train.n_cols(), 42).map_err(e)?;
    let (best, _) = fit(m, &p.train, None, &TrainConfig { seed: 42, ..TrainConfig::default() }).map_err(e)?;
    let (ci, ti) = stratified_indices(&p.test.labels, 0.5, 42 ^ 0xCA11).map_err(e)?;
    let (cal, test) = (p.test.select(&ci), p.test.select(&ti));
    let cp = two_class(&predict_scores(&best, &cal).map_err(e)?);
    let tp = two_class(&predict_scores(&best, &test).map_err(e)?);
    let mut parts = Vec::new();
    let mut in_band = true;
    for (mode, err_ref, size_ref) in [(CalibrationMode::Standard, 0.075, 1.62), (CalibrationMode::Mondrian, 0.065, 1.53)] {
        let q = threshold(&calibrate(&cp, &cal.labels, mode).map_err(e)?, 0.1).map_err(e)?;
        let sets = predict_sets(&tp, &q).map_err(e)?;
        let err = 1.0 - coverage(&sets, &test.labels) as f64 / test.n_rows() as f64;
        let size = sets.iter().map(|s| s.size()).sum::<usize>() as f64 / sets.len() as f64;
        in_band &= (err - err_ref).abs() <= 0.05 && (size - size_ref).abs() <= 0.25;
        parts.push(format!("{mode:?} error {err:.3} size {size:.2}"));
    }
    let msg = format!("{synthetic}; heart α=0.1: {}", parts.join(", "));
    if in_band {
        pass(msg)
    } else {
        fail(msg)
    }
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Check {
    let mut rng = RngStream::new(9, 9);
    // efficiency on a real network
    let model = Model::build(ModelKind::KacqDcnn, &Hyperparams::tiny(), &Variant::default(), 8, 9).map_err(e)?;
    let background: Vec<Vec<f64>> = (0..30).map(|_| (0..8).map(|_| rng.uniform01()).collect()).collect();
    let mut eff: f64 = 0.0;
    for _ in 0..5 {
        let x: Vec<f64> = (0..8).map(|_| rng.uniform01()).collect();
        let a = shapley_exact(&model, &x, &background).map_err(e)?;
        eff = eff.max((a.phi.iter().sum::<f64>() - (a.fx - a.base)).abs());
    }
    if eff >= 1e-9 {
        return fail(format!("efficiency gap {eff:e}"));
    }
    // linear closed form
    let w = [0.7, -1.3, 0.2, 2.1, -0.4, 0.9];
    let linear = |rows: &[Vec<f64>]| -> kacq::Result<Vec<f64>> {
        Ok(rows.iter().map(|r| 0.3 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).collect())
    };
    let bg6: Vec<Vec<f64>> = (0..40).map(|_| (0..6).map(|_| rng.uniform01()).collect()).collect();
    let mean: Vec<f64> = (0..6).map(|j| bg6.iter().map(|r| r[j]).sum::<f64>() / 40.0).collect();
    let x6: Vec<f64> = (0..6).map(|_| rng.uniform01()).collect();
    let a = shapley_exact(&linear, &x6, &bg6).map_err(e)?;
    let lin = (0..6).map(|j| (a.phi[j] - w[j] * (x6[j] - mean[j])).abs()).fold(0.0, f64::max);
    if lin > 1e-12 {
        return fail(format!("linear closed form off by {lin:e}"));
    }
    // sampled vs exact on a 5-feature network
    let m5 = Model::build(ModelKind::BilstmKannet, &Hyperparams::tiny(), &Variant::default(), 5, 11).map_err(e)?;
    let bg5: Vec<Vec<f64>> = (0..30).map(|_| (0..5).map(|_| rng.uniform01()).collect()).collect();
    let x5: Vec<f64> = (0..5).map(|_| rng.uniform01()).collect();
    let exact = shapley_exact(&m5, &x5, &bg5).map_err(e)?;
    let sampled = shapley_sampled(&m5, &x5, &bg5, 2000, 5).map_err(e)?;
    let se = sampled.std_err.clone().unwrap_or_default();
    let worst_z = (0..5)
        .map(|j| (sampled.phi[j] - exact.phi[j]).abs() / se[j].max(1e-15))
        .fold(0.0, f64::max);
    if worst_z > 3.0 {
        return fail(format!("sampled estimate {worst_z:.2} SE from exact"));
    }
    // LIME on a linear model
    let train = FeatureMatrix::new(
        (0..200).map(|_| (0..6).map(|_| rng.uniform01()).collect()).collect(),
        (0..200).map(|i| (i % 2) as u8).collect(),
        (0..6).map(|j| format!("f{j}")).collect(),
        vec![ColumnKind::Continuous; 6],
    )
    .map_err(e)?;
    let s = lime_explain(&linear, &x6, &train, &LimeConfig { seed: 3, ..LimeConfig::default() }).map_err(e)?;
    let lime = (0..6).map(|j| (s.weights[j] - w[j]).abs() / w[j].abs()).fold(0.0, f64::max);
    if lime > 0.05 {
        return fail(format!("LIME weights off by {:.1}%", 100.0 * lime));
    }
    pass(format!(
        "efficiency {eff:.1e}, linear {lin:.1e}, sampled within {worst_z:.2} SE, LIME within {:.2}%",
        100.0 * lime
    ))
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Check {
    let t0 = Instant::now();
    let p = prepare(synthetic_heart(240, 10), &PipelineConfig::default(), 10).map_err(e)?;
    let hp = Hyperparams::default();
    let cfg = TrainConfig {
        max_epochs: 2,
        learning_rate: 0.05,
        loss: Loss::Square,
        grid_update_every: 0,
        seed: 10,
        ..TrainConfig::default()
    };
    let mut rows = 0;
    for ansatz in [AnsatzKind::Mera, AnsatzKind::Mps, AnsatzKind::Ttn] {
        for layers in 1..=4 {
            let hp = Hyperparams { quantum_layers: layers, ..hp.clone() };
            let m = Model::build(ModelKind::Vqc(ansatz), &hp, &Variant::default(), p.train.n_cols(), 10).map_err(e)?;
            let (best, _) = fit(m, &p.train, None, &cfg).map_err(e)?;
            let s = predict_scores(&best, &p.test).map_err(e)?;
            if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return fail(format!("{ansatz} L={layers} produced an invalid probability"));
            }
            evaluate(&best, &p.test, 0.5).map_err(e)?;
            rows += 1;
        }
    }
    // separable toy, full batch: first 10 losses never increase
    let mut rng = RngStream::new(10, 1);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for i in 0..48 {
        let y = (i % 2) as u8;
        let v: Vec<f64> = if y == 1 {
            vec![0.1 * rng.uniform01(), 0.1 * rng.uniform01(), 0.9 + 0.1 * rng.uniform01(), 0.9 + 0.1 * rng.uniform01()]
        } else {
            vec![0.9 + 0.1 * rng.uniform01(), 0.9 + 0.1 * rng.uniform01(), 0.1 * rng.uniform01(), 0.1 * rng.uniform01()]
        };
        values.push(v);
        labels.push(y);
    }
    let toy = FeatureMatrix::new(values, labels, (0..4).map(|j| format!("f{j}")).collect(), vec![ColumnKind::Continuous; 4]).map_err(e)?;
    let mut trend = Vec::new();
    for ansatz in [AnsatzKind::Mera, AnsatzKind::Mps, AnsatzKind::Ttn] {
        let hp = Hyperparams { n_qubits: 2, quantum_layers: 1, ..Hyperparams::default() };
        let m = Model::build(ModelKind::Vqc(ansatz), &hp, &Variant::default(), 4, 3).map_err(e)?;
        let cfg = TrainConfig {
            max_epochs: 10,
            batch_size: 1000,
            learning_rate: 0.01,
            loss: Loss::Square,
            grid_update_every: 0,
            lr_patience: 100,
            early_stop_patience: 100,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, h) = fit(m, &toy, Some(&toy), &cfg).map_err(e)?;
        let l = &h.step_losses[..10];
        if l.windows(2).any(|w| w[1] > w[0]) {
            return fail(format!("{ansatz} loss increased: {l:?}"));
        }
        trend.push(format!("{ansatz} {:.4}→{:.4}", l[0], l[9]));
    }
    pass(format!(
        "{rows}-row benchmark in {:.1} s; first 10 losses non-increasing ({})",
        t0.elapsed().as_secs_f64(),
        trend.join(", ")
    ))
}

// ---------------------------------------------------------------- 11

fn end_to_end(dir: &std::path::Path, threads: usize) -> Result<(String, Vec<u8>, Vec<u8>), String> {
    kacq::par::with_threads(threads, || {
        let p = prepare(synthetic_heart(300, 11), &PipelineConfig::default(), 11).map_err(e)?;
        let m = Model::build(ModelKind::KacqDcnn, &Hyperparams::tiny(), &Variant::default(), p.train.n_cols(), 11).map_err(e)?;
        let cfg = TrainConfig { max_epochs: 4, learning_rate: 0.01, seed: 11, ..TrainConfig::default() };
        let (best, h) = fit(m, &p.train, None, &cfg).map_err(e)?;
        let r = evaluate(&best, &p.test, 0.5).map_err(e)?;
        save_checkpoint(&best, Some(0.5), dir).map_err(e)?;
        let report = serde_json::to_string(&(r, &h, &p.manifest)).map_err(e)?;
        let w = std::fs::read(dir.join("weights.bin")).map_err(e)?;
        let m = std::fs::read(dir.join("manifest.json")).map_err(e)?;
        Ok((report, w, m))
    })
}

fn criterion_11() -> Check {
    let (a, b) = (tempfile::tempdir().map_err(e)?, tempfile::tempdir().map_err(e)?);
    let n = kacq::par::current_num_threads().max(2);
    let first = end_to_end(a.path(), 1)?;
    let second = end_to_end(b.path(), n)?;
    if first.0 != second.0 {
        return fail("reports differ");
    }
    if first.1 != second.1 || first.2 != second.2 {
        return fail("checkpoints differ");
    }
    pass(format!("report and checkpoint bitwise identical across runs (1 vs {n} threads)"))
}

fn main() {
    let criteria: [(usize, fn() -> Check); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut hard_failures = 0;
    for (n, f) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        match f() {
            Ok(Outcome::Pass(m)) => println!("criterion {n}: PASS: {m}"),
            Ok(Outcome::Unavailable(m)) => println!("criterion {n}: FAIL: {m}"),
            Ok(Outcome::Fail(m)) => {
                hard_failures += 1;
                println!("criterion {n}: FAIL: {m}");
            }
            Err(m) => {
                hard_failures += 1;
                println!("criterion {n}: FAIL: error: {m}");
            }
        }
    }
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
