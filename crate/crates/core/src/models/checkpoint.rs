use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Hyperparams, Model, ModelKind, Variant};
use crate::error::{Error, Result};
use crate::kan::SplineGrid;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: u32,
    pub kind: ModelKind,
    pub hp: Hyperparams,
    pub variant: Variant,
    pub seed: u64,
    pub n_features: usize,
    pub grids: Vec<SplineGrid>,
    pub param_shapes: Vec<Vec<usize>>,
    /// Decision threshold calibrated during training, if any.
    pub threshold: Option<f64>,
}

/// Write `manifest.json` and `weights.bin` into `dir` (created if needed).
/// Files are written to temporaries and renamed into place.
pub fn save_checkpoint(model: &Model, threshold: Option<f64>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = CheckpointManifest {
        format: FORMAT_VERSION,
        kind: model.kind,
        hp: model.hp.clone(),
        variant: model.variant.clone(),
        seed: model.seed,
        n_features: model.n_features,
        grids: model.grids(),
        param_shapes: model.param_shapes(),
        threshold,
    };
    let tmp = dir.join("weights.bin.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        for p in model.params() {
            p.write_blob(&mut w)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, dir.join("weights.bin"))?;
    let tmp = dir.join("manifest.json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?)?;
    fs::rename(&tmp, dir.join("manifest.json"))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointManifest)> {
    let raw = fs::read(dir.join("manifest.json"))
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.join("manifest.json").display())))?;
    let m: CheckpointManifest = serde_json::from_slice(&raw)?;
    if m.format != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format {}", m.format)));
    }
    let mut model = Model::build(m.kind, &m.hp, &m.variant, m.n_features, m.seed)?;
    model.set_grids(&m.grids)?;
    if model.param_shapes() != m.param_shapes {
        return Err(Error::Checkpoint("parameter shapes disagree with the manifest".into()));
    }
    let mut r = BufReader::new(fs::File::open(dir.join("weights.bin"))?);
    for p in model.params_mut() {
        let t = Tensor::read_blob(&mut r)
            .map_err(|e| Error::Checkpoint(format!("weights.bin: {e}")))?;
        if t.shape() != p.shape() {
            return Err(Error::Checkpoint(format!("blob {:?} for parameter {:?}", t.shape(), p.shape())));
        }
        *p = t;
    }
    Ok((model, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Mode;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let hp = Hyperparams::tiny();
        let mut model = Model::build(ModelKind::KacqDcnn, &hp, &Variant::default(), 4, 7).unwrap();
        let x = Tensor::new(vec![3, 4, 1], (0..12).map(|i| (i as f64 * 0.37).sin() * 3.0).collect()).unwrap();
        model.grid_update(&x, 12).unwrap();
        save_checkpoint(&model, Some(0.4), dir.path()).unwrap();
        let (back, m) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(m.threshold, Some(0.4));
        let a = model.forward(&x, Mode::Infer).unwrap().0;
        let b = back.forward(&x, Mode::Infer).unwrap().0;
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn truncated_weights_fail() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::build(ModelKind::Logistic, &Hyperparams::tiny(), &Variant::default(), 4, 1).unwrap();
        save_checkpoint(&model, None, dir.path()).unwrap();
        let w = dir.path().join("weights.bin");
        let bytes = fs::read(&w).unwrap();
        fs::write(&w, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
    }
}
