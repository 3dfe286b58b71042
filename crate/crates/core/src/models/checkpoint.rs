//! Checkpoint = `model.json` manifest + `params.bin` blob of little-endian
//! f64 values laid out in manifest index order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{KnnModel, Model, ModelConfig, ModelKind, NeuralNet};
use crate::error::{Error, Result};
use crate::signal::PULSE_LEN;

pub const MANIFEST_FILE: &str = "model.json";
pub const BLOB_FILE: &str = "params.bin";
const FORMAT: &str = "grn-ppg-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamIndexEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 values from the start of the blob.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    model: ModelKind,
    config: ModelConfig,
    seed: u64,
    metrics: serde_json::Value,
    extra: serde_json::Value,
    params: Vec<ParamIndexEntry>,
    blob: String,
    blob_len: usize,
    sha256: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub model: Model,
    pub seed: u64,
    /// Metric snapshot taken when the checkpoint was written.
    pub metrics: serde_json::Value,
    /// Free-form context (effective run configuration, split layout, ...).
    pub extra: serde_json::Value,
}

fn tensors_of(model: &Model) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    match model {
        Model::Neural(n) => {
            let p = n.params();
            p.ids()
                .map(|id| (p.name(id).to_string(), p.get(id).shape().to_vec(), p.get(id).data().to_vec()))
                .collect()
        }
        Model::Knn(k) => vec![
            ("knn.data".into(), vec![k.len(), PULSE_LEN], k.data().to_vec()),
            (
                "knn.targets".into(),
                vec![k.len()],
                k.targets().iter().map(|&t| if t { 1.0 } else { 0.0 }).collect(),
            ),
        ],
    }
}

pub fn save_checkpoint(dir: &Path, ck: &Checkpoint) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut index = Vec::new();
    let mut offset = 0;
    for (name, shape, data) in tensors_of(&ck.model) {
        for v in &data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        index.push(ParamIndexEntry {
            name,
            shape,
            offset,
            len: data.len(),
        });
        offset += data.len();
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        model: ck.kind,
        config: ck.model.config(),
        seed: ck.seed,
        metrics: ck.metrics.clone(),
        extra: ck.extra.clone(),
        params: index,
        blob: BLOB_FILE.into(),
        blob_len: blob.len(),
        sha256: hex::encode(Sha256::digest(&blob)),
    };
    fs::write(dir.join(BLOB_FILE), &blob)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("unreadable manifest: {e}")))?;
    if m.format != FORMAT {
        return Err(Error::Integrity(format!("unknown checkpoint format '{}'", m.format)));
    }
    let blob = fs::read(dir.join(&m.blob))?;
    if blob.len() != m.blob_len || blob.len() % 8 != 0 {
        return Err(Error::Integrity(format!(
            "blob is {} bytes, manifest says {}",
            blob.len(),
            m.blob_len
        )));
    }
    let digest = hex::encode(Sha256::digest(&blob));
    if digest != m.sha256 {
        return Err(Error::Integrity(format!("sha256 mismatch: {digest} != {}", m.sha256)));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    let slice = |e: &ParamIndexEntry| -> Result<Vec<f64>> {
        let n: usize = e.shape.iter().product();
        if n != e.len || e.offset + e.len > values.len() {
            return Err(Error::Integrity(format!("parameter '{}' does not fit the blob", e.name)));
        }
        Ok(values[e.offset..e.offset + e.len].to_vec())
    };

    let model = match &m.config {
        ModelConfig::Knn(cfg) => {
            let find = |name: &str| {
                m.params
                    .iter()
                    .find(|e| e.name == name)
                    .ok_or_else(|| Error::Integrity(format!("missing parameter '{name}'")))
            };
            let data = slice(find("knn.data")?)?;
            let targets = slice(find("knn.targets")?)?.iter().map(|&t| t == 1.0).collect();
            Model::Knn(KnnModel::from_parts(*cfg, data, targets)?)
        }
        cfg => {
            let mut net = NeuralNet::new(cfg, m.seed)?;
            let store = net.params_mut();
            if store.len() != m.params.len() {
                return Err(Error::Integrity(format!(
                    "manifest lists {} parameters, model has {}",
                    m.params.len(),
                    store.len()
                )));
            }
            let ids: Vec<_> = store.ids().collect();
            for (id, e) in ids.into_iter().zip(&m.params) {
                if store.name(id) != e.name || store.get(id).shape() != e.shape.as_slice() {
                    return Err(Error::Integrity(format!(
                        "parameter '{}' {:?} does not match model slot '{}' {:?}",
                        e.name,
                        e.shape,
                        store.name(id),
                        store.get(id).shape()
                    )));
                }
                store.get_mut(id).data_mut().copy_from_slice(&slice(e)?);
            }
            Model::Neural(net)
        }
    };
    Ok(Checkpoint {
        kind: m.model,
        model,
        seed: m.seed,
        metrics: m.metrics,
        extra: m.extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{MlpConfig, KnnConfig};

    fn small_mlp() -> Model {
        let cfg = ModelConfig::Mlp(MlpConfig {
            hidden: vec![4],
            ..Default::default()
        });
        Model::Neural(NeuralNet::new(&cfg, 7).unwrap())
    }

    #[test]
    fn roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = small_mlp();
        if let Model::Neural(n) = &mut model {
            n.params_mut().tensors_mut()[0].data_mut()[0] = 0.123;
        }
        let ck = Checkpoint {
            kind: ModelKind::Mlp,
            model: model.clone(),
            seed: 7,
            metrics: serde_json::json!({"f1": 0.5}),
            extra: serde_json::Value::Null,
        };
        save_checkpoint(dir.path(), &ck).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.model, model);
        assert_eq!(back.metrics["f1"], 0.5);

        let path = dir.path().join(BLOB_FILE);
        let mut blob = fs::read(&path).unwrap();
        blob[3] ^= 0x40;
        fs::write(&path, &blob).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Integrity(_))));
        fs::write(&path, &blob[..blob.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn knn_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..3 * PULSE_LEN).map(|i| i as f64 * 0.01).collect();
        let knn = KnnModel::from_parts(KnnConfig { k: 1 }, data, vec![true, false, true]).unwrap();
        let ck = Checkpoint {
            kind: ModelKind::Knn,
            model: Model::Knn(knn.clone()),
            seed: 0,
            metrics: serde_json::Value::Null,
            extra: serde_json::Value::Null,
        };
        save_checkpoint(dir.path(), &ck).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap().model, Model::Knn(knn));
    }
}
