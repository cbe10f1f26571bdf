//! `oodhg-ckpt-v1` checkpoints: one JSON document holding the training
//! configuration, label mapping, meta-paths and every parameter tensor.
//!
//! ```json
//! {
//!   "format": "oodhg-ckpt-v1",
//!   "train_config": {"learning_rate": 0.001, "epochs": 50, "alpha": 0.5, "m_in": -3.0,
//!                    "gamma": 0.5, "steps": 2, "seed": 0, "d_hidden": 64},
//!   "feature_paths": [["T"], ["T", "A", "T"]],
//!   "propagation_paths": [["T", "A", "T"]],
//!   "id_classes": [0, 1, 2],
//!   "ood_class": 3,
//!   "tensors": [{"name": "projection.0.weight", "shape": [8, 64], "data": [...]}, ...]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so a load restores every
//! parameter bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MetaPath;
use crate::model::{EncoderParams, LabelMap, Linear, TrainConfig, TrainedModel};

pub const FORMAT_TAG: &str = "oodhg-ckpt-v1";

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    train_config: TrainConfig,
    feature_paths: Vec<MetaPath>,
    propagation_paths: Vec<MetaPath>,
    id_classes: Vec<usize>,
    ood_class: usize,
    tensors: Vec<TensorRecord>,
}

pub fn to_json(model: &TrainedModel) -> Result<String> {
    let tensors = model
        .params
        .named_tensors()
        .into_iter()
        .map(|(name, shape, data)| TensorRecord {
            name,
            shape,
            data: data.to_vec(),
        })
        .collect();
    let file = CheckpointFile {
        format: FORMAT_TAG.into(),
        train_config: model.config.clone(),
        feature_paths: model.feature_paths.clone(),
        propagation_paths: model.propagation_paths.clone(),
        id_classes: model.label_map.id_classes.clone(),
        ood_class: model.label_map.ood_class,
        tensors,
    };
    let mut json = serde_json::to_string(&file)?;
    json.push('\n');
    Ok(json)
}

pub fn from_json(text: &str) -> Result<TrainedModel> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format != FORMAT_TAG {
        return Err(Error::Checkpoint(format!(
            "unsupported format `{}`, expected `{FORMAT_TAG}`",
            file.format
        )));
    }
    let mut tensors = file.tensors.into_iter();
    let mut next_linear = |prefix: &str| -> Result<Linear> {
        let mut take = |suffix: &str, rank: usize| -> Result<TensorRecord> {
            let want = format!("{prefix}.{suffix}");
            let t = tensors
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{want}`")))?;
            if t.name != want {
                return Err(Error::Checkpoint(format!(
                    "expected tensor `{want}`, found `{}`",
                    t.name
                )));
            }
            if t.shape.len() != rank || t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Checkpoint(format!("tensor `{want}` has inconsistent shape")));
            }
            Ok(t)
        };
        let w = take("weight", 2)?;
        let b = take("bias", 1)?;
        let weight =
            Array2::from_shape_vec((w.shape[0], w.shape[1]), w.data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Linear {
            weight,
            bias: Array1::from_vec(b.data),
        })
    };
    let projections = (0..file.feature_paths.len())
        .map(|p| next_linear(&format!("projection.{p}")))
        .collect::<Result<Vec<_>>>()?;
    let hidden = next_linear("hidden")?;
    let output = next_linear("output")?;
    if tensors.next().is_some() {
        return Err(Error::Checkpoint("unexpected trailing tensors".into()));
    }
    let params = EncoderParams {
        projections,
        hidden,
        output,
    };
    let dims: Vec<usize> = params.projections.iter().map(|p| p.weight.nrows()).collect();
    params.check_shapes(&dims)?;
    if params.n_classes() != file.id_classes.len() {
        return Err(Error::Checkpoint(format!(
            "output layer has {} classes but {} ID classes are listed",
            params.n_classes(),
            file.id_classes.len()
        )));
    }
    Ok(TrainedModel {
        params,
        label_map: LabelMap {
            id_classes: file.id_classes,
            ood_class: file.ood_class,
        },
        feature_paths: file.feature_paths,
        propagation_paths: file.propagation_paths,
        config: file.train_config,
    })
}

pub fn save(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        TrainedModel {
            params: EncoderParams::init(&[3, 2], 4, 2, &mut rng).unwrap(),
            label_map: LabelMap {
                id_classes: vec![0, 2],
                ood_class: 1,
            },
            feature_paths: vec![MetaPath::new(["T"]).unwrap(), MetaPath::new(["T", "A", "T"]).unwrap()],
            propagation_paths: vec![MetaPath::new(["T", "A", "T"]).unwrap()],
            config: TrainConfig::default(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let back = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_wrong_tag_and_truncation() {
        let json = to_json(&model()).unwrap();
        let wrong = json.replace(FORMAT_TAG, "oodhg-ckpt-v0");
        assert!(matches!(from_json(&wrong), Err(Error::Checkpoint(_))));

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["tensors"].as_array_mut().unwrap().pop();
        assert!(from_json(&value.to_string()).is_err());
    }
}
