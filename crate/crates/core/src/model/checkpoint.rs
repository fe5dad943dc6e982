use std::path::Path;

use serde_json::json;

use super::{param_layout, ModelConfig, ModelParams};
use crate::container::Container;
use crate::diffcore::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 5] = b"NSRN1";

/// Parameters plus caller-defined metadata and auxiliary `f64` tensors
/// (normalization statistics and the like).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint<S> {
    pub params: ModelParams<S>,
    pub meta: serde_json::Value,
    pub aux: Vec<(String, Tensor<f64>)>,
}

pub fn save_checkpoint<S: Scalar>(path: &Path, ckpt: &ModelCheckpoint<S>) -> Result<()> {
    let mut c = Container::new(json!({
        "model_config": ckpt.params.config(),
        "user": ckpt.meta,
        "aux": ckpt.aux.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    }));
    for (spec, t) in ckpt.params.layout().iter().zip(ckpt.params.tensors()) {
        c.push(&spec.name, t);
    }
    for (name, t) in &ckpt.aux {
        c.push(&format!("aux.{name}"), t);
    }
    c.write(path, MODEL_MAGIC)
}

/// Reads a checkpoint and validates every parameter shape against the
/// embedded model configuration.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<ModelCheckpoint<S>> {
    let c = Container::read(path, MODEL_MAGIC)?;
    let config: ModelConfig = serde_json::from_value(
        c.meta
            .get("model_config")
            .cloned()
            .ok_or_else(|| Error::data("checkpoint manifest lacks model_config"))?,
    )?;
    let tensors = param_layout(&config)
        .iter()
        .map(|p| {
            let t = c.get::<S>(&p.name)?;
            if t.shape() != p.shape {
                return Err(Error::data(format!(
                    "{}: checkpoint shape {:?} does not match config shape {:?}",
                    p.name,
                    t.shape(),
                    p.shape
                )));
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let params = ModelParams::from_tensors(&config, tensors)?;
    let aux_names: Vec<String> = c
        .meta
        .get("aux")
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()?
        .unwrap_or_default();
    let aux = aux_names
        .into_iter()
        .map(|n| {
            let t = c.get::<f64>(&format!("aux.{n}"))?;
            Ok((n, t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelCheckpoint {
        params,
        meta: c.meta.get("user").cloned().unwrap_or_default(),
        aux,
    })
}
