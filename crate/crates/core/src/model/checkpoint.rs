use std::path::Path;

use crate::dataio::{encode_feature_file, read_feature_file, NamedTensors};
use crate::error::{data_err, Error, Result};
use crate::tensor::FeatureTensor;

use super::{Crnn, CrnnConfig};

/// Record holding the model config as `key=value` text, one byte per value.
pub const CONFIG_RECORD: &str = "meta.config";

pub fn checkpoint_tensors(model: &Crnn<f32>) -> NamedTensors {
    let text = model.config().to_kv();
    let bytes: Vec<f32> = text.bytes().map(f32::from).collect();
    let mut out = vec![(
        CONFIG_RECORD.to_string(),
        FeatureTensor::from_vec(&[bytes.len()], bytes).expect("1-d"),
    )];
    out.extend(model.state().into_iter().map(|(n, t)| (n, t.clone())));
    out
}

pub fn model_from_tensors(tensors: &NamedTensors) -> Result<Crnn<f32>> {
    let (_, meta) = tensors
        .iter()
        .find(|(n, _)| n == CONFIG_RECORD)
        .ok_or_else(|| data_err!("checkpoint lacks {CONFIG_RECORD}"))?;
    let text: String = meta
        .data()
        .iter()
        .map(|&v| {
            let b = v as u32;
            if v.fract() != 0.0 || b > 127 {
                Err(data_err!("{CONFIG_RECORD} holds a non-ASCII value {v}"))
            } else {
                Ok(b as u8 as char)
            }
        })
        .collect::<Result<_>>()?;
    let config = CrnnConfig::from_kv(&text)?;
    let mut model = Crnn::new(config, &mut rand::rng())?;
    let expected = model.state().len();
    if tensors.len() != expected + 1 {
        return Err(data_err!(
            "checkpoint has {} tensors, architecture needs {}",
            tensors.len() - 1,
            expected
        ));
    }
    for (name, dst) in model.state_mut() {
        let src = tensors
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| data_err!("checkpoint lacks tensor {name}"))?;
        if src.shape() != dst.shape() {
            return Err(Error::Shape(format!(
                "{name}: checkpoint shape {:?}, model shape {:?}",
                src.shape(),
                dst.shape()
            )));
        }
        *dst = src.clone();
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Crnn<f32>) -> Result<()> {
    let bytes = encode_feature_file(&checkpoint_tensors(model))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Crnn<f32>> {
    model_from_tensors(&read_feature_file(path)?)
}
