//! Parameter checkpoints: a JSON manifest plus a little-endian `f64` blob.
//!
//! `manifest.json` lists every stored tensor with its shape and element
//! offset into `params.bin`. Optimizer moments are stored in the blob under
//! `optimizer.m.<i>` / `optimizer.v.<i>`; the scalar optimizer state lives in
//! the manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NeuroError, Result};
use crate::optim::{OptimizerState, RAdamConfig};
use crate::{Scalar, Tensor};

pub const FORMAT: &str = "esg-neuro-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements (not bytes) into the blob.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub config: RAdamConfig,
    pub lr: f64,
    pub step: u64,
    pub slots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
    pub optimizer: Option<OptimizerHeader>,
    /// Caller-defined metadata, e.g. the model spec.
    pub header: serde_json::Value,
}

/// Loaded checkpoint with tensors in manifest order.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<(String, Tensor<f64>)>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor<f64>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn save<T: Scalar>(
    dir: &Path,
    tensors: &[(String, &Tensor<T>)],
    optimizer: Option<&OptimizerState>,
    header: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob: Vec<u8> = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0usize;
    let mut push = |name: String, shape: Vec<usize>, values: &mut dyn Iterator<Item = f64>, blob: &mut Vec<u8>| {
        let mut n = 0;
        for v in values {
            blob.extend_from_slice(&v.to_le_bytes());
            n += 1;
        }
        entries.push(TensorEntry { name, shape, offset });
        offset += n;
    };
    for (name, t) in tensors {
        push(name.clone(), t.shape().to_vec(), &mut t.data().iter().map(|v| v.as_f64()), &mut blob);
    }
    let optimizer_header = optimizer.map(|state| {
        for (i, m) in state.first_moments.iter().enumerate() {
            push(format!("optimizer.m.{i}"), vec![m.len()], &mut m.iter().copied(), &mut blob);
        }
        for (i, v) in state.second_moments.iter().enumerate() {
            push(format!("optimizer.v.{i}"), vec![v.len()], &mut v.iter().copied(), &mut blob);
        }
        OptimizerHeader {
            config: state.config,
            lr: state.lr,
            step: state.step,
            slots: state.first_moments.len(),
        }
    });
    let manifest = Manifest {
        format: FORMAT.into(),
        dtype: "f64le".into(),
        tensors: entries,
        optimizer: optimizer_header,
        header,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(dir.join(BLOB_FILE), blob)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT || manifest.dtype != "f64le" {
        return Err(NeuroError::Checkpoint(format!(
            "unsupported format {} / {}",
            manifest.format, manifest.dtype
        )));
    }
    let bytes = fs::read(dir.join(BLOB_FILE))?;
    if bytes.len() % 8 != 0 {
        return Err(NeuroError::Checkpoint("blob length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut tensors = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for entry in &manifest.tensors {
        let len: usize = entry.shape.iter().product();
        let data = values
            .get(entry.offset..entry.offset + len)
            .ok_or_else(|| NeuroError::Checkpoint(format!("tensor {} exceeds blob", entry.name)))?
            .to_vec();
        if entry.name.starts_with("optimizer.m.") {
            first.push(data);
        } else if entry.name.starts_with("optimizer.v.") {
            second.push(data);
        } else {
            tensors.push((entry.name.clone(), Tensor::from_vec(&entry.shape, data)?));
        }
    }
    let optimizer = manifest.optimizer.as_ref().map(|h| OptimizerState {
        config: h.config,
        lr: h.lr,
        step: h.step,
        first_moments: first,
        second_moments: second,
    });
    if let Some(state) = &optimizer {
        let slots = manifest.optimizer.as_ref().map_or(0, |h| h.slots);
        if state.first_moments.len() != slots || state.second_moments.len() != slots {
            return Err(NeuroError::Checkpoint("optimizer moment count mismatch".into()));
        }
    }
    Ok(Checkpoint { manifest, tensors, optimizer })
}
