//! Named parameter sets and their on-disk form: one NPY file per parameter
//! plus a `manifest.json` listing names, files and shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Tensor;
use crate::npy::{self, DenseArray, NpyError};
use crate::scalar::{floats_from_array_data, Real};

pub const MANIFEST_FILE: &str = "manifest.json";
const PARAM_DIR: &str = "params";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("parameter {name}: {detail}")]
    BadParam { name: String, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered, named parameters of a model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn get(&self, i: usize) -> &Param<T> {
        &self.params[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.params[i].value
    }

    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout(&self, other: &ParamStore<T>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    file: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    params: Vec<ParamEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

fn file_name(index: usize, name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    format!("{PARAM_DIR}/{index:04}_{safe}.npy")
}

/// Writes `params` under `dir`, with `meta` stored verbatim in the manifest.
pub fn save_checkpoint<T: Real>(
    dir: &Path,
    params: &ParamStore<T>,
    meta: &serde_json::Value,
) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir.join(PARAM_DIR))?;
    let mut entries = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        let file = file_name(i, &p.name);
        let arr = DenseArray::new(
            p.value.shape().to_vec(),
            T::into_array_data(p.value.data().to_vec()),
        )?;
        npy::save_npy(dir.join(&file), &arr)?;
        entries.push(ParamEntry {
            name: p.name.clone(),
            file,
            shape: p.value.shape().to_vec(),
        });
    }
    let manifest = Manifest {
        params: entries,
        meta: meta.clone(),
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`], converting stored values
/// to the working precision `T`.
pub fn load_checkpoint<T: Real>(
    dir: &Path,
) -> Result<(ParamStore<T>, serde_json::Value), CheckpointError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let mut store = ParamStore::new();
    for e in manifest.params {
        let bad = |detail: String| CheckpointError::BadParam {
            name: e.name.clone(),
            detail,
        };
        let arr = npy::load_npy_strict(dir.join(&e.file))?;
        if arr.shape() != e.shape.as_slice() {
            return Err(bad(format!(
                "manifest shape {:?}, file shape {:?}",
                e.shape,
                arr.shape()
            )));
        }
        let values = floats_from_array_data::<T>(&arr.data)
            .ok_or_else(|| bad(format!("non-float dtype {:?}", arr.data.dtype())))?;
        let tensor = Tensor::new(e.shape.clone(), values).map_err(|err| bad(err.to_string()))?;
        store.push(e.name.clone(), tensor);
    }
    Ok((store, manifest.meta))
}
