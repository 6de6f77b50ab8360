//! Parameter checkpointing as a JSON map `name → {shape, values}`.
//!
//! Keys are sorted, values use shortest-roundtrip float formatting, so the
//! same parameters always serialize to identical bytes.

use crate::tape::ParamStore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("checkpoint {path}: tensor `{name}` {msg}")]
    Tensor { path: String, name: String, msg: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn save<P: AsRef<Path>>(store: &ParamStore, path: P) -> Result<(), CheckpointError> {
    let mut map = BTreeMap::new();
    for pid in store.tensor_ids() {
        map.insert(
            store.name_of(pid).to_string(),
            Entry {
                shape: store.shape_of(pid).to_vec(),
                values: store.values_of(pid).to_vec(),
            },
        );
    }
    let text = serde_json::to_string(&map).expect("checkpoint serializes");
    std::fs::write(path.as_ref(), text).map_err(|e| CheckpointError::Io {
        path: path.as_ref().display().to_string(),
        msg: e.to_string(),
    })
}

/// Loads values into an existing store. Every tensor must be present with a
/// matching shape; unknown tensors in the file are rejected.
pub fn load_into<P: AsRef<Path>>(store: &mut ParamStore, path: P) -> Result<(), CheckpointError> {
    let path_str = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| CheckpointError::Io {
        path: path_str.clone(),
        msg: e.to_string(),
    })?;
    let mut map: BTreeMap<String, Entry> =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Io {
            path: path_str.clone(),
            msg: e.to_string(),
        })?;
    for pid in store.tensor_ids().collect::<Vec<_>>() {
        let name = store.name_of(pid).to_string();
        let entry = map.remove(&name).ok_or_else(|| CheckpointError::Tensor {
            path: path_str.clone(),
            name: name.clone(),
            msg: "missing".to_string(),
        })?;
        if entry.shape != store.shape_of(pid) {
            return Err(CheckpointError::Tensor {
                path: path_str,
                name,
                msg: format!(
                    "shape {:?} does not match expected {:?}",
                    entry.shape,
                    store.shape_of(pid)
                ),
            });
        }
        store.values_of_mut(pid).copy_from_slice(&entry.values);
    }
    if let Some(name) = map.into_keys().next() {
        return Err(CheckpointError::Tensor {
            path: path_str,
            name,
            msg: "not expected by this model".to_string(),
        });
    }
    Ok(())
}
