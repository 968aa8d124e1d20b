//! `.mmvt` weight files. The byte layout lives in
//! [`mmvt_core::weights::encode`]; this module only moves bytes to disk.

use std::fs;
use std::path::Path;

use mmvt_core::weights::{decode, encode, WeightStore};

use crate::IoError;

pub fn save(store: &WeightStore, path: &Path) -> Result<(), IoError> {
    let bytes = encode(store).map_err(|source| IoError::Format {
        path: path.into(),
        source,
    })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

pub fn load(path: &Path) -> Result<WeightStore, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(&bytes).map_err(|source| IoError::Format {
        path: path.into(),
        source,
    })
}
