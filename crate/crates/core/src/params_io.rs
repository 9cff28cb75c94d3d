//! Parameter directories: one `RTEN` file per tensor plus `manifest.json`.
//!
//! The manifest maps tensor names to file names under `"tensors"`; any other
//! top-level keys are module metadata (kernel size, channel counts).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::rten::{self, Dtype};
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.json";

pub fn save(dir: &Path, tensors: &[(&str, &Tensor)], metadata: Map<String, Value>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Map::new();
    for (name, tensor) in tensors {
        let file = format!("{name}.rten");
        rten::write(dir.join(&file), tensor, Dtype::F64)?;
        files.insert((*name).to_string(), Value::String(file));
    }
    let mut manifest = metadata;
    manifest.insert("tensors".into(), Value::Object(files));
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&Value::Object(manifest)).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub struct Loaded {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: Map<String, Value>,
}

impl Loaded {
    pub fn take(&mut self, name: &str) -> Result<Tensor> {
        self.tensors
            .remove(name)
            .ok_or_else(|| Error::Format(format!("manifest has no tensor `{name}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.metadata
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Format(format!("manifest key `{key}` missing or not an integer")))
    }
}

pub fn load(dir: &Path) -> Result<Loaded> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut metadata: Map<String, Value> = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let files = match metadata.remove("tensors") {
        Some(Value::Object(files)) => files,
        _ => return Err(Error::Format(format!("{}: missing `tensors` map", path.display()))),
    };
    let mut tensors = BTreeMap::new();
    for (name, file) in files {
        let file = file
            .as_str()
            .ok_or_else(|| Error::Format(format!("{}: file for `{name}` is not a string", path.display())))?;
        let (tensor, _) = rten::read(dir.join(file))?;
        tensors.insert(name, tensor);
    }
    Ok(Loaded { tensors, metadata })
}
