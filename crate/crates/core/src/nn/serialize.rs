//! Versioned text serialization of named tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// `{format, version, header, tensors: [{name, shape, data}]}` as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorFile {
    pub format: String,
    pub version: String,
    #[serde(default)]
    pub header: Map<String, Value>,
    pub tensors: Vec<NamedTensor>,
}

impl TensorFile {
    pub fn new(format: &str, version: &str) -> Self {
        TensorFile {
            format: format.to_string(),
            version: version.to_string(),
            header: Map::new(),
            tensors: Vec::new(),
        }
    }

    pub fn set_header(&mut self, key: &str, value: impl Into<Value>) {
        self.header.insert(key.to_string(), value.into());
    }

    pub fn header_value(&self, key: &str) -> Result<&Value> {
        self.header
            .get(key)
            .ok_or_else(|| Error::Model(format!("model header lacks {key:?}")))
    }

    pub fn header_u64(&self, key: &str) -> Result<u64> {
        self.header_value(key)?
            .as_u64()
            .ok_or_else(|| Error::Model(format!("header field {key:?} is not an integer")))
    }

    pub fn header_str(&self, key: &str) -> Result<&str> {
        self.header_value(key)?
            .as_str()
            .ok_or_else(|| Error::Model(format!("header field {key:?} is not a string")))
    }

    pub fn push(&mut self, name: &str, t: &Tensor) {
        self.tensors.push(NamedTensor {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        });
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        let nt = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Model(format!("model file lacks tensor {name:?}")))?;
        let t = Tensor::new(nt.shape.clone(), nt.data.clone())?;
        if !t.is_finite() {
            return Err(Error::Model(format!("tensor {name:?} has non-finite entries")));
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("tensor files always serialize")
    }

    /// Parses and checks `format` and `version` before the body.
    pub fn from_text(text: &str, format: &str, version: &str) -> Result<Self> {
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        };
        let value: Value = serde_json::from_str(text).map_err(parse_err)?;
        let found_format = value.get("format").and_then(Value::as_str).unwrap_or("");
        if found_format != format {
            return Err(Error::Model(format!(
                "expected a {format:?} file, found {found_format:?}"
            )));
        }
        let found_version = value.get("version").and_then(Value::as_str).unwrap_or("");
        if found_version != version {
            return Err(Error::Version {
                found: found_version.to_string(),
                expected: version.to_string(),
            });
        }
        serde_json::from_value(value).map_err(parse_err)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, format: &str, version: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, format, version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut f = TensorFile::new("test", "v1");
        f.set_header("hidden", 64);
        let t = Tensor::new(vec![2, 3], vec![0.1, 1.0 / 3.0, -2.5e-300, 1e300, 7.0, f64::EPSILON]).unwrap();
        f.push("w", &t);
        let back = TensorFile::from_text(&f.to_text(), "test", "v1").unwrap();
        assert_eq!(back.get("w").unwrap(), t);
        assert_eq!(back.header_u64("hidden").unwrap(), 64);
    }

    #[test]
    fn unknown_version_rejected() {
        let mut f = TensorFile::new("test", "v999");
        f.push("w", &Tensor::zeros(&[1]));
        assert!(matches!(
            TensorFile::from_text(&f.to_text(), "test", "v1"),
            Err(Error::Version { .. })
        ));
    }

    #[test]
    fn truncated_text_is_parse_error() {
        let mut f = TensorFile::new("test", "v1");
        f.push("w", &Tensor::zeros(&[4]));
        let text = f.to_text();
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            TensorFile::from_text(cut, "test", "v1"),
            Err(Error::Parse { .. })
        ));
    }
}
