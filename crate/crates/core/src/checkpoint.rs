//! Self-describing model files.
//!
//! Layout: a magic line `EXCHCKPT 1`, one line of JSON header, then the raw
//! parameter data as little-endian `f64`. The header names every array with
//! its shape and byte offset into the data section, and carries the model
//! configuration, the rating scale and training metadata.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::RatingScale;
use crate::models::{Model, ModelConfig};
use crate::{Error, Result};

pub const MAGIC: &str = "EXCHCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub epochs: usize,
    pub best_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub scale: RatingScale,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    byte_order: String,
    dtype: String,
    model_config: ModelConfig,
    scale: RatingScale,
    metadata: Metadata,
    arrays: Vec<ArrayEntry>,
}

fn named_arrays(model: &Model) -> Vec<(String, Array2<f64>)> {
    let mut out = Vec::new();
    let stacks = [("encoder", &model.encoder), ("stack", &model.stack)];
    for (prefix, layers) in stacks {
        for (i, layer) in layers.iter().enumerate() {
            for (j, w) in layer.slots().iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight.{j}"), w.clone()));
            }
            out.push((format!("{prefix}.{i}.bias"), layer.bias().clone().insert_axis(ndarray::Axis(0))));
        }
    }
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.model.check()?;
        let arrays = named_arrays(&self.model);
        let mut entries = Vec::with_capacity(arrays.len());
        let mut data = Vec::new();
        for (name, a) in &arrays {
            entries.push(ArrayEntry {
                name: name.clone(),
                shape: [a.nrows(), a.ncols()],
                offset: data.len(),
            });
            for v in a.iter() {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            version: VERSION,
            byte_order: "little".into(),
            dtype: "f64".into(),
            model_config: self.model.config.clone(),
            scale: self.scale.clone(),
            metadata: self.metadata.clone(),
            arrays: entries,
        };
        let mut out = format!("{MAGIC} {VERSION}\n").into_bytes();
        out.extend(serde_json::to_vec(&header)?);
        out.push(b'\n');
        out.extend(data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = bytes.splitn(3, |&b| b == b'\n');
        let magic = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let expected = format!("{MAGIC} {VERSION}");
        if magic != expected.as_bytes() {
            return Err(bad(format!(
                "unrecognised header {:?}, expected {expected:?}",
                String::from_utf8_lossy(&magic[..magic.len().min(32)])
            )));
        }
        let header: Header = serde_json::from_slice(lines.next().ok_or_else(|| bad("missing header".into()))?)?;
        let data = lines.next().unwrap_or(&[]);
        if header.version != VERSION || header.byte_order != "little" || header.dtype != "f64" {
            return Err(bad(format!(
                "unsupported version {} / byte order {} / dtype {}",
                header.version, header.byte_order, header.dtype
            )));
        }
        let mut model = Model::zeros(header.model_config.clone())?;
        let expected_names: Vec<(String, [usize; 2])> = named_arrays(&model)
            .into_iter()
            .map(|(n, a)| (n, [a.nrows(), a.ncols()]))
            .collect();
        let found: Vec<(String, [usize; 2])> = header.arrays.iter().map(|e| (e.name.clone(), e.shape)).collect();
        if expected_names != found {
            return Err(bad("parameter arrays do not match the model configuration".into()));
        }
        let mut arrays = header.arrays.iter().map(|e| {
            let len = e.shape[0] * e.shape[1];
            let end = e.offset + 8 * len;
            let raw = data
                .get(e.offset..end)
                .ok_or_else(|| bad(format!("array {} runs past the end of the data", e.name)))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Array2::from_shape_vec((e.shape[0], e.shape[1]), values).map_err(|err| bad(err.to_string()))
        });
        for layer in model.layers_mut() {
            let (slots, bias) = layer.slots_and_bias_mut();
            for s in slots.iter_mut() {
                *s = arrays.next().expect("count checked")?;
            }
            *bias = arrays.next().expect("count checked")?.row(0).to_owned();
        }
        Ok(Self {
            model,
            scale: header.scale,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = ModelConfig {
            encoder: vec![3, 2],
            decoder: vec![4],
            dropout_after: vec![1],
            tie_row_col: true,
            ..ModelConfig::fea(5)
        };
        Checkpoint {
            model: Model::new(config, 4).unwrap(),
            scale: RatingScale::five_star(),
            metadata: Metadata {
                seed: 4,
                epochs: 7,
                best_rmse: Some(0.91),
            },
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"EXCHCKPT 9\n{}\n").is_err());
        let mut edited = String::from_utf8_lossy(&bytes).into_owned();
        edited = edited.replacen("\"little\"", "\"big\"", 1);
        assert!(Checkpoint::from_bytes(edited.as_bytes()).is_err());
    }
}
