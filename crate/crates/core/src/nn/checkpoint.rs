use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{HyperSegFormer, ModelConfig, Normalizer};
use super::tensor::Tensor;
use super::train::TrainState;
use crate::error::{bail, Error, Result};

const MAGIC: &[u8; 8] = b"HSKCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    normalizer: Normalizer,
    train: Option<TrainState>,
    tensors: Vec<TensorRecord>,
}

/// Model configuration, named tensors and optional training state.
///
/// On disk: 8-byte magic, little-endian `u64` header length, JSON header,
/// then the little-endian `f32` payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub normalizer: Normalizer,
    pub train: Option<TrainState>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(model: &HyperSegFormer) -> Self {
        Self {
            model: model.config().clone(),
            normalizer: model.normalizer().clone(),
            train: None,
            tensors: model
                .store()
                .entries()
                .iter()
                .map(|e| (e.name.clone(), e.value.clone()))
                .collect(),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Rebuilds the model; every parameter must be present with its shape.
    pub fn to_model(&self) -> Result<HyperSegFormer> {
        self.to_model_with_prefix("")
    }

    /// Like [`Checkpoint::to_model`], reading tensors named `prefix + name`.
    pub fn to_model_with_prefix(&self, prefix: &str) -> Result<HyperSegFormer> {
        let mut model = HyperSegFormer::new(self.model.clone(), 0)?;
        model.set_normalizer(self.normalizer.clone())?;
        let ids: Vec<_> = model.store().ids().collect();
        for id in ids {
            let name = format!("{prefix}{}", model.store().entry(id).name);
            let Some(t) = self.tensor(&name) else {
                bail!(Format, "checkpoint lacks tensor {name}");
            };
            if t.shape() != model.store().get(id).shape() {
                bail!(
                    Format,
                    "tensor {name} has shape {:?}, model expects {:?}",
                    t.shape(),
                    model.store().get(id).shape()
                );
            }
            *model.store_mut().get_mut(id) = t.clone();
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let records = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let r = TensorRecord {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 4 * t.len() as u64;
                r
            })
            .collect();
        let header = Header {
            model: self.model.clone(),
            normalizer: self.normalizer.clone(),
            train: self.train.clone(),
            tensors: records,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            bail!(Format, "not a checkpoint (bad magic)");
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let Some(json) = bytes.get(16..16 + len) else {
            bail!(Format, "checkpoint header is truncated");
        };
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::json("checkpoint header", e))?;
        let payload = &bytes[16 + len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for r in header.tensors {
            let n: usize = r.shape.iter().product();
            let start = r.offset as usize;
            let Some(raw) = payload.get(start..start + 4 * n) else {
                bail!(Format, "tensor {} runs past the payload", r.name);
            };
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((r.name, Tensor::new(&r.shape, data)?));
        }
        Ok(Self {
            model: header.model,
            normalizer: header.normalizer,
            train: header.train,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_model(model: &HyperSegFormer, path: &Path) -> Result<()> {
    Checkpoint::from_model(model).save(path)
}

pub fn load_model(path: &Path) -> Result<HyperSegFormer> {
    Checkpoint::load(path)?.to_model()
}
