//! Binary checkpoint of the trainable speech branch.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"SRAGCKPT" | version u32 | meta_len u32 | meta (UTF-8 JSON) | n_tensors u32 |
//!   n_tensors x (name_len u32 | name | rank u32 | dims u32 x rank | f32 x prod(dims))
//! ```
//!
//! The metadata carries the model and feature configs, the vocabulary, the
//! backbone seed and checksum, the training config, and the best epoch. The
//! backbone itself is not stored; it is regenerated from its seed and checked
//! against the checksum on load.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::adapter::AdapterParams;
use crate::dsp::FeatureConfig;
use crate::encoder::{BackboneParams, DenseLayer, ModelConfig, Retriever, SpeechEncoderParams, Vocab};
use crate::error::{Error, Result};
use crate::training::{TrainConfig, TrainOutcome, TrainableParams};

pub const MAGIC: &[u8; 8] = b"SRAGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub vocab: Vocab,
    pub backbone_seed: u64,
    pub backbone_checksum: String,
    pub train: TrainConfig,
    pub best_val_loss: f64,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: TrainableParams,
}

#[derive(Debug, Clone, PartialEq)]
struct Tensor {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Checkpoint {
    pub fn new(model: &Retriever, train: &TrainConfig, best_val_loss: f64, epoch: usize) -> Self {
        let mut params = TrainableParams::from_model(model);
        params.round_to_f32();
        Self {
            meta: CheckpointMeta {
                model: model.config.clone(),
                features: model.features.clone(),
                vocab: model.vocab.clone(),
                backbone_seed: model.backbone.seed,
                backbone_checksum: model.backbone.checksum(),
                train: train.clone(),
                best_val_loss,
                epoch,
            },
            params,
        }
    }

    pub fn from_outcome(outcome: &TrainOutcome, train: &TrainConfig) -> Self {
        Self::new(&outcome.model, train, outcome.best_val_loss, outcome.best_epoch)
    }

    /// Rebuilds the full model, regenerating the frozen backbone.
    pub fn to_retriever(&self) -> Result<Retriever> {
        let m = &self.meta;
        let backbone = BackboneParams::new(m.vocab.len(), m.model.hidden, m.model.backbone_layers, m.backbone_seed);
        let checksum = backbone.checksum();
        if checksum != m.backbone_checksum {
            return Err(Error::Corrupt {
                path: Default::default(),
                message: format!(
                    "backbone regenerated from seed {} has checksum {checksum}, checkpoint expects {}",
                    m.backbone_seed, m.backbone_checksum
                ),
            });
        }
        Retriever::from_parts(
            m.model.clone(),
            m.features.clone(),
            m.vocab.clone(),
            backbone,
            self.params.speech.clone(),
            self.params.adapter.clone(),
        )
    }

    fn tensors(&self) -> Vec<Tensor> {
        let p = &self.params;
        let mut out = Vec::new();
        for (i, l) in p.speech.layers.iter().enumerate() {
            out.push(matrix(format!("speech.{i}.w"), &l.w));
            out.push(vector(format!("speech.{i}.b"), &l.b));
        }
        out.push(matrix("adapter.w_proj".into(), &p.adapter.w_proj));
        out.push(vector("adapter.b_proj".into(), &p.adapter.b_proj));
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        put_len(&mut buf, meta.len())?;
        buf.extend_from_slice(&meta);
        let tensors = self.tensors();
        put_len(&mut buf, tensors.len())?;
        for t in &tensors {
            put_len(&mut buf, t.name.len())?;
            buf.extend_from_slice(t.name.as_bytes());
            put_len(&mut buf, t.dims.len())?;
            for &d in &t.dims {
                put_len(&mut buf, d)?;
            }
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Corrupt { message, .. } => Error::corrupt(path, message),
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic, not a checkpoint"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| corrupt(format!("metadata: {e}")))?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| corrupt("tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| corrupt("tensor size overflows"))?;
            let raw = r.take(count.checked_mul(4).ok_or_else(|| corrupt("tensor size overflows"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let params = assemble(&meta, tensors)?;
        Ok(Self { meta, params })
    }
}

fn corrupt(message: impl Into<String>) -> Error {
    Error::Corrupt {
        path: Default::default(),
        message: message.into(),
    }
}

fn put_len(buf: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::InvalidParameter(format!("{n} does not fit in u32")))?;
    buf.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn matrix(name: String, m: &Array2<f64>) -> Tensor {
    Tensor {
        name,
        dims: m.shape().to_vec(),
        data: m.iter().map(|&v| v as f32).collect(),
    }
}

fn vector(name: String, v: &Array1<f64>) -> Tensor {
    Tensor {
        name,
        dims: vec![v.len()],
        data: v.iter().map(|&x| x as f32).collect(),
    }
}

fn assemble(meta: &CheckpointMeta, tensors: Vec<Tensor>) -> Result<TrainableParams> {
    let mut it = tensors.into_iter();
    let mut next = |name: String, rank: usize| -> Result<Tensor> {
        let t = it.next().ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if t.name != name || t.dims.len() != rank {
            return Err(corrupt(format!("expected rank-{rank} tensor {name}, found {} {:?}", t.name, t.dims)));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("tensor {name} has non-finite values")));
        }
        Ok(t)
    };
    let to_matrix = |t: Tensor| {
        Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data.into_iter().map(f64::from).collect())
            .expect("size checked on read")
    };
    let to_vector = |t: Tensor| Array1::from_iter(t.data.into_iter().map(f64::from));

    let mut layers = Vec::with_capacity(meta.model.enc_layers);
    for i in 0..meta.model.enc_layers {
        let w = to_matrix(next(format!("speech.{i}.w"), 2)?);
        let b = to_vector(next(format!("speech.{i}.b"), 1)?);
        layers.push(DenseLayer { w, b });
    }
    let w_proj = to_matrix(next("adapter.w_proj".into(), 2)?);
    let b_proj = to_vector(next("adapter.b_proj".into(), 1)?);
    if let Some(extra) = it.next() {
        return Err(corrupt(format!("unexpected tensor {}", extra.name)));
    }
    Ok(TrainableParams {
        speech: SpeechEncoderParams { layers },
        adapter: AdapterParams {
            downsample_factor: meta.model.downsample_factor,
            w_proj,
            b_proj,
        },
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
