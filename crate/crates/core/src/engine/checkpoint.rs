//! Self-describing checkpoint container.
//!
//! Layout: the 8-byte magic `MMCCKPT\0`, a little-endian `u32` format version, a
//! little-endian `u64` manifest length, the UTF-8 JSON manifest, then the parameter blob as
//! little-endian IEEE-754 `f64`. The manifest records the vocabulary, hyperparameters,
//! encoder configuration, provenance, the name/shape/offset of every tensor and the SHA-256
//! of the blob.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::encoder::{Encoder, EncoderConfig};
use super::head::SpanHead;
use super::train::Hyperparams;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"MMCCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

/// Where a checkpoint came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    /// Path or label of the checkpoint this one continued from.
    pub parent: Option<String>,
    pub seed: Option<u64>,
    /// Optimizer steps accumulated over the whole lineage.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub encoder: Encoder<F>,
    pub head: SpanHead<F>,
    pub vocab: Vocabulary,
    pub hp: Hyperparams,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    vocab: Vec<String>,
    hyperparams: Hyperparams,
    encoder: EncoderConfig,
    provenance: Provenance,
    tensors: Vec<TensorEntry>,
    blob_sha256: String,
}

impl<F: Scalar> Checkpoint<F> {
    /// Randomly initialised model: the starting point of a fine-tune cascade.
    pub fn fresh(vocab: Vocabulary, config: EncoderConfig, hp: Hyperparams, seed: u64) -> Result<Self> {
        if config.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "encoder expects {} vocabulary entries, vocabulary has {}",
                config.vocab_size,
                vocab.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::init(config, &mut rng)?;
        let head = SpanHead::init(config.hidden, &mut rng);
        Ok(Checkpoint {
            encoder,
            head,
            vocab,
            hp,
            provenance: Provenance {
                stage: "init".into(),
                parent: None,
                seed: Some(seed),
                steps: 0,
            },
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        for (name, shape, range) in &self.encoder.layout().tensors {
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset: range.start,
                len: range.len(),
            });
        }
        let h = self.head.hidden_size();
        let base = self.encoder.params().len();
        tensors.push(TensorEntry {
            name: "span_head.start".into(),
            shape: vec![h],
            offset: base,
            len: h,
        });
        tensors.push(TensorEntry {
            name: "span_head.end".into(),
            shape: vec![h],
            offset: base + h,
            len: h,
        });

        let values = self.encoder.params().iter().chain(&self.head.start).chain(&self.head.end);
        let mut blob = Vec::with_capacity((base + 2 * h) * 8);
        for v in values {
            blob.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        let manifest = Manifest {
            vocab: self.vocab.tokens().to_vec(),
            hyperparams: self.hp,
            encoder: *self.encoder.config(),
            provenance: self.provenance.clone(),
            tensors,
            blob_sha256: format!("{:x}", Sha256::digest(&blob)),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(20 + json.len() + blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if mlen > body.len() {
            return Err(bad("truncated manifest"));
        }
        let manifest: Manifest =
            serde_json::from_slice(&body[..mlen]).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        let blob = &body[mlen..];
        if !blob.len().is_multiple_of(8) {
            return Err(bad("parameter blob is not a whole number of f64 values"));
        }
        if format!("{:x}", Sha256::digest(blob)) != manifest.blob_sha256 {
            return Err(bad("parameter blob checksum mismatch"));
        }
        let values: Vec<F> = blob
            .chunks_exact(8)
            .map(|b| F::from_f64_lossy(f64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect();

        let vocab = Vocabulary::from_tokens(manifest.vocab).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let cfg = manifest.encoder;
        if cfg.vocab_size != vocab.len() {
            return Err(bad("encoder vocabulary size disagrees with stored vocabulary"));
        }
        let h = cfg.hidden;
        let find = |name: &str| manifest.tensors.iter().find(|t| t.name == name);
        let (Some(s), Some(e)) = (find("span_head.start"), find("span_head.end")) else {
            return Err(bad("missing span head tensors"));
        };
        if s.len != h || e.len != h || s.offset + h > values.len() || e.offset + h > values.len() {
            return Err(bad("span head tensors have the wrong size"));
        }
        let head = SpanHead {
            start: values[s.offset..s.offset + h].to_vec(),
            end: values[e.offset..e.offset + h].to_vec(),
        };
        let mut encoder = Encoder::zeros(cfg).map_err(|e| Error::Checkpoint(e.to_string()))?;
        for (name, shape, range) in encoder.layout().tensors.clone() {
            let t = find(&name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape != shape || t.len != range.len() || t.offset + t.len > values.len() {
                return Err(Error::Checkpoint(format!("tensor {name} has the wrong shape")));
            }
            encoder.params_mut()[range].copy_from_slice(&values[t.offset..t.offset + t.len]);
        }
        manifest.hyperparams.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Checkpoint {
            encoder,
            head,
            vocab,
            hp: manifest.hyperparams,
            provenance: manifest.provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
