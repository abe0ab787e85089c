//! `VROC1` checkpoint files.
//!
//! Layout (little-endian):
//! `b"VROC1"`, `u32` length + config JSON (`{model, vocab, train}`),
//! 32-byte SHA-256 of that JSON, `u64` schedule step, `u64` optimizer step,
//! `u32` epoch, `f64` validation accuracy, RNG state (32-byte key, `u64`
//! stream, `u128` word position), `u32` parameter count, then per parameter:
//! `u32` name length + name, `u32` rank + `u32` dims, and `f32` weights,
//! first moments and second moments.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::EventVocab;
use crate::model::{ModelConfig, ModelWeights};
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::adamw::AdamState;
use super::TrainConfig;

pub const MAGIC: &[u8; 5] = b"VROC1";

/// The configuration a checkpoint was produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    pub vocab: EventVocab,
    pub train: TrainConfig,
}

impl CheckpointConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_json().as_bytes()).into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub train: TrainConfig,
    pub weights: ModelWeights,
    pub adam: AdamState,
    /// Optimizer steps attempted (drives the learning-rate schedule).
    pub step: u64,
    pub epoch: usize,
    pub val_accuracy: f64,
    pub rng: RngState,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn len_prefixed(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| corrupt("tensor too large"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
    }
}

fn put_len_prefixed(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn put_f32s(out: &mut Vec<u8>, data: &[f64]) {
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

impl Checkpoint {
    pub fn config(&self) -> CheckpointConfig {
        CheckpointConfig { model: self.weights.config.clone(), vocab: self.weights.vocab.clone(), train: self.train.clone() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = self.config().to_json();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_len_prefixed(&mut out, json.as_bytes());
        out.extend_from_slice(&Sha256::digest(json.as_bytes()));
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        out.extend_from_slice(&(self.epoch as u32).to_le_bytes());
        out.extend_from_slice(&self.val_accuracy.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        let p = &self.weights.params;
        out.extend_from_slice(&(p.len() as u32).to_le_bytes());
        for (i, (name, t)) in p.names().iter().zip(p.tensors()).enumerate() {
            put_len_prefixed(&mut out, name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            put_f32s(&mut out, t.data());
            put_f32s(&mut out, self.adam.m[i].data());
            put_f32s(&mut out, self.adam.v[i].data());
        }
        out
    }

    /// Parse a checkpoint, verifying the magic, the config hash and the
    /// parameter layout implied by the stored config.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
            return Err(corrupt("bad magic (not a VROC1 checkpoint)"));
        }
        let json = r.len_prefixed()?;
        let stored_hash: [u8; 32] = r.array()?;
        if <[u8; 32]>::from(Sha256::digest(json)) != stored_hash {
            return Err(corrupt("config hash mismatch"));
        }
        let config: CheckpointConfig =
            serde_json::from_slice(json).map_err(|e| corrupt(format!("config JSON: {e}")))?;
        let step = r.u64()?;
        let adam_step = r.u64()?;
        let epoch = r.u32()? as usize;
        let val_accuracy = f64::from_le_bytes(r.array()?);
        let rng = RngState { seed: r.array()?, stream: r.u64()?, word_pos: u128::from_le_bytes(r.array()?) };

        let mut weights = ModelWeights::zeros(&config.model, &config.vocab)?;
        let n = r.u32()? as usize;
        if n != weights.params.len() {
            return Err(corrupt(format!("expected {} parameters, found {n}", weights.params.len())));
        }
        let (mut ws, mut ms, mut vs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let name = std::str::from_utf8(r.len_prefixed()?).map_err(|_| corrupt("parameter name is not UTF-8"))?;
            let expected = &weights.params.names()[i];
            if name != expected {
                return Err(corrupt(format!("parameter {i} is '{name}', expected '{expected}'")));
            }
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if shape != weights.params.tensors()[i].shape() {
                return Err(corrupt(format!("parameter '{name}' has shape {shape:?}")));
            }
            let numel = shape.iter().product();
            for dst in [&mut ws, &mut ms, &mut vs] {
                dst.push(Tensor::new(&shape, r.f32s(numel)?)?);
            }
        }
        if r.pos != buf.len() {
            return Err(corrupt("trailing bytes"));
        }
        weights.params.set_all(ws)?;
        Ok(Self {
            train: config.train,
            weights,
            adam: AdamState { m: ms, v: vs, step: adam_step },
            step,
            epoch,
            val_accuracy,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Load and require the stored configuration to hash like `expected`.
    pub fn load_matching(path: &Path, expected: &CheckpointConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.config().hash() != expected.hash() {
            return Err(corrupt("config hash mismatch: checkpoint was produced under a different configuration"));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{MapSpec, Roster};
    use crate::rng::SeededRng;

    fn tiny() -> Checkpoint {
        let cfg = ModelConfig { n_layers: 1, d_model: 8, n_heads: 2, image_size: 16, event_dim: 4, ..ModelConfig::desk() };
        let vocab = EventVocab::new(&Roster::default(), &MapSpec::split6());
        let mut rng = SeededRng::new(3);
        let weights = ModelWeights::init(&cfg, &vocab, &mut rng).unwrap();
        let mut adam = AdamState::zeros_like(weights.params.tensors());
        for t in adam.m.iter_mut().chain(adam.v.iter_mut()) {
            for v in t.data_mut() {
                *v = rng.uniform();
            }
        }
        adam.step = 17;
        Checkpoint { train: TrainConfig::default(), weights, adam, step: 19, epoch: 4, val_accuracy: 0.625, rng: rng.state() }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let bytes = tiny().to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
        assert_eq!((loaded.step, loaded.adam.step, loaded.epoch, loaded.val_accuracy), (19, 17, 4, 0.625));
        assert_eq!(loaded.rng, tiny().rng);
    }

    #[test]
    fn weights_round_trip_through_f32() {
        let ck = tiny();
        let loaded = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        for (a, b) in ck.weights.params.tensors().iter().zip(loaded.weights.params.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x as f32, *y as f32);
                assert_eq!(*y, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn rejects_tampered_config_and_other_configs() {
        let ck = tiny();
        let mut bytes = ck.to_bytes();
        let i = bytes.windows(6).position(|w| w == b"lr_max").unwrap();
        bytes[i] = b'L';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(m)) if m.contains("hash")));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        ck.save(&path).unwrap();
        let mut other = ck.config();
        other.train.seed += 1;
        assert!(Checkpoint::load_matching(&path, &ck.config()).is_ok());
        assert!(matches!(Checkpoint::load_matching(&path, &other), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = tiny().to_bytes();
        assert!(Checkpoint::from_bytes(b"VROC2xxxx").is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
