//! Named parameter sets and their checkpoint file format.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! "XCK1"            magic
//! u32               manifest length in bytes
//! manifest          UTF-8 JSON {"kind", "meta", "params": [{"name", "shape"}]}
//! f32 × Σ numel     payloads in manifest order
//! ```

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"XCK1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: String,
    #[serde(default)]
    meta: serde_json::Value,
    params: Vec<ManifestEntry>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.names.push(name.into());
        self.tensors.push(t);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Leaves on `tape` for every tensor, trainable or constant.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        if trainable {
            tape.params(&self.tensors)
        } else {
            self.tensors.iter().map(|t| tape.input(t.clone())).collect()
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Seeded uniform initialization in `[−1/√fan_in, 1/√fan_in]`.
    pub fn push_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut impl Rng) {
        let bound = 1.0 / (fan_in as f32).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.push(name, Tensor::new(shape, data).expect("valid parameter shape"));
    }

    pub fn to_bytes(&self, kind: &str, meta: serde_json::Value) -> Result<Vec<u8>> {
        let manifest = Manifest {
            kind: kind.to_string(),
            meta,
            params: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| ManifestEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(8 + json.len() + 4 * self.numel());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parse a checkpoint, returning `(kind, meta, params)`.
    pub fn from_bytes(bytes: &[u8]) -> Result<(String, serde_json::Value, ParamSet)> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let mlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8 + mlen)
            .ok_or_else(|| Error::Corrupt("checkpoint manifest truncated".into()))?;
        let manifest: Manifest = serde_json::from_slice(body)?;
        let mut off = 8 + mlen;
        let mut set = ParamSet::default();
        for e in manifest.params {
            let n: usize = e.shape.iter().product();
            let raw = bytes
                .get(off..off + 4 * n)
                .ok_or_else(|| Error::Corrupt(format!("payload for `{}` truncated", e.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            set.push(e.name, Tensor::new(&e.shape, data)?);
            off += 4 * n;
        }
        if off != bytes.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after checkpoint payload",
                bytes.len() - off
            )));
        }
        Ok((manifest.kind, manifest.meta, set))
    }

    pub fn save(&self, path: &Path, kind: &str, meta: serde_json::Value) -> Result<()> {
        let bytes = self.to_bytes(kind, meta)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(String, serde_json::Value, ParamSet)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Load and check that the checkpoint kind and parameter layout match `template`.
    pub fn load_matching(path: &Path, kind: &str, template: &ParamSet) -> Result<ParamSet> {
        let (found, _, set) = Self::load(path)?;
        if found != kind {
            return Err(Error::Format(format!(
                "{}: expected a `{kind}` checkpoint, found `{found}`",
                path.display()
            )));
        }
        let same_layout = set.names == template.names
            && set
                .tensors
                .iter()
                .zip(&template.tensors)
                .all(|(a, b)| a.shape() == b.shape());
        if !same_layout {
            return Err(Error::Shape(format!(
                "{}: parameter layout does not match the `{kind}` architecture",
                path.display()
            )));
        }
        Ok(set)
    }
}
