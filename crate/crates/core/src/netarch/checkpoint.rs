//! Versioned binary container for named tensors plus a JSON metadata block.
//!
//! Layout (little endian):
//!
//! ```text
//! magic   8 bytes  "USADAPT\0"
//! version u32
//! hlen    u64      length of the JSON header
//! header  hlen     {"dtype": .., "meta": {..}, "tensors": [{"name": .., "shape": [..]}, ..]}
//! data             tensor values in header order
//! ```
//!
//! Writes go to a temporary sibling first and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::{Discriminator, DiscriminatorConfig, DiscriminatorRole, Generator, GeneratorConfig, ParamStore};

pub const MAGIC: &[u8; 8] = b"USADAPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    meta: Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorArchive<T> {
    pub meta: Value,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> TensorArchive<T> {
    pub fn new(meta: Value) -> Self {
        TensorArchive { meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            dtype: T::DTYPE.to_string(),
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|(n, t)| TensorEntry { name: n.clone(), shape: t.shape().to_vec() }).collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(header.len() + 20 + self.tensors.iter().map(|(_, t)| t.numel() * T::BYTES).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}, expected {FORMAT_VERSION}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("corrupt header: {e}")))?;
        if header.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("checkpoint holds {} values, expected {}", header.dtype, T::DTYPE)));
        }
        let mut pos = 20 + hlen;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let end = pos + n * T::BYTES;
            let raw = bytes.get(pos..end).ok_or_else(|| bad("truncated tensor data"))?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            tensors.push((entry.name, Tensor::from_vec(&entry.shape, data)?));
            pos = end;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(TensorArchive { meta: header.meta, tensors })
    }

    /// Atomic write: temporary file in the same directory, then rename.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file_name = path.file_name().ok_or_else(|| Error::Checkpoint(format!("invalid path {}", path.display())))?;
        let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
        {
            let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Appends every parameter of `store` under `prefix/`.
pub fn push_params<T: Scalar>(archive: &mut TensorArchive<T>, prefix: &str, store: &ParamStore<T>) {
    for p in store.iter() {
        archive.push(format!("{prefix}/{}", p.name), p.value.clone());
    }
}

/// Overwrites `store` from `prefix/` entries; every name and shape must match.
pub fn load_params<T: Scalar>(archive: &TensorArchive<T>, prefix: &str, store: &mut ParamStore<T>) -> Result<()> {
    let expected = store.len();
    let present = archive.tensors.iter().filter(|(n, _)| n.starts_with(&format!("{prefix}/"))).count();
    if present != expected {
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: checkpoint has {present} tensors for {prefix}, network has {expected}"
        )));
    }
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
    for name in names {
        let key = format!("{prefix}/{name}");
        let t = archive
            .get(&key)
            .ok_or_else(|| Error::Checkpoint(format!("architecture mismatch: missing tensor {key}")))?;
        let p = store.by_name_mut(&name).expect("name from store");
        if p.value.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: {key} has shape {:?}, network expects {:?}",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.clone();
    }
    Ok(())
}

fn meta_config<C: for<'de> Deserialize<'de>>(meta: &Value, key: &str) -> Result<C> {
    let v = meta.get(key).ok_or_else(|| Error::Checkpoint(format!("checkpoint metadata lacks `{key}`")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Checkpoint(format!("bad `{key}` metadata: {e}")))
}

/// Architecture block shared by every checkpoint kind.
pub fn architecture_meta(g: GeneratorConfig, d: DiscriminatorConfig) -> Value {
    serde_json::json!({ "generator": g, "discriminator": d })
}

/// Rebuilds the generator stored in a checkpoint. When `expected` is given the
/// stored architecture must equal it.
pub fn generator_from_archive<T: Scalar>(archive: &TensorArchive<T>, expected: Option<GeneratorConfig>) -> Result<Generator<T>> {
    let cfg: GeneratorConfig = meta_config(&archive.meta, "generator")?;
    if let Some(want) = expected {
        if want != cfg {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint generator is {cfg:?}, configuration requests {want:?}"
            )));
        }
    }
    let mut g = Generator::new(cfg, 0)?;
    load_params(archive, "g", g.params_mut())?;
    Ok(g)
}

pub fn discriminator_from_archive<T: Scalar>(
    archive: &TensorArchive<T>,
    role: DiscriminatorRole,
    expected: Option<DiscriminatorConfig>,
) -> Result<Discriminator<T>> {
    let cfg: DiscriminatorConfig = meta_config(&archive.meta, "discriminator")?;
    if let Some(want) = expected {
        if want != cfg {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint discriminator is {cfg:?}, configuration requests {want:?}"
            )));
        }
    }
    let mut d = Discriminator::new(role, cfg, 0)?;
    load_params(archive, role.key(), d.params_mut())?;
    Ok(d)
}

pub fn load_generator<T: Scalar>(path: impl AsRef<Path>, expected: Option<GeneratorConfig>) -> Result<Generator<T>> {
    generator_from_archive(&TensorArchive::read(path)?, expected)
}

/// Writes a generator-only checkpoint.
pub fn save_generator<T: Scalar>(path: impl AsRef<Path>, g: &Generator<T>) -> Result<()> {
    let mut archive = TensorArchive::new(serde_json::json!({ "generator": g.config() }));
    push_params(&mut archive, "g", g.params());
    archive.write(path)
}
