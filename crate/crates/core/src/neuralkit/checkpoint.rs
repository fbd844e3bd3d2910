//! Versioned binary container shared by model, cluster-model and embedding files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `CTEB`                              |
//! | 4     | format version (`u32`, currently 1)       |
//! | 4     | header length `n` (`u32`)                 |
//! | n     | UTF-8 JSON header                         |
//! | rest  | `f32` payload, tensors back to back       |
//!
//! The header is `{"kind", "seed", "meta", "tensors": [{"name", "shape"}]}`;
//! payload order follows `tensors`.

use super::param::Module;
use crate::error::{CteError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"CTEB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub seed: u64,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new<T: Scalar>(name: impl Into<String>, shape: Vec<usize>, data: &[T]) -> Self {
        Self { name: name.into(), shape, data: data.iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect() }
    }

    pub fn to_scalars<T: Scalar>(&self) -> Vec<T> {
        self.data.iter().map(|&v| T::lit(v as f64)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub seed: u64,
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn new(kind: impl Into<String>, seed: u64, meta: serde_json::Value) -> Self {
        Self { kind: kind.into(), seed, meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, t: NamedTensor) {
        self.tensors.push(t);
    }

    /// Appends every parameter of `module` in its canonical order.
    pub fn push_module<T: Scalar, M: Module<T> + ?Sized>(&mut self, module: &M) {
        for p in module.params() {
            self.tensors.push(NamedTensor::new(p.name.clone(), p.shape.clone(), &p.value));
        }
    }

    /// Restores `module`'s parameters; names and shapes must match exactly.
    pub fn load_module<T: Scalar, M: Module<T> + ?Sized>(&self, module: &mut M) -> Result<()> {
        for p in module.params_mut() {
            let t = self.get(&p.name)?;
            if t.shape != p.shape {
                return Err(CteError::Checkpoint(format!("shape mismatch for {}: file {:?}, model {:?}", p.name, t.shape, p.shape)));
            }
            p.value = t.to_scalars();
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CteError::Checkpoint(format!("tensor {name} missing from container '{}'", self.kind)))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            seed: self.seed,
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.tensors.iter().map(|t| t.data.len() * 4).sum());
        for t in &self.tensors {
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        if &word != MAGIC {
            return Err(CteError::Checkpoint("bad magic".into()));
        }
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(CteError::Checkpoint(format!("unsupported format version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(NamedTensor { name: entry.name, shape: entry.shape, data });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(CteError::Checkpoint(format!("{} trailing bytes after payload", rest.len())));
        }
        Ok(Self { kind: header.kind, seed: header.seed, meta: header.meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        crate::io::write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralkit::Dense;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn module_round_trip_through_container() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dense::<f32>::new("d", 4, 3, &mut rng);
        let mut c = Container::new("dense", 1, serde_json::json!({"lr": 1e-3}));
        c.push_module(&d);
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"CTEB");
        let back = Container::read_from(bytes.as_slice()).unwrap();
        let mut d2 = Dense::<f32>::new("d", 4, 3, &mut ChaCha8Rng::seed_from_u64(99));
        back.load_module(&mut d2).unwrap();
        assert_eq!(d, d2);
        assert_eq!(back.meta["lr"], 1e-3);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut c = Container::new("x", 0, serde_json::Value::Null);
        c.push(NamedTensor::new("t", vec![3], &[1.0f64, 2.0, 3.0]));
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        bytes.pop();
        assert!(Container::read_from(bytes.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_tensors_round_trip(data in proptest::collection::vec(-1e6f32..1e6, 0..64), seed in any::<u64>()) {
            let mut c = Container::new("p", seed, serde_json::json!({"n": data.len()}));
            c.push(NamedTensor { name: "a".into(), shape: vec![data.len()], data: data.clone() });
            let mut bytes = Vec::new();
            c.write_to(&mut bytes).unwrap();
            prop_assert_eq!(Container::read_from(bytes.as_slice()).unwrap(), c);
        }
    }
}
