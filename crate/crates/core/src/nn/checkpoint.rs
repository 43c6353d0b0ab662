//! Named-tensor checkpoints.
//!
//! Binary layout (little endian), version 1:
//!
//! ```text
//! b"POCK" | u32 version | u64 count | count × entry
//! entry = u32 name_len | name (utf-8) | u32 rank | rank × u64 dim | f64 data...
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a binary round trip is exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::Parameters;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"POCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    version: u32,
    tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Contract(format!("checkpoint has no tensor `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn insert_params<P: Parameters + ?Sized>(&mut self, prefix: &str, p: &P) {
        for (i, t) in p.params().into_iter().enumerate() {
            self.insert(format!("{prefix}.{i}"), t.clone());
        }
    }

    /// Copies stored tensors into `p`, checking every shape first.
    pub fn load_params<P: Parameters + ?Sized>(&self, prefix: &str, p: &mut P) -> Result<()> {
        let mut dst = p.params_mut();
        let src = (0..dst.len())
            .map(|i| self.get(&format!("{prefix}.{i}")))
            .collect::<Result<Vec<_>>>()?;
        for (d, s) in dst.iter().zip(&src) {
            if !d.same_shape(s) {
                return Err(Error::Dimension(format!(
                    "checkpoint `{prefix}` tensor {:?} vs model {:?}",
                    s.shape(),
                    d.shape()
                )));
            }
        }
        for (d, s) in dst.iter_mut().zip(src) {
            d.data_mut().copy_from_slice(s.data());
        }
        Ok(())
    }

    pub fn insert_adam(&mut self, prefix: &str, opt: &Adam) {
        // The optimizer state is serde-friendly; tuck it into tensors so the
        // binary format stays single-typed.
        self.insert(
            format!("{prefix}.hyper"),
            Tensor::vector(vec![opt.lr, opt.beta1, opt.beta2, opt.eps, opt.steps() as f64]),
        );
        for (i, m) in opt.first_moments().iter().enumerate() {
            self.insert(format!("{prefix}.m.{i}"), m.clone());
        }
        for (i, v) in opt.second_moments().iter().enumerate() {
            self.insert(format!("{prefix}.v.{i}"), v.clone());
        }
    }

    pub fn load_adam(&self, prefix: &str, opt: &mut Adam) -> Result<()> {
        let hyper = self.get(&format!("{prefix}.hyper"))?.data().to_vec();
        if hyper.len() != 5 {
            return Err(Error::Contract(format!("bad `{prefix}.hyper` record")));
        }
        let n = opt.first_moments().len();
        let fetch = |kind: &str| -> Result<Vec<Tensor>> {
            (0..n)
                .map(|i| self.get(&format!("{prefix}.{kind}.{i}")).cloned())
                .collect()
        };
        let m = fetch("m")?;
        let v = fetch("v")?;
        opt.restore(hyper[0], hyper[1], hyper[2], hyper[3], hyper[4] as u64, m, v)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_bits().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: "<checkpoint>".into(),
            reason: reason.to_string(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("missing POCK magic"));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = read_u64(&mut r)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not utf-8"))?;
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let data = (0..len)
                .map(|_| read_u64(&mut r).map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Ok(Self { version, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
