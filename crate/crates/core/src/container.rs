//! Single-file tensor container shared by model files, silent-reference
//! caches and activation dumps.
//!
//! Layout: `b"TFSH"`, `u32` version, `u32` header length, UTF-8 JSON header,
//! then raw little-endian `f32` data, row-major. Tensor offsets in the
//! header are byte offsets from the start of the data section.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TFSH";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name}: dims {dims:?} do not match {} elements",
                data.len()
            )));
        }
        Ok(Self { name, dims, data })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dims: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fingerprint: Option<String>,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub config: Value,
    pub fingerprint: Option<String>,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn new(kind: impl Into<String>, config: Value) -> Self {
        Self {
            kind: kind.into(),
            config,
            fingerprint: None,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, tensor: Tensor) {
        self.tensors.push(tensor);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!(
                "expected a {kind} file, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut offset = 0u64;
        let tensors = self
            .tensors
            .iter()
            .map(|t| {
                let e = ManifestEntry {
                    name: t.name.clone(),
                    dims: t.dims.clone(),
                    offset,
                };
                offset += 4 * t.data.len() as u64;
                e
            })
            .collect();
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            fingerprint: self.fingerprint.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let header_len = u32::try_from(json.len())
            .map_err(|_| Error::Format("header exceeds 4 GiB".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&header_len.to_le_bytes())?;
        w.write_all(&json)?;
        for t in &self.tensors {
            let mut bytes = Vec::with_capacity(4 * t.data.len());
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;

        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.dims.iter().product();
            let start = e.offset as usize;
            let end = start + 4 * n;
            if end > data.len() {
                return Err(Error::Format(format!(
                    "tensor {} runs past end of data ({end} > {})",
                    e.name,
                    data.len()
                )));
            }
            let values = data[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor::new(e.name, e.dims, values)?);
        }
        Ok(Self {
            kind: header.kind,
            config: header.config,
            fingerprint: header.fingerprint,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Container {
        let mut c = Container::new("test", json!({"a": 1, "b": [1.5, 2.0]}));
        c.fingerprint = Some("abc".into());
        c.push(Tensor::new("x", vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, f32::MIN_POSITIVE, 7.0]).unwrap());
        c.push(Tensor::new("y", vec![1], vec![42.0]).unwrap());
        c
    }

    #[test]
    fn round_trip_bytes() {
        let c = sample();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TFSH");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        let back = Container::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.tensor("y").unwrap().data, vec![42.0]);
        assert!(back.tensor("z").is_err());
    }

    #[test]
    fn data_section_is_little_endian_f32() {
        let c = sample();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let header_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let data = &buf[12 + header_len..];
        assert_eq!(data.len(), 4 * 7);
        assert_eq!(&data[4..8], &(-2.0f32).to_le_bytes());
        let header: serde_json::Value = serde_json::from_slice(&buf[12..12 + header_len]).unwrap();
        assert_eq!(header["tensors"][1]["offset"], 24);
        assert_eq!(header["tensors"][0]["dims"], json!([2, 3]));
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Container::read_from(bad.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 4];
        assert!(Container::read_from(truncated).is_err());
        let mut wrong_version = buf.clone();
        wrong_version[4] = 9;
        assert!(Container::read_from(wrong_version.as_slice()).is_err());
    }

    #[test]
    fn tensor_dims_checked() {
        assert!(Tensor::new("bad", vec![2, 2], vec![0.0; 3]).is_err());
    }
}
