//! Self-describing tensor container shared by checkpoints and datasets.
//!
//! Layout:
//!
//! ```text
//! <MAGIC> v<version>\n
//! meta <key> <value...>\n          (zero or more)
//! tensor <name> <offset> <dims>\n  (dims comma-separated, `-` for a scalar)
//! end\n
//! <payload: little-endian f64, offsets relative to payload start>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: IndexMap<String, String>,
    pub tensors: IndexMap<String, Tensor>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("missing meta key `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("bad value `{raw}` for meta key `{key}`")))
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
    }

    pub fn encode(&self, magic: &str, version: u32) -> Vec<u8> {
        let mut header = format!("{magic} v{version}\n");
        for (k, v) in &self.meta {
            debug_assert!(!k.contains(char::is_whitespace) && !v.contains('\n'));
            header.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            debug_assert!(!name.contains(char::is_whitespace));
            let dims = if t.is_scalar() {
                "-".to_string()
            } else {
                t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
            };
            header.push_str(&format!("tensor {name} {offset} {dims}\n"));
            offset += t.numel() * 8;
        }
        header.push_str("end\n");

        let mut out = Vec::with_capacity(header.len() + offset);
        out.extend_from_slice(header.as_bytes());
        for t in self.tensors.values() {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], magic: &str, version: u32) -> Result<Self> {
        let mut pos = 0usize;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Truncated("header ended early".into()))?;
            let line = std::str::from_utf8(&rest[..nl])
                .map_err(|_| Error::Format("header is not UTF-8".into()))?;
            pos += nl + 1;
            Ok(line)
        };

        let expected = format!("{magic} v{version}");
        let first = next_line().map_err(|_| Error::Version {
            expected: expected.clone(),
            found: "<unreadable>".into(),
        })?;
        if first != expected {
            return Err(Error::Version {
                expected,
                found: first.chars().take(40).collect(),
            });
        }

        let mut meta = IndexMap::new();
        let mut directory = Vec::new();
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            let mut parts = line.splitn(2, ' ');
            match (parts.next(), parts.next()) {
                (Some("meta"), Some(rest)) => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                (Some("tensor"), Some(rest)) => {
                    let fields: Vec<&str> = rest.split(' ').collect();
                    if fields.len() != 3 {
                        return Err(Error::Format(format!("bad tensor entry `{line}`")));
                    }
                    let offset: usize = fields[1]
                        .parse()
                        .map_err(|_| Error::Format(format!("bad offset in `{line}`")))?;
                    let shape: Vec<usize> = if fields[2] == "-" {
                        Vec::new()
                    } else {
                        fields[2]
                            .split(',')
                            .map(|d| d.parse().map_err(|_| Error::Format(format!("bad dims in `{line}`"))))
                            .collect::<Result<_>>()?
                    };
                    directory.push((fields[0].to_string(), offset, shape));
                }
                _ => return Err(Error::Format(format!("unrecognised header line `{line}`"))),
            }
        }

        let payload = &bytes[pos..];
        let mut tensors = IndexMap::new();
        for (name, offset, shape) in directory {
            let numel: usize = shape.iter().product();
            let end = offset + numel * 8;
            if end > payload.len() {
                return Err(Error::Truncated(format!(
                    "tensor `{name}` needs bytes {offset}..{end}, payload has {}",
                    payload.len()
                )));
            }
            let data = payload[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Ok(Container { meta, tensors })
    }

    pub fn write(&self, path: &Path, magic: &str, version: u32) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.encode(magic, version))?;
        Ok(())
    }

    pub fn read(path: &Path, magic: &str, version: u32) -> Result<Self> {
        Self::decode(&fs::read(path)?, magic, version)
    }
}
