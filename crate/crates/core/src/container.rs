//! Single-file container: a text header of `key = value` entries and a section
//! table, followed by little-endian f64 sections stored row-major.
//!
//! ```text
//! poddl-model 1.0
//! seed = 7
//! section 0.pod.modes 3072 40
//! payload_sha256 = 5e3c...
//! end
//! <binary payload>
//! ```

use std::collections::HashMap;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const END_MARKER: &[u8] = b"\nend\n";

#[derive(Debug, Clone, Default)]
pub struct Container {
    entries: Vec<(String, String)>,
    sections: Vec<(String, DMatrix<f64>)>,
    entry_index: HashMap<String, usize>,
    section_index: HashMap<String, usize>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        self.entry_index.insert(key.clone(), self.entries.len());
        self.entries.push((key, value.to_string()));
    }

    pub fn put(&mut self, name: impl Into<String>, m: DMatrix<f64>) {
        let name = name.into();
        debug_assert!(!name.contains(char::is_whitespace));
        self.section_index.insert(name.clone(), self.sections.len());
        self.sections.push((name, m));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entry_index
            .get(key)
            .map(|&i| self.entries[i].1.as_str())
            .ok_or_else(|| Error::ModelFormat(format!("missing header entry `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::ModelFormat(format!("cannot parse `{key}` from `{v}`")))
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::ModelFormat(format!("bad entry `{}` in `{key}`", s.trim())))
            })
            .collect()
    }

    pub fn section(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.section_index
            .get(name)
            .map(|&i| &self.sections[i].1)
            .ok_or_else(|| Error::ModelFormat(format!("missing section `{name}`")))
    }

    pub fn to_bytes(&self, magic: &str, version: (u32, u32)) -> Vec<u8> {
        let mut payload = Vec::new();
        for (_, m) in &self.sections {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    payload.extend_from_slice(&m[(r, c)].to_le_bytes());
                }
            }
        }
        let mut head = format!("{magic} {}.{}\n", version.0, version.1);
        for (k, v) in &self.entries {
            head.push_str(&format!("{k} = {v}\n"));
        }
        for (name, m) in &self.sections {
            head.push_str(&format!("section {name} {} {}\n", m.nrows(), m.ncols()));
        }
        head.push_str(&format!("payload_sha256 = {}", hex::encode(Sha256::digest(&payload))));
        let mut out = head.into_bytes();
        out.extend_from_slice(END_MARKER);
        out.extend_from_slice(&payload);
        out
    }

    /// Parse and verify a container written by [`Container::to_bytes`].
    /// Files whose major version differs from `major` are rejected.
    pub fn from_bytes(bytes: &[u8], magic: &str, major: u32) -> Result<Self> {
        let split = bytes
            .windows(END_MARKER.len())
            .position(|w| w == END_MARKER)
            .ok_or_else(|| Error::ModelFormat("header end marker not found (truncated file?)".into()))?;
        let head = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::ModelFormat("header is not valid UTF-8".into()))?;
        let payload = &bytes[split + END_MARKER.len()..];

        let mut lines = head.lines();
        let first = lines.next().unwrap_or_default();
        let version = first
            .strip_prefix(magic)
            .map(str::trim)
            .ok_or_else(|| Error::ModelFormat(format!("not a `{magic}` file")))?;
        let found_major: u32 = version
            .split('.')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ModelFormat(format!("bad version `{version}`")))?;
        if found_major != major {
            return Err(Error::Version {
                found: version.to_string(),
                expected: major,
            });
        }

        let mut c = Container::new();
        let mut shapes = Vec::new();
        let mut digest = None;
        for line in lines {
            if let Some(rest) = line.strip_prefix("section ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let dims = match parts.as_slice() {
                    [name, r, c] => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()).map(|d| (*name, d)),
                    _ => None,
                };
                let (name, (r, cols)) = dims.ok_or_else(|| Error::ModelFormat(format!("bad section line `{line}`")))?;
                shapes.push((name.to_string(), r, cols));
            } else if let Some((k, v)) = line.split_once('=') {
                let (k, v) = (k.trim(), v.trim());
                if k == "payload_sha256" {
                    digest = Some(v.to_string());
                } else {
                    c.set(k, v);
                }
            } else if !line.trim().is_empty() {
                return Err(Error::ModelFormat(format!("unrecognised header line `{line}`")));
            }
        }

        let expected_len: usize = shapes.iter().map(|(_, r, c)| r * c * 8).sum();
        if payload.len() != expected_len {
            return Err(Error::ModelFormat(format!(
                "payload holds {} bytes, section table declares {expected_len}",
                payload.len()
            )));
        }
        let digest = digest.ok_or_else(|| Error::ModelFormat("missing payload digest".into()))?;
        let actual = hex::encode(Sha256::digest(payload));
        if actual != digest {
            return Err(Error::Digest(format!("payload hashes to {actual}, header records {digest}")));
        }

        let mut offset = 0;
        for (name, r, cols) in shapes {
            let n = r * cols;
            let vals: Vec<f64> = payload[offset..offset + 8 * n]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            offset += 8 * n;
            c.put(name, DMatrix::from_row_slice(r, cols, &vals));
        }
        Ok(c)
    }
}
