//! Checkpoint files: a plain-text manifest followed by little-endian f32 data.
//!
//! ```text
//! omega-seg-checkpoint 1
//! meta <key> <value>
//! tensor <name> <d0,d1,...> <byte offset> <trainable 0|1>
//! end
//! <binary payload>
//! ```
//!
//! Byte offsets are relative to the first byte after the `end` line.

use std::io::{BufRead, Write};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::params::ParamStore;

const MAGIC: &str = "omega-seg-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: IndexMap<String, String>,
    pub params: ParamStore<T>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<T: Scalar, W: Write>(
    mut out: W,
    params: &ParamStore<T>,
    meta: &IndexMap<String, String>,
) -> Result<()> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    for (k, v) in meta {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(bad(format!("invalid metadata entry {k:?}")));
        }
        header.push_str(&format!("meta {k} {v}\n"));
    }
    let mut offset = 0usize;
    for (name, value, trainable) in params.iter() {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(bad(format!("invalid tensor name {name:?}")));
        }
        let dims: Vec<String> = value.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!(
            "tensor {name} {} {offset} {}\n",
            dims.join(","),
            u8::from(trainable)
        ));
        offset += value.len() * 4;
    }
    header.push_str("end\n");
    out.write_all(header.as_bytes())?;
    let mut payload = Vec::with_capacity(offset);
    for (_, value, _) in params.iter() {
        for &v in value.data() {
            let f = v.to_f32().ok_or_else(|| bad("value not representable as f32"))?;
            payload.extend_from_slice(&f.to_le_bytes());
        }
    }
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    trainable: bool,
}

pub fn read_checkpoint<T: Scalar, R: BufRead>(mut input: R) -> Result<Checkpoint<T>> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(bad("missing checkpoint magic line"));
    }
    let mut meta = IndexMap::new();
    let mut entries = Vec::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(bad("manifest ended without `end`"));
        }
        let text = line.trim_end_matches('\n');
        if text == "end" {
            break;
        }
        let mut parts = text.splitn(2, ' ');
        match (parts.next(), parts.next()) {
            (Some("meta"), Some(rest)) => {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
            }
            (Some("tensor"), Some(rest)) => {
                let f: Vec<&str> = rest.split(' ').collect();
                if f.len() != 4 {
                    return Err(bad(format!("malformed tensor line {text:?}")));
                }
                let shape = f[1]
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("bad shape in {text:?}")))?;
                let offset = f[2].parse().map_err(|_| bad(format!("bad offset in {text:?}")))?;
                entries.push(ManifestEntry {
                    name: f[0].to_string(),
                    shape,
                    offset,
                    trainable: f[3] == "1",
                });
            }
            _ => return Err(bad(format!("unrecognized manifest line {text:?}"))),
        }
    }
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    let mut params = ParamStore::new();
    for e in entries {
        let len: usize = e.shape.iter().product();
        let end = e.offset + 4 * len;
        if end > payload.len() {
            return Err(bad(format!("tensor {} extends past end of file", e.name)));
        }
        let data = payload[e.offset..end]
            .chunks_exact(4)
            .map(|b| T::from_f32(f32::from_le_bytes([b[0], b[1], b[2], b[3]])).expect("f32 converts"))
            .collect();
        params.insert(e.name, Tensor::new(&e.shape, data)?, e.trainable)?;
    }
    Ok(Checkpoint { meta, params })
}
