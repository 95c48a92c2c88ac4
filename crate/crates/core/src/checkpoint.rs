//! Parameter checkpoints.
//!
//! A text header naming every tensor and its shape, then the values of all
//! tensors in header order as little-endian `f64`:
//!
//! ```text
//! rtacm-params 1
//! tensors 2
//! lstm0.w_ih 8,24
//! head.b 1,3
//! end
//! <raw bytes>
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::{ModelParams, Tensor};
use crate::error::{Error, Result};

const MAGIC: &str = "rtacm-params 1";

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut header = format!("{MAGIC}\ntensors {}\n", params.len());
    for (name, t) in params.iter() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("{name} {}\n", dims.join(",")));
    }
    header.push_str("end\n");
    let mut out = header.into_bytes();
    for (_, t) in params.iter() {
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decodes a checkpoint. Every tensor comes back trainable.
pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header".into()))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not utf-8".into()))
    };
    if next_line()? != MAGIC {
        return Err(bad("not an rtacm parameter file".into()));
    }
    let count: usize = next_line()?
        .strip_prefix("tensors ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("missing tensor count".into()))?;
    let mut layout = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next_line()?;
        let (name, dims) = line
            .rsplit_once(' ')
            .ok_or_else(|| bad(format!("bad tensor line `{line}`")))?;
        let shape = dims
            .split(',')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(format!("bad shape in `{line}`")))?;
        layout.push((name.to_string(), shape));
    }
    if next_line()? != "end" {
        return Err(bad("header not terminated".into()));
    }
    let mut data = bytes[pos..].chunks_exact(8);
    let mut params = ModelParams::new();
    for (name, shape) in layout {
        let n: usize = shape.iter().product();
        let values: Vec<f64> = data
            .by_ref()
            .take(n)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.len() != n {
            return Err(bad(format!("truncated data for `{name}`")));
        }
        let t = Tensor::new(shape, values).map_err(|e| bad(format!("`{name}`: {e}")))?;
        params.push(name, t.with_grad(true))?;
    }
    if data.next().is_some() || !data.remainder().is_empty() {
        return Err(bad("trailing bytes after the last tensor".into()));
    }
    Ok(params)
}

pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
