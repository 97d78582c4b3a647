//! Network checkpoint file.
//!
//! Layout: `u32` little-endian header length, the UTF-8 JSON header
//! `{"layer_sizes": [...], "activations": [...], "param_count": n}`, then
//! `param_count` little-endian `f32` values. Parameters are narrowed to
//! `f32` on write; a file read back and rewritten is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Mlp, NnError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    param_count: usize,
}

pub fn write_checkpoint<W: Write>(net: &Mlp, mut w: W) -> Result<()> {
    let header = Header {
        layer_sizes: net.layer_sizes().to_vec(),
        activations: net.activations().to_vec(),
        param_count: net.params().len(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for &p in net.params() {
        w.write_all(&(p as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Mlp> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let expected = super::mlp::param_count(&header.layer_sizes);
    if expected != header.param_count {
        return Err(NnError::Checkpoint(format!(
            "header declares {} params, layer sizes imply {}",
            header.param_count, expected
        )));
    }
    let mut raw = vec![0u8; header.param_count * 4];
    r.read_exact(&mut raw)?;
    let params = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Mlp::from_parts(&header.layer_sizes, &header.activations, params)
}

pub fn write_checkpoint_file(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn read_checkpoint_file(path: impl AsRef<Path>) -> Result<Mlp> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
