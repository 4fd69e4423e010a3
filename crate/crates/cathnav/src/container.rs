//! Versioned binary tensor container used for checkpoints and encoder
//! weights: magic, JSON header describing named tensors, then one f64
//! little-endian blob. Tensor order in the header follows map insertion
//! order, so a round trip preserves it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TensorMap;

const MAGIC: &[u8; 4] = b"CNAV";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the blob, in f64 elements.
    offset: u64,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn write_container(path: &Path, tensors: &TensorMap, meta: serde_json::Value) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors.iter() {
        let len = t.len() as u64;
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
            len,
        });
        offset += len;
    }
    let header = Header {
        version: CONTAINER_VERSION,
        tensors: entries,
        meta,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(CONTAINER_VERSION)?;
    w.write_u64::<LittleEndian>(header_bytes.len() as u64)?;
    w.write_all(&header_bytes)?;
    for (_, t) in tensors.iter() {
        // Row-major element order regardless of the array's memory layout.
        for &v in t.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<(TensorMap, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Container(format!(
            "{}: bad magic {:?}",
            path.display(),
            magic
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CONTAINER_VERSION {
        return Err(Error::Container(format!(
            "{}: unsupported container version {version}",
            path.display()
        )));
    }
    let header_len = r.read_u64::<LittleEndian>()? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;

    let mut map = TensorMap::new();
    let mut cursor = 0u64;
    for e in &header.tensors {
        if e.offset != cursor {
            return Err(Error::Container(format!(
                "{}: non-contiguous tensor {} (offset {} expected {})",
                path.display(),
                e.name,
                e.offset,
                cursor
            )));
        }
        let expected: usize = e.shape.iter().product();
        if expected as u64 != e.len {
            return Err(Error::Container(format!(
                "{}: tensor {} shape/len mismatch",
                path.display(),
                e.name
            )));
        }
        let mut data = vec![0f64; expected];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        let arr = ArrayD::from_shape_vec(e.shape.clone(), data)
            .map_err(|err| Error::Container(format!("tensor {}: {err}", e.name)))?;
        map.insert(&e.name, arr);
        cursor += e.len;
    }
    Ok((map, header.meta))
}
