//! Flat binary parameter files.
//!
//! Layout (little-endian): `u32` tensor count, then per tensor `u32` name
//! length, UTF-8 name, `u32` rank, `u32` per dimension, `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use super::{ParamStore, Tensor, TensorError};

pub fn write_params(store: &ParamStore, mut w: impl Write) -> Result<(), TensorError> {
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.value.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params(mut r: impl Read) -> Result<Vec<(String, Tensor)>, TensorError> {
    fn u32_of(r: &mut impl Read) -> Result<u32, TensorError> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))?;
        Ok(u32::from_le_bytes(b))
    }
    let count = u32_of(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = u32_of(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| TensorError::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| TensorError::Checkpoint("name is not UTF-8".into()))?;
        let rank = u32_of(&mut r)? as usize;
        if rank > 4 {
            return Err(TensorError::Checkpoint(format!("{name}: rank {rank} > 4")));
        }
        let shape = (0..rank)
            .map(|_| u32_of(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)
            .map_err(|e| TensorError::Checkpoint(format!("{name}: truncated data: {e}")))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(&shape, data)?));
    }
    Ok(out)
}

pub fn save_params(store: &ParamStore, path: &Path) -> Result<(), TensorError> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_params(store, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<Vec<(String, Tensor)>, TensorError> {
    let f = std::fs::File::open(path)?;
    read_params(std::io::BufReader::new(f))
}
