//! CLV1 checkpoint container.
//!
//! Layout: magic `CLV1`, u32 LE blob count; per blob a u32 LE name length,
//! the UTF-8 name, u32 LE rank, rank × u32 LE dims, then LE f64 values.
//! Trailer: u64 LE RNG seed, u32 LE epoch.

use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::formats::{read_exact, read_file, write_file};

pub const MAGIC: &[u8; 4] = b"CLV1";
const FMT: &str = "CLV1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub blobs: Vec<(String, Tensor)>,
    pub seed: u64,
    pub epoch: u32,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.blobs.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn write(w: &mut dyn Write, ck: &Checkpoint) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(ck.blobs.len() as u32).to_le_bytes())?;
    for (name, t) in &ck.blobs {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 8);
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.write_all(&ck.seed.to_le_bytes())?;
    w.write_all(&ck.epoch.to_le_bytes())?;
    Ok(())
}

fn u32_at(r: &mut dyn Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, FMT)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read(r: &mut dyn Read) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, FMT)?;
    if &magic != MAGIC {
        return Err(Error::format(FMT, "bad magic"));
    }
    let count = u32_at(r)?;
    let mut blobs = Vec::new();
    for _ in 0..count {
        let len = u32_at(r)? as usize;
        if len > 4096 {
            return Err(Error::format(FMT, "blob name too long"));
        }
        let mut name = vec![0u8; len];
        read_exact(r, &mut name, FMT)?;
        let name =
            String::from_utf8(name).map_err(|_| Error::format(FMT, "blob name is not UTF-8"))?;
        let rank = u32_at(r)? as usize;
        if rank > 8 {
            return Err(Error::format(FMT, format!("rank {rank} for {name}")));
        }
        let shape = (0..rank)
            .map(|_| u32_at(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n
            .filter(|&n| n <= 1 << 30)
            .ok_or_else(|| Error::format(FMT, "blob too large"))?;
        let mut raw = vec![0u8; n * 8];
        read_exact(r, &mut raw, FMT)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        blobs.push((name, Tensor::new(shape, data)?));
    }
    let mut tail = [0u8; 12];
    read_exact(r, &mut tail, FMT)?;
    Ok(Checkpoint {
        blobs,
        seed: u64::from_le_bytes(tail[0..8].try_into().unwrap()),
        epoch: u32::from_le_bytes(tail[8..12].try_into().unwrap()),
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_file(path, |w| write(w, ck))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    read_file(path, read)
}
