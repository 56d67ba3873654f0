//! MCW1 multichannel waveform container.
//!
//! Layout: magic `MCW1`, u32 LE channel count, u32 LE sample rate (Hz),
//! u64 LE frames per channel, then `frames * channels` LE f32 values,
//! channel-interleaved.

use std::io::{Read, Write};
use std::path::Path;

use super::{read_exact, read_file, write_file};
use crate::error::{Error, Result};
use crate::sigproc::Waveform;

pub const MAGIC: &[u8; 4] = b"MCW1";
const FMT: &str = "MCW1";

/// Samples are narrowed to f32; the sample rate is rounded to whole Hz.
pub fn write(w: &mut dyn Write, wave: &Waveform) -> Result<()> {
    let rate = wave.sample_rate_hz.round();
    if !(1.0..=u32::MAX as f64).contains(&rate) {
        return Err(Error::Input(format!(
            "sample rate {rate} not representable"
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(wave.channels() as u32).to_le_bytes())?;
    w.write_all(&(rate as u32).to_le_bytes())?;
    let frames = wave.frames();
    w.write_all(&(frames as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(frames * wave.channels() * 4);
    for t in 0..frames {
        for ch in &wave.samples {
            buf.extend_from_slice(&(ch[t] as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read(r: &mut dyn Read) -> Result<Waveform> {
    let mut head = [0u8; 20];
    read_exact(r, &mut head, FMT)?;
    if &head[0..4] != MAGIC {
        return Err(Error::format(FMT, "bad magic"));
    }
    let channels = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let rate = u32::from_le_bytes(head[8..12].try_into().unwrap());
    let frames = u64::from_le_bytes(head[12..20].try_into().unwrap());
    if channels == 0 || rate == 0 {
        return Err(Error::format(FMT, "zero channels or sample rate"));
    }
    let total = (frames as u128) * channels as u128 * 4;
    if total > (1u128 << 34) {
        return Err(Error::format(FMT, "payload size implausible"));
    }
    let frames = frames as usize;
    let mut payload = vec![0u8; total as usize];
    read_exact(r, &mut payload, FMT)?;
    let mut samples = vec![Vec::with_capacity(frames); channels];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        samples[k % channels].push(v as f64);
    }
    Waveform::new(samples, rate as f64)
}

pub fn save(path: &Path, wave: &Waveform) -> Result<()> {
    write_file(path, |w| write(w, wave))
}

pub fn load(path: &Path) -> Result<Waveform> {
    read_file(path, read)
}
