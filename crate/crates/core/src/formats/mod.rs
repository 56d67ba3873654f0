//! Binary file formats: multichannel waveforms (MCW1), float maps (PFM) and
//! 8-bit masks (PGM). Model checkpoints live in [`crate::nn::checkpoint`].

pub mod mcw;
pub mod pfm;
pub mod pgm;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file<T>(path: &Path, f: impl FnOnce(&mut dyn Read) -> Result<T>) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::from(e).at(path))?;
    let mut r = BufReader::new(file);
    f(&mut r).map_err(|e| e.at(path))
}

pub(crate) fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::from(e).at(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::from(e).at(path))
}

/// Read exactly `buf.len()` bytes, reporting truncation as a format error.
pub(crate) fn read_exact(r: &mut dyn Read, buf: &mut [u8], format: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(format, "truncated payload")
        } else {
            Error::Io(e)
        }
    })
}

/// Parse `count` whitespace-separated ASCII header tokens, skipping `#`
/// comments, and consume exactly one whitespace byte after the last token.
pub(crate) fn header_tokens(
    r: &mut dyn Read,
    count: usize,
    format: &'static str,
) -> Result<Vec<String>> {
    let mut tokens = Vec::with_capacity(count);
    let mut cur = String::new();
    let mut byte = [0u8; 1];
    let mut in_comment = false;
    loop {
        read_exact(r, &mut byte, format)?;
        let c = byte[0];
        if in_comment {
            if c == b'\n' || c == b'\r' {
                in_comment = false;
            }
            continue;
        }
        if c == b'#' && cur.is_empty() {
            in_comment = true;
        } else if c.is_ascii_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
                if tokens.len() == count {
                    return Ok(tokens);
                }
            }
        } else if c.is_ascii_graphic() {
            cur.push(c as char);
            if cur.len() > 32 {
                return Err(Error::format(format, "header token too long"));
            }
        } else {
            return Err(Error::format(format, "non-ASCII byte in header"));
        }
    }
}
