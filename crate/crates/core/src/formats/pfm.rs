//! Portable FloatMap (grayscale `Pf`). Rows are stored bottom-to-top.

use std::io::{Read, Write};
use std::path::Path;

use super::{header_tokens, read_exact, read_file, write_file};
use crate::error::{Error, Result};
use crate::image::Image;

const FMT: &str = "PFM";

/// Writes little-endian f32 with scale `-1.0`.
pub fn write(w: &mut dyn Write, img: &Image) -> Result<()> {
    write!(w, "Pf\n{} {}\n-1.0\n", img.width, img.height)?;
    let mut buf = Vec::with_capacity(img.data.len() * 4);
    for row in (0..img.height).rev() {
        for col in 0..img.width {
            buf.extend_from_slice(&(img.get(col, row) as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read(r: &mut dyn Read) -> Result<Image> {
    let tok = header_tokens(r, 4, FMT)?;
    if tok[0] != "Pf" {
        return Err(Error::format(
            FMT,
            format!("unsupported magic {:?}", tok[0]),
        ));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0 && v <= 1 << 16)
            .ok_or_else(|| Error::format(FMT, format!("bad dimension {s:?}")))
    };
    let width = dim(&tok[1])?;
    let height = dim(&tok[2])?;
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| Error::format(FMT, format!("bad scale {:?}", tok[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(FMT, "scale must be nonzero"));
    }
    let little = scale < 0.0;
    let mut payload = vec![0u8; width * height * 4];
    read_exact(r, &mut payload, FMT)?;
    let mut img = Image::zeros(width, height);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let bytes: [u8; 4] = chunk.try_into().unwrap();
        let v = if little {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let row = height - 1 - k / width;
        img.set(k % width, row, v as f64);
    }
    Ok(img)
}

pub fn save(path: &Path, img: &Image) -> Result<()> {
    write_file(path, |w| write(w, img))
}

pub fn load(path: &Path) -> Result<Image> {
    read_file(path, read)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_bottom_up_rows() {
        let img = Image::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write(&mut buf, &img).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&buf[..header.len()], header);
        let first = f32::from_le_bytes(buf[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
        assert_eq!(read(&mut buf.as_slice()).unwrap(), img);
    }

    #[test]
    fn rejects_truncated() {
        let img = Image::zeros(3, 3);
        let mut buf = Vec::new();
        write(&mut buf, &img).unwrap();
        buf.pop();
        assert!(read(&mut buf.as_slice()).is_err());
        assert!(read(&mut &b"PF\n1 1\n-1.0\n\0\0\0\0"[..]).is_err());
    }
}
