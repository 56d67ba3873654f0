//! Binary PGM (`P5`, maxval 255). Masks use 0 = background, 255 = person.

use std::io::{Read, Write};
use std::path::Path;

use super::{header_tokens, read_exact, read_file, write_file};
use crate::error::{Error, Result};
use crate::image::SegMask;

const FMT: &str = "PGM";

/// 8-bit grayscale raster, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

pub fn write(w: &mut dyn Write, img: &Gray8) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)?;
    Ok(())
}

pub fn read(r: &mut dyn Read) -> Result<Gray8> {
    let tok = header_tokens(r, 4, FMT)?;
    if tok[0] != "P5" {
        return Err(Error::format(
            FMT,
            format!("unsupported magic {:?}", tok[0]),
        ));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0 && v <= 1 << 16)
            .ok_or_else(|| Error::format(FMT, format!("bad header value {s:?}")))
    };
    let width = num(&tok[1])?;
    let height = num(&tok[2])?;
    if num(&tok[3])? != 255 {
        return Err(Error::format(FMT, "only maxval 255 is supported"));
    }
    let mut data = vec![0u8; width * height];
    read_exact(r, &mut data, FMT)?;
    Ok(Gray8 {
        width,
        height,
        data,
    })
}

impl From<&SegMask> for Gray8 {
    fn from(m: &SegMask) -> Self {
        Gray8 {
            width: m.width,
            height: m.height,
            data: m.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

impl From<&Gray8> for SegMask {
    /// Pixels at or above mid-gray count as foreground.
    fn from(g: &Gray8) -> Self {
        SegMask {
            width: g.width,
            height: g.height,
            data: g.data.iter().map(|&v| v >= 128).collect(),
        }
    }
}

pub fn save(path: &Path, img: &Gray8) -> Result<()> {
    write_file(path, |w| write(w, img))
}

pub fn load(path: &Path) -> Result<Gray8> {
    read_file(path, read)
}

pub fn save_mask(path: &Path, mask: &SegMask) -> Result<()> {
    save(path, &Gray8::from(mask))
}

pub fn load_mask(path: &Path) -> Result<SegMask> {
    load(path).map(|g| SegMask::from(&g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_bytes() {
        let m = SegMask::from_vec(3, 1, vec![true, false, true]).unwrap();
        let mut buf = Vec::new();
        write(&mut buf, &Gray8::from(&m)).unwrap();
        assert_eq!(buf, b"P5\n3 1\n255\n\xff\x00\xff");
        let back = SegMask::from(&read(&mut buf.as_slice()).unwrap());
        assert_eq!(back, m);
    }

    #[test]
    fn header_comments_are_skipped() {
        let raw = b"P5\n# made by hand\n2 1\n255\n\x07\x09";
        let g = read(&mut &raw[..]).unwrap();
        assert_eq!(g.data, vec![7, 9]);
    }

    #[test]
    fn rejects_other_maxval_and_truncation() {
        assert!(read(&mut &b"P5\n1 1\n65535\n\0\0"[..]).is_err());
        assert!(read(&mut &b"P5\n2 2\n255\n\0\0\0"[..]).is_err());
    }
}
