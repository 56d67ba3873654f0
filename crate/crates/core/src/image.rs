//! Row-major image containers shared by the beamformer, the simulator and
//! the evaluation code. Row 0 is the top of the image.

use crate::error::{Error, Result};

/// Real-valued single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// (col, row) of the maximum; first occurrence in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = k;
            }
        }
        (best % self.width, best / self.width)
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Image {
        let mut out = Image::zeros(width, height);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for r in 0..height {
            let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for c in 0..width {
                let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - wx) + self.get(x1, y0) * wx;
                let bot = self.get(x0, y1) * (1.0 - wx) + self.get(x1, y1) * wx;
                out.set(c, r, top * (1.0 - wy) + bot * wy);
            }
        }
        out
    }
}

/// Binary segmentation mask (`true` = person).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl SegMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height} mask",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Nearest-neighbour resampling with pixel-center alignment.
    pub fn resize_nearest(&self, width: usize, height: usize) -> SegMask {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            let sr = (((r as f64 + 0.5) * self.height as f64 / height as f64) as usize)
                .min(self.height - 1);
            for c in 0..width {
                let sc = (((c as f64 + 0.5) * self.width as f64 / width as f64) as usize)
                    .min(self.width - 1);
                data.push(self.get(sc, sr));
            }
        }
        SegMask {
            width,
            height,
            data,
        }
    }

    /// 0.0 / 1.0 pixel values.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_first_on_ties() {
        let img = Image::from_vec(3, 2, vec![0.0, 5.0, 1.0, 5.0, 2.0, 5.0]).unwrap();
        assert_eq!(img.argmax(), (1, 0));
    }

    #[test]
    fn bilinear_identity_and_constant() {
        let img = Image::from_vec(4, 3, (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(img.resize_bilinear(4, 3), img);
        let c = Image::from_vec(5, 7, vec![0.25; 35]).unwrap();
        let r = c.resize_bilinear(32, 32);
        assert!(r.data.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn nearest_upscale_repeats_pixels() {
        let m = SegMask::from_vec(2, 1, vec![true, false]).unwrap();
        let r = m.resize_nearest(4, 2);
        assert_eq!(
            r.data,
            vec![true, true, false, false, true, true, false, false]
        );
    }
}
