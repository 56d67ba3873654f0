//! Segmentation metrics and the simulated low-light camera.

use std::io::Write;

use rand_distr::{Distribution, Normal};

use crate::clvae::{self, ModelParams, PairedData};
use crate::error::{Error, Result};
use crate::image::{Image, SegMask};
use crate::rng;

pub const THRESHOLD: f64 = 0.5;

/// Pixel on iff `p >= 0.5`.
pub fn binarize(width: usize, height: usize, probs: &[f64]) -> Result<SegMask> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Input(format!("probability {p} outside [0, 1]")));
    }
    SegMask::from_vec(
        width,
        height,
        probs.iter().map(|&p| p >= THRESHOLD).collect(),
    )
}

/// Intersection over union; two empty masks score 1.
pub fn iou(pred: &SegMask, gt: &SegMask) -> Result<f64> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::Shape(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_image: Vec<(String, f64)>,
    pub miou: f64,
    pub empty_pred: usize,
    pub empty_truth: usize,
}

impl MetricReport {
    pub fn from_scores(
        per_image: Vec<(String, f64)>,
        empty_pred: usize,
        empty_truth: usize,
    ) -> Self {
        let miou = if per_image.is_empty() {
            0.0
        } else {
            per_image.iter().map(|(_, v)| v).sum::<f64>() / per_image.len() as f64
        };
        Self {
            per_image,
            miou,
            empty_pred,
            empty_truth,
        }
    }

    /// `path,iou` rows followed by a `# miou=... n=...` summary line.
    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "path,iou")?;
        for (p, v) in &self.per_image {
            writeln!(w, "{p},{v:.6}")?;
        }
        writeln!(
            w,
            "# miou={:.6} n={} empty_pred={} empty_truth={}",
            self.miou,
            self.per_image.len(),
            self.empty_pred,
            self.empty_truth
        )
    }
}

/// Score every pair with `predict`, which maps a sound image to probabilities.
pub fn evaluate<F>(data: &PairedData, mut predict: F) -> Result<MetricReport>
where
    F: FnMut(&[&[f64]]) -> Result<Vec<Vec<f64>>>,
{
    if data.is_empty() {
        return Err(Error::Input("evaluation split is empty".into()));
    }
    let inputs: Vec<&[f64]> = data.us.iter().map(Vec::as_slice).collect();
    let probs = predict(&inputs)?;
    if probs.len() != data.len() {
        return Err(Error::Shape("predictor returned wrong batch size".into()));
    }
    let (w, h) = (data.width, data.height);
    let mut scores = Vec::with_capacity(data.len());
    let (mut empty_pred, mut empty_truth) = (0, 0);
    for ((p, gt), name) in probs.iter().zip(&data.seg).zip(&data.names) {
        let pred = binarize(w, h, p)?;
        let truth = binarize(w, h, gt)?;
        empty_pred += (pred.count() == 0) as usize;
        empty_truth += (truth.count() == 0) as usize;
        scores.push((name.clone(), iou(&pred, &truth)?));
    }
    Ok(MetricReport::from_scores(scores, empty_pred, empty_truth))
}

pub fn miou(data: &PairedData, params: &ModelParams) -> Result<MetricReport> {
    evaluate(data, |xs| clvae::infer_batch(params, xs))
}

/// `10 log10(max² / MSE)`; identical images give `+∞`.
pub fn psnr(img: &[f64], reference: &[f64], max_val: f64) -> Result<f64> {
    if img.len() != reference.len() || img.is_empty() {
        return Err(Error::Shape(format!(
            "{} vs {} pixels",
            img.len(),
            reference.len()
        )));
    }
    let mse = img
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / img.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_val * max_val / mse).log10())
}

/// `max(I/255 − 0.2, 0)`.
pub fn darken(pixels: &[u8], width: usize, height: usize) -> Result<Image> {
    Image::from_vec(
        width,
        height,
        pixels
            .iter()
            .map(|&p| (p as f64 / 255.0 - 0.2).max(0.0))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModelConfig {
    pub kappa: f64,
    pub seed: u64,
}

impl NoiseModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(Error::Config(format!("kappa {} must be >= 0", self.kappa)));
        }
        Ok(())
    }
}

/// `I + κ √I N` with `N ~ Normal(0, 0.5)`. Not clamped.
pub fn add_noise(dark: &Image, cfg: &NoiseModelConfig) -> Result<Image> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, &[0x4e4f]);
    let normal = Normal::new(0.0, 0.5f64.sqrt()).expect("valid normal");
    let data = dark
        .data
        .iter()
        .map(|&v| {
            let n: f64 = normal.sample(&mut r);
            v + cfg.kappa * v.max(0.0).sqrt() * n
        })
        .collect();
    Image::from_vec(dark.width, dark.height, data)
}
