//! Time-domain front end: band-pass design and filtering, burst-schedule
//! block gating, and 4x interpolation.

use std::f64::consts::PI;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::par::{map_indexed, Parallelism};

pub const DEFAULT_GEOMETRY_ID: &str = "mems-4x4-3.25mm";

/// Multichannel sampled pressure signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate_hz: f64,
    /// One sequence per channel, all the same length.
    pub samples: Vec<Vec<f64>>,
    pub geometry_id: String,
}

impl Waveform {
    pub fn new(samples: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::Input(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        if let Some(first) = samples.first() {
            if samples.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Input("channels differ in length".into()));
            }
        }
        Ok(Self {
            sample_rate_hz,
            samples,
            geometry_id: DEFAULT_GEOMETRY_ID.to_string(),
        })
    }

    pub fn zeros(channels: usize, frames: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![vec![0.0; frames]; channels], sample_rate_hz)
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn frames(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.frames() == 0
    }
}

/// Band-pass design parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub num_taps: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            center_hz: 62_000.0,
            bandwidth_hz: 10_000.0,
            num_taps: 255,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if self.num_taps.is_multiple_of(2) || self.num_taps < 3 {
            return Err(Error::Config(format!(
                "filter.num_taps must be odd and >= 3, got {}",
                self.num_taps
            )));
        }
        let lo = self.center_hz - self.bandwidth_hz / 2.0;
        let hi = self.center_hz + self.bandwidth_hz / 2.0;
        if !(self.bandwidth_hz > 0.0) || !(lo > 0.0) {
            return Err(Error::Config(format!(
                "band [{lo}, {hi}] Hz is empty or below 0 Hz"
            )));
        }
        if hi >= sample_rate_hz / 2.0 {
            return Err(Error::Config(format!(
                "band edge {hi} Hz exceeds Nyquist at {sample_rate_hz} Hz"
            )));
        }
        Ok(())
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn hamming(n: usize, len: usize) -> f64 {
    0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()
}

/// Windowed-sinc (Hamming) band-pass, normalized to unit gain at the band
/// center. Taps are symmetric, so group delay is exactly `(num_taps - 1) / 2`.
pub fn design_bandpass(spec: &FilterSpec, sample_rate_hz: f64) -> Result<Vec<f64>> {
    spec.validate(sample_rate_hz)?;
    let len = spec.num_taps;
    let mid = (len / 2) as f64;
    let f1 = (spec.center_hz - spec.bandwidth_hz / 2.0) / sample_rate_hz;
    let f2 = (spec.center_hz + spec.bandwidth_hz / 2.0) / sample_rate_hz;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let k = n as f64 - mid;
            (2.0 * f2 * sinc(2.0 * f2 * k) - 2.0 * f1 * sinc(2.0 * f1 * k)) * hamming(n, len)
        })
        .collect();
    let gain = magnitude_response(&taps, spec.center_hz, sample_rate_hz);
    for t in &mut taps {
        *t /= gain;
    }
    // Force exact symmetry against rounding in the sinc arguments.
    for k in 0..len / 2 {
        let avg = 0.5 * (taps[k] + taps[len - 1 - k]);
        taps[k] = avg;
        taps[len - 1 - k] = avg;
    }
    Ok(taps)
}

/// |H(e^{jω})| of an FIR at `freq_hz`.
pub fn magnitude_response(taps: &[f64], freq_hz: f64, sample_rate_hz: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / sample_rate_hz;
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, &h)| {
            let ph = w * n as f64;
            (re + h * ph.cos(), im - h * ph.sin())
        });
    re.hypot(im)
}

pub fn magnitude_response_db(taps: &[f64], freq_hz: f64, sample_rate_hz: f64) -> f64 {
    20.0 * magnitude_response(taps, freq_hz, sample_rate_hz).log10()
}

/// Zero-padded convolution with a symmetric odd-length FIR, shifted by the
/// group delay so `out[i]` lines up with `x[i]`. Output length = input length.
pub fn filter_centered(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let n = x.len();
    let half = taps.len() / 2;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        // out[i] = sum_k taps[k] * x[i + half - k]
        let k_lo = (i + half + 1).saturating_sub(n);
        let k_hi = (i + half).min(taps.len() - 1);
        let mut acc = 0.0;
        for k in k_lo..=k_hi {
            acc += taps[k] * x[i + half - k];
        }
        *o = acc;
    }
    out
}

/// Per-channel band-pass filtering; see [`filter_centered`].
pub fn apply_filter(w: &Waveform, taps: &[f64], par: Parallelism) -> Result<Waveform> {
    if w.is_empty() || w.channels() == 0 {
        return Err(Error::Input("cannot filter an empty waveform".into()));
    }
    if taps.len().is_multiple_of(2) {
        return Err(Error::Input(
            "filter must have an odd number of taps".into(),
        ));
    }
    let samples = map_indexed(par, w.channels(), |c| filter_centered(&w.samples[c], taps));
    Ok(Waveform {
        sample_rate_hz: w.sample_rate_hz,
        samples,
        geometry_id: w.geometry_id.clone(),
    })
}

/// Sample-index intervals of one burst's direct and reflected segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub direct: Range<usize>,
    pub reflected: Range<usize>,
    pub emission_time_s: f64,
}

/// Burst-schedule gating parameters, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gating {
    pub direct_len_s: f64,
    pub guard_s: f64,
    pub gate_s: f64,
}

impl Gating {
    /// Gate covering two-way flight out to `max_range_m`.
    pub fn for_range(direct_len_s: f64, guard_s: f64, max_range_m: f64, c_mps: f64) -> Self {
        Self {
            direct_len_s,
            guard_s,
            gate_s: 2.0 * max_range_m / c_mps,
        }
    }

    /// Time from emission to the start of the reflected gate.
    pub fn reflected_offset_s(&self) -> f64 {
        self.direct_len_s + self.guard_s
    }
}

/// Split a recording into per-burst (direct, reflected) blocks from a known
/// emission schedule. Blocks whose gate runs past the recording are dropped.
pub fn split_blocks(
    frames: usize,
    sample_rate_hz: f64,
    emission_times_s: &[f64],
    gating: &Gating,
) -> Result<Vec<Block>> {
    if emission_times_s.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Input(
            "emission times must be strictly increasing".into(),
        ));
    }
    if !(gating.gate_s > 0.0) || gating.direct_len_s < 0.0 || gating.guard_s < 0.0 {
        return Err(Error::Config(
            "gate must be positive, direct and guard nonnegative".into(),
        ));
    }
    let min_gap = emission_times_s
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::INFINITY, f64::min);
    if gating.gate_s > min_gap - gating.direct_len_s - gating.guard_s + 1e-12 {
        return Err(Error::Config(format!(
            "gate {:.6} s does not fit between bursts {:.6} s apart",
            gating.gate_s, min_gap
        )));
    }
    let direct_len = (gating.direct_len_s * sample_rate_hz).round() as usize;
    let offset = (gating.reflected_offset_s() * sample_rate_hz).round() as usize;
    let gate_len = (gating.gate_s * sample_rate_hz).round() as usize;
    let mut blocks = Vec::with_capacity(emission_times_s.len());
    for &t in emission_times_s {
        if t < 0.0 {
            continue;
        }
        let start = (t * sample_rate_hz).round() as usize;
        let refl = start + offset;
        if refl + gate_len > frames {
            continue;
        }
        blocks.push(Block {
            direct: start..start + direct_len,
            reflected: refl..refl + gate_len,
            emission_time_s: t,
        });
    }
    Ok(blocks)
}

/// Zero-crossings per side of the interpolation kernel.
const UPSAMPLE_ZEROS: usize = 16;
pub const UPSAMPLE_FACTOR: usize = 4;

/// Anti-image low-pass for 4x interpolation: cutoff at the original Nyquist,
/// each polyphase branch normalized to unit DC gain (overall gain 4).
pub fn interpolation_kernel() -> Vec<f64> {
    let l = UPSAMPLE_FACTOR;
    let len = 2 * UPSAMPLE_ZEROS * l + 1;
    let mid = (len / 2) as f64;
    let mut h: Vec<f64> = (0..len)
        .map(|n| sinc((n as f64 - mid) / l as f64) * hamming(n, len))
        .collect();
    for phase in 0..l {
        let s: f64 = h.iter().skip(phase).step_by(l).sum();
        for v in h.iter_mut().skip(phase).step_by(l) {
            *v /= s;
        }
    }
    h
}

/// 4x interpolation: zero-stuffing followed by a windowed-sinc anti-image
/// filter, aligned so `out[4n] ≈ x[n]`.
pub fn upsample4(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Input("cannot upsample an empty segment".into()));
    }
    Ok(upsample4_with(x, &interpolation_kernel()))
}

pub(crate) fn upsample4_with(x: &[f64], h: &[f64]) -> Vec<f64> {
    let l = UPSAMPLE_FACTOR;
    let half = h.len() / 2;
    let n = x.len();
    let mut out = vec![0.0; n * l];
    for (j, o) in out.iter_mut().enumerate() {
        // out[j] = sum_k h[k] * u[j + half - k], u[q] = x[q / l] when l | q
        let base = j + half;
        let mut k = base % l;
        let mut acc = 0.0;
        while k < h.len() {
            if base >= k {
                let q = (base - k) / l;
                if q < n {
                    acc += h[k] * x[q];
                }
            }
            k += l;
        }
        *o = acc;
    }
    out
}
