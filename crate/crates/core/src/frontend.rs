//! Waveform → heat map → sound image, wired from the pieces in
//! [`crate::sigproc`] and [`crate::beamform`].

use crate::beamform::{
    heatmap, reference_subtract, to_sound_image, AngularGrid, ArrayGeometry, HeatMap, SoundImage,
};
use crate::error::{Error, Result};
use crate::par::Parallelism;
use crate::sigproc::{
    apply_filter, design_bandpass, interpolation_kernel, split_blocks, upsample4_with, FilterSpec,
    Gating, Waveform, UPSAMPLE_FACTOR,
};
use crate::simulator::{synth_echo, EmissionSpec, SceneSpec};

/// Preprocessing chain for one array/grid configuration.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub geometry: ArrayGeometry,
    pub grid: AngularGrid,
    pub c_mps: f64,
    pub gating: Gating,
    pub sample_rate_hz: f64,
    pub par: Parallelism,
    taps: Vec<f64>,
    kernel: Vec<f64>,
}

impl FrontEnd {
    pub fn new(
        filter: &FilterSpec,
        sample_rate_hz: f64,
        geometry: ArrayGeometry,
        grid: AngularGrid,
        gating: Gating,
        c_mps: f64,
        par: Parallelism,
    ) -> Result<Self> {
        geometry.validate()?;
        grid.validate()?;
        Ok(Self {
            taps: design_bandpass(filter, sample_rate_hz)?,
            kernel: interpolation_kernel(),
            geometry,
            grid,
            c_mps,
            gating,
            sample_rate_hz,
            par,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// One heat map per complete block of the recording.
    pub fn heatmaps(&self, w: &Waveform, emission_times_s: &[f64]) -> Result<Vec<HeatMap>> {
        if (w.sample_rate_hz - self.sample_rate_hz).abs() > 1e-6 {
            return Err(Error::Input(format!(
                "waveform sampled at {} Hz, front end configured for {} Hz",
                w.sample_rate_hz, self.sample_rate_hz
            )));
        }
        if w.channels() != self.geometry.num_mics() {
            return Err(Error::Input(format!(
                "{} channels for a {}-mic array",
                w.channels(),
                self.geometry.num_mics()
            )));
        }
        let filtered = apply_filter(w, &self.taps, self.par)?;
        let blocks = split_blocks(w.frames(), w.sample_rate_hz, emission_times_s, &self.gating)?;
        blocks
            .iter()
            .map(|b| {
                let up: Vec<Vec<f64>> = filtered
                    .samples
                    .iter()
                    .map(|ch| upsample4_with(&ch[b.reflected.clone()], &self.kernel))
                    .collect();
                let rate = self.sample_rate_hz * UPSAMPLE_FACTOR as f64;
                heatmap(&up, rate, &self.geometry, &self.grid, self.c_mps, self.par)
            })
            .collect()
    }

    /// Mean of the per-block heat maps.
    pub fn mean_heatmap(&self, w: &Waveform, emission_times_s: &[f64]) -> Result<HeatMap> {
        let maps = self.heatmaps(w, emission_times_s)?;
        if maps.is_empty() {
            return Err(Error::Input("recording holds no complete block".into()));
        }
        HeatMap::mean(&maps)
    }

    /// Reference heat map of a human-free scene, averaged over `n_bursts`.
    pub fn reference_capture(
        &self,
        empty: &SceneSpec,
        e: &EmissionSpec,
        n_bursts: usize,
        seed: u64,
    ) -> Result<HeatMap> {
        if !empty.figures.is_empty() {
            return Err(Error::Input(format!(
                "reference scene holds {} figures",
                empty.figures.len()
            )));
        }
        let w = synth_echo(empty, 0, e, &self.geometry, n_bursts, seed)?;
        self.mean_heatmap(&w, &e.emission_times(n_bursts))
    }

    pub fn sound_image(h: &HeatMap, h_ref: &HeatMap) -> Result<SoundImage> {
        Ok(to_sound_image(&reference_subtract(h, h_ref)?))
    }
}
