//! Delay-and-sum sound imaging.
//!
//! A 4x4 MEMS array in the z = 0 plane looks along +z. Direction (θ, φ) maps
//! to the unit vector `(sin θ cos φ, sin φ, cos θ cos φ)`: θ is azimuth
//! (image columns, left to right) and φ is elevation (image rows, top =
//! φ_max).

use crate::error::{Error, Result};
use crate::image::Image;
use crate::par::{map_indexed, Parallelism};

/// Microphone and emitter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub mic_positions_m: Vec<[f64; 3]>,
    pub pitch_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub emitter_m: [f64; 3],
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::grid(4, 4, 0.003_25, 0.030)
    }
}

impl ArrayGeometry {
    /// Rectangular grid centered at the origin; mic `m = row * cols + col`,
    /// row 0 at the top. The emitter sits `emitter_offset_m` along +x.
    pub fn grid(rows: usize, cols: usize, pitch_m: f64, emitter_offset_m: f64) -> Self {
        let mut mic_positions_m = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = (c as f64 - (cols as f64 - 1.0) / 2.0) * pitch_m;
                let y = ((rows as f64 - 1.0) / 2.0 - r as f64) * pitch_m;
                mic_positions_m.push([x, y, 0.0]);
            }
        }
        Self {
            mic_positions_m,
            pitch_m,
            rows,
            cols,
            emitter_m: [emitter_offset_m, 0.0, 0.0],
        }
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions_m.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mic_positions_m.len();
        if n != self.rows * self.cols || n == 0 {
            return Err(Error::Config(format!(
                "{} mic positions for a {}x{} array",
                n, self.rows, self.cols
            )));
        }
        for a in 0..n {
            for b in a + 1..n {
                if self.mic_positions_m[a] == self.mic_positions_m[b] {
                    return Err(Error::Config(format!("mics {a} and {b} coincide")));
                }
            }
        }
        Ok(())
    }
}

/// Steering directions, one per sound-image pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularGrid {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for AngularGrid {
    fn default() -> Self {
        Self::desk()
    }
}

impl AngularGrid {
    /// 45 x 30 pixels over ±45° azimuth, ±60° elevation.
    pub fn desk() -> Self {
        Self::with_size(45, 30)
    }

    /// 180 x 120 pixels, 0.5°/px azimuth and ~1°/px elevation.
    pub fn paper_scale() -> Self {
        Self::with_size(180, 120)
    }

    pub fn with_size(n_theta: usize, n_phi: usize) -> Self {
        Self {
            theta_min_deg: -45.0,
            theta_max_deg: 45.0,
            phi_min_deg: -60.0,
            phi_max_deg: 60.0,
            n_theta,
            n_phi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 2 || self.n_phi < 2 {
            return Err(Error::Config(
                "angular grid needs at least 2x2 pixels".into(),
            ));
        }
        if !(self.theta_max_deg > self.theta_min_deg) || !(self.phi_max_deg > self.phi_min_deg) {
            return Err(Error::Config("angular grid ranges must be nonempty".into()));
        }
        Ok(())
    }

    pub fn theta_step(&self) -> f64 {
        (self.theta_max_deg - self.theta_min_deg) / (self.n_theta - 1) as f64
    }

    pub fn phi_step(&self) -> f64 {
        (self.phi_max_deg - self.phi_min_deg) / (self.n_phi - 1) as f64
    }

    /// Azimuth of column `col`.
    pub fn theta_deg(&self, col: usize) -> f64 {
        self.theta_min_deg + col as f64 * self.theta_step()
    }

    /// Elevation of row `row` (row 0 = φ_max).
    pub fn phi_deg(&self, row: usize) -> f64 {
        self.phi_max_deg - row as f64 * self.phi_step()
    }

    /// Nearest pixel to a direction, clamped to the grid.
    pub fn nearest_cell(&self, theta_deg: f64, phi_deg: f64) -> (usize, usize) {
        let c = ((theta_deg - self.theta_min_deg) / self.theta_step()).round();
        let r = ((self.phi_max_deg - phi_deg) / self.phi_step()).round();
        (
            c.clamp(0.0, (self.n_theta - 1) as f64) as usize,
            r.clamp(0.0, (self.n_phi - 1) as f64) as usize,
        )
    }

    pub fn num_pixels(&self) -> usize {
        self.n_theta * self.n_phi
    }
}

/// Unit vector for azimuth/elevation in degrees.
pub fn direction(theta_deg: f64, phi_deg: f64) -> [f64; 3] {
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    [t.sin() * p.cos(), p.sin(), t.cos() * p.cos()]
}

/// Directional heat map on an [`AngularGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub grid: AngularGrid,
    pub image: Image,
}

impl HeatMap {
    pub fn zeros(grid: AngularGrid) -> Self {
        Self {
            grid,
            image: Image::zeros(grid.n_theta, grid.n_phi),
        }
    }

    pub fn from_image(grid: AngularGrid, image: Image) -> Result<Self> {
        if image.width != grid.n_theta || image.height != grid.n_phi {
            return Err(Error::Shape(format!(
                "{}x{} image on a {}x{} grid",
                image.width, image.height, grid.n_theta, grid.n_phi
            )));
        }
        Ok(Self { grid, image })
    }

    /// Pixelwise mean of equally gridded maps.
    pub fn mean(maps: &[HeatMap]) -> Result<HeatMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Input("no heat maps to average".into()))?;
        let mut acc = HeatMap::zeros(first.grid);
        for m in maps {
            if m.grid != first.grid {
                return Err(Error::Shape("heat maps on different grids".into()));
            }
            for (a, v) in acc.image.data.iter_mut().zip(&m.image.data) {
                *a += v;
            }
        }
        let n = maps.len() as f64;
        acc.image.data.iter_mut().for_each(|v| *v /= n);
        Ok(acc)
    }
}

/// Normalized sound image, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SoundImage {
    pub grid: AngularGrid,
    pub image: Image,
}

/// Far-field arrival-time offsets Δ_m = −(p_m · u)/c relative to the array
/// center for a plane wave from (θ, φ). Mics nearer the source hear it
/// earlier, so their offset is negative.
pub fn steering_delays(g: &ArrayGeometry, theta_deg: f64, phi_deg: f64, c_mps: f64) -> Vec<f64> {
    let u = direction(theta_deg, phi_deg);
    g.mic_positions_m
        .iter()
        .map(|p| -(p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / c_mps)
        .collect()
}

/// `y[t] += x(t - d)` with `d` in samples, linearly interpolated; samples
/// falling outside `x` contribute nothing.
fn accumulate_shifted(y: &mut [f64], x: &[f64], d: f64) {
    // t - d = t + a + g with integer a and g in [0, 1)
    let a = (-d).floor();
    let g = -d - a;
    let a = a as isize;
    let n = x.len() as isize;
    let len = y.len() as isize;
    // x[t + a] valid for t in [-a, n - a)
    let lo = (-a).clamp(0, len);
    let hi = (n - a).clamp(0, len);
    if g == 0.0 {
        for t in lo..hi {
            y[t as usize] += x[(t + a) as usize];
        }
        return;
    }
    let w0 = 1.0 - g;
    // both neighbours valid: t in [-a, n - a - 1)
    let hi2 = (n - a - 1).clamp(lo, len);
    for t in lo..hi2 {
        let i = (t + a) as usize;
        y[t as usize] += w0 * x[i] + g * x[i + 1];
    }
    if hi2 < hi {
        // last sample: right neighbour is outside
        y[hi2 as usize] += w0 * x[(hi2 + a) as usize];
    }
    // left neighbour outside, right neighbour x[0]
    let t = -a - 1;
    if (0..len).contains(&t) && n > 0 {
        y[t as usize] += g * x[0];
    }
}

/// Delay-and-sum: `y(t) = Σ_m x_m(t − Δ_m)` with Δ in seconds.
pub fn das_beamform(channels: &[Vec<f64>], delays_s: &[f64], rate_hz: f64) -> Result<Vec<f64>> {
    if channels.len() != delays_s.len() {
        return Err(Error::Input(format!(
            "{} channels but {} delays",
            channels.len(),
            delays_s.len()
        )));
    }
    let len = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Input("channels differ in length".into()));
    }
    let mut y = vec![0.0; len];
    for (x, &d) in channels.iter().zip(delays_s) {
        accumulate_shifted(&mut y, x, d * rate_hz);
    }
    Ok(y)
}

/// Peak |y(t)| over the gate for every steering direction.
///
/// `channels` is the band-passed, upsampled reflected segment of one block.
/// Each direction is steered by undoing its arrival offsets, i.e. calling
/// [`das_beamform`] with `-steering_delays(..)`.
pub fn heatmap(
    channels: &[Vec<f64>],
    rate_hz: f64,
    g: &ArrayGeometry,
    grid: &AngularGrid,
    c_mps: f64,
    par: Parallelism,
) -> Result<HeatMap> {
    if channels.len() != g.num_mics() {
        return Err(Error::Input(format!(
            "{} channels for a {}-mic array",
            channels.len(),
            g.num_mics()
        )));
    }
    let len = channels.first().map_or(0, Vec::len);
    if len == 0 {
        return Err(Error::Input("empty gate".into()));
    }
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Input("channels differ in length".into()));
    }
    let values = map_indexed(par, grid.num_pixels(), |k| {
        let (col, row) = (k % grid.n_theta, k / grid.n_theta);
        let offsets = steering_delays(g, grid.theta_deg(col), grid.phi_deg(row), c_mps);
        let mut y = vec![0.0; len];
        for (x, &d) in channels.iter().zip(&offsets) {
            accumulate_shifted(&mut y, x, -d * rate_hz);
        }
        y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    });
    Ok(HeatMap {
        grid: *grid,
        image: Image::from_vec(grid.n_theta, grid.n_phi, values)?,
    })
}

/// `H − k·H_ref` with `k = H(i*, j*) / H_ref(i*, j*)` at the first
/// row-major maximum of `H_ref`.
pub fn reference_subtract(h: &HeatMap, h_ref: &HeatMap) -> Result<HeatMap> {
    if h.grid != h_ref.grid {
        return Err(Error::Shape(
            "heat map and reference on different grids".into(),
        ));
    }
    let (col, row) = h_ref.image.argmax();
    let denom = h_ref.image.get(col, row);
    if !(denom > 0.0) {
        return Err(Error::DegenerateReference(format!(
            "reference maximum is {denom} at ({col}, {row})"
        )));
    }
    let k = h.image.get(col, row) / denom;
    let data = h
        .image
        .data
        .iter()
        .zip(&h_ref.image.data)
        .map(|(a, b)| a - k * b)
        .collect();
    Ok(HeatMap {
        grid: h.grid,
        image: Image::from_vec(h.grid.n_theta, h.grid.n_phi, data)?,
    })
}

pub const SOUND_IMAGE_EPS: f64 = 1e-12;

/// Clamp negatives to zero and divide by the maximum. A map whose maximum is
/// at most [`SOUND_IMAGE_EPS`] becomes the all-zero image.
pub fn to_sound_image(h_us: &HeatMap) -> SoundImage {
    let max = h_us.image.max();
    let data = if max > SOUND_IMAGE_EPS {
        h_us.image
            .data
            .iter()
            .map(|&v| if v < 0.0 { 0.0 } else { v / max })
            .collect()
    } else {
        vec![0.0; h_us.image.data.len()]
    };
    SoundImage {
        grid: h_us.grid,
        image: Image {
            width: h_us.image.width,
            height: h_us.image.height,
            data,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RATE: f64 = 768_000.0;

    fn burst(len: usize, at: f64) -> Vec<f64> {
        (0..len)
            .map(|i| {
                let t = i as f64 - at;
                if (0.0..240.0).contains(&t) {
                    (std::f64::consts::PI * t / 240.0).sin().powi(2)
                        * (2.0 * std::f64::consts::PI * 62_000.0 * t / RATE).sin()
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn geometry_defaults() {
        let g = ArrayGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.num_mics(), 16);
        let (sx, sy) = g
            .mic_positions_m
            .iter()
            .fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        assert!(sx.abs() < 1e-15 && sy.abs() < 1e-15);
        assert!((g.mic_positions_m[3][0] - 0.004_875).abs() < 1e-15);
    }

    #[test]
    fn grid_endpoints_inclusive() {
        let g = AngularGrid::desk();
        assert_eq!(g.theta_deg(0), -45.0);
        assert_eq!(g.theta_deg(44), 45.0);
        assert_eq!(g.phi_deg(0), 60.0);
        assert!((g.phi_deg(29) + 60.0).abs() < 1e-12);
        assert_eq!(g.nearest_cell(0.0, 0.0), (22, 14));
        let bad = AngularGrid::with_size(1, 5);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn broadside_delays_vanish() {
        let d = steering_delays(&ArrayGeometry::default(), 0.0, 0.0, 343.0);
        assert_eq!(d.len(), 16);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mirrored_azimuth_symmetries() {
        let g = ArrayGeometry::default();
        let a = steering_delays(&g, 30.0, 0.0, 343.0);
        let b = steering_delays(&g, -30.0, 0.0, 343.0);
        for r in 0..4 {
            for c in 0..4 {
                let m = r * 4 + c;
                let mirror = r * 4 + (3 - c);
                assert!((a[m] + b[m]).abs() < 1e-18);
                assert!((a[m] - b[mirror]).abs() < 1e-18);
            }
        }
    }

    #[test]
    fn outer_mic_delay_hand_value() {
        let d = steering_delays(&ArrayGeometry::default(), 45.0, 0.0, 343.0);
        // column 3 sits at x = +4.875 mm
        let expected = -(0.004_875 * 45f64.to_radians().sin()) / 343.0;
        assert!((d[3] - expected).abs() < 1e-18);
        assert!((d[3] + 1.005e-5).abs() < 1e-8);
    }

    #[test]
    fn das_identity_and_coherent_sum() {
        let x = burst(600, 100.0);
        assert_eq!(
            das_beamform(std::slice::from_ref(&x), &[0.0], RATE).unwrap(),
            x
        );
        let chans = vec![x.clone(); 16];
        let y = das_beamform(&chans, &[0.0; 16], RATE).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - 16.0 * b).abs() < 1e-12);
        }
        assert!(das_beamform(&chans, &[0.0; 15], RATE).is_err());
    }

    #[test]
    fn fractional_shift_interpolates() {
        let x = vec![0.0, 1.0, 2.0, 3.0];
        // y(t) = x(t - 0.5)
        let y = das_beamform(&[x], &[0.5 / RATE], RATE).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 1.5, 2.5]);
        let y = das_beamform(&[vec![1.0, 1.0]], &[-1.25 / RATE], RATE).unwrap();
        // x(t + 1.25): t=0 → between x[1] and x[2]=0
        assert_eq!(y, vec![0.75, 0.0]);
    }

    #[test]
    fn point_source_peaks_at_true_direction() {
        let g = ArrayGeometry::default();
        let grid = AngularGrid::desk();
        let (tc, tr) = (30, 10);
        let offs = steering_delays(&g, grid.theta_deg(tc), grid.phi_deg(tr), 343.0);
        let chans: Vec<Vec<f64>> = offs.iter().map(|d| burst(1200, 300.0 + d * RATE)).collect();
        let h = heatmap(&chans, RATE, &g, &grid, 343.0, Parallelism::Sequential).unwrap();
        let best = h.image.get(tc, tr);
        for r in 0..grid.n_phi {
            for c in 0..grid.n_theta {
                if (c, r) != (tc, tr) {
                    assert!(h.image.get(c, r) < best, "({c},{r})");
                }
            }
        }
    }

    #[test]
    fn heatmap_zero_and_scaling() {
        let g = ArrayGeometry::default();
        let grid = AngularGrid::with_size(9, 7);
        let zero = vec![vec![0.0; 200]; 16];
        let h = heatmap(&zero, RATE, &g, &grid, 343.0, Parallelism::Sequential).unwrap();
        assert!(h.image.data.iter().all(|&v| v == 0.0));
        let chans: Vec<Vec<f64>> = (0..16).map(|m| burst(400, 50.0 + m as f64)).collect();
        let scaled: Vec<Vec<f64>> = chans
            .iter()
            .map(|c| c.iter().map(|v| 2.5 * v).collect())
            .collect();
        let a = heatmap(&chans, RATE, &g, &grid, 343.0, Parallelism::Sequential).unwrap();
        let b = heatmap(&scaled, RATE, &g, &grid, 343.0, Parallelism::Rayon).unwrap();
        for (x, y) in a.image.data.iter().zip(&b.image.data) {
            assert!((2.5 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        let empty = vec![Vec::new(); 16];
        assert!(heatmap(&empty, RATE, &g, &grid, 343.0, Parallelism::Sequential).is_err());
    }

    #[test]
    fn channel_permutation_invariance() {
        let g = ArrayGeometry::default();
        let grid = AngularGrid::with_size(7, 5);
        let chans: Vec<Vec<f64>> = (0..16).map(|m| burst(500, 40.0 + 3.0 * m as f64)).collect();
        let perm: Vec<usize> = (0..16).map(|m| (m * 7 + 3) % 16).collect();
        let mut g2 = g.clone();
        g2.mic_positions_m = perm.iter().map(|&m| g.mic_positions_m[m]).collect();
        let chans2: Vec<Vec<f64>> = perm.iter().map(|&m| chans[m].clone()).collect();
        let a = heatmap(&chans, RATE, &g, &grid, 343.0, Parallelism::Sequential).unwrap();
        let b = heatmap(&chans2, RATE, &g2, &grid, 343.0, Parallelism::Sequential).unwrap();
        for (x, y) in a.image.data.iter().zip(&b.image.data) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    fn map(vals: Vec<f64>) -> HeatMap {
        let grid = AngularGrid::with_size(3, 2);
        HeatMap::from_image(grid, Image::from_vec(3, 2, vals).unwrap()).unwrap()
    }

    #[test]
    fn reference_subtraction_cases() {
        let r = map(vec![1.0, 4.0, 2.0, 0.5, 3.0, 1.0]);
        let twice = map(r.image.data.iter().map(|v| 2.0 * v).collect());
        let out = reference_subtract(&twice, &r).unwrap();
        assert!(out.image.data.iter().all(|&v| v == 0.0));
        let out = reference_subtract(&r, &r).unwrap();
        assert!(out.image.data.iter().all(|&v| v == 0.0));
        // k = 8 / 4 = 2
        let h = map(vec![5.0, 8.0, 1.0, 1.0, 1.0, 1.0]);
        let out = reference_subtract(&h, &r).unwrap();
        assert_eq!(out.image.data, vec![3.0, 0.0, -3.0, 0.0, -5.0, -1.0]);
        let zero = map(vec![0.0; 6]);
        assert!(matches!(
            reference_subtract(&h, &zero),
            Err(Error::DegenerateReference(_))
        ));
    }

    #[test]
    fn sound_image_normalization() {
        let s = to_sound_image(&map(vec![-1.0, 2.0, 1.0, -3.0, 0.0, 0.5]));
        assert_eq!(s.image.data, vec![0.0, 1.0, 0.5, 0.0, 0.0, 0.25]);
        let neg = to_sound_image(&map(vec![-1.0; 6]));
        assert!(neg.image.data.iter().all(|&v| v == 0.0));
        let tiny = to_sound_image(&map(vec![1e-13; 6]));
        assert!(tiny.image.data.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn sound_image_range(vals in proptest::collection::vec(-10.0f64..10.0, 6)) {
            let s = to_sound_image(&map(vals));
            prop_assert!(s.image.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let m = s.image.max();
            prop_assert!(m == 0.0 || m == 1.0);
        }

        #[test]
        fn das_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            seed in proptest::collection::vec(-1.0f64..1.0, 64),
            delays in proptest::collection::vec(-3e-6f64..3e-6, 4),
        ) {
            let x1: Vec<Vec<f64>> = seed.chunks(16).map(|c| c.to_vec()).collect();
            let x2: Vec<Vec<f64>> = seed.chunks(16).map(|c| c.iter().rev().map(|v| v * 0.5 + 0.1).collect()).collect();
            let mix: Vec<Vec<f64>> = x1.iter().zip(&x2)
                .map(|(p, q)| p.iter().zip(q).map(|(u, v)| a * u + b * v).collect())
                .collect();
            let y1 = das_beamform(&x1, &delays, RATE).unwrap();
            let y2 = das_beamform(&x2, &delays, RATE).unwrap();
            let ym = das_beamform(&mix, &delays, RATE).unwrap();
            for k in 0..ym.len() {
                let expect = a * y1[k] + b * y2[k];
                prop_assert!((ym[k] - expect).abs() <= 1e-12 * (1.0 + expect.abs()) * 8.0);
            }
        }
    }
}
