//! Synthetic scenes: parametric human silhouettes in front of a wall, their
//! 16-channel echoes of the emitted burst, and ground-truth masks.
//!
//! Propagation model: each reflector point contributes a Hann-windowed
//! burst delayed by the emitter→point→mic path and scaled by
//! `reflectivity / r²`. A figure is `K` points drawn uniformly over its
//! silhouette (each scaled by `1/√K`), re-drawn for every burst. The wall is
//! a fixed jittered lattice of scatterers on the plane `z = wall_range_m`.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::beamform::{direction, AngularGrid, ArrayGeometry};
use crate::error::{Error, Result};
use crate::image::SegMask;
use crate::rng;
use crate::sigproc::Waveform;

/// Burst emission schedule and sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionSpec {
    pub carrier_hz: f64,
    pub cycles: u32,
    pub interval_s: f64,
    pub sample_rate_hz: f64,
    pub amplitude: f64,
}

impl Default for EmissionSpec {
    fn default() -> Self {
        Self {
            carrier_hz: 62_000.0,
            cycles: 20,
            interval_s: 0.050,
            sample_rate_hz: 192_000.0,
            amplitude: 1.0,
        }
    }
}

impl EmissionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cycles < 1 {
            return Err(Error::Config("emission.cycles must be >= 1".into()));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz < self.sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "carrier {} Hz must lie below Nyquist ({} Hz)",
                self.carrier_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        if !(self.interval_s > self.duration_s()) {
            return Err(Error::Config(
                "burst interval shorter than the burst".into(),
            ));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.cycles as f64 / self.carrier_hz
    }

    /// Hann-windowed tone burst starting at `t = 0`.
    pub fn pulse(&self, t: f64) -> f64 {
        let dur = self.duration_s();
        if !(0.0..=dur).contains(&t) {
            return 0.0;
        }
        let w = 0.5 * (1.0 - (2.0 * PI * t / dur).cos());
        self.amplitude * w * (2.0 * PI * self.carrier_hz * t).sin()
    }

    pub fn frames_per_burst(&self) -> usize {
        (self.interval_s * self.sample_rate_hz).round() as usize
    }

    /// Emission instants `k * interval` for `k < n_bursts`.
    pub fn emission_times(&self, n_bursts: usize) -> Vec<f64> {
        let step = self.frames_per_burst() as f64 / self.sample_rate_hz;
        (0..n_bursts).map(|k| k as f64 * step).collect()
    }
}

/// Per-frame pose perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseOffset {
    pub d_theta_deg: f64,
    pub d_phi_deg: f64,
    pub d_range_m: f64,
    /// Multiplies the torso half-height (sitting shrinks the silhouette).
    pub height_scale: f64,
}

impl Default for PoseOffset {
    fn default() -> Self {
        Self {
            d_theta_deg: 0.0,
            d_phi_deg: 0.0,
            d_range_m: 0.0,
            height_scale: 1.0,
        }
    }
}

/// Vertical capsule in angular coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub range_m: f64,
    /// Radius of the capsule.
    pub half_width_deg: f64,
    /// Half the tip-to-tip extent.
    pub half_height_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub rx_deg: f64,
    pub ry_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Stand,
    Sit,
    Walk,
    Run,
}

/// Torso capsule with an elliptical head resting on top. A head with zero
/// radii is omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanFigure {
    pub torso: Capsule,
    pub head: Ellipse,
    pub pose_track: Vec<PoseOffset>,
    pub reflectivity: f64,
}

/// Silhouette of one figure at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Silhouette {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub range_m: f64,
    pub half_width_deg: f64,
    pub half_height_deg: f64,
    pub head_theta_deg: f64,
    pub head_phi_deg: f64,
    pub head: Ellipse,
}

impl Silhouette {
    pub fn contains(&self, theta_deg: f64, phi_deg: f64) -> bool {
        let dt = theta_deg - self.theta_deg;
        let seg = (self.half_height_deg - self.half_width_deg).max(0.0);
        let dp = (phi_deg - self.phi_deg).abs();
        let dp = (dp - seg).max(0.0);
        if dt * dt + dp * dp <= self.half_width_deg * self.half_width_deg {
            return true;
        }
        if self.head.rx_deg > 0.0 && self.head.ry_deg > 0.0 {
            let x = (theta_deg - self.head_theta_deg) / self.head.rx_deg;
            let y = (phi_deg - self.head_phi_deg) / self.head.ry_deg;
            return x * x + y * y <= 1.0;
        }
        false
    }

    /// (θ_min, θ_max, φ_min, φ_max) enclosing torso and head.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let w = self.half_width_deg.max(self.head.rx_deg);
        let top = if self.head.ry_deg > 0.0 {
            self.head_phi_deg + self.head.ry_deg
        } else {
            self.phi_deg + self.half_height_deg.max(self.half_width_deg)
        };
        (
            self.theta_deg - w,
            self.theta_deg + w,
            self.phi_deg - self.half_height_deg.max(self.half_width_deg),
            top,
        )
    }
}

impl HumanFigure {
    /// A figure that keeps its pose for `frames` frames.
    pub fn still(torso: Capsule, head: Ellipse, reflectivity: f64, frames: usize) -> Self {
        Self {
            torso,
            head,
            pose_track: vec![PoseOffset::default(); frames.max(1)],
            reflectivity,
        }
    }

    pub fn frames(&self) -> usize {
        self.pose_track.len()
    }

    pub fn silhouette(&self, frame: usize) -> Result<Silhouette> {
        let pose = self.pose_track.get(frame).ok_or_else(|| {
            Error::Input(format!(
                "frame {frame} beyond a {}-frame pose track",
                self.frames()
            ))
        })?;
        let hh = self.torso.half_height_deg * pose.height_scale;
        let theta = self.torso.theta_deg + pose.d_theta_deg;
        let phi = self.torso.phi_deg + pose.d_phi_deg;
        let top = phi + hh.max(self.torso.half_width_deg);
        Ok(Silhouette {
            theta_deg: theta,
            phi_deg: phi,
            range_m: self.torso.range_m + pose.d_range_m,
            half_width_deg: self.torso.half_width_deg,
            half_height_deg: hh,
            head_theta_deg: theta,
            head_phi_deg: top + 0.8 * self.head.ry_deg,
            head: self.head,
        })
    }

    /// Stable key for this figure's random stream, so a figure draws the same
    /// reflector points whatever else is in the scene.
    fn stream_key(&self) -> u64 {
        let t = &self.torso;
        let vals = [
            t.theta_deg,
            t.phi_deg,
            t.range_m,
            t.half_width_deg,
            t.half_height_deg,
            self.head.rx_deg,
            self.head.ry_deg,
            self.reflectivity,
        ];
        let base = vals
            .iter()
            .fold(0u64, |acc, v| rng::mix64(acc ^ v.to_bits()));
        self.pose_track.iter().fold(base, |acc, p| {
            rng::mix64(acc ^ p.d_theta_deg.to_bits() ^ p.d_phi_deg.to_bits().rotate_left(16))
                ^ p.height_scale.to_bits()
                ^ p.d_range_m.to_bits().rotate_left(32)
        })
    }
}

/// A static point reflector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTarget {
    pub position_m: [f64; 3],
    pub reflectivity: f64,
}

impl PointTarget {
    pub fn at(theta_deg: f64, phi_deg: f64, range_m: f64, reflectivity: f64) -> Self {
        let u = direction(theta_deg, phi_deg);
        Self {
            position_m: [u[0] * range_m, u[1] * range_m, u[2] * range_m],
            reflectivity,
        }
    }
}

/// Everything the simulator needs to render one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub figures: Vec<HumanFigure>,
    pub points: Vec<PointTarget>,
    pub wall_range_m: f64,
    /// Zero disables the wall.
    pub wall_reflectivity: f64,
    pub noise_std: f64,
    pub c_mps: f64,
    /// Reflector points drawn per figure per burst.
    pub points_per_figure: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            figures: Vec::new(),
            points: Vec::new(),
            wall_range_m: 3.0,
            wall_reflectivity: 1.0,
            noise_std: 0.01,
            c_mps: 343.0,
            points_per_figure: 64,
        }
    }
}

/// Lattice of the wall, in degrees.
const WALL_THETA_SPAN: f64 = 50.0;
const WALL_PHI_SPAN: f64 = 65.0;
const WALL_STEP: f64 = 5.0;
const WALL_JITTER: f64 = 2.0;
const WALL_SEED: u64 = 0x5741_4c4c;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("scene.noise_std must be >= 0".into()));
        }
        if !(self.c_mps > 0.0) {
            return Err(Error::Config("scene.c_mps must be positive".into()));
        }
        for f in &self.figures {
            for k in 0..f.frames() {
                let s = f.silhouette(k)?;
                if s.range_m >= self.wall_range_m {
                    return Err(Error::Config(format!(
                        "figure at {:.2} m is not in front of the wall at {:.2} m",
                        s.range_m, self.wall_range_m
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same room, nobody in it.
    pub fn without_humans(&self) -> SceneSpec {
        SceneSpec {
            figures: Vec::new(),
            ..self.clone()
        }
    }

    /// Wall scatterers: a jittered angular lattice projected onto the plane
    /// `z = wall_range_m`. Independent of any scene seed.
    pub fn wall_reflectors(&self) -> Vec<PointTarget> {
        if self.wall_reflectivity == 0.0 {
            return Vec::new();
        }
        let mut rng = rng::stream(WALL_SEED, &[self.wall_range_m.to_bits()]);
        let nt = (2.0 * WALL_THETA_SPAN / WALL_STEP) as i32;
        let np = (2.0 * WALL_PHI_SPAN / WALL_STEP) as i32;
        let mut dirs = Vec::new();
        for i in 0..=nt {
            for j in 0..=np {
                let th = -WALL_THETA_SPAN
                    + i as f64 * WALL_STEP
                    + rng.gen_range(-WALL_JITTER..WALL_JITTER);
                let ph = -WALL_PHI_SPAN
                    + j as f64 * WALL_STEP
                    + rng.gen_range(-WALL_JITTER..WALL_JITTER);
                dirs.push((th, ph));
            }
        }
        let scale = self.wall_reflectivity / (dirs.len() as f64).sqrt();
        dirs.into_iter()
            .map(|(th, ph)| {
                let u = direction(th, ph);
                let t = self.wall_range_m / u[2];
                PointTarget {
                    position_m: [u[0] * t, u[1] * t, u[2] * t],
                    reflectivity: scale,
                }
            })
            .collect()
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Add one reflector's echo of a burst emitted at `emission_s` to every
/// channel of `out`.
fn add_echo(
    out: &mut [Vec<f64>],
    target: &PointTarget,
    emission_s: f64,
    e: &EmissionSpec,
    g: &ArrayGeometry,
    c_mps: f64,
) {
    let p = &target.position_m;
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if r == 0.0 {
        return;
    }
    let amp = target.reflectivity / (r * r);
    let outbound = dist(&g.emitter_m, p);
    let fs = e.sample_rate_hz;
    let dur = e.duration_s();
    for (ch, mic) in out.iter_mut().zip(&g.mic_positions_m) {
        let t0 = emission_s + (outbound + dist(p, mic)) / c_mps;
        let first = (t0 * fs).ceil().max(0.0) as usize;
        let last = (((t0 + dur) * fs).floor() as usize).min(ch.len().saturating_sub(1));
        for i in first..=last {
            if i >= ch.len() {
                break;
            }
            ch[i] += amp * e.pulse(i as f64 / fs - t0);
        }
    }
}

/// Draw `k` points uniformly over a silhouette by rejection sampling.
pub fn sample_silhouette(s: &Silhouette, k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let (t0, t1, p0, p1) = s.bounds();
    let mut pts = Vec::with_capacity(k);
    let mut tries = 0usize;
    while pts.len() < k && tries < 1000 * k.max(1) {
        tries += 1;
        let th = rng.gen_range(t0..=t1);
        let ph = rng.gen_range(p0..=p1);
        if s.contains(th, ph) {
            pts.push((th, ph));
        }
    }
    pts
}

/// Echo recording of `n_bursts` bursts, one `interval_s` slot each.
/// Deterministic in `rng_seed`.
pub fn synth_echo(
    scene: &SceneSpec,
    frame: usize,
    e: &EmissionSpec,
    g: &ArrayGeometry,
    n_bursts: usize,
    rng_seed: u64,
) -> Result<Waveform> {
    if n_bursts == 0 {
        return Err(Error::Input("need at least one burst".into()));
    }
    e.validate()?;
    let frames = e.frames_per_burst() * n_bursts;
    let mut samples = vec![vec![0.0; frames]; g.num_mics()];
    let walls = scene.wall_reflectors();
    let sils = scene
        .figures
        .iter()
        .map(|f| f.silhouette(frame))
        .collect::<Result<Vec<_>>>()?;
    let k = scene.points_per_figure;
    for (b, &t_e) in e.emission_times(n_bursts).iter().enumerate() {
        for (fig, sil) in scene.figures.iter().zip(&sils) {
            let mut frng = rng::stream(rng_seed, &[b as u64, frame as u64, fig.stream_key()]);
            let refl = fig.reflectivity / (k as f64).sqrt();
            for (th, ph) in sample_silhouette(sil, k, &mut frng) {
                let target = PointTarget::at(th, ph, sil.range_m, refl);
                add_echo(&mut samples, &target, t_e, e, g, scene.c_mps);
            }
        }
        for target in scene.points.iter().chain(&walls) {
            add_echo(&mut samples, target, t_e, e, g, scene.c_mps);
        }
    }
    if scene.noise_std > 0.0 {
        let mut nrng = rng::stream(rng_seed, &[u64::MAX, frame as u64]);
        for ch in &mut samples {
            for v in ch.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut nrng);
                *v += scene.noise_std * n;
            }
        }
    }
    Waveform::new(samples, e.sample_rate_hz)
}

/// Binary mask of every figure's silhouette, sampled at pixel centers.
pub fn render_segmentation(scene: &SceneSpec, frame: usize, grid: &AngularGrid) -> Result<SegMask> {
    let sils = scene
        .figures
        .iter()
        .map(|f| f.silhouette(frame))
        .collect::<Result<Vec<_>>>()?;
    let mut mask = SegMask::empty(grid.n_theta, grid.n_phi);
    for row in 0..grid.n_phi {
        let ph = grid.phi_deg(row);
        for col in 0..grid.n_theta {
            let th = grid.theta_deg(col);
            if sils.iter().any(|s| s.contains(th, ph)) {
                mask.data[row * grid.n_theta + col] = true;
            }
        }
    }
    Ok(mask)
}

/// Ranges for randomly drawn scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSampler {
    pub min_figures: usize,
    pub max_figures: usize,
    pub min_range_m: f64,
    pub max_range_m: f64,
    pub max_abs_theta_deg: f64,
    /// Height of the array above the floor.
    pub array_height_m: f64,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            min_figures: 1,
            max_figures: 2,
            min_range_m: 1.0,
            max_range_m: 2.6,
            max_abs_theta_deg: 30.0,
            array_height_m: 1.0,
        }
    }
}

fn atan_deg(x: f64) -> f64 {
    x.atan().to_degrees()
}

impl SceneSampler {
    pub fn validate(&self) -> Result<()> {
        if self.min_figures > self.max_figures {
            return Err(Error::Config(
                "scene.min_figures exceeds scene.max_figures".into(),
            ));
        }
        if !(self.min_range_m > 0.0 && self.min_range_m <= self.max_range_m) {
            return Err(Error::Config("scene figure range is empty".into()));
        }
        Ok(())
    }

    /// A random human with a motion track of `frames` frames.
    pub fn figure(&self, frames: usize, grid: &AngularGrid, rng: &mut ChaCha8Rng) -> HumanFigure {
        let range = rng.gen_range(self.min_range_m..=self.max_range_m);
        // body 0.44 m wide, 1.5 m from feet to shoulders, 0.22 m head
        let hw = atan_deg(0.22 / range);
        let hh = atan_deg(0.75 / range);
        let phi = atan_deg((0.75 - self.array_height_m) / range);
        let head = Ellipse {
            rx_deg: atan_deg(0.09 / range),
            ry_deg: atan_deg(0.12 / range),
        };
        let limit = (grid.theta_max_deg - hw - 1.0)
            .min(self.max_abs_theta_deg)
            .max(0.0);
        let theta = rng.gen_range(-limit..=limit);
        let motion = match rng.gen_range(0..4) {
            0 => Motion::Stand,
            1 => Motion::Sit,
            2 => Motion::Walk,
            _ => Motion::Run,
        };
        let speed = match motion {
            Motion::Walk => rng.gen_range(0.4..1.2),
            Motion::Run => rng.gen_range(1.2..2.5),
            _ => 0.0,
        } * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let phase = rng.gen_range(0.0..2.0 * PI);
        let frames = frames.max(1);
        let pose_track = (0..frames)
            .map(|f| {
                let tf = f as f64 - (frames as f64 - 1.0) / 2.0;
                let mut p = PoseOffset::default();
                match motion {
                    Motion::Stand => p.d_theta_deg = 0.8 * (phase + 0.5 * f as f64).sin(),
                    Motion::Sit => {
                        let prog = (f as f64 / (frames as f64 / 2.0).max(1.0)).min(1.0);
                        p.height_scale = 1.0 - 0.35 * prog;
                        // keep the feet planted
                        p.d_phi_deg = -0.35 * prog * hh;
                    }
                    Motion::Walk | Motion::Run => {
                        p.d_theta_deg = speed * tf;
                        p.d_phi_deg = 0.6 * (phase + 1.3 * f as f64).sin().abs();
                    }
                }
                let lim = grid.theta_max_deg - hw - 0.5;
                p.d_theta_deg = (theta + p.d_theta_deg).clamp(-lim, lim) - theta;
                p
            })
            .collect();
        HumanFigure {
            torso: Capsule {
                theta_deg: theta,
                phi_deg: phi,
                range_m: range,
                half_width_deg: hw,
                half_height_deg: hh,
            },
            head,
            pose_track,
            reflectivity: rng.gen_range(0.5..=1.0),
        }
    }

    pub fn scene(
        &self,
        base: &SceneSpec,
        frames: usize,
        grid: &AngularGrid,
        rng: &mut ChaCha8Rng,
    ) -> SceneSpec {
        let n = rng.gen_range(self.min_figures..=self.max_figures);
        SceneSpec {
            figures: (0..n).map(|_| self.figure(frames, grid, rng)).collect(),
            ..base.clone()
        }
    }
}
