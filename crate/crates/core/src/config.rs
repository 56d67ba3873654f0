//! Flat `key = value` run configuration.
//!
//! Every key has a default; unknown keys are rejected. A key can be
//! overridden from the environment as `SONOSEG_<KEY>` with dots replaced by
//! underscores, e.g. `SONOSEG_TRAIN_EPOCHS=5`.

use sha2::{Digest, Sha256};

use crate::beamform::{AngularGrid, ArrayGeometry};
use crate::clvae::TrainConfig;
use crate::error::{Error, Result};
use crate::frontend::FrontEnd;
use crate::nn::AdamConfig;
use crate::par::Parallelism;
use crate::sigproc::{FilterSpec, Gating};
use crate::simulator::{EmissionSpec, PointTarget, SceneSampler, SceneSpec};

pub const ENV_PREFIX: &str = "SONOSEG_";

trait Value: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

impl Value for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
        if !v.is_finite() {
            return Err(format!("not finite: {s:?}"));
        }
        Ok(v)
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl Value for usize {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
            .map_err(|_| format!("not a nonnegative integer: {s:?}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for u32 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
            .map_err(|_| format!("not a nonnegative integer: {s:?}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(format!("not a boolean: {s:?}")),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// `auto` or a number.
impl Value for Option<f64> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| v.render())
    }
}

macro_rules! run_config {
    ($($key:literal => $field:ident: $ty:ty = $default:expr, $doc:literal;)*) => {
        /// All pipeline tunables.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(#[doc = $doc] pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl RunConfig {
            /// `(key, description)` of every key, in dump order.
            pub const KEYS: &'static [(&'static str, &'static str)] = &[$(($key, $doc),)*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = Value::parse_value(value)
                            .map_err(|e| Error::Config(format!("key {key}: {e}")))?
                    })*
                    _ => return Err(Error::Config(format!("unknown key {key}"))),
                }
                Ok(())
            }

            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$field.render()),)*]
            }
        }
    };
}

run_config! {
    "emission.carrier_hz" => carrier_hz: f64 = 62_000.0, "burst carrier frequency";
    "emission.cycles" => cycles: u32 = 20, "carrier cycles per burst";
    "emission.interval_s" => interval_s: f64 = 0.05, "time between bursts";
    "emission.sample_rate_hz" => sample_rate_hz: f64 = 192_000.0, "microphone sample rate";
    "emission.amplitude" => amplitude: f64 = 1.0, "burst amplitude";
    "array.rows" => array_rows: usize = 4, "microphone rows";
    "array.cols" => array_cols: usize = 4, "microphone columns";
    "array.pitch_m" => pitch_m: f64 = 0.00325, "microphone pitch";
    "array.emitter_offset_m" => emitter_offset_m: f64 = 0.03, "emitter x offset from the array center";
    "grid.n_theta" => n_theta: usize = 45, "azimuth pixels";
    "grid.n_phi" => n_phi: usize = 30, "elevation pixels";
    "grid.theta_max_deg" => theta_max_deg: f64 = 45.0, "azimuth half span";
    "grid.phi_max_deg" => phi_max_deg: f64 = 60.0, "elevation half span";
    "filter.center_hz" => center_hz: f64 = 62_000.0, "band-pass center";
    "filter.bandwidth_hz" => bandwidth_hz: f64 = 10_000.0, "band-pass width";
    "filter.num_taps" => num_taps: usize = 255, "band-pass taps (odd)";
    "gate.direct_len_s" => direct_len_s: Option<f64> = None, "direct block length, auto = burst duration";
    "gate.guard_s" => guard_s: f64 = 0.0005, "gap between direct and reflected blocks";
    "gate.max_range_m" => max_range_m: f64 = 3.5, "range covered by the reflected gate";
    "scene.c_mps" => c_mps: f64 = 343.0, "speed of sound";
    "scene.noise_std" => noise_std: f64 = 0.01, "per-sample sensor noise";
    "scene.wall_range_m" => wall_range_m: f64 = 3.0, "distance to the back wall";
    "scene.wall_reflectivity" => wall_reflectivity: f64 = 1.0, "back wall reflectivity, 0 removes it";
    "scene.clutter_theta_deg" => clutter_theta_deg: f64 = 40.0, "azimuth of a static fixture";
    "scene.clutter_phi_deg" => clutter_phi_deg: f64 = 45.0, "elevation of a static fixture";
    "scene.clutter_range_m" => clutter_range_m: f64 = 1.2, "range of a static fixture";
    "scene.clutter_reflectivity" => clutter_reflectivity: f64 = 0.0, "static fixture reflectivity, 0 disables it";
    "scene.points_per_figure" => points_per_figure: usize = 64, "scatterers per figure per burst";
    "scene.min_figures" => min_figures: usize = 1, "fewest people per scene";
    "scene.max_figures" => max_figures: usize = 2, "most people per scene";
    "scene.min_range_m" => min_range_m: f64 = 1.0, "nearest person";
    "scene.max_range_m" => figure_max_range_m: f64 = 2.6, "farthest person";
    "scene.max_abs_theta_deg" => max_abs_theta_deg: f64 = 30.0, "azimuth limit for people";
    "scene.array_height_m" => array_height_m: f64 = 1.0, "array height above the floor";
    "data.scenes" => scenes: usize = 24, "scenes to simulate";
    "data.frames_per_scene" => frames_per_scene: usize = 12, "frames per scene";
    "data.bursts_per_frame" => bursts_per_frame: usize = 1, "bursts averaged into one frame";
    "data.ref_bursts" => ref_bursts: usize = 4, "bursts averaged into the reference";
    "data.width" => width: usize = 32, "training image width";
    "data.height" => height: usize = 32, "training image height";
    "data.test_fraction" => test_fraction: f64 = 0.2, "share of scenes held out";
    "data.write_waveforms" => write_waveforms: bool = false, "also dump MCW1 recordings";
    "train.alpha" => alpha: f64 = 0.0001, "loss mix";
    "train.batch" => batch: usize = 128, "minibatch size";
    "train.lr" => lr: f64 = 0.001, "Adam step size";
    "train.beta1" => beta1: f64 = 0.9, "Adam first moment decay";
    "train.beta2" => beta2: f64 = 0.999, "Adam second moment decay";
    "train.adam_eps" => adam_eps: f64 = 1e-8, "Adam epsilon";
    "train.epochs" => epochs: usize = 40, "training epochs";
    "train.latent_dim" => latent_dim: usize = 32, "latent dimensions";
    "train.hidden1" => hidden1: usize = 512, "first hidden width";
    "train.hidden2" => hidden2: usize = 256, "second hidden width";
    "train.checkpoint_every" => checkpoint_every: usize = 10, "epochs between checkpoints, 0 = final only";
}

impl RunConfig {
    /// Defaults overlaid with `key = value` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("key {key} given twice")));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn env_name(key: &str) -> String {
        format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('.', "_"))
    }

    /// Apply `SONOSEG_*` variables; an unrecognized one is an error.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            if !name.starts_with(ENV_PREFIX) {
                continue;
            }
            let key = Self::KEYS
                .iter()
                .map(|(k, _)| *k)
                .find(|k| Self::env_name(k) == name)
                .ok_or_else(|| {
                    Error::Config(format!("unknown key in environment variable {name}"))
                })?;
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same config.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// SHA-256 of [`RunConfig::dump`], hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.dump().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn emission(&self) -> EmissionSpec {
        EmissionSpec {
            carrier_hz: self.carrier_hz,
            cycles: self.cycles,
            interval_s: self.interval_s,
            sample_rate_hz: self.sample_rate_hz,
            amplitude: self.amplitude,
        }
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry::grid(
            self.array_rows,
            self.array_cols,
            self.pitch_m,
            self.emitter_offset_m,
        )
    }

    pub fn grid(&self) -> AngularGrid {
        AngularGrid {
            theta_min_deg: -self.theta_max_deg,
            theta_max_deg: self.theta_max_deg,
            phi_min_deg: -self.phi_max_deg,
            phi_max_deg: self.phi_max_deg,
            n_theta: self.n_theta,
            n_phi: self.n_phi,
        }
    }

    pub fn filter(&self) -> FilterSpec {
        FilterSpec {
            center_hz: self.center_hz,
            bandwidth_hz: self.bandwidth_hz,
            num_taps: self.num_taps,
        }
    }

    pub fn gating(&self) -> Gating {
        let direct = self
            .direct_len_s
            .unwrap_or_else(|| self.emission().duration_s());
        Gating::for_range(direct, self.guard_s, self.max_range_m, self.c_mps)
    }

    /// Room without people: back wall plus one static fixture.
    pub fn scene_base(&self) -> SceneSpec {
        let mut points = Vec::new();
        if self.clutter_reflectivity != 0.0 {
            points.push(PointTarget::at(
                self.clutter_theta_deg,
                self.clutter_phi_deg,
                self.clutter_range_m,
                self.clutter_reflectivity,
            ));
        }
        SceneSpec {
            figures: Vec::new(),
            points,
            wall_range_m: self.wall_range_m,
            wall_reflectivity: self.wall_reflectivity,
            noise_std: self.noise_std,
            c_mps: self.c_mps,
            points_per_figure: self.points_per_figure,
        }
    }

    pub fn sampler(&self) -> SceneSampler {
        SceneSampler {
            min_figures: self.min_figures,
            max_figures: self.max_figures,
            min_range_m: self.min_range_m,
            max_range_m: self.figure_max_range_m,
            max_abs_theta_deg: self.max_abs_theta_deg,
            array_height_m: self.array_height_m,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            batch: self.batch,
            epochs: self.epochs,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            latent_dim: self.latent_dim,
            hidden: [self.hidden1, self.hidden2],
            seed,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn frontend(&self, par: Parallelism) -> Result<FrontEnd> {
        FrontEnd::new(
            &self.filter(),
            self.sample_rate_hz,
            self.geometry(),
            self.grid(),
            self.gating(),
            self.c_mps,
            par,
        )
    }

    /// Check every derived spec.
    pub fn validate(&self) -> Result<()> {
        let e = self.emission();
        e.validate()?;
        self.filter().validate(self.sample_rate_hz)?;
        self.geometry().validate()?;
        self.grid().validate()?;
        self.scene_base().validate()?;
        self.sampler().validate()?;
        self.train_config(0).validate()?;
        // a gate that overruns the burst interval fails here
        crate::sigproc::split_blocks(
            e.frames_per_burst() * 2,
            self.sample_rate_hz,
            &e.emission_times(2),
            &self.gating(),
        )?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(
                "data.width and data.height must be >= 1".into(),
            ));
        }
        if self.bursts_per_frame == 0 || self.ref_bursts == 0 {
            return Err(Error::Config("burst counts must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(
                "data.test_fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}
