//! Synthetic paired dataset: sound images (PFM), masks (PGM) and a manifest.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::clvae::PairedData;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{self, mcw, pfm, pgm};
use crate::frontend::FrontEnd;
use crate::image::{Image, SegMask};
use crate::par::{self, Parallelism};
use crate::rng;
use crate::simulator::{render_segmentation, synth_echo, SceneSpec};

pub const MANIFEST_NAME: &str = "manifest.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::format("manifest", format!("bad split tag {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub sound: PathBuf,
    pub mask: PathBuf,
    pub frame: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub digest: String,
    /// Directory the entry paths are relative to.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn write(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "# seed={} digest={}", self.seed, self.digest)?;
        for e in &self.entries {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                e.sound.display(),
                e.mask.display(),
                e.frame,
                e.split
            )?;
        }
        Ok(())
    }

    pub fn read(r: &mut dyn Read, root: &Path) -> Result<Self> {
        let bad = |n: usize, why: &str| Error::format("manifest", format!("line {n}: {why}"));
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty file"))??;
        let rest = header
            .strip_prefix("# ")
            .ok_or_else(|| bad(1, "missing header"))?;
        let (mut seed, mut digest) = (None, None);
        for tok in rest.split_whitespace() {
            match tok.split_once('=') {
                Some(("seed", v)) => seed = Some(v.parse().map_err(|_| bad(1, "bad seed"))?),
                Some(("digest", v)) => digest = Some(v.to_string()),
                _ => return Err(bad(1, "unexpected header field")),
            }
        }
        let (seed, digest) = seed
            .zip(digest)
            .ok_or_else(|| bad(1, "header needs seed and digest"))?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(i + 2, "expected 4 tab-separated fields"));
            }
            entries.push(ManifestEntry {
                sound: PathBuf::from(f[0]),
                mask: PathBuf::from(f[1]),
                frame: f[2].parse().map_err(|_| bad(i + 2, "bad frame index"))?,
                split: f[3].parse()?,
            });
        }
        Ok(Self {
            entries,
            seed,
            digest,
            root: root.to_path_buf(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        formats::write_file(path, |w| Ok(self.write(w)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let root = path.parent().unwrap_or(Path::new("")).to_path_buf();
        formats::read_file(path, |r| Self::read(r, &root)).map_err(|e| e.at(path))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Read every pair of a split into memory.
    pub fn load_pairs(&self, split: Split) -> Result<PairedData> {
        let mut out = PairedData {
            width: 0,
            height: 0,
            seg: Vec::new(),
            us: Vec::new(),
            names: Vec::new(),
        };
        for e in self.split(split) {
            let sp = self.root.join(&e.sound);
            let mp = self.root.join(&e.mask);
            let sound = pfm::load(&sp)?;
            let mask = pgm::load_mask(&mp)?;
            if (sound.width, sound.height) != (mask.width, mask.height) {
                return Err(Error::Data {
                    path: mp,
                    reason: "mask and sound image sizes differ".into(),
                });
            }
            if out.seg.is_empty() {
                out.width = sound.width;
                out.height = sound.height;
            } else if (sound.width, sound.height) != (out.width, out.height) {
                return Err(Error::Data {
                    path: sp,
                    reason: "image size differs from the rest of the split".into(),
                });
            }
            if let Some(v) = sound.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Data {
                    path: sp,
                    reason: format!("value {v} outside [0, 1]"),
                });
            }
            out.seg.push(mask.to_f64());
            out.us.push(sound.data);
            out.names.push(e.sound.display().to_string());
        }
        Ok(out)
    }
}

fn frame_stem(scene: usize, frame: usize) -> String {
    format!("s{scene:03}_f{frame:03}")
}

/// Scene indices held out for testing.
pub fn test_scenes(scenes: usize, test_fraction: f64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scenes).collect();
    order.shuffle(&mut rng::stream(seed, &[0x5350]));
    let mut n = (scenes as f64 * test_fraction).round() as usize;
    if scenes >= 2 && test_fraction > 0.0 {
        n = n.clamp(1, scenes - 1);
    }
    let mut test = order[..n.min(scenes)].to_vec();
    test.sort_unstable();
    test
}

/// One simulated frame at training resolution.
pub struct Frame {
    pub sound: Image,
    pub mask: SegMask,
}

/// Simulate a whole dataset and write it under `out`.
pub fn gen_dataset(
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
    par: Parallelism,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let fe = cfg.frontend(par)?;
    let e = cfg.emission();
    let grid = cfg.grid();
    let sampler = cfg.sampler();
    let base = cfg.scene_base();
    let scenes: Vec<SceneSpec> = (0..cfg.scenes)
        .map(|s| {
            let mut r = rng::stream(seed, &[0x5343, s as u64]);
            sampler.scene(&base, cfg.frames_per_scene, &grid, &mut r)
        })
        .collect();
    let refs = par::map_indexed(par, cfg.scenes, |s| {
        fe.reference_capture(
            &base,
            &e,
            cfg.ref_bursts,
            rng::derive(seed, &[0x5245, s as u64]),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    for sub in ["sound", "mask"] {
        std::fs::create_dir_all(out.join(sub)).map_err(|err| Error::Data {
            path: out.join(sub),
            reason: err.to_string(),
        })?;
    }
    if cfg.write_waveforms {
        std::fs::create_dir_all(out.join("wave"))?;
        for s in 0..cfg.scenes {
            let w = synth_echo(
                &base,
                0,
                &e,
                &fe.geometry,
                cfg.ref_bursts,
                rng::derive(seed, &[0x5245, s as u64]),
            )?;
            mcw::save(&out.join("wave").join(format!("ref_s{s:03}.mcw")), &w)?;
        }
    }

    let fps = cfg.frames_per_scene;
    let times = e.emission_times(cfg.bursts_per_frame);
    let frames = par::map_indexed(par, cfg.scenes * fps, |i| -> Result<()> {
        let (s, f) = (i / fps, i % fps);
        let w = synth_echo(
            &scenes[s],
            f,
            &e,
            &fe.geometry,
            cfg.bursts_per_frame,
            rng::derive(seed, &[0x4652, s as u64]),
        )?;
        let h = fe.mean_heatmap(&w, &times)?;
        let sound = FrontEnd::sound_image(&h, &refs[s])?
            .image
            .resize_bilinear(cfg.width, cfg.height);
        let mask = render_segmentation(&scenes[s], f, &grid)?.resize_nearest(cfg.width, cfg.height);
        let stem = frame_stem(s, f);
        pfm::save(&out.join("sound").join(format!("{stem}.pfm")), &sound)?;
        pgm::save_mask(&out.join("mask").join(format!("{stem}.pgm")), &mask)?;
        if cfg.write_waveforms {
            mcw::save(&out.join("wave").join(format!("{stem}.mcw")), &w)?;
        }
        Ok(())
    });
    frames.into_iter().collect::<Result<Vec<_>>>()?;

    let test = test_scenes(cfg.scenes, cfg.test_fraction, seed);
    let entries = (0..cfg.scenes * fps)
        .map(|i| {
            let (s, f) = (i / fps, i % fps);
            let stem = frame_stem(s, f);
            ManifestEntry {
                sound: Path::new("sound").join(format!("{stem}.pfm")),
                mask: Path::new("mask").join(format!("{stem}.pgm")),
                frame: f,
                split: if test.binary_search(&s).is_ok() {
                    Split::Test
                } else {
                    Split::Train
                },
            }
        })
        .collect();
    let manifest = DatasetManifest {
        entries,
        seed,
        digest: cfg.digest(),
        root: out.to_path_buf(),
    };
    manifest.save(&out.join(MANIFEST_NAME))?;
    Ok(manifest)
}
