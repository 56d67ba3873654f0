use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sonoseg::clvae::{self, ModelParams};
use sonoseg::config::RunConfig;
use sonoseg::dataset::{self, DatasetManifest, Split};
use sonoseg::eval::{self, NoiseModelConfig};
use sonoseg::formats::{mcw, pfm, pgm};
use sonoseg::frontend::FrontEnd;
use sonoseg::image::Image;
use sonoseg::simulator::synth_echo;
use sonoseg::{rng, Error, Parallelism};

#[derive(Parser, Debug)]
#[command(
    name = "sonoseg",
    version,
    about = "Ultrasonic human segmentation pipeline"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// `key = value` config file; SONOSEG_<KEY> variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads, or `strict` for the single-threaded path.
    #[arg(long, global = true, default_value = "strict")]
    threads: Threads,
}

#[derive(Debug, Clone, Copy)]
enum Threads {
    Strict,
    Count(usize),
}

impl std::str::FromStr for Threads {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "strict" {
            return Ok(Threads::Strict);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Count(n)),
            _ => Err(format!(
                "expected a positive integer or `strict`, got {s:?}"
            )),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a paired dataset and its manifest into the output directory.
    Simulate,
    /// Turn MCW1 recordings into sound images.
    Preprocess {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Human-free MCW1 recording; simulated from the config when absent.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Train the model on a manifest's train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Predict masks for sound images.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score a checkpoint on a manifest split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Darken an 8-bit image, add camera noise and report PSNR per kappa.
    Noisecam {
        image: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"
        )]
        kappa: Vec<f64>,
    },
}

/// Failure class, mapped to the exit code.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

fn classify(e: anyhow::Error) -> Failure {
    let usage = match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) => true,
        Some(_) => false,
        None => e.downcast_ref::<std::io::Error>().is_none(),
    };
    if usage {
        Failure::Usage(e)
    } else {
        Failure::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .map_err(Failure::Usage)?;
            RunConfig::parse(&text)
                .with_context(|| format!("config {}", p.display()))
                .map_err(Failure::Usage)?
        }
        None => RunConfig::default(),
    };
    cfg.apply_env(std::env::vars())
        .map_err(|e| Failure::Usage(e.into()))?;
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    Ok(cfg)
}

fn parallelism(t: Threads) -> Result<Parallelism, Failure> {
    match t {
        Threads::Strict => Ok(Parallelism::Sequential),
        Threads::Count(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Usage(anyhow!("thread pool: {e}")))?;
            Ok(Parallelism::Rayon)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = cli.global;
    let cfg = load_config(g.config.as_deref())?;
    let par = parallelism(g.threads)?;
    fs::create_dir_all(&g.out)
        .with_context(|| format!("creating {}", g.out.display()))
        .map_err(Failure::Data)?;
    let echo = format!("# seed={}\n{}", g.seed, cfg.dump());
    fs::write(g.out.join("config.txt"), echo)
        .context("writing config.txt")
        .map_err(Failure::Data)?;
    let out = &g.out;
    let res = match cli.command {
        Command::Simulate => simulate(&cfg, g.seed, out, par),
        Command::Preprocess { inputs, reference } => {
            preprocess(&cfg, g.seed, out, par, &inputs, reference.as_deref())
        }
        Command::Train { manifest } => train(&cfg, g.seed, out, &manifest),
        Command::Infer { checkpoint, inputs } => infer(out, &checkpoint, &inputs),
        Command::Eval {
            checkpoint,
            manifest,
            split,
        } => {
            let split: Split = split
                .parse()
                .map_err(|_| Failure::Usage(anyhow!("--split must be train or test")))?;
            evaluate(out, &checkpoint, &manifest, split)
        }
        Command::Noisecam { image, kappa } => noisecam(g.seed, out, &image, &kappa),
    };
    res.map_err(classify)
}

fn simulate(cfg: &RunConfig, seed: u64, out: &Path, par: Parallelism) -> Result<()> {
    let m = dataset::gen_dataset(cfg, seed, out, par)?;
    let test = m.split(Split::Test).count();
    println!(
        "wrote {} frames ({} train, {} test) to {}",
        m.entries.len(),
        m.entries.len() - test,
        test,
        out.join(dataset::MANIFEST_NAME).display()
    );
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

fn preprocess(
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
    par: Parallelism,
    inputs: &[PathBuf],
    reference: Option<&Path>,
) -> Result<()> {
    let fe = cfg.frontend(par)?;
    let e = cfg.emission();
    let schedule = |frames: usize| {
        let n = frames.div_ceil(e.frames_per_burst()).max(1);
        e.emission_times(n)
    };
    let h_ref = match reference {
        Some(p) => {
            let w = mcw::load(p)?;
            fe.mean_heatmap(&w, &schedule(w.frames()))
                .map_err(|err| err.at(p))?
        }
        None => {
            let base = cfg.scene_base();
            let w = synth_echo(
                &base,
                0,
                &e,
                &fe.geometry,
                cfg.ref_bursts,
                rng::derive(seed, &[0x5245]),
            )?;
            fe.mean_heatmap(&w, &e.emission_times(cfg.ref_bursts))?
        }
    };
    for p in inputs {
        let w = mcw::load(p)?;
        let h = fe
            .mean_heatmap(&w, &schedule(w.frames()))
            .map_err(|err| err.at(p))?;
        let img = FrontEnd::sound_image(&h, &h_ref)?
            .image
            .resize_bilinear(cfg.width, cfg.height);
        let dst = out.join(format!("{}.pfm", stem(p)));
        pfm::save(&dst, &img)?;
        println!("{}", dst.display());
    }
    Ok(())
}

fn train(cfg: &RunConfig, seed: u64, out: &Path, manifest: &Path) -> Result<()> {
    let m = DatasetManifest::load(manifest)?;
    let data = m.load_pairs(Split::Train)?;
    if data.is_empty() {
        return Err(Error::Data {
            path: manifest.to_path_buf(),
            reason: "train split is empty".into(),
        }
        .into());
    }
    let tc = cfg.train_config(seed);
    let res = clvae::train(&data, &tc, Some(out))?;
    for e in &res.epochs {
        println!("epoch {:3} total {:.6}", e.epoch, e.loss.total);
    }
    println!("checkpoint {}", out.join("final.clv").display());
    Ok(())
}

fn load_model(checkpoint: &Path) -> Result<ModelParams> {
    Ok(ModelParams::load(checkpoint)?)
}

fn infer(out: &Path, checkpoint: &Path, inputs: &[PathBuf]) -> Result<()> {
    let params = load_model(checkpoint)?;
    for p in inputs {
        let img = pfm::load(p)?;
        if img.data.len() != params.config.input_dim {
            return Err(Error::Data {
                path: p.clone(),
                reason: format!(
                    "{}x{} image for a model with {} inputs",
                    img.width, img.height, params.config.input_dim
                ),
            }
            .into());
        }
        let probs = clvae::infer(&params, &img.data)?;
        let mask = eval::binarize(img.width, img.height, &probs)?;
        let prob_img = Image::from_vec(img.width, img.height, probs)?;
        let s = stem(p);
        pfm::save(&out.join(format!("{s}.prob.pfm")), &prob_img)?;
        pgm::save_mask(&out.join(format!("{s}.mask.pgm")), &mask)?;
        println!("{s}: {} of {} pixels on", mask.count(), mask.data.len());
    }
    Ok(())
}

fn evaluate(out: &Path, checkpoint: &Path, manifest: &Path, split: Split) -> Result<()> {
    let params = load_model(checkpoint)?;
    let m = DatasetManifest::load(manifest)?;
    let data = m.load_pairs(split)?;
    if data.is_empty() {
        bail!(Error::Data {
            path: manifest.to_path_buf(),
            reason: format!("{split} split is empty"),
        });
    }
    if data.input_dim() != params.config.input_dim {
        bail!(Error::Data {
            path: checkpoint.to_path_buf(),
            reason: format!(
                "model takes {} inputs, images have {}",
                params.config.input_dim,
                data.input_dim()
            ),
        });
    }
    let report = eval::miou(&data, &params)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(out.join("metrics.csv"), buf).context("writing metrics.csv")?;
    println!(
        "miou {:.6} over {} images",
        report.miou,
        report.per_image.len()
    );
    Ok(())
}

fn noisecam(seed: u64, out: &Path, image: &Path, kappas: &[f64]) -> Result<()> {
    let gray = pgm::load(image)?;
    let clean: Vec<f64> = gray.data.iter().map(|&p| p as f64 / 255.0).collect();
    let dark = eval::darken(&gray.data, gray.width, gray.height)?;
    pfm::save(&out.join("dark.pfm"), &dark)?;
    let mut csv = String::from("kappa,psnr\n");
    for &kappa in kappas {
        let cfg = NoiseModelConfig { kappa, seed };
        cfg.validate()?;
        let noisy = eval::add_noise(&dark, &cfg)?;
        let db = eval::psnr(&noisy.data, &clean, 1.0)?;
        pfm::save(&out.join(format!("noisy_k{kappa:.2}.pfm")), &noisy)?;
        csv.push_str(&format!("{kappa},{db:.6}\n"));
        println!("kappa {kappa:.2} psnr {db:.3} dB");
    }
    fs::write(out.join("psnr.csv"), csv).context("writing psnr.csv")?;
    Ok(())
}
