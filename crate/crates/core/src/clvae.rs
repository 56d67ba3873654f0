//! Collaborative-learning VAE.
//!
//! One encoder `q(z|x)` is shared by segmentation masks and sound images.
//! Training draws `z` from the mask branch and reconstructs the mask, while
//! an MSE term pulls the sound-image posterior `(μ, σ)` onto the mask
//! posterior:
//!
//! `L = α (L_RE + D_KL) + (1 − α) L_MSE`
//!
//! At test time a sound image is encoded, `z = μ`, and decoded to mask
//! probabilities.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{self, Checkpoint};
use crate::nn::{AdamConfig, AdamState, Graph, NodeId, Tensor};
use crate::rng;

pub const LOGVAR_LIMIT: f64 = 10.0;
pub const XHAT_CLAMP: f64 = 1e-7;

/// Layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub latent_dim: usize,
}

impl ModelConfig {
    pub fn new(input_dim: usize, latent_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: [512, 256],
            latent_dim,
        }
    }

    fn shapes(&self) -> [Vec<usize>; 14] {
        let (n, [h1, h2], d) = (self.input_dim, self.hidden, self.latent_dim);
        [
            vec![n, h1],
            vec![h1],
            vec![h1, h2],
            vec![h2],
            vec![h2, d],
            vec![d],
            vec![h2, d],
            vec![d],
            vec![d, h2],
            vec![h2],
            vec![h2, h1],
            vec![h1],
            vec![h1, n],
            vec![n],
        ]
    }
}

pub const PARAM_NAMES: [&str; 14] = [
    "enc.fc1.weight",
    "enc.fc1.bias",
    "enc.fc2.weight",
    "enc.fc2.bias",
    "enc.mu.weight",
    "enc.mu.bias",
    "enc.logvar.weight",
    "enc.logvar.bias",
    "dec.fc1.weight",
    "dec.fc1.bias",
    "dec.fc2.weight",
    "dec.fc2.bias",
    "dec.out.weight",
    "dec.out.bias",
];

/// Encoder (φ) and decoder (θ) weights in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[0x1417]);
        let tensors = config
            .shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 2 {
                    let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    let n = shape[0] * shape[1];
                    let data = (0..n).map(|_| r.gen_range(-limit..limit)).collect();
                    Tensor { shape, data }
                } else {
                    Tensor::zeros(&shape)
                }
            })
            .collect();
        Self { config, tensors }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        Self {
            config,
            tensors: config.shapes().iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn to_checkpoint(&self, seed: u64, epoch: u32) -> Checkpoint {
        Checkpoint {
            blobs: PARAM_NAMES
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
            seed,
            epoch,
        }
    }

    /// Rebuild from a checkpoint, recovering the layer widths from shapes.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let fetch = |name: &str| {
            ck.get(name)
                .ok_or_else(|| Error::format("CLV1", format!("missing blob {name}")))
        };
        let w1 = fetch("enc.fc1.weight")?.dims2()?;
        let w2 = fetch("enc.fc2.weight")?.dims2()?;
        let wmu = fetch("enc.mu.weight")?.dims2()?;
        let config = ModelConfig {
            input_dim: w1.0,
            hidden: [w1.1, w2.1],
            latent_dim: wmu.1,
        };
        let tensors = PARAM_NAMES
            .iter()
            .zip(config.shapes())
            .map(|(name, shape)| {
                let t = fetch(name)?;
                if t.shape != shape {
                    return Err(Error::format(
                        "CLV1",
                        format!("{name} has shape {:?}, expected {shape:?}", t.shape),
                    ));
                }
                Ok(t.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: &Path, seed: u64, epoch: u32) -> Result<()> {
        checkpoint::save(path, &self.to_checkpoint(seed, epoch))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&checkpoint::load(path)?).map_err(|e| e.at(path))
    }
}

/// Posterior parameters of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Parameter nodes registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ParamIds([NodeId; 14]);

impl ParamIds {
    pub fn register(g: &mut Graph, params: &ModelParams, trainable: bool) -> Self {
        let ids = std::array::from_fn(|i| {
            let t = params.tensors[i].clone();
            if trainable {
                g.param(t)
            } else {
                g.constant(t)
            }
        });
        Self(ids)
    }

    pub fn ids(&self) -> &[NodeId; 14] {
        &self.0
    }
}

/// Encoder outputs on the tape; `logvar` is already clamped.
#[derive(Debug, Clone, Copy)]
pub struct EncoderNodes {
    pub mu: NodeId,
    pub logvar: NodeId,
    pub sigma: NodeId,
}

pub fn encode_nodes(g: &mut Graph, p: &ParamIds, x: NodeId) -> Result<EncoderNodes> {
    let w = &p.0;
    let h = g.linear(x, w[0], w[1])?;
    let h = g.relu(h);
    let h = g.linear(h, w[2], w[3])?;
    let h = g.relu(h);
    let mu = g.linear(h, w[4], w[5])?;
    let lv = g.linear(h, w[6], w[7])?;
    let logvar = g.clamp(lv, -LOGVAR_LIMIT, LOGVAR_LIMIT);
    let half = g.scale(logvar, 0.5);
    let sigma = g.exp(half);
    Ok(EncoderNodes { mu, logvar, sigma })
}

pub fn decode_nodes(g: &mut Graph, p: &ParamIds, z: NodeId) -> Result<NodeId> {
    let w = &p.0;
    let h = g.linear(z, w[8], w[9])?;
    let h = g.relu(h);
    let h = g.linear(h, w[10], w[11])?;
    let h = g.relu(h);
    let o = g.linear(h, w[12], w[13])?;
    Ok(g.sigmoid(o))
}

fn check_dim(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!(
            "{what} has {got} values, model expects {want}"
        )));
    }
    Ok(())
}

fn rows_tensor(rows: &[&[f64]], width: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        check_dim(r.len(), width, "input row")?;
        data.extend_from_slice(r);
    }
    Tensor::matrix(rows.len(), width, data)
}

/// Posterior of every input row, computed in one batch.
pub fn encode_batch(params: &ModelParams, xs: &[&[f64]]) -> Result<Vec<LatentGaussian>> {
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let mut g = Graph::new();
    let p = ParamIds::register(&mut g, params, false);
    let x = g.constant(rows_tensor(xs, params.config.input_dim)?);
    let enc = encode_nodes(&mut g, &p, x)?;
    let d = params.config.latent_dim;
    let mu = g.value(enc.mu).data.chunks_exact(d);
    let sigma = g.value(enc.sigma).data.chunks_exact(d);
    Ok(mu
        .zip(sigma)
        .map(|(m, s)| LatentGaussian {
            mu: m.to_vec(),
            sigma: s.to_vec(),
        })
        .collect())
}

pub fn encode(params: &ModelParams, x: &[f64]) -> Result<LatentGaussian> {
    Ok(encode_batch(params, &[x])?.remove(0))
}

/// `z = μ + ε ⊙ σ`.
pub fn reparameterize(lat: &LatentGaussian, eps: &[f64]) -> Result<Vec<f64>> {
    check_dim(eps.len(), lat.mu.len(), "eps")?;
    Ok(lat
        .mu
        .iter()
        .zip(&lat.sigma)
        .zip(eps)
        .map(|((m, s), e)| m + e * s)
        .collect())
}

pub fn decode_batch(params: &ModelParams, zs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    if zs.is_empty() {
        return Ok(Vec::new());
    }
    let mut g = Graph::new();
    let p = ParamIds::register(&mut g, params, false);
    let z = g.constant(rows_tensor(zs, params.config.latent_dim)?);
    let out = decode_nodes(&mut g, &p, z)?;
    Ok(g.value(out)
        .data
        .chunks_exact(params.config.input_dim)
        .map(<[f64]>::to_vec)
        .collect())
}

pub fn decode(params: &ModelParams, z: &[f64]) -> Result<Vec<f64>> {
    Ok(decode_batch(params, &[z])?.remove(0))
}

/// Mean binary cross-entropy with `x̂` clamped to `[1e-7, 1 − 1e-7]`.
pub fn loss_re(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_dim(x_hat.len(), x.len(), "reconstruction")?;
    if x.is_empty() {
        return Err(Error::Input("empty image".into()));
    }
    let s: f64 = x
        .iter()
        .zip(x_hat)
        .map(|(&t, &p)| {
            let p = p.clamp(XHAT_CLAMP, 1.0 - XHAT_CLAMP);
            -t * p.ln() - (1.0 - t) * (1.0 - p).ln()
        })
        .sum();
    Ok(s / x.len() as f64)
}

/// KL divergence to the standard normal, summed over latent dimensions.
pub fn loss_kl(lat: &LatentGaussian) -> f64 {
    0.5 * lat
        .mu
        .iter()
        .zip(&lat.sigma)
        .map(|(m, s)| {
            let var = s * s;
            m * m + var - 1.0 - var.ln()
        })
        .sum::<f64>()
}

/// Mean squared difference of means plus that of standard deviations.
pub fn loss_mse(a: &LatentGaussian, b: &LatentGaussian) -> Result<f64> {
    check_dim(a.mu.len(), b.mu.len(), "latent")?;
    let d = a.mu.len() as f64;
    let dm: f64 = a.mu.iter().zip(&b.mu).map(|(p, q)| (p - q).powi(2)).sum();
    let ds: f64 = a
        .sigma
        .iter()
        .zip(&b.sigma)
        .map(|(p, q)| (p - q).powi(2))
        .sum();
    Ok(dm / d + ds / d)
}

/// Loss components and their α-weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_re: f64,
    pub d_kl: f64,
    pub l_mse: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(alpha: f64, l_re: f64, d_kl: f64, l_mse: f64) -> Self {
        Self {
            l_re,
            d_kl,
            l_mse,
            total: alpha * (l_re + d_kl) + (1.0 - alpha) * l_mse,
        }
    }

    /// |total − α(l_re + d_kl) − (1 − α) l_mse|
    pub fn identity_error(&self, alpha: f64) -> f64 {
        (self.total - Self::combine(alpha, self.l_re, self.d_kl, self.l_mse).total).abs()
    }
}

/// Scalar loss nodes for a batch.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub l_re: NodeId,
    pub d_kl: NodeId,
    pub l_mse: NodeId,
    pub total: NodeId,
}

/// Batch loss: every component is averaged over the batch rows.
pub fn build_loss(
    g: &mut Graph,
    p: &ParamIds,
    x_seg: NodeId,
    x_us: NodeId,
    eps: NodeId,
    alpha: f64,
) -> Result<LossNodes> {
    let (b, n) = g.value(x_seg).dims2()?;
    let seg = encode_nodes(g, p, x_seg)?;
    let us = encode_nodes(g, p, x_us)?;
    let d = g.value(seg.mu).dims2()?.1;
    if g.value(eps).shape != [b, d] {
        return Err(Error::Shape(format!(
            "eps {:?}, expected [{b}, {d}]",
            g.value(eps).shape
        )));
    }

    // reconstruction from the mask branch
    let noise = g.mul(eps, seg.sigma)?;
    let z = g.add(seg.mu, noise)?;
    let x_hat = decode_nodes(g, p, z)?;
    let x_hat = g.clamp(x_hat, XHAT_CLAMP, 1.0 - XHAT_CLAMP);
    let one_minus_x = {
        let x = g.value(x_seg);
        let t = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|v| 1.0 - v).collect(),
        };
        g.constant(t)
    };
    let log_p = g.log(x_hat);
    let neg_xh = g.neg(x_hat);
    let one_minus_xh = g.add_scalar(neg_xh, 1.0);
    let log_q = g.log(one_minus_xh);
    let a = g.mul(x_seg, log_p)?;
    let c = g.mul(one_minus_x, log_q)?;
    let ll = g.add(a, c)?;
    let ll = g.sum(ll);
    let l_re = g.scale(ll, -1.0 / (b * n) as f64);

    // KL of the mask posterior
    let mu2 = g.mul(seg.mu, seg.mu)?;
    let var = g.exp(seg.logvar);
    let t = g.sub(seg.logvar, mu2)?;
    let t = g.sub(t, var)?;
    let t = g.add_scalar(t, 1.0);
    let t = g.sum(t);
    let d_kl = g.scale(t, -0.5 / b as f64);

    // posterior matching
    let dm = g.sub(us.mu, seg.mu)?;
    let dm2 = g.mul(dm, dm)?;
    let ds = g.sub(us.sigma, seg.sigma)?;
    let ds2 = g.mul(ds, ds)?;
    let sm = g.sum(dm2);
    let ss = g.sum(ds2);
    let sm = g.scale(sm, 1.0 / (b * d) as f64);
    let ss = g.scale(ss, 1.0 / (b * d) as f64);
    let l_mse = g.add(sm, ss)?;

    let vae = g.add(l_re, d_kl)?;
    let vae = g.scale(vae, alpha);
    let mix = g.scale(l_mse, 1.0 - alpha);
    let total = g.add(vae, mix)?;
    Ok(LossNodes {
        l_re,
        d_kl,
        l_mse,
        total,
    })
}

fn breakdown(g: &Graph, l: &LossNodes) -> LossBreakdown {
    LossBreakdown {
        l_re: g.value(l.l_re).item(),
        d_kl: g.value(l.d_kl).item(),
        l_mse: g.value(l.l_mse).item(),
        total: g.value(l.total).item(),
    }
}

/// Loss of one (mask, sound image) pair with a caller-supplied `ε`.
pub fn total_loss(
    x_seg: &[f64],
    x_us: &[f64],
    params: &ModelParams,
    alpha: f64,
    eps: &[f64],
) -> Result<LossBreakdown> {
    Ok(loss_and_grads(params, &[x_seg], &[x_us], &[eps], alpha, false)?.0)
}

/// Batch loss and, when `with_grads`, its gradient for every parameter.
pub fn loss_and_grads(
    params: &ModelParams,
    x_seg: &[&[f64]],
    x_us: &[&[f64]],
    eps: &[&[f64]],
    alpha: f64,
    with_grads: bool,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    if x_seg.len() != x_us.len() || x_seg.len() != eps.len() || x_seg.is_empty() {
        return Err(Error::Input("mismatched or empty batch".into()));
    }
    let n = params.config.input_dim;
    let mut g = Graph::new();
    let p = ParamIds::register(&mut g, params, with_grads);
    let xs = g.constant(rows_tensor(x_seg, n)?);
    let xu = g.constant(rows_tensor(x_us, n)?);
    let e = g.constant(rows_tensor(eps, params.config.latent_dim)?);
    let loss = build_loss(&mut g, &p, xs, xu, e, alpha)?;
    let out = breakdown(&g, &loss);
    if !with_grads {
        return Ok((out, Vec::new()));
    }
    g.backward(loss.total)?;
    let grads =
        p.0.iter()
            .zip(&params.tensors)
            .map(|(id, t)| {
                g.grad(*id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(&t.shape))
            })
            .collect();
    Ok((out, grads))
}

/// Mask probabilities from sound images, decoding `z = μ`.
pub fn infer_batch(params: &ModelParams, x_us: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let lat = encode_batch(params, x_us)?;
    let zs: Vec<&[f64]> = lat.iter().map(|l| l.mu.as_slice()).collect();
    decode_batch(params, &zs)
}

pub fn infer(params: &ModelParams, x_us: &[f64]) -> Result<Vec<f64>> {
    Ok(infer_batch(params, &[x_us])?.remove(0))
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub batch: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub latent_dim: usize,
    pub hidden: [usize; 2],
    pub seed: u64,
    /// Write `epoch_NNN.clv` every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0001,
            batch: 128,
            epochs: 40,
            adam: AdamConfig::default(),
            latent_dim: 32,
            hidden: [512, 256],
            seed: 0,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "train.alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.batch == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(
                "batch, latent and hidden sizes must be >= 1".into(),
            ));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        Ok(())
    }
}

/// Paired training images, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedData {
    pub width: usize,
    pub height: usize,
    pub seg: Vec<Vec<f64>>,
    pub us: Vec<Vec<f64>>,
    /// Sound-image path of each pair, for reports.
    pub names: Vec<String>,
}

impl PairedData {
    pub fn len(&self) -> usize {
        self.seg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seg.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub epochs: Vec<EpochLog>,
    /// Every optimizer step, in order.
    pub steps: Vec<LossBreakdown>,
}

pub fn write_loss_csv(w: &mut dyn Write, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "epoch,l_re,d_kl,l_mse,total")?;
    for e in log {
        let l = &e.loss;
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e}",
            e.epoch, l.l_re, l.d_kl, l.l_mse, l.total
        )?;
    }
    Ok(())
}

/// Minibatch Adam. Epochs are numbered from 1; each epoch's entry is the
/// sample-weighted mean of its step losses. With `out_dir`, periodic and
/// final checkpoints plus `loss.csv` are written there.
pub fn train(data: &PairedData, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutput> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    let model = ModelConfig {
        input_dim: data.input_dim(),
        hidden: cfg.hidden,
        latent_dim: cfg.latent_dim,
    };
    let mut params = ModelParams::init(model, cfg.seed);
    let mut adam = AdamState::new(cfg.adam, &params.tensors);
    let batch = cfg.batch.min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut steps = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut shuffle = rng::stream(cfg.seed, &[0x5348, epoch as u64]);
        order.shuffle(&mut shuffle);
        let mut acc = [0.0f64; 4];
        for (step, idx) in order.chunks(batch).enumerate() {
            let mut erng = rng::stream(cfg.seed, &[0x4550, epoch as u64, step as u64]);
            let eps: Vec<Vec<f64>> = idx
                .iter()
                .map(|_| {
                    (0..cfg.latent_dim)
                        .map(|_| StandardNormal.sample(&mut erng))
                        .collect()
                })
                .collect();
            let seg: Vec<&[f64]> = idx.iter().map(|&i| data.seg[i].as_slice()).collect();
            let us: Vec<&[f64]> = idx.iter().map(|&i| data.us[i].as_slice()).collect();
            let eps_refs: Vec<&[f64]> = eps.iter().map(Vec::as_slice).collect();
            let (loss, grads) = loss_and_grads(&params, &seg, &us, &eps_refs, cfg.alpha, true)?;
            adam.step(&mut params.tensors, &grads)?;
            let w = idx.len() as f64;
            acc[0] += w * loss.l_re;
            acc[1] += w * loss.d_kl;
            acc[2] += w * loss.l_mse;
            acc[3] += w * loss.total;
            steps.push(loss);
        }
        let n = data.len() as f64;
        epochs.push(EpochLog {
            epoch,
            loss: LossBreakdown {
                l_re: acc[0] / n,
                d_kl: acc[1] / n,
                l_mse: acc[2] / n,
                total: acc[3] / n,
            },
        });
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                params.save(
                    &dir.join(format!("epoch_{epoch:03}.clv")),
                    cfg.seed,
                    epoch as u32,
                )?;
            }
        }
    }
    if let Some(dir) = out_dir {
        params.save(&dir.join("final.clv"), cfg.seed, cfg.epochs as u32)?;
        crate::formats::write_file(&dir.join("loss.csv"), |w| Ok(write_loss_csv(w, &epochs)?))?;
    }
    Ok(TrainOutput {
        params,
        epochs,
        steps,
    })
}
