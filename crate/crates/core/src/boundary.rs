//! Clip-level boundary network.
//!
//! For each modality, a boundary clip of `2 * w_b` shots is split into the
//! `w_b` shots before and after the boundary. Two full-window temporal
//! convolutions embed each half and their elementwise product forms the
//! difference block. A position-wise temporal convolution over the whole clip
//! followed by max pooling over time forms the relation block. The boundary
//! representation is `[diff_m || rel_m]` concatenated over modalities in
//! manifest order.

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Modality, MovieManifest, ShotRecord};
use crate::error::{Error, Result};
use crate::tensor::{dot, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// How the before/after embeddings are combined in the difference block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DiffMode {
    /// `e_before ⊙ e_after`, `e_m` entries.
    #[default]
    Elementwise,
    /// `<e_before, e_after>`, one entry.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BNetConfig {
    pub w_b: usize,
    pub e_m: usize,
    /// Temporal kernel length of the relation convolution, in shots.
    pub rel_kernel: usize,
    pub activation: Activation,
    pub diff_mode: DiffMode,
    /// Start the after-boundary convolution as the time mirror of the
    /// before-boundary one, so the difference block begins as a similarity.
    #[serde(default)]
    pub mirrored_init: bool,
}

impl Default for BNetConfig {
    fn default() -> Self {
        Self {
            w_b: 4,
            e_m: 128,
            rel_kernel: 1,
            activation: Activation::Relu,
            diff_mode: DiffMode::Elementwise,
            mirrored_init: true,
        }
    }
}

impl BNetConfig {
    /// Small linear model used for synthetic corpora: scalar similarity,
    /// no rectifier.
    pub fn synthetic() -> Self {
        Self {
            e_m: 16,
            activation: Activation::Identity,
            diff_mode: DiffMode::Scalar,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_b == 0 {
            return Err(Error::Config("w_b must be >= 1".into()));
        }
        if self.e_m == 0 {
            return Err(Error::Config("e_m must be >= 1".into()));
        }
        if self.rel_kernel == 0 || self.rel_kernel > 2 * self.w_b {
            return Err(Error::Config(format!(
                "rel_kernel must be in [1, {}], got {}",
                2 * self.w_b,
                self.rel_kernel
            )));
        }
        Ok(())
    }

    fn diff_dim(&self) -> usize {
        match self.diff_mode {
            DiffMode::Elementwise => self.e_m,
            DiffMode::Scalar => 1,
        }
    }

    /// Representation entries contributed by one modality.
    pub fn block_dim(&self) -> usize {
        self.diff_dim() + self.e_m
    }
}

/// Weights of one modality's branches. Biases are `e_m x 1` matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityNet {
    pub modality: Modality,
    pub dim: usize,
    pub before_w: Mat,
    pub before_b: Mat,
    pub after_w: Mat,
    pub after_b: Mat,
    pub rel_w: Mat,
    pub rel_b: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BNetParams {
    pub config: BNetConfig,
    pub nets: Vec<ModalityNet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRepresentation {
    /// 1-based boundary index.
    pub boundary: usize,
    pub values: Vec<f64>,
}

pub fn init_bnet_params(
    modality_dims: &IndexMap<Modality, usize>,
    config: BNetConfig,
    seed: u64,
) -> Result<BNetParams> {
    config.validate()?;
    if modality_dims.is_empty() {
        return Err(Error::Config("no modalities".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, e, k) = (config.w_b, config.e_m, config.rel_kernel);
    let nets = modality_dims
        .iter()
        .map(|(&modality, &dim)| {
            if dim == 0 {
                return Err(Error::Config(format!("modality {modality} has zero dimension")));
            }
            let before_w = Mat::scaled_normal(e, w * dim, w * dim, &mut rng);
            let after_w = if config.mirrored_init {
                mirror_positions(&before_w, w, dim)
            } else {
                Mat::scaled_normal(e, w * dim, w * dim, &mut rng)
            };
            Ok(ModalityNet {
                modality,
                dim,
                before_w,
                before_b: Mat::zeros(e, 1),
                after_w,
                after_b: Mat::zeros(e, 1),
                rel_w: Mat::scaled_normal(e, k * dim, k * dim, &mut rng),
                rel_b: Mat::zeros(e, 1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BNetParams { config, nets })
}

/// Reverses the order of the `w` shot positions of a `rows x (w * dim)` kernel.
fn mirror_positions(k: &Mat, w: usize, dim: usize) -> Mat {
    let mut out = k.zeros_like();
    for r in 0..k.rows {
        let src = k.row(r);
        let dst = out.row_mut(r);
        for p in 0..w {
            dst[p * dim..(p + 1) * dim].copy_from_slice(&src[(w - 1 - p) * dim..(w - p) * dim]);
        }
    }
    out
}

impl BNetParams {
    pub fn output_dim(&self) -> usize {
        self.nets.len() * self.config.block_dim()
    }

    pub fn modalities(&self) -> impl Iterator<Item = (Modality, usize)> + '_ {
        self.nets.iter().map(|n| (n.modality, n.dim))
    }

    pub fn zeros_like(&self) -> Self {
        let nets = self
            .nets
            .iter()
            .map(|n| ModalityNet {
                modality: n.modality,
                dim: n.dim,
                before_w: n.before_w.zeros_like(),
                before_b: n.before_b.zeros_like(),
                after_w: n.after_w.zeros_like(),
                after_b: n.after_b.zeros_like(),
                rel_w: n.rel_w.zeros_like(),
                rel_b: n.rel_b.zeros_like(),
            })
            .collect();
        Self {
            config: self.config,
            nets,
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::with_capacity(self.nets.len() * 6);
        for n in &self.nets {
            let m = n.modality;
            out.push((format!("bnet.{m}.before_w"), &n.before_w));
            out.push((format!("bnet.{m}.before_b"), &n.before_b));
            out.push((format!("bnet.{m}.after_w"), &n.after_w));
            out.push((format!("bnet.{m}.after_b"), &n.after_b));
            out.push((format!("bnet.{m}.rel_w"), &n.rel_w));
            out.push((format!("bnet.{m}.rel_b"), &n.rel_b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = Vec::with_capacity(self.nets.len() * 6);
        for n in &mut self.nets {
            out.push(&mut n.before_w);
            out.push(&mut n.before_b);
            out.push(&mut n.after_w);
            out.push(&mut n.after_b);
            out.push(&mut n.rel_w);
            out.push(&mut n.rel_b);
        }
        out
    }
}

/// Features of `2 * w_b` consecutive shots, one row-major block per modality
/// (`2 * w_b` rows of the modality's dimension), in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub boundary: usize,
    pub blocks: Vec<Vec<f64>>,
}

/// Per-modality `n x d` feature matrices of one movie, converted to `f64` once.
#[derive(Debug, Clone)]
pub struct MovieFeatures {
    pub n_shots: usize,
    pub blocks: Vec<(Modality, usize, Vec<f64>)>,
}

impl MovieFeatures {
    /// Gathers the modalities `params` expects, in its order.
    pub fn for_params(m: &MovieManifest, params: &BNetParams) -> Result<Self> {
        let mut blocks = Vec::with_capacity(params.nets.len());
        for net in &params.nets {
            let declared = m.modality_dims.get(&net.modality).copied();
            if declared != Some(net.dim) {
                return Err(Error::Dimension(format!(
                    "movie `{}` modality {} has dimension {:?}, model expects {}",
                    m.movie_id, net.modality, declared, net.dim
                )));
            }
            let mut data = Vec::with_capacity(m.n_shots() * net.dim);
            for shot in &m.shots {
                data.extend(shot.features[&net.modality].iter().map(|&x| x as f64));
            }
            blocks.push((net.modality, net.dim, data));
        }
        Ok(Self {
            n_shots: m.n_shots(),
            blocks,
        })
    }

    /// Clip around 1-based boundary `b`, replicating edge shots where the
    /// window runs past either end of the movie.
    pub fn clip(&self, b: usize, w_b: usize) -> Clip {
        let n = self.n_shots as isize;
        let first = b as isize - w_b as isize;
        let blocks = self
            .blocks
            .iter()
            .map(|(_, d, data)| {
                let mut out = Vec::with_capacity(2 * w_b * d);
                for k in 0..2 * w_b as isize {
                    let shot = (first + k).clamp(0, n - 1) as usize;
                    out.extend_from_slice(&data[shot * d..(shot + 1) * d]);
                }
                out
            })
            .collect();
        Clip { boundary: b, blocks }
    }
}

impl Clip {
    /// Builds a clip from exactly `2 * w_b` shot records.
    pub fn from_shots(boundary: usize, shots: &[&ShotRecord], params: &BNetParams) -> Result<Self> {
        let w = params.config.w_b;
        if shots.len() != 2 * w {
            return Err(Error::Dimension(format!(
                "clip has {} shots, expected {}",
                shots.len(),
                2 * w
            )));
        }
        let blocks = params
            .nets
            .iter()
            .map(|net| {
                let mut out = Vec::with_capacity(2 * w * net.dim);
                for s in shots {
                    let v = s.features.get(&net.modality).ok_or_else(|| {
                        Error::Dimension(format!("shot {} lacks modality {}", s.index, net.modality))
                    })?;
                    out.extend(v.iter().map(|&x| x as f64));
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Clip { boundary, blocks })
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BNetCache {
    nets: Vec<NetCache>,
}

#[derive(Debug, Clone)]
struct NetCache {
    pre_before: Vec<f64>,
    emb_before: Vec<f64>,
    pre_after: Vec<f64>,
    emb_after: Vec<f64>,
    /// Winning time position per relation channel.
    rel_argmax: Vec<usize>,
    rel_pre: Vec<f64>,
    rel_out: Vec<f64>,
}

fn check_clip(clip: &Clip, params: &BNetParams) -> Result<()> {
    if clip.blocks.len() != params.nets.len() {
        return Err(Error::Dimension(format!(
            "clip has {} modality blocks, model has {}",
            clip.blocks.len(),
            params.nets.len()
        )));
    }
    let w = params.config.w_b;
    for (block, net) in clip.blocks.iter().zip(&params.nets) {
        if block.len() != 2 * w * net.dim {
            return Err(Error::Dimension(format!(
                "modality {} block has {} values, expected {}",
                net.modality,
                block.len(),
                2 * w * net.dim
            )));
        }
    }
    Ok(())
}

fn affine(w: &Mat, b: &Mat, x: &[f64]) -> Vec<f64> {
    let mut out = b.data.clone();
    w.matvec_acc(x, &mut out);
    out
}

pub fn bnet_forward(clip: &Clip, params: &BNetParams) -> Result<BoundaryRepresentation> {
    let (values, _) = bnet_forward_cached(clip, params)?;
    Ok(BoundaryRepresentation {
        boundary: clip.boundary,
        values,
    })
}

pub fn bnet_forward_cached(clip: &Clip, params: &BNetParams) -> Result<(Vec<f64>, BNetCache)> {
    check_clip(clip, params)?;
    let cfg = &params.config;
    let act = cfg.activation;
    let (w, k) = (cfg.w_b, cfg.rel_kernel);
    let mut out = Vec::with_capacity(params.output_dim());
    let mut caches = Vec::with_capacity(params.nets.len());
    for (block, net) in clip.blocks.iter().zip(&params.nets) {
        let d = net.dim;
        let half = w * d;
        let pre_before = affine(&net.before_w, &net.before_b, &block[..half]);
        let pre_after = affine(&net.after_w, &net.after_b, &block[half..]);
        let emb_before: Vec<f64> = pre_before.iter().map(|&x| act.apply(x)).collect();
        let emb_after: Vec<f64> = pre_after.iter().map(|&x| act.apply(x)).collect();
        match cfg.diff_mode {
            DiffMode::Elementwise => out.extend(emb_before.iter().zip(&emb_after).map(|(a, b)| a * b)),
            DiffMode::Scalar => out.push(dot(&emb_before, &emb_after)),
        }

        let positions = 2 * w - k + 1;
        let e = cfg.e_m;
        let mut rel_out = vec![f64::NEG_INFINITY; e];
        let mut rel_pre = vec![0.0; e];
        let mut rel_argmax = vec![0usize; e];
        for t in 0..positions {
            let pre = affine(&net.rel_w, &net.rel_b, &block[t * d..(t + k) * d]);
            for c in 0..e {
                let y = act.apply(pre[c]);
                if y > rel_out[c] {
                    rel_out[c] = y;
                    rel_pre[c] = pre[c];
                    rel_argmax[c] = t;
                }
            }
        }
        out.extend_from_slice(&rel_out);
        caches.push(NetCache {
            pre_before,
            emb_before,
            pre_after,
            emb_after,
            rel_argmax,
            rel_pre,
            rel_out,
        });
    }
    Ok((out, BNetCache { nets: caches }))
}

/// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
pub fn bnet_backward(
    clip: &Clip,
    params: &BNetParams,
    cache: &BNetCache,
    d_out: &[f64],
    grads: &mut BNetParams,
) {
    let cfg = &params.config;
    let act = cfg.activation;
    let (w, k, e) = (cfg.w_b, cfg.rel_kernel, cfg.e_m);
    let block_dim = cfg.block_dim();
    for (m, ((block, net), nc)) in clip.blocks.iter().zip(&params.nets).zip(&cache.nets).enumerate() {
        let g = &mut grads.nets[m];
        let d = net.dim;
        let half = w * d;
        let d_block = &d_out[m * block_dim..(m + 1) * block_dim];
        let (d_diff, d_rel) = d_block.split_at(cfg.diff_dim());

        let (mut d_before, mut d_after) = match cfg.diff_mode {
            DiffMode::Elementwise => (
                d_diff.iter().zip(&nc.emb_after).map(|(g, a)| g * a).collect::<Vec<_>>(),
                d_diff.iter().zip(&nc.emb_before).map(|(g, b)| g * b).collect::<Vec<_>>(),
            ),
            DiffMode::Scalar => (
                nc.emb_after.iter().map(|a| d_diff[0] * a).collect(),
                nc.emb_before.iter().map(|b| d_diff[0] * b).collect(),
            ),
        };
        for c in 0..e {
            d_before[c] *= act.derivative(nc.pre_before[c], nc.emb_before[c]);
            d_after[c] *= act.derivative(nc.pre_after[c], nc.emb_after[c]);
        }
        g.before_w.outer_acc(&d_before, &block[..half]);
        g.after_w.outer_acc(&d_after, &block[half..]);
        for c in 0..e {
            g.before_b.data[c] += d_before[c];
            g.after_b.data[c] += d_after[c];
        }

        for c in 0..e {
            let dz = d_rel[c] * act.derivative(nc.rel_pre[c], nc.rel_out[c]);
            if dz == 0.0 {
                continue;
            }
            let t = nc.rel_argmax[c];
            let x = &block[t * d..(t + k) * d];
            for (wv, xv) in g.rel_w.row_mut(c).iter_mut().zip(x) {
                *wv += dz * xv;
            }
            g.rel_b.data[c] += dz;
        }
    }
}

/// Representations of every boundary `1..=n-1` of a movie.
pub fn movie_representations(feats: &MovieFeatures, params: &BNetParams) -> Result<Vec<Vec<f64>>> {
    (1..feats.n_shots)
        .map(|b| bnet_forward_cached(&feats.clip(b, params.config.w_b), params).map(|(v, _)| v))
        .collect()
}
