//! Joint training of the boundary network and the sequence model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{bnet_backward, bnet_forward_cached, BNetParams, Clip, MovieFeatures};
use crate::data::MovieManifest;
use crate::error::{Error, Result};
use crate::sequence::{
    weighted_ce_logit_grad, weighted_ce_loss, window_backward, window_forward, window_spans, ClassWeights,
    SeqParams,
};
use crate::tensor::Mat;

/// Boundary network plus sequence model, the unit that is trained and checkpointed.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub bnet: BNetParams,
    pub seq: SeqParams,
}

impl Model {
    pub fn new(bnet: BNetParams, seq: SeqParams) -> Result<Self> {
        if bnet.output_dim() != seq.input_dim() {
            return Err(Error::Dimension(format!(
                "boundary representation has {} entries, sequence model expects {}",
                bnet.output_dim(),
                seq.input_dim()
            )));
        }
        Ok(Self { bnet, seq })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            bnet: self.bnet.zeros_like(),
            seq: self.seq.zeros_like(),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut t = self.bnet.tensors();
        t.extend(self.seq.tensors());
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut t = self.bnet.tensors_mut();
        t.extend(self.seq.tensors_mut());
        t
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, m)| m.data.iter().copied()).collect()
    }

    fn flat_get_mut(&mut self, mut idx: usize) -> &mut f64 {
        for m in self.tensors_mut() {
            if idx < m.data.len() {
                return &mut m.data[idx];
            }
            idx -= m.data.len();
        }
        panic!("parameter index out of range");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// 0-based epoch from which the step is multiplied by `decay_factor`.
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub class_weights: ClassWeights,
    /// Global-norm gradient clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.01,
            decay_epoch: 15,
            decay_factor: 0.1,
            class_weights: ClassWeights::default(),
            grad_clip: Some(5.0),
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        if !(self.decay_factor > 0.0) {
            return bad("decay_factor must be > 0".into());
        }
        if !(self.class_weights.negative > 0.0 && self.class_weights.positive > 0.0) {
            return bad("class weights must be > 0".into());
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("grad_clip must be > 0".into());
        }
        Ok(())
    }

    pub fn step_size(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.learning_rate * self.decay_factor
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochLog>,
}

/// One window of boundary clips with labels: the unit of one optimizer step.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub movie_id: String,
    /// 1-based boundary index of the first clip.
    pub start: usize,
    pub clips: Vec<Clip>,
    pub labels: Vec<u8>,
}

/// Splits a labelled movie into the same windows used at inference time.
pub fn movie_windows(m: &MovieManifest, bnet: &BNetParams, w_t: usize) -> Result<Vec<WindowBatch>> {
    let labels = m.gt_bits().ok_or_else(|| Error::MissingLabels(m.movie_id.clone()))?;
    let feats = MovieFeatures::for_params(m, bnet)?;
    let clips: Vec<Clip> = (1..m.n_shots()).map(|b| feats.clip(b, bnet.config.w_b)).collect();
    Ok(window_spans(clips.len(), w_t)
        .into_iter()
        .map(|(s, e)| WindowBatch {
            movie_id: m.movie_id.clone(),
            start: s + 1,
            clips: clips[s..e].to_vec(),
            labels: labels[s..e].to_vec(),
        })
        .collect())
}

/// Window loss; also returns the gradient when `grads` is given.
pub fn window_loss(
    model: &Model,
    batch: &WindowBatch,
    weights: ClassWeights,
    grads: Option<&mut Model>,
) -> Result<f64> {
    let mut reps = Vec::with_capacity(batch.clips.len());
    let mut caches = Vec::with_capacity(batch.clips.len());
    for clip in &batch.clips {
        let (r, c) = bnet_forward_cached(clip, &model.bnet)?;
        reps.push(r);
        caches.push(c);
    }
    let wc = window_forward(&reps, &model.seq)?;
    let loss = weighted_ce_loss(&wc.probs, &batch.labels, weights)?;
    if let Some(g) = grads {
        let d_logits = weighted_ce_logit_grad(&wc.probs, &batch.labels, weights);
        let d_reps = window_backward(&reps, &model.seq, &wc, &d_logits, &mut g.seq);
        for ((clip, cache), d) in batch.clips.iter().zip(&caches).zip(&d_reps) {
            bnet_backward(clip, &model.bnet, cache, d, &mut g.bnet);
        }
    }
    Ok(loss)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &Model, beta1: f64, beta2: f64, eps: f64) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|(_, m)| m.data.len()).collect();
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Model, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let gts = grads.tensors();
        for (k, p) in model.tensors_mut().into_iter().enumerate() {
            let g = &gts[k].1.data;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

fn clip_global_norm(grads: &mut Model, max_norm: f64) {
    let sq: f64 = grads
        .tensors()
        .iter()
        .map(|(_, m)| m.data.iter().map(|x| x * x).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for m in grads.tensors_mut() {
            m.data.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Trains `bnet` and `seq` jointly, one window per Adam step, windows visited
/// in a seeded shuffled order each epoch.
pub fn train_pipeline(
    corpus: &[MovieManifest],
    bnet: BNetParams,
    seq: SeqParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_pipeline_with(corpus, bnet, seq, cfg, |_| {})
}

/// [`train_pipeline`] with a callback after every epoch.
pub fn train_pipeline_with(
    corpus: &[MovieManifest],
    bnet: BNetParams,
    seq: SeqParams,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let mut model = Model::new(bnet, seq)?;
    let mut windows = Vec::new();
    for m in corpus {
        windows.extend(movie_windows(m, &model.bnet, model.seq.w_t)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.step_size(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &wi in &order {
            let batch = &windows[wi];
            let mut grads = model.zeros_like();
            let loss = window_loss(&model, batch, cfg.class_weights, Some(&mut grads))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    movie: batch.movie_id.clone(),
                    window_start: batch.start,
                });
            }
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut grads, c);
            }
            adam.step(&mut model, &grads, lr);
            total += loss;
        }
        let log = EpochLog {
            epoch,
            mean_loss: total / windows.len() as f64,
            step_size: lr,
        };
        log::info!("epoch {epoch}: mean loss {:.5} (step {lr})", log.mean_loss);
        on_epoch(&log);
        history.push(log);
    }
    Ok(TrainOutcome { model, history })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Flat index of the parameter with the largest error.
    pub worst_param: usize,
    pub params_checked: usize,
}

/// Relative error `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the analytic window-loss gradient with central finite
/// differences over every parameter.
pub fn gradient_check(model: &Model, batch: &WindowBatch, weights: ClassWeights, eps: f64) -> Result<GradientCheck> {
    gradient_check_corrupted(model, batch, weights, eps, None)
}

/// As [`gradient_check`], but multiplies the analytic gradient of the
/// largest-magnitude parameter by `corrupt` first (a negative control).
pub fn gradient_check_corrupted(
    model: &Model,
    batch: &WindowBatch,
    weights: ClassWeights,
    eps: f64,
    corrupt: Option<f64>,
) -> Result<GradientCheck> {
    let mut grads = model.zeros_like();
    window_loss(model, batch, weights, Some(&mut grads))?;
    let mut analytic = grads.flat();
    if let Some(factor) = corrupt {
        let (idx, _) = analytic
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("model has parameters");
        analytic[idx] *= factor;
    }
    let mut probe = model.clone();
    let mut worst = (0.0f64, 0usize);
    for (i, &g) in analytic.iter().enumerate() {
        let orig = *probe.flat_get_mut(i);
        *probe.flat_get_mut(i) = orig + eps;
        let plus = window_loss(&probe, batch, weights, None)?;
        *probe.flat_get_mut(i) = orig - eps;
        let minus = window_loss(&probe, batch, weights, None)?;
        *probe.flat_get_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(g, numeric);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst.0,
        worst_param: worst.1,
        params_checked: analytic.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{init_bnet_params, BNetConfig};
    use crate::data::{generate_synthetic_movie, SyntheticConfig};
    use crate::sequence::init_seq_params;

    fn tiny_movie() -> MovieManifest {
        let cfg = SyntheticConfig {
            n_scenes_range: (2, 2),
            shots_per_scene_range: (3, 3),
            modality_dims: [(crate::data::Modality::Place, 3)].into_iter().collect(),
            noise_sigma: [(crate::data::Modality::Place, 0.2)].into_iter().collect(),
            seed: 5,
            ..Default::default()
        };
        generate_synthetic_movie(&cfg).unwrap()
    }

    fn tiny_model(m: &MovieManifest) -> Model {
        let bnet = init_bnet_params(&m.modality_dims, BNetConfig { w_b: 2, e_m: 3, ..BNetConfig::default() }, 1).unwrap();
        let seq = init_seq_params(bnet.output_dim(), 3, 6, 2).unwrap();
        Model::new(bnet, seq).unwrap()
    }

    #[test]
    fn zero_step_leaves_params_unchanged() {
        let m = tiny_movie();
        let model = tiny_model(&m);
        let cfg = TrainConfig { epochs: 1, learning_rate: 0.0, ..TrainConfig::default() };
        let out = train_pipeline(&[m], model.bnet.clone(), model.seq.clone(), &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.model, model);
    }

    #[test]
    fn missing_labels_rejected() {
        let mut m = tiny_movie();
        m.gt_boundaries = None;
        let model = tiny_model(&m);
        let err = train_pipeline(&[m], model.bnet, model.seq, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingLabels(_)));
    }

    #[test]
    fn step_schedule_divides_at_decay_epoch() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.step_size(0), 0.01);
        assert_eq!(cfg.step_size(14), 0.01);
        assert!((cfg.step_size(15) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let m = tiny_movie();
        let mut g = tiny_model(&m);
        for t in g.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = 3.0);
        }
        clip_global_norm(&mut g, 5.0);
        let n: f64 = g.tensors().iter().flat_map(|(_, t)| t.data.iter()).map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 5.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_check_on_tiny_window() {
        let m = tiny_movie();
        let model = tiny_model(&m);
        let batch = &movie_windows(&m, &model.bnet, model.seq.w_t).unwrap()[0];
        let r = gradient_check(&model, batch, ClassWeights::default(), 1e-4).unwrap();
        assert!(r.max_relative_error < 1e-3, "{r:?}");
        assert_eq!(r.params_checked, model.param_count());
    }
}
