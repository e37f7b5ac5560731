//! Segment-level coarse scoring with a bidirectional LSTM.
//!
//! Gate layout of each cell, rows of the stacked `4h` pre-activation:
//! `[input | forget | candidate | output]`, with
//! `c_t = f ⊙ c_{t-1} + i ⊙ g` and `h_t = o ⊙ tanh(c_t)`.
//! The head maps `[h_fwd_t || h_bwd_t]` to one logit per boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, sigmoid, Mat};

/// Probability clamp used by the loss.
pub const PROB_EPS: f64 = 1e-7;

/// Window length in boundaries.
pub const DEFAULT_W_T: usize = 10;
/// LSTM hidden size per direction at desk scale.
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    /// `4h x input_dim`
    pub w: Mat,
    /// `4h x h`
    pub u: Mat,
    /// `4h x 1`
    pub b: Mat,
}

impl LstmCell {
    fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut b = Mat::zeros(4 * hidden, 1);
        // forget gate starts open
        b.data[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        Self {
            w: Mat::scaled_normal(4 * hidden, input_dim, input_dim, rng),
            u: Mat::scaled_normal(4 * hidden, hidden, hidden, rng),
            b,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: self.w.zeros_like(),
            u: self.u.zeros_like(),
            b: self.b.zeros_like(),
        }
    }

    fn hidden(&self) -> usize {
        self.u.cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqParams {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
    /// `1 x 2h`
    pub head_w: Mat,
    /// `1 x 1`
    pub head_b: Mat,
    /// Window length in boundaries; stride is `w_t / 2`.
    pub w_t: usize,
}

pub fn init_seq_params(input_dim: usize, hidden: usize, w_t: usize, seed: u64) -> Result<SeqParams> {
    if input_dim == 0 || hidden == 0 {
        return Err(Error::Config("sequence model dimensions must be >= 1".into()));
    }
    if w_t < 2 || !w_t.is_multiple_of(2) {
        return Err(Error::Config(format!("w_t must be even and >= 2, got {w_t}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(SeqParams {
        fwd: LstmCell::init(input_dim, hidden, &mut rng),
        bwd: LstmCell::init(input_dim, hidden, &mut rng),
        head_w: Mat::scaled_normal(1, 2 * hidden, 2 * hidden, &mut rng),
        head_b: Mat::zeros(1, 1),
        w_t,
    })
}

impl SeqParams {
    pub fn input_dim(&self) -> usize {
        self.fwd.w.cols
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            fwd: self.fwd.zeros_like(),
            bwd: self.bwd.zeros_like(),
            head_w: self.head_w.zeros_like(),
            head_b: self.head_b.zeros_like(),
            w_t: self.w_t,
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        vec![
            ("seq.fwd.w".into(), &self.fwd.w),
            ("seq.fwd.u".into(), &self.fwd.u),
            ("seq.fwd.b".into(), &self.fwd.b),
            ("seq.bwd.w".into(), &self.bwd.w),
            ("seq.bwd.u".into(), &self.bwd.u),
            ("seq.bwd.b".into(), &self.bwd.b),
            ("seq.head_w".into(), &self.head_w),
            ("seq.head_b".into(), &self.head_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![
            &mut self.fwd.w,
            &mut self.fwd.u,
            &mut self.fwd.b,
            &mut self.bwd.w,
            &mut self.bwd.u,
            &mut self.bwd.b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Runs one direction; returns per-step caches in processing order.
fn run_cell(cell: &LstmCell, xs: &[&[f64]]) -> Vec<StepCache> {
    let h = cell.hidden();
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        let mut z = cell.b.data.clone();
        cell.w.matvec_acc(x, &mut z);
        cell.u.matvec_acc(&h_prev, &mut z);
        let mut gates = vec![0.0; 4 * h];
        for j in 0..h {
            gates[j] = sigmoid(z[j]);
            gates[h + j] = sigmoid(z[h + j]);
            gates[2 * h + j] = z[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        let c: Vec<f64> = (0..h)
            .map(|j| gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let hv: Vec<f64> = (0..h).map(|j| gates[3 * h + j] * tanh_c[j]).collect();
        h_prev.clone_from(&hv);
        c_prev.clone_from(&c);
        steps.push(StepCache {
            gates,
            c,
            tanh_c,
            h: hv,
        });
    }
    steps
}

/// Backpropagation through time for one direction. `d_h[t]` is the external
/// gradient on the hidden state of processing step `t`.
fn backprop_cell(
    cell: &LstmCell,
    xs: &[&[f64]],
    steps: &[StepCache],
    d_h: &[Vec<f64>],
    grads: &mut LstmCell,
    d_xs: &mut [Vec<f64>],
) {
    let h = cell.hidden();
    let zero = vec![0.0; h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let c_prev = if t > 0 { &steps[t - 1].c } else { &zero };
        let h_prev = if t > 0 { &steps[t - 1].h } else { &zero };
        let g = &s.gates;
        for j in 0..h {
            let dh = d_h[t][j] + dh_next[j];
            let (i, f, cand, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let d_o = dh * s.tanh_c[j];
            let dc = dc_next[j] + dh * o * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            dz[j] = dc * cand * i * (1.0 - i);
            dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - cand * cand);
            dz[3 * h + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        grads.w.outer_acc(&dz, xs[t]);
        grads.u.outer_acc(&dz, h_prev);
        for (b, d) in grads.b.data.iter_mut().zip(&dz) {
            *b += d;
        }
        cell.w.matvec_t_acc(&dz, &mut d_xs[t]);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        cell.u.matvec_t_acc(&dz, &mut dh_next);
    }
}

/// Forward state of one window, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct WindowCache {
    fwd: Vec<StepCache>,
    /// In reversed time order (processing order of the backward cell).
    bwd: Vec<StepCache>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

fn check_inputs(xs: &[Vec<f64>], params: &SeqParams) -> Result<()> {
    let d = params.input_dim();
    if let Some((t, x)) = xs.iter().enumerate().find(|(_, x)| x.len() != d) {
        return Err(Error::Dimension(format!(
            "boundary representation {t} has dimension {}, sequence model expects {d}",
            x.len()
        )));
    }
    Ok(())
}

/// Probabilities for every position of one window.
pub fn window_forward(xs: &[Vec<f64>], params: &SeqParams) -> Result<WindowCache> {
    check_inputs(xs, params)?;
    let fwd_in: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let bwd_in: Vec<&[f64]> = xs.iter().rev().map(Vec::as_slice).collect();
    let fwd = run_cell(&params.fwd, &fwd_in);
    let bwd = run_cell(&params.bwd, &bwd_in);
    let h = params.hidden();
    let len = xs.len();
    let (hw_f, hw_b) = params.head_w.data.split_at(h);
    let logits: Vec<f64> = (0..len)
        .map(|t| params.head_b.data[0] + dot(hw_f, &fwd[t].h) + dot(hw_b, &bwd[len - 1 - t].h))
        .collect();
    let probs = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok(WindowCache {
        fwd,
        bwd,
        logits,
        probs,
    })
}

/// Accumulates parameter gradients from `d loss / d logit` and returns
/// `d loss / d input` for every position.
pub fn window_backward(
    xs: &[Vec<f64>],
    params: &SeqParams,
    cache: &WindowCache,
    d_logits: &[f64],
    grads: &mut SeqParams,
) -> Vec<Vec<f64>> {
    let h = params.hidden();
    let len = xs.len();
    let (hw_f, hw_b) = params.head_w.data.split_at(h);
    let mut d_hf = vec![vec![0.0; h]; len];
    let mut d_hb = vec![vec![0.0; h]; len];
    for t in 0..len {
        let dl = d_logits[t];
        grads.head_b.data[0] += dl;
        let fh = &cache.fwd[t].h;
        let bh = &cache.bwd[len - 1 - t].h;
        for j in 0..h {
            grads.head_w.data[j] += dl * fh[j];
            grads.head_w.data[h + j] += dl * bh[j];
            d_hf[t][j] = dl * hw_f[j];
            d_hb[len - 1 - t][j] = dl * hw_b[j];
        }
    }
    let d = params.input_dim();
    let mut d_fwd = vec![vec![0.0; d]; len];
    let mut d_bwd = vec![vec![0.0; d]; len];
    let fwd_in: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let bwd_in: Vec<&[f64]> = xs.iter().rev().map(Vec::as_slice).collect();
    backprop_cell(&params.fwd, &fwd_in, &cache.fwd, &d_hf, &mut grads.fwd, &mut d_fwd);
    backprop_cell(&params.bwd, &bwd_in, &cache.bwd, &d_hb, &mut grads.bwd, &mut d_bwd);
    for (t, dx) in d_fwd.iter_mut().enumerate() {
        for (a, b) in dx.iter_mut().zip(&d_bwd[len - 1 - t]) {
            *a += b;
        }
    }
    d_fwd
}

/// Half-open windows over `len` boundary positions: length `w_t`, stride
/// `w_t / 2`, with the last window right-aligned to the tail. A sequence no
/// longer than `w_t` is a single window.
pub fn window_spans(len: usize, w_t: usize) -> Vec<(usize, usize)> {
    if len <= w_t {
        return vec![(0, len)];
    }
    let stride = (w_t / 2).max(1);
    let mut spans = Vec::new();
    let mut start = 0;
    while start + w_t <= len {
        spans.push((start, start + w_t));
        start += stride;
    }
    if spans.last().is_some_and(|&(_, e)| e < len) {
        spans.push((len - w_t, len));
    }
    spans
}

/// Coarse probability per boundary: mean of the window outputs covering it.
pub fn coarse_scores(reps: &[Vec<f64>], params: &SeqParams) -> Result<Vec<f64>> {
    if reps.is_empty() {
        return Err(Error::Length("no boundary representations".into()));
    }
    check_inputs(reps, params)?;
    let mut sum = vec![0.0; reps.len()];
    let mut count = vec![0u32; reps.len()];
    for (s, e) in window_spans(reps.len(), params.w_t) {
        let cache = window_forward(&reps[s..e], params)?;
        for (k, p) in cache.probs.iter().enumerate() {
            sum[s + k] += p;
            count[s + k] += 1;
        }
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
}

/// `1` where `p > tau`.
pub fn binarize(p: &[f64], tau: f64) -> Vec<u8> {
    p.iter().map(|&v| u8::from(v > tau)).collect()
}

/// Class weights `(non-transition, transition)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self {
            negative: 1.0,
            positive: 9.0,
        }
    }
}

/// Mean over positions of `-[w1 y ln p + w0 (1-y) ln(1-p)]`, `p` clamped to `[eps, 1-eps]`.
pub fn weighted_ce_loss(p: &[f64], y: &[u8], weights: ClassWeights) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::Length(format!("{} probabilities vs {} labels", p.len(), y.len())));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let pc = pi.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if yi != 0 {
                -weights.positive * pc.ln()
            } else {
                -weights.negative * (1.0 - pc).ln()
            }
        })
        .sum();
    Ok(total / p.len() as f64)
}

/// `d loss / d logit` of [`weighted_ce_loss`] for each position.
pub fn weighted_ce_logit_grad(p: &[f64], y: &[u8], weights: ClassWeights) -> Vec<f64> {
    let n = p.len() as f64;
    p.iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            if !(PROB_EPS..=1.0 - PROB_EPS).contains(&pi) {
                return 0.0;
            }
            let dl_dp = if yi != 0 {
                -weights.positive / pi
            } else {
                weights.negative / (1.0 - pi)
            };
            dl_dp * pi * (1.0 - pi) / n
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reps(len: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|t| (0..dim).map(|k| ((t * 7 + k * 3) % 11) as f64 / 11.0 - 0.5).collect())
            .collect()
    }

    #[test]
    fn window_spans_follow_stride_rule() {
        assert_eq!(window_spans(10, 10), vec![(0, 10)]);
        assert_eq!(window_spans(15, 10), vec![(0, 10), (5, 15)]);
        assert_eq!(window_spans(17, 10), vec![(0, 10), (5, 15), (7, 17)]);
        assert_eq!(window_spans(3, 10), vec![(0, 3)]);
    }

    #[test]
    fn single_window_is_not_averaged() {
        let p = init_seq_params(4, 3, 10, 1).unwrap();
        let r = reps(10, 4);
        let scores = coarse_scores(&r, &p).unwrap();
        let direct = window_forward(&r, &p).unwrap().probs;
        assert_eq!(scores, direct);
    }

    #[test]
    fn overlapping_windows_average_middle() {
        let p = init_seq_params(4, 3, 10, 2).unwrap();
        let r = reps(15, 4);
        let scores = coarse_scores(&r, &p).unwrap();
        let a = window_forward(&r[0..10], &p).unwrap().probs;
        let b = window_forward(&r[5..15], &p).unwrap().probs;
        for i in 0..5 {
            assert_eq!(scores[i], a[i]);
            assert_eq!(scores[10 + i], b[5 + i]);
            assert!((scores[5 + i] - 0.5 * (a[5 + i] + b[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_head_gives_one_half() {
        let mut p = init_seq_params(4, 3, 4, 3).unwrap();
        p.head_w.data.iter_mut().for_each(|v| *v = 0.0);
        let s = coarse_scores(&reps(9, 4), &p).unwrap();
        assert!(s.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn binarize_is_strict() {
        assert_eq!(binarize(&[0.6, 0.3], 0.5), vec![1, 0]);
        assert_eq!(binarize(&[0.5], 0.5), vec![0]);
        assert_eq!(binarize(&[0.0, 0.2, 1.0], 0.0), vec![0, 1, 1]);
    }

    #[test]
    fn weighted_loss_examples() {
        let w = ClassWeights::default();
        let l1 = weighted_ce_loss(&[0.5], &[1], w).unwrap();
        assert!((l1 - 9.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l1 - 6.2383).abs() < 1e-4);
        let l0 = weighted_ce_loss(&[0.5], &[0], w).unwrap();
        assert!((l0 - std::f64::consts::LN_2).abs() < 1e-12);
        let exact = weighted_ce_loss(&[1.0, 0.0], &[1, 0], w).unwrap();
        assert!(exact >= 0.0 && exact <= 9.0 * (1.0 / (1.0 - PROB_EPS)).ln() + 1e-15);
        assert!(weighted_ce_loss(&[0.5], &[1, 0], w).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = init_seq_params(4, 3, 4, 3).unwrap();
        assert!(matches!(coarse_scores(&reps(5, 3), &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn odd_window_rejected() {
        assert!(init_seq_params(4, 3, 5, 0).is_err());
    }
}
