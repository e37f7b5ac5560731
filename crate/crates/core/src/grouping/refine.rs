//! Gradient ascent on super-shot weights under a fixed scene partition.

use crate::error::{Error, Result};
use crate::tensor::{dot, norm, sigmoid};

use super::dp::ScenePartition;
use super::score::{alpha, scene_score};
use super::super_shot::SuperShotSet;
use super::PrecedingSet;

/// Total score `F = sum over scenes of g`, from the current representations.
pub fn objective(set: &SuperShotSet, partition: &ScenePartition, beta: f64, mode: PrecedingSet) -> f64 {
    let reps = set.representations();
    partition
        .scenes
        .iter()
        .map(|&(a, b)| scene_score(&reps[a..=b], beta, mode))
        .sum()
}

/// `d cos(x, y) / d x`, zero when either vector vanishes.
fn dcos_dx(x: &[f64], y: &[f64], out: &mut [f64], scale: f64) {
    let nx = norm(x);
    let ny = norm(y);
    if nx == 0.0 || ny == 0.0 {
        return;
    }
    let c = dot(x, y) / (nx * ny);
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o += scale * (yi / (nx * ny) - c * xi / (nx * nx));
    }
}

/// `dF / dW_k` for every super shot. The max inside the thread term is held
/// at its current argmax (first index on ties).
pub fn objective_gradient(
    set: &SuperShotSet,
    partition: &ScenePartition,
    beta: f64,
    mode: PrecedingSet,
) -> Vec<Vec<f64>> {
    let reps = set.representations();
    let dim = reps.first().map_or(0, |r| r.len());
    let mut grad_c = vec![vec![0.0; dim]; set.len()];
    for &(a, b) in &partition.scenes {
        for t in a..=b {
            let others: Vec<usize> = match mode {
                PrecedingSet::Preceding => (a..t).collect(),
                PrecedingSet::Symmetric => (a..=b).filter(|&q| q != t).collect(),
            };
            if others.is_empty() {
                continue;
            }
            let al = alpha(others.len(), beta);
            let mean_coef = al / others.len() as f64;
            let (mut best, mut best_q) = (f64::NEG_INFINITY, others[0]);
            for &q in &others {
                let c = set.cosine(t, q);
                if c > best {
                    best = c;
                    best_q = q;
                }
            }
            let s = sigmoid(best);
            let thread_coef = al * s * (1.0 - s);
            for &q in &others {
                let coef = if q == best_q { mean_coef + thread_coef } else { mean_coef };
                let (lo, hi) = if t < q { (t, q) } else { (q, t) };
                let (left, right) = grad_c.split_at_mut(hi);
                let (g_lo, g_hi) = (&mut left[lo], &mut right[0]);
                let (r_lo, r_hi) = (reps[lo], reps[hi]);
                dcos_dx(r_lo, r_hi, g_lo, coef);
                dcos_dx(r_hi, r_lo, g_hi, coef);
            }
        }
    }
    (0..set.len())
        .map(|k| set.members(k).iter().map(|s| dot(&grad_c[k], s)).collect())
        .collect()
}

/// Largest relative error `|a - b| / max(1e-8, |a| + |b|)` between
/// [`objective_gradient`] and central differences of [`objective`] taken
/// directly in weight space (no projection). `corrupt` scales the
/// largest-magnitude analytic entry first, as a negative control.
///
/// Single-member super shots are skipped: their weight is pinned at 1 by the
/// simplex, and cosine scale invariance makes its gradient exactly zero, so
/// the comparison would only measure rounding noise.
pub fn weight_gradient_check(
    set: &SuperShotSet,
    partition: &ScenePartition,
    beta: f64,
    mode: PrecedingSet,
    eps: f64,
    corrupt: Option<f64>,
) -> Result<f64> {
    let mut analytic = objective_gradient(set, partition, beta, mode);
    if let Some(factor) = corrupt {
        let (k, j) = (0..analytic.len())
            .flat_map(|k| (0..analytic[k].len()).map(move |j| (k, j)))
            .max_by(|&(a, b), &(c, d)| analytic[a][b].abs().total_cmp(&analytic[c][d].abs()))
            .ok_or_else(|| Error::Length("empty super-shot set".into()))?;
        analytic[k][j] *= factor;
    }
    let base: Vec<Vec<f64>> = set.supers().iter().map(|s| s.weights.clone()).collect();
    let eval = |k: usize, j: usize, delta: f64| -> Result<f64> {
        let mut w = base.clone();
        w[k][j] += delta;
        Ok(objective(&set.with_weights(w)?, partition, beta, mode))
    };
    let mut worst = 0.0f64;
    for (k, g) in analytic.iter().enumerate().filter(|(_, g)| g.len() > 1) {
        for (j, &a) in g.iter().enumerate() {
            let numeric = (eval(k, j, eps)? - eval(k, j, -eps)?) / (2.0 * eps);
            worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8));
        }
    }
    Ok(worst)
}

fn project_simplex_clip(w: &mut [f64]) {
    for v in w.iter_mut() {
        *v = v.max(0.0);
    }
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|v| *v /= s);
    } else {
        let u = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|v| *v = u);
    }
}

/// `steps` ascent updates of every weight vector, each followed by clipping
/// at zero and renormalizing to sum 1.
pub fn refine_weights(
    set: &SuperShotSet,
    partition: &ScenePartition,
    steps: usize,
    step_size: f64,
    beta: f64,
    mode: PrecedingSet,
) -> Result<SuperShotSet> {
    let mut cur = set.clone();
    for _ in 0..steps {
        let grads = objective_gradient(&cur, partition, beta, mode);
        let mut weights = Vec::with_capacity(cur.len());
        for (k, (s, g)) in cur.supers().iter().zip(&grads).enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(k));
            }
            let mut w: Vec<f64> = s.weights.iter().zip(g).map(|(w, g)| w + step_size * g).collect();
            project_simplex_clip(&mut w);
            weights.push(w);
        }
        cur = cur.with_weights(weights)?;
    }
    Ok(cur)
}
