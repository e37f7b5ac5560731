//! Boundary-level evaluation: AP over coarse scores, scene-interval Miou and
//! boundary recall within a time window.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Window used for the Recall@3s column.
pub const RECALL_WINDOW_S: f64 = 3.0;

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Length(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Non-interpolated AP: mean of precision at the rank of every positive,
/// ranking by descending score with ties broken by index. `None` when there
/// are no positives.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    check_len("scores/labels", scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l != 0).count();
    if n_pos == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] != 0 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(sum / n_pos as f64))
}

/// Scene intervals `[first, last]` over shots implied by a boundary vector.
pub fn scene_intervals(bits: &[u8]) -> Vec<(usize, usize)> {
    let n = bits.len() + 1;
    let mut out = Vec::new();
    let mut first = 0;
    for (i, &b) in bits.iter().enumerate() {
        if b != 0 {
            out.push((first, i));
            first = i + 1;
        }
    }
    out.push((first, n - 1));
    out
}

fn iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo > hi {
        return 0.0;
    }
    let inter = (hi - lo + 1) as f64;
    let union = ((a.1 - a.0 + 1) + (b.1 - b.0 + 1)) as f64 - inter;
    inter / union
}

/// Mean over `xs` of the best IoU against any interval in `ys`. Both lists
/// are ordered tilings of the same shots, so only overlapping runs are scanned.
fn mean_best_iou(xs: &[(usize, usize)], ys: &[(usize, usize)]) -> f64 {
    let mut start = 0;
    let mut total = 0.0;
    for &x in xs {
        while ys[start].1 < x.0 {
            start += 1;
        }
        let best = ys[start..]
            .iter()
            .take_while(|y| y.0 <= x.1)
            .map(|&y| iou(x, y))
            .fold(0.0, f64::max);
        total += best;
    }
    total / xs.len() as f64
}

/// Symmetric mean-of-max interval IoU between the two scene partitions.
pub fn miou(pred: &[u8], gt: &[u8], n_shots: usize) -> Result<f64> {
    check_len("pred/gt", pred.len(), gt.len())?;
    check_len("boundaries/shots-1", pred.len(), n_shots.saturating_sub(1))?;
    if n_shots == 0 {
        return Err(Error::Length("movie has no shots".into()));
    }
    let p = scene_intervals(pred);
    let g = scene_intervals(gt);
    Ok(0.5 * (mean_best_iou(&g, &p) + mean_best_iou(&p, &g)))
}

/// Fraction of ground-truth boundaries with a prediction within `window_s`
/// seconds; a zero window means exact index match. `None` without any
/// ground-truth boundary.
pub fn boundary_recall(pred: &[u8], gt: &[u8], times: &[f64], window_s: f64) -> Result<Option<f64>> {
    check_len("pred/gt", pred.len(), gt.len())?;
    check_len("pred/times", pred.len(), times.len())?;
    if !(window_s >= 0.0) {
        return Err(Error::Config(format!("recall window must be >= 0, got {window_s}")));
    }
    let n_gt = gt.iter().filter(|&&b| b != 0).count();
    if n_gt == 0 {
        return Ok(None);
    }
    let hit = if window_s == 0.0 {
        pred.iter().zip(gt).filter(|(&p, &g)| p != 0 && g != 0).count()
    } else {
        let mut pt: Vec<f64> = pred.iter().zip(times).filter(|(&p, _)| p != 0).map(|(_, &t)| t).collect();
        pt.sort_by(f64::total_cmp);
        gt.iter()
            .zip(times)
            .filter(|(&g, _)| g != 0)
            .filter(|(_, &t)| {
                let k = pt.partition_point(|&x| x < t);
                let near = |j: usize| pt.get(j).is_some_and(|&x| (x - t).abs() <= window_s);
                near(k) || (k > 0 && near(k - 1))
            })
            .count()
    };
    Ok(Some(hit as f64 / n_gt as f64))
}

/// A movie's predicted coarse scores and final decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub bits: Vec<u8>,
}

/// Ground-truth decisions with the time of every boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub bits: Vec<u8>,
    pub boundary_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MovieMetrics {
    pub movie_id: String,
    pub ap: Option<f64>,
    pub miou: f64,
    pub recall: Option<f64>,
    pub recall_at_3s: Option<f64>,
    pub n_boundaries: usize,
    pub n_positives: usize,
    /// Set when the movie has no positive label and is left out of the
    /// AP and recall means.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub movies: Vec<MovieMetrics>,
    pub mean_ap: Option<f64>,
    pub mean_miou: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_recall_at_3s: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

pub fn evaluate_movie(movie_id: &str, pred: &Prediction, gt: &GroundTruth) -> Result<MovieMetrics> {
    let ctx = |e: Error| Error::Validation(format!("movie {movie_id}: {e}"));
    let n = gt.bits.len();
    let ap = average_precision(&pred.scores, &gt.bits).map_err(ctx)?;
    let miou = miou(&pred.bits, &gt.bits, n + 1).map_err(ctx)?;
    let recall = boundary_recall(&pred.bits, &gt.bits, &gt.boundary_times, 0.0).map_err(ctx)?;
    let recall_at_3s = boundary_recall(&pred.bits, &gt.bits, &gt.boundary_times, RECALL_WINDOW_S).map_err(ctx)?;
    let n_positives = gt.bits.iter().filter(|&&b| b != 0).count();
    if n_positives == 0 {
        log::warn!("movie {movie_id} has no ground-truth boundary; excluded from AP and recall means");
    }
    Ok(MovieMetrics {
        movie_id: movie_id.to_string(),
        ap,
        miou,
        recall,
        recall_at_3s,
        n_boundaries: n,
        n_positives,
        excluded: n_positives == 0,
    })
}

/// Per-movie metrics and unweighted corpus means. Both maps must hold the
/// same movies.
pub fn evaluate_corpus(
    preds: &BTreeMap<String, Prediction>,
    gts: &BTreeMap<String, GroundTruth>,
) -> Result<MetricsReport> {
    if let Some(k) = gts.keys().find(|k| !preds.contains_key(*k)) {
        return Err(Error::MissingMovie(format!("{k} has ground truth but no prediction")));
    }
    if let Some(k) = preds.keys().find(|k| !gts.contains_key(*k)) {
        return Err(Error::MissingMovie(format!("{k} has a prediction but no ground truth")));
    }
    let movies = gts
        .iter()
        .map(|(id, gt)| evaluate_movie(id, &preds[id], gt))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        mean_ap: mean(movies.iter().filter_map(|m| m.ap)),
        mean_miou: mean(movies.iter().map(|m| m.miou)),
        mean_recall: mean(movies.iter().filter_map(|m| m.recall)),
        mean_recall_at_3s: mean(movies.iter().filter_map(|m| m.recall_at_3s)),
        movies,
    })
}

#[derive(Serialize)]
struct Row<'a> {
    movie_id: &'a str,
    ap: Option<f64>,
    miou: Option<f64>,
    recall: Option<f64>,
    recall_at_3s: Option<f64>,
    n_boundaries: usize,
    n_positives: usize,
    excluded: bool,
}

impl MetricsReport {
    /// One row per movie followed by a `mean` summary row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<Row> = self
            .movies
            .iter()
            .map(|m| Row {
                movie_id: &m.movie_id,
                ap: m.ap,
                miou: Some(m.miou),
                recall: m.recall,
                recall_at_3s: m.recall_at_3s,
                n_boundaries: m.n_boundaries,
                n_positives: m.n_positives,
                excluded: m.excluded,
            })
            .collect();
        rows.push(Row {
            movie_id: "mean",
            ap: self.mean_ap,
            miou: self.mean_miou,
            recall: self.mean_recall,
            recall_at_3s: self.mean_recall_at_3s,
            n_boundaries: self.movies.iter().map(|m| m.n_boundaries).sum(),
            n_positives: self.movies.iter().map(|m| m.n_positives).sum(),
            excluded: false,
        });
        crate::io::write_csv(path, rows)
    }
}
