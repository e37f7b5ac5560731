//! Movie-level wiring: coarse scores, final decisions and output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boundary::{movie_representations, MovieFeatures};
use crate::data::MovieManifest;
use crate::error::{Error, Result};
use crate::grouping::{grouping_features, run_grouping, GroupingConfig, GroupingTraceRow};
use crate::metrics::{GroundTruth, Prediction};
use crate::par::{self, Execution};
use crate::sequence::{binarize, coarse_scores};
use crate::train::Model;

/// Default coarse threshold. Under 1:9 class weighting a score of 0.9
/// corresponds to an even posterior.
pub const DEFAULT_TAU: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub tau: f64,
    /// Stop after thresholding the coarse scores.
    pub coarse_only: bool,
    pub grouping: GroupingConfig,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            coarse_only: false,
            grouping: GroupingConfig::desk(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingSummary {
    pub outer_iterations: usize,
    pub converged: bool,
    pub trace: Vec<GroupingTraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub movie_id: String,
    pub scores: Vec<f64>,
    pub bits: Vec<u8>,
    pub boundary_times: Vec<f64>,
    pub grouping: Option<GroupingSummary>,
}

impl Segmentation {
    pub fn prediction(&self) -> Prediction {
        Prediction {
            scores: self.scores.clone(),
            bits: self.bits.clone(),
        }
    }
}

/// Coarse probability for every boundary of `m`.
pub fn score_movie(m: &MovieManifest, model: &Model) -> Result<Vec<f64>> {
    if m.n_boundaries() == 0 {
        return Ok(Vec::new());
    }
    let feats = MovieFeatures::for_params(m, &model.bnet)?;
    let reps = movie_representations(&feats, &model.bnet)?;
    coarse_scores(&reps, &model.seq)
}

/// Final decisions from precomputed coarse scores.
pub fn decide(m: &MovieManifest, scores: Vec<f64>, cfg: &SegmentConfig) -> Result<Segmentation> {
    if scores.len() != m.n_boundaries() {
        return Err(Error::Length(format!(
            "movie {}: {} scores for {} boundaries",
            m.movie_id,
            scores.len(),
            m.n_boundaries()
        )));
    }
    let (bits, grouping) = if cfg.coarse_only || m.n_shots() < 2 {
        (binarize(&scores, cfg.tau), None)
    } else {
        let out = run_grouping(Arc::new(grouping_features(m)), &scores, &cfg.grouping, |_, _| {})
            .map_err(|e| Error::Validation(format!("movie {}: {e}", m.movie_id)))?;
        let summary = GroupingSummary {
            outer_iterations: out.outer_iterations,
            converged: out.converged,
            trace: out.trace,
        };
        (out.bits, Some(summary))
    };
    Ok(Segmentation {
        movie_id: m.movie_id.clone(),
        boundary_times: m.boundary_times(),
        scores,
        bits,
        grouping,
    })
}

pub fn segment_movie(m: &MovieManifest, model: &Model, cfg: &SegmentConfig) -> Result<Segmentation> {
    let scores = score_movie(m, model).map_err(|e| Error::Validation(format!("movie {}: {e}", m.movie_id)))?;
    decide(m, scores, cfg)
}

pub fn score_corpus(corpus: &[MovieManifest], model: &Model, exec: Execution) -> Result<Vec<Vec<f64>>> {
    par::map(exec, corpus, |m| score_movie(m, model)).into_iter().collect()
}

pub fn segment_corpus(
    corpus: &[MovieManifest],
    model: &Model,
    cfg: &SegmentConfig,
    exec: Execution,
) -> Result<Vec<Segmentation>> {
    par::map(exec, corpus, |m| segment_movie(m, model, cfg)).into_iter().collect()
}

/// Ground truth keyed by movie id; fails on a movie without labels.
pub fn ground_truth(corpus: &[MovieManifest]) -> Result<BTreeMap<String, GroundTruth>> {
    corpus
        .iter()
        .map(|m| {
            let bits = m.gt_bits().ok_or_else(|| Error::MissingLabels(m.movie_id.clone()))?;
            Ok((
                m.movie_id.clone(),
                GroundTruth {
                    bits,
                    boundary_times: m.boundary_times(),
                },
            ))
        })
        .collect()
}

/// One row of a boundary or score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub movie_id: String,
    /// 1-based boundary index: the junction after shot `boundary - 1`.
    pub boundary: usize,
    pub time_s: f64,
    pub score: f64,
    pub bit: u8,
}

pub fn boundary_file(dir: &Path, movie_id: &str) -> PathBuf {
    dir.join(format!("{movie_id}.boundaries.csv"))
}

pub fn score_file(dir: &Path, movie_id: &str) -> PathBuf {
    dir.join(format!("{movie_id}.scores.csv"))
}

pub fn trace_file(dir: &Path, movie_id: &str) -> PathBuf {
    dir.join(format!("{movie_id}.trace.csv"))
}

fn rows(seg: &Segmentation) -> impl Iterator<Item = BoundaryRow> + '_ {
    (0..seg.bits.len()).map(|i| BoundaryRow {
        movie_id: seg.movie_id.clone(),
        boundary: i + 1,
        time_s: seg.boundary_times[i],
        score: seg.scores[i],
        bit: seg.bits[i],
    })
}

/// Writes `<id>.boundaries.csv` (predicted boundaries only), `<id>.scores.csv`
/// (every boundary) and, after grouping, `<id>.trace.csv`.
pub fn write_segmentation(dir: &Path, seg: &Segmentation) -> Result<()> {
    crate::io::write_csv(&boundary_file(dir, &seg.movie_id), rows(seg).filter(|r| r.bit == 1))?;
    crate::io::write_csv(&score_file(dir, &seg.movie_id), rows(seg))?;
    if let Some(g) = &seg.grouping {
        crate::io::write_csv(&trace_file(dir, &seg.movie_id), &g.trace)?;
    }
    Ok(())
}

/// Reads a score file back into a prediction.
pub fn read_score_file(path: &Path) -> Result<(String, Prediction)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut id = None;
    let mut pred = Prediction {
        scores: Vec::new(),
        bits: Vec::new(),
    };
    for row in r.deserialize() {
        let row: BoundaryRow = row?;
        if row.boundary != pred.scores.len() + 1 {
            return Err(Error::Validation(format!(
                "{}: expected boundary {}, found {}",
                path.display(),
                pred.scores.len() + 1,
                row.boundary
            )));
        }
        if id.get_or_insert_with(|| row.movie_id.clone()) != &row.movie_id {
            return Err(Error::Validation(format!("{}: mixed movie ids", path.display())));
        }
        pred.scores.push(row.score);
        pred.bits.push(row.bit);
    }
    let id = id.ok_or_else(|| Error::Validation(format!("{}: no rows", path.display())))?;
    Ok((id, pred))
}

/// Every `*.scores.csv` in `dir`, keyed by movie id.
pub fn read_predictions(dir: &Path) -> Result<BTreeMap<String, Prediction>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.to_string_lossy().ends_with(".scores.csv") {
            let (id, pred) = read_score_file(&path)?;
            out.insert(id, pred);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_round_trip() {
        let seg = Segmentation {
            movie_id: "m".into(),
            scores: vec![0.2, 0.95, 0.1],
            bits: vec![0, 1, 0],
            boundary_times: vec![1.0, 2.5, 4.0],
            grouping: None,
        };
        let dir = tempfile::tempdir().unwrap();
        write_segmentation(dir.path(), &seg).unwrap();
        let text = std::fs::read_to_string(boundary_file(dir.path(), "m")).unwrap();
        assert_eq!(text, "movie_id,boundary,time_s,score,bit\nm,2,2.5,0.95,1\n");
        let preds = read_predictions(dir.path()).unwrap();
        assert_eq!(preds["m"], seg.prediction());
        assert!(!trace_file(dir.path(), "m").exists());
    }
}
