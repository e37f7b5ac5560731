//! Iterative super-shot grouping: alternate DP partitioning with weight
//! refinement, then merge each scene into one super shot and repeat.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::data::MovieManifest;
use crate::error::{Error, Result};

use super::dp::{dp_optimal_partition, ScenePartition};
use super::refine::refine_weights;
use super::super_shot::{grouping_features, initial_super_shots, SuperShotSet};
use super::GroupingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupingTraceRow {
    pub iteration: usize,
    pub n_super_shots: usize,
    pub j_star: usize,
    pub f_star: f64,
}

#[derive(Debug, Clone)]
pub struct GroupingOutcome {
    /// Final decision per boundary.
    pub bits: Vec<u8>,
    pub initial: SuperShotSet,
    pub final_set: SuperShotSet,
    pub trace: Vec<GroupingTraceRow>,
    /// Merge rounds that ran a DP.
    pub outer_iterations: usize,
    /// True when no admissible merge remained before the round cap.
    pub converged: bool,
}

/// Final boundary decisions for one movie.
pub fn optimal_grouping(m: &MovieManifest, scores: &[f64], cfg: &GroupingConfig) -> Result<Vec<u8>> {
    let feats = Arc::new(grouping_features(m));
    run_grouping(feats, scores, cfg, |_, _| {}).map(|o| o.bits)
}

/// Runs the full iteration. `on_round(p, set)` sees the super-shot set at the
/// start of every merge round and once more for the final set.
pub fn run_grouping(
    features: Arc<Vec<Vec<f64>>>,
    scores: &[f64],
    cfg: &GroupingConfig,
    mut on_round: impl FnMut(usize, &SuperShotSet),
) -> Result<GroupingOutcome> {
    let n = features.len();
    let resolved = cfg.resolve(n, scores)?;
    let search = resolved.search;
    let initial = initial_super_shots(features, scores, resolved.init_count)?;
    let mut set = initial.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rounds = 0;

    for outer in 0..cfg.k_set {
        on_round(outer, &set);
        if set.len() <= search.j_min {
            converged = true;
            break;
        }
        let mut partition: Option<ScenePartition> = None;
        for _ in 0..cfg.k_para {
            let p = dp_optimal_partition(&set, &search)?;
            set = refine_weights(&set, &p, 1, cfg.step_size, search.beta, search.preceding)?;
            partition = Some(p);
        }
        let partition = partition.expect("k_para >= 1");
        trace.push(GroupingTraceRow {
            iteration: outer,
            n_super_shots: set.len(),
            j_star: partition.j(),
            f_star: partition.score,
        });
        set = set.merge(&partition)?;
        rounds += 1;
        if set.len() <= search.j_min {
            converged = true;
            break;
        }
    }
    on_round(rounds, &set);

    let mut bits = vec![0u8; n.saturating_sub(1)];
    for c in set.cuts() {
        bits[c - 1] = 1;
    }
    Ok(GroupingOutcome {
        bits,
        initial,
        final_set: set,
        trace,
        outer_iterations: rounds,
        converged,
    })
}

/// Writes the pairwise cosine matrix, one row per super shot, no header.
pub fn dump_correlation(set: &SuperShotSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in set.cosine_matrix() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    crate::io::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::{InitCount, SceneCountRange};

    fn cfg(j_min: usize, j_max: usize, init: usize) -> GroupingConfig {
        GroupingConfig {
            init_count: InitCount::Fixed(init),
            scene_count: SceneCountRange::Fixed { min: j_min, max: j_max },
            ..GroupingConfig::default()
        }
    }

    #[test]
    fn over_segmented_two_scene_toy() {
        // 6 shots, one per super shot: shots 1-4 share anchor A, 5-6 anchor B.
        let a = [1.0, 0.1, 0.0];
        let b = [0.0, 0.1, 1.0];
        let feats: Vec<Vec<f64>> = [a, a, a, a, b, b].iter().map(|v| v.to_vec()).collect();
        // spurious coarse cuts inside the first scene
        let p = [0.9, 0.8, 0.7, 0.95, 0.1];
        let out = run_grouping(Arc::new(feats), &p, &cfg(2, 5, 7), |_, _| {}).unwrap();
        assert_eq!(out.bits, vec![0, 0, 0, 1, 0]);
        assert!(out.converged);
    }

    #[test]
    fn already_minimal_cut_set_is_a_fixed_point() {
        let feats: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let p = [0.1, 0.9, 0.2];
        let out = run_grouping(Arc::new(feats), &p, &cfg(2, 2, 3), |_, _| {}).unwrap();
        assert_eq!(out.bits, vec![0, 1, 0]);
        assert_eq!(out.outer_iterations, 1);
        assert!(out.converged);
    }

    #[test]
    fn correlation_dump_of_identical_pair() {
        let set = SuperShotSet::from_representations(vec![vec![0.6, 0.8], vec![0.6, 0.8]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corr.csv");
        dump_correlation(&set, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let vals: Vec<f64> = text.split([',', '\n']).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect();
        assert_eq!(vals.len(), 4);
        assert!(vals.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let set = SuperShotSet::from_representations(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        dump_correlation(&set, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "1,0\n0,1\n");
    }
}
