use crate::error::{Error, Result};

use super::score::{scene_score, SpanScores};
use super::super_shot::SuperShotSet;
use super::PrecedingSet;

/// Largest set the exhaustive oracle accepts.
pub const ORACLE_MAX: usize = 12;

/// Search space of one partition solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSearch {
    pub j_min: usize,
    pub j_max: usize,
    pub beta: f64,
    pub preceding: PrecedingSet,
}

impl PartitionSearch {
    pub fn new(j_min: usize, j_max: usize, beta: f64) -> Self {
        Self {
            j_min,
            j_max,
            beta,
            preceding: PrecedingSet::Preceding,
        }
    }

    /// Admissible `j` for `k` super shots: `[j_min, min(j_max, k - 1)]`.
    fn bounds(&self, k: usize) -> Result<(usize, usize)> {
        if self.j_min == 0 || self.j_min > self.j_max {
            return Err(Error::Config(format!(
                "scene count range [{}, {}] is empty",
                self.j_min, self.j_max
            )));
        }
        if k <= self.j_min {
            return Err(Error::TooFewSuperShots {
                count: k,
                j_min: self.j_min,
            });
        }
        Ok((self.j_min, self.j_max.min(k - 1)))
    }
}

/// Scenes as inclusive super-shot index ranges, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePartition {
    pub scenes: Vec<(usize, usize)>,
    pub score: f64,
}

impl ScenePartition {
    pub fn j(&self) -> usize {
        self.scenes.len()
    }

    /// Super-shot indices that start a new scene (excluding 0).
    pub fn cut_positions(&self) -> Vec<usize> {
        self.scenes.iter().skip(1).map(|&(a, _)| a).collect()
    }

    fn from_cuts(cuts: &[usize], k: usize, score: f64) -> Self {
        let mut scenes = Vec::with_capacity(cuts.len() + 1);
        let mut start = 0;
        for &c in cuts {
            scenes.push((start, c - 1));
            start = c;
        }
        scenes.push((start, k - 1));
        Self { scenes, score }
    }
}

#[inline]
fn tol(x: f64) -> f64 {
    1e-12 * (1.0 + x.abs())
}

/// Optimal partition of `set` into `j` contiguous scenes, maximized over the
/// admissible `j`. Ties prefer the earlier last cut, then the smaller `j`.
pub fn dp_optimal_partition(set: &SuperShotSet, search: &PartitionSearch) -> Result<ScenePartition> {
    let k = set.len();
    let (j_lo, j_hi) = search.bounds(k)?;
    let span = SpanScores::build(k, |a, b| set.cosine(a, b), search.beta, search.preceding);

    // best[j][m]: first m super shots in j scenes; arg[j][m]: size of the prefix before the last scene
    let neg = f64::NEG_INFINITY;
    let mut best = vec![vec![neg; k + 1]; j_hi + 1];
    let mut arg = vec![vec![0usize; k + 1]; j_hi + 1];
    for m in 1..=k {
        best[1][m] = span.get(0, m - 1);
    }
    for j in 2..=j_hi {
        for m in j..=k {
            let mut cur = neg;
            let mut at = 0;
            for p in (j - 1)..m {
                let prev = best[j - 1][p];
                if prev == neg {
                    continue;
                }
                let cand = prev + span.get(p, m - 1);
                if cand > cur + tol(cur) || cur == neg {
                    cur = cand;
                    at = p;
                }
            }
            best[j][m] = cur;
            arg[j][m] = at;
        }
    }

    let mut j_best = j_lo;
    for j in j_lo + 1..=j_hi {
        if best[j][k] > best[j_best][k] + tol(best[j_best][k]) {
            j_best = j;
        }
    }
    let mut cuts = Vec::with_capacity(j_best - 1);
    let mut m = k;
    for j in (2..=j_best).rev() {
        let p = arg[j][m];
        cuts.push(p);
        m = p;
    }
    cuts.reverse();
    Ok(ScenePartition::from_cuts(&cuts, k, best[j_best][k]))
}

/// Exhaustive search over every contiguous partition; same contract and
/// tie-breaking as [`dp_optimal_partition`]. Scores come straight from
/// member representations, not from the cosine cache.
pub fn brute_force_oracle(set: &SuperShotSet, search: &PartitionSearch) -> Result<ScenePartition> {
    let k = set.len();
    if k > ORACLE_MAX {
        return Err(Error::OracleTooLarge {
            count: k,
            max: ORACLE_MAX,
        });
    }
    let (j_lo, j_hi) = search.bounds(k)?;
    let reps = set.representations();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << (k - 1)) {
        let j = mask.count_ones() as usize + 1;
        if j < j_lo || j > j_hi {
            continue;
        }
        let cuts: Vec<usize> = (1..k).filter(|c| mask & (1 << (c - 1)) != 0).collect();
        let mut score = 0.0;
        let mut start = 0;
        for &end in cuts.iter().chain(std::iter::once(&k)) {
            score += scene_score(&reps[start..end], search.beta, search.preceding);
            start = end;
        }
        let better = match &best {
            None => true,
            Some((b, bc)) => {
                if score > b + tol(*b) {
                    true
                } else if score >= b - tol(*b) {
                    // tie: fewer scenes, then earlier cuts compared from the last one back
                    cuts.len() < bc.len() || (cuts.len() == bc.len() && cuts.iter().rev().lt(bc.iter().rev()))
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((score, cuts));
        }
    }
    let (score, cuts) = best.expect("at least one admissible partition");
    Ok(ScenePartition::from_cuts(&cuts, k, score))
}
