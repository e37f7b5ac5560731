use std::sync::Arc;

use crate::data::MovieManifest;
use crate::error::{Error, Result};
use crate::tensor::{cosine, norm};

use super::dp::ScenePartition;

/// Grouping feature per shot: per-modality L2-normalized vectors, concatenated
/// in manifest modality order.
pub fn grouping_features(m: &MovieManifest) -> Vec<Vec<f64>> {
    m.shots
        .iter()
        .map(|shot| {
            let mut out = Vec::new();
            for modality in m.modality_dims.keys() {
                let v: Vec<f64> = shot.features[modality].iter().map(|&x| x as f64).collect();
                let n = norm(&v);
                if n > 0.0 {
                    out.extend(v.iter().map(|x| x / n));
                } else {
                    out.extend(v);
                }
            }
            out
        })
        .collect()
}

/// A contiguous run of shots `first..=last` with a simplex weight per member.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperShot {
    pub first: usize,
    pub last: usize,
    pub weights: Vec<f64>,
    /// `sum_j weights[j] * feature(first + j)`
    pub representation: Vec<f64>,
}

impl SuperShot {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Ordered super shots covering every shot exactly once, with a cached
/// pairwise cosine matrix of their representations.
#[derive(Debug, Clone)]
pub struct SuperShotSet {
    features: Arc<Vec<Vec<f64>>>,
    supers: Vec<SuperShot>,
    cosine: Vec<f64>,
}

fn weighted_sum(features: &[Vec<f64>], first: usize, weights: &[f64]) -> Vec<f64> {
    let dim = features.first().map_or(0, Vec::len);
    let mut rep = vec![0.0; dim];
    for (j, &w) in weights.iter().enumerate() {
        for (r, x) in rep.iter_mut().zip(&features[first + j]) {
            *r += w * x;
        }
    }
    rep
}

impl SuperShotSet {
    /// Uniform-weight super shots over inclusive shot `ranges`.
    pub fn new(features: Arc<Vec<Vec<f64>>>, ranges: &[(usize, usize)]) -> Result<Self> {
        let mut expected = 0;
        for &(l, r) in ranges {
            if l != expected || r < l {
                return Err(Error::Validation(format!(
                    "super-shot ranges must tile the shots in order; got [{l}, {r}] at shot {expected}"
                )));
            }
            expected = r + 1;
        }
        if expected != features.len() {
            return Err(Error::Validation(format!(
                "super-shot ranges cover {expected} of {} shots",
                features.len()
            )));
        }
        let supers = ranges
            .iter()
            .map(|&(first, last)| {
                let len = last - first + 1;
                let weights = vec![1.0 / len as f64; len];
                SuperShot {
                    first,
                    last,
                    representation: weighted_sum(&features, first, &weights),
                    weights,
                }
            })
            .collect();
        let mut set = Self {
            features,
            supers,
            cosine: Vec::new(),
        };
        set.refresh_cosine();
        Ok(set)
    }

    /// One single-shot super shot per representation.
    pub fn from_representations(reps: Vec<Vec<f64>>) -> Self {
        let ranges: Vec<_> = (0..reps.len()).map(|i| (i, i)).collect();
        Self::new(Arc::new(reps), &ranges).expect("singleton ranges always tile")
    }

    pub fn len(&self) -> usize {
        self.supers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supers.is_empty()
    }

    pub fn supers(&self) -> &[SuperShot] {
        &self.supers
    }

    pub fn shot_features(&self) -> &Arc<Vec<Vec<f64>>> {
        &self.features
    }

    pub fn members(&self, k: usize) -> &[Vec<f64>] {
        let s = &self.supers[k];
        &self.features[s.first..=s.last]
    }

    pub fn representations(&self) -> Vec<&[f64]> {
        self.supers.iter().map(|s| s.representation.as_slice()).collect()
    }

    #[inline]
    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        self.cosine[a * self.supers.len() + b]
    }

    pub fn cosine_matrix(&self) -> Vec<Vec<f64>> {
        let k = self.len();
        (0..k).map(|a| self.cosine[a * k..(a + 1) * k].to_vec()).collect()
    }

    fn refresh_cosine(&mut self) {
        let k = self.supers.len();
        let mut cos = vec![0.0; k * k];
        for a in 0..k {
            let ra = &self.supers[a].representation;
            cos[a * k + a] = if norm(ra) > 0.0 { 1.0 } else { 0.0 };
            for b in a + 1..k {
                let c = cosine(ra, &self.supers[b].representation);
                cos[a * k + b] = c;
                cos[b * k + a] = c;
            }
        }
        self.cosine = cos;
    }

    /// Replaces every super shot's weights and recomputes representations and the cosine cache.
    pub fn with_weights(&self, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::Length(format!("{} weight vectors for {} super shots", weights.len(), self.len())));
        }
        let mut out = self.clone();
        for (s, w) in out.supers.iter_mut().zip(weights) {
            if w.len() != s.len() {
                return Err(Error::Length(format!(
                    "super shot [{}, {}] has {} members, got {} weights",
                    s.first,
                    s.last,
                    s.len(),
                    w.len()
                )));
            }
            s.representation = weighted_sum(&self.features, s.first, &w);
            s.weights = w;
        }
        out.refresh_cosine();
        Ok(out)
    }

    /// 1-based boundary indices between consecutive super shots.
    pub fn cuts(&self) -> Vec<usize> {
        self.supers.iter().skip(1).map(|s| s.first).collect()
    }

    pub fn ranges(&self) -> Vec<(usize, usize)> {
        self.supers.iter().map(|s| (s.first, s.last)).collect()
    }

    /// Collapses each scene of `partition` into one uniform-weight super shot.
    pub fn merge(&self, partition: &ScenePartition) -> Result<Self> {
        let ranges: Vec<_> = partition
            .scenes
            .iter()
            .map(|&(a, b)| (self.supers[a].first, self.supers[b].last))
            .collect();
        Self::new(self.features.clone(), &ranges)
    }
}

/// Cuts the movie at the `init_count - 1` highest-scoring boundaries (ties
/// to the lower index). Every shot is its own super shot when `init_count`
/// reaches the shot count.
pub fn initial_super_shots(features: Arc<Vec<Vec<f64>>>, scores: &[f64], init_count: usize) -> Result<SuperShotSet> {
    let n = features.len();
    if n == 0 || scores.len() + 1 != n {
        return Err(Error::Length(format!("{} scores for {n} shots", scores.len())));
    }
    let n_cuts = init_count.max(1).min(n) - 1;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut cuts: Vec<usize> = order[..n_cuts].iter().map(|&i| i + 1).collect();
    cuts.sort_unstable();
    let mut ranges = Vec::with_capacity(cuts.len() + 1);
    let mut first = 0;
    for c in cuts {
        ranges.push((first, c - 1));
        first = c;
    }
    ranges.push((first, n - 1));
    SuperShotSet::new(features, &ranges)
}
