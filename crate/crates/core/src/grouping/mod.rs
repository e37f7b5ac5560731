//! Movie-level optimal grouping of super shots into scenes.

mod algorithm;
mod dp;
mod refine;
mod score;
mod super_shot;

pub use algorithm::{dump_correlation, optimal_grouping, run_grouping, GroupingOutcome, GroupingTraceRow};
pub use dp::{brute_force_oracle, dp_optimal_partition, PartitionSearch, ScenePartition, ORACLE_MAX};
pub use refine::{objective, objective_gradient, refine_weights, weight_gradient_check};
pub use score::{alpha, fs_score, ft_score, scene_score, SpanScores};
pub use super_shot::{grouping_features, initial_super_shots, SuperShot, SuperShotSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which members a super shot is compared against inside its scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecedingSet {
    /// Members strictly before it; the first member contributes nothing.
    #[default]
    Preceding,
    /// Every other member of the scene.
    Symmetric,
}

/// Number of initial super shots cut from the coarse scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitCount {
    Fixed(usize),
    /// Fraction of the movie's shot count, rounded up.
    Fraction(f64),
}

/// Admissible scene counts `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneCountRange {
    Fixed { min: usize, max: usize },
    /// `min = 1 + #{p_i > threshold}` (at least 2), `max = ceil(spread * min)`.
    FromScores { threshold: f64, spread: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    pub init_count: InitCount,
    pub scene_count: SceneCountRange,
    /// Decay scale of `alpha(m) = exp(-m / beta)`; infinity disables decay.
    pub beta: f64,
    pub preceding: PrecedingSet,
    /// Outer (merge) iterations.
    pub k_set: usize,
    /// Inner (DP + refinement) iterations per merge round.
    pub k_para: usize,
    pub step_size: f64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            init_count: InitCount::Fixed(600),
            scene_count: SceneCountRange::Fixed { min: 50, max: 400 },
            beta: f64::INFINITY,
            preceding: PrecedingSet::Preceding,
            k_set: 5,
            k_para: 10,
            step_size: 0.05,
        }
    }
}

/// Per-movie values after resolving relative settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedGrouping {
    pub init_count: usize,
    pub search: PartitionSearch,
}

impl GroupingConfig {
    /// Settings for desk-scale movies of tens to hundreds of shots: the scene
    /// count is estimated from the coarse scores instead of a fixed range.
    pub fn desk() -> Self {
        Self {
            init_count: InitCount::Fraction(0.5),
            scene_count: SceneCountRange::FromScores {
                threshold: 0.9,
                spread: 1.5,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_set == 0 || self.k_para == 0 {
            return bad("k_set and k_para must be >= 1".into());
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size must be finite and >= 0, got {}", self.step_size));
        }
        match self.init_count {
            InitCount::Fixed(0) => return bad("init_count must be >= 1".into()),
            InitCount::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return bad(format!("init fraction must be in (0, 1], got {f}"))
            }
            _ => {}
        }
        match self.scene_count {
            SceneCountRange::Fixed { min, max } => {
                if min < 2 || min > max {
                    return bad(format!("scene count range [{min}, {max}] needs 2 <= min <= max"));
                }
                if let InitCount::Fixed(init) = self.init_count {
                    if max >= init {
                        return bad(format!("j_max {max} must be below init_count {init}"));
                    }
                }
            }
            SceneCountRange::FromScores { threshold, spread } => {
                if !(0.0..=1.0).contains(&threshold) || !(spread >= 1.0) {
                    return bad("scene count estimate needs threshold in [0,1] and spread >= 1".into());
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, n_shots: usize, scores: &[f64]) -> Result<ResolvedGrouping> {
        self.validate()?;
        let (j_min, j_max) = match self.scene_count {
            SceneCountRange::Fixed { min, max } => (min, max),
            SceneCountRange::FromScores { threshold, spread } => {
                let est = 1 + scores.iter().filter(|&&p| p > threshold).count();
                let lo = est.max(2);
                (lo, ((lo as f64) * spread).ceil() as usize)
            }
        };
        let init_count = match self.init_count {
            InitCount::Fixed(k) => k,
            InitCount::Fraction(f) => ((n_shots as f64) * f).ceil() as usize,
        };
        let init_count = match self.scene_count {
            SceneCountRange::FromScores { .. } => init_count.max(j_max + 1),
            SceneCountRange::Fixed { .. } => init_count,
        };
        Ok(ResolvedGrouping {
            init_count,
            search: PartitionSearch {
                j_min,
                j_max,
                beta: self.beta,
                preceding: self.preceding,
            },
        })
    }
}
