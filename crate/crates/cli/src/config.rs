//! Run configuration: built-in defaults, then an optional TOML file, then
//! command-line overrides. The resolved result is written next to every
//! command's outputs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use scenecut::boundary::{Activation, BNetConfig, DiffMode};
use scenecut::data::{Modality, SyntheticConfig};
use scenecut::grouping::{GroupingConfig, InitCount, PrecedingSet, SceneCountRange};
use scenecut::pipeline::SegmentConfig;
use scenecut::sequence::ClassWeights;
use scenecut::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    pub jobs: usize,
    pub paths: Paths,
    pub synth: SynthSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub segment: SegmentSection,
    pub grouping: GroupingSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub count: usize,
    pub id_prefix: String,
    pub n_scenes_min: usize,
    pub n_scenes_max: usize,
    pub shots_per_scene_min: usize,
    pub shots_per_scene_max: usize,
    /// Feature dimension of every modality.
    pub dim: usize,
    pub noise_sigma: f64,
    pub anchor_share_prob: f64,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SyntheticConfig::default();
        Self {
            count: 20,
            id_prefix: "movie-".into(),
            n_scenes_min: d.n_scenes_range.0,
            n_scenes_max: d.n_scenes_range.1,
            shots_per_scene_min: d.shots_per_scene_range.0,
            shots_per_scene_max: d.shots_per_scene_range.1,
            dim: d.modality_dims[0],
            noise_sigma: d.noise_sigma[0],
            anchor_share_prob: d.anchor_share_prob,
            duration_min_s: d.shot_duration_range_s.0,
            duration_max_s: d.shot_duration_range_s.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub w_b: usize,
    pub e_m: usize,
    pub rel_kernel: usize,
    pub activation: Activation,
    pub diff_mode: DiffMode,
    pub mirrored_init: bool,
    pub hidden: usize,
    pub w_t: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let b = BNetConfig::synthetic();
        Self {
            w_b: b.w_b,
            e_m: b.e_m,
            rel_kernel: b.rel_kernel,
            activation: b.activation,
            diff_mode: b.diff_mode,
            mirrored_init: b.mirrored_init,
            hidden: scenecut::sequence::DEFAULT_HIDDEN,
            w_t: scenecut::sequence::DEFAULT_W_T,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub weight_negative: f64,
    pub weight_positive: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub grad_clip: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            decay_epoch: t.decay_epoch,
            decay_factor: t.decay_factor,
            weight_negative: t.class_weights.negative,
            weight_positive: t.class_weights.positive,
            grad_clip: t.grad_clip.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub tau: f64,
    pub coarse_only: bool,
}

impl Default for SegmentSection {
    fn default() -> Self {
        let s = SegmentConfig::default();
        Self {
            tau: s.tau,
            coarse_only: s.coarse_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingSection {
    /// Fixed number of initial super shots; 0 uses `init_fraction`.
    pub init_count: usize,
    pub init_fraction: f64,
    /// Fixed scene-count range; 0 estimates it from the coarse scores.
    pub j_min: usize,
    pub j_max: usize,
    pub count_threshold: f64,
    pub count_spread: f64,
    pub beta: f64,
    pub preceding: PrecedingSet,
    pub k_set: usize,
    pub k_para: usize,
    pub step_size: f64,
}

impl Default for GroupingSection {
    fn default() -> Self {
        let g = GroupingConfig::desk();
        let (init_count, init_fraction) = match g.init_count {
            InitCount::Fixed(k) => (k, 0.5),
            InitCount::Fraction(f) => (0, f),
        };
        let (j_min, j_max, count_threshold, count_spread) = match g.scene_count {
            SceneCountRange::Fixed { min, max } => (min, max, 0.9, 1.5),
            SceneCountRange::FromScores { threshold, spread } => (0, 0, threshold, spread),
        };
        Self {
            init_count,
            init_fraction,
            j_min,
            j_max,
            count_threshold,
            count_spread,
            beta: g.beta,
            preceding: g.preceding,
            k_set: g.k_set,
            k_para: g.k_para,
            step_size: g.step_size,
        }
    }
}


impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config {}", path.display()))
    }

    /// Applies one `dotted.key=value` override. The value is read as TOML
    /// and falls back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        let mut root = toml::Value::try_from(&*self)?;
        let mut parts = key.split('.').peekable();
        let mut node = &mut root;
        while let Some(part) = parts.next() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| anyhow!("bad config key `{key}`"))?;
            if parts.peek().is_none() {
                table.insert(part.to_string(), value);
                break;
            }
            node = table
                .get_mut(part)
                .ok_or_else(|| anyhow!("bad config key `{key}`"))?;
        }
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("bad config key or value `{key}`: {}", e.message()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the resolved configuration as `config.toml` inside `dir`. The
    /// output path itself is left out so relocated reruns compare equal.
    pub fn write_into(&self, dir: &Path) -> Result<()> {
        let mut c = self.clone();
        c.paths.out = None;
        scenecut::io::write_atomic(&dir.join("config.toml"), c.to_toml()?.as_bytes())?;
        Ok(())
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        let s = &self.synth;
        SyntheticConfig {
            n_scenes_range: (s.n_scenes_min, s.n_scenes_max),
            shots_per_scene_range: (s.shots_per_scene_min, s.shots_per_scene_max),
            modality_dims: Modality::ALL.iter().map(|&m| (m, s.dim)).collect(),
            noise_sigma: Modality::ALL.iter().map(|&m| (m, s.noise_sigma)).collect(),
            anchor_share_prob: s.anchor_share_prob,
            shot_duration_range_s: (s.duration_min_s, s.duration_max_s),
            seed: self.seed,
        }
    }

    pub fn bnet(&self) -> BNetConfig {
        let m = &self.model;
        BNetConfig {
            w_b: m.w_b,
            e_m: m.e_m,
            rel_kernel: m.rel_kernel,
            activation: m.activation,
            diff_mode: m.diff_mode,
            mirrored_init: m.mirrored_init,
        }
    }

    pub fn training(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            decay_epoch: t.decay_epoch,
            decay_factor: t.decay_factor,
            class_weights: ClassWeights {
                negative: t.weight_negative,
                positive: t.weight_positive,
            },
            grad_clip: (t.grad_clip > 0.0).then_some(t.grad_clip),
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn grouping(&self) -> Result<GroupingConfig> {
        let g = &self.grouping;
        let scene_count = match (g.j_min, g.j_max) {
            (0, 0) => SceneCountRange::FromScores {
                threshold: g.count_threshold,
                spread: g.count_spread,
            },
            (0, _) | (_, 0) => bail!("grouping.j_min and grouping.j_max must both be set or both be 0"),
            (min, max) => SceneCountRange::Fixed { min, max },
        };
        let cfg = GroupingConfig {
            init_count: if g.init_count > 0 {
                InitCount::Fixed(g.init_count)
            } else {
                InitCount::Fraction(g.init_fraction)
            },
            scene_count,
            beta: g.beta,
            preceding: g.preceding,
            k_set: g.k_set,
            k_para: g.k_para,
            step_size: g.step_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn segmentation(&self) -> Result<SegmentConfig> {
        Ok(SegmentConfig {
            tau: self.segment.tau,
            coarse_only: self.segment.coarse_only,
            grouping: self.grouping()?,
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
