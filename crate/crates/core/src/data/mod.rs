//! Movie manifests and the synthetic corpus generator.

pub mod manifest;
pub mod synthetic;

pub use manifest::{
    bits_to_boundaries, boundaries_to_bits, load_manifest, save_manifest, scene_ids, validate_manifest,
    LabelConfidence, Modality, MovieManifest, Rule, ShotRecord, Violation,
};
pub use synthetic::{generate_corpus, generate_named, generate_synthetic_movie, SyntheticConfig, DEFAULT_SYNTH_DIM};

use std::path::Path;

use crate::error::{Error, Result};

/// Loads every `*.json` manifest in `dir`, sorted by file name.
pub fn load_corpus_dir(dir: impl AsRef<Path>) -> Result<Vec<MovieManifest>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(load_manifest).collect()
}
