//! Per-movie manifest: shot timing, per-modality features and optional labels.
//!
//! Boundaries are numbered `1..=n-1`; boundary `b` sits between the 0-based
//! shots `b - 1` and `b`, and its timestamp is the end time of shot `b - 1`.
//! Vectors over boundaries (scores, bits) are indexed by `b - 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on shot contiguity, in seconds.
pub const CONTIGUITY_TOL_S: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Place,
    Cast,
    Action,
    Audio,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Place,
        Modality::Cast,
        Modality::Action,
        Modality::Audio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Place => "place",
            Modality::Cast => "cast",
            Modality::Action => "action",
            Modality::Audio => "audio",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "place" => Ok(Modality::Place),
            "cast" => Ok(Modality::Cast),
            "action" => Ok(Modality::Action),
            "audio" => Ok(Modality::Audio),
            other => Err(Error::Config(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelConfidence {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub features: IndexMap<Modality, Vec<f32>>,
}

impl ShotRecord {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieManifest {
    pub movie_id: String,
    /// Declared modalities in canonical order; downstream blocks follow this order.
    pub modality_dims: IndexMap<Modality, usize>,
    pub shots: Vec<ShotRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_boundaries: Option<BTreeSet<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_label_confidence: Option<BTreeMap<usize, LabelConfidence>>,
}

impl MovieManifest {
    pub fn n_shots(&self) -> usize {
        self.shots.len()
    }

    pub fn n_boundaries(&self) -> usize {
        self.shots.len().saturating_sub(1)
    }

    /// Timestamp of each boundary (end of the shot before it), indexed by `b - 1`.
    pub fn boundary_times(&self) -> Vec<f64> {
        self.shots
            .iter()
            .take(self.n_boundaries())
            .map(|s| s.end_s)
            .collect()
    }

    /// Ground-truth labels as a 0/1 vector over boundaries, if present.
    pub fn gt_bits(&self) -> Option<Vec<u8>> {
        self.gt_boundaries
            .as_ref()
            .map(|set| boundaries_to_bits(self.n_shots(), set))
    }

    /// Scene id per shot derived from the ground-truth boundaries.
    pub fn gt_scene_ids(&self) -> Option<Vec<usize>> {
        self.gt_boundaries
            .as_ref()
            .map(|set| scene_ids(self.n_shots(), set))
    }
}

/// 0/1 vector of length `n_shots - 1` from a set of 1-based boundary indices.
/// Out-of-range indices are ignored.
pub fn boundaries_to_bits(n_shots: usize, boundaries: &BTreeSet<usize>) -> Vec<u8> {
    let mut bits = vec![0u8; n_shots.saturating_sub(1)];
    for &b in boundaries {
        if b >= 1 && b < n_shots {
            bits[b - 1] = 1;
        }
    }
    bits
}

pub fn bits_to_boundaries(bits: &[u8]) -> BTreeSet<usize> {
    bits.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| i + 1)
        .collect()
}

pub fn scene_ids(n_shots: usize, boundaries: &BTreeSet<usize>) -> Vec<usize> {
    let mut ids = Vec::with_capacity(n_shots);
    let mut scene = 0;
    for shot in 0..n_shots {
        if shot > 0 && boundaries.contains(&shot) {
            scene += 1;
        }
        ids.push(scene);
    }
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    TooFewShots,
    NoModalities,
    ZeroDimension,
    ShotIndexOrder,
    NonPositiveDuration,
    NonContiguous,
    NonFiniteTime,
    MissingModality,
    UndeclaredModality,
    DimensionMismatch,
    NonFiniteFeature,
    BoundaryOutOfRange,
    ConfidenceWithoutBoundary,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::TooFewShots => "fewer than two shots",
            Rule::NoModalities => "no modalities declared",
            Rule::ZeroDimension => "zero modality dimension",
            Rule::ShotIndexOrder => "shot index out of order",
            Rule::NonPositiveDuration => "non-positive duration",
            Rule::NonContiguous => "shots not contiguous",
            Rule::NonFiniteTime => "non-finite timestamp",
            Rule::MissingModality => "missing modality",
            Rule::UndeclaredModality => "undeclared modality",
            Rule::DimensionMismatch => "feature dimension mismatch",
            Rule::NonFiniteFeature => "non-finite feature value",
            Rule::BoundaryOutOfRange => "boundary index out of range",
            Rule::ConfidenceWithoutBoundary => "label confidence for non-boundary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub shot: Option<usize>,
    pub modality: Option<Modality>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.rule.name())?;
        if let Some(s) = self.shot {
            write!(f, " (shot {s}")?;
            if let Some(m) = self.modality {
                write!(f, ", {m}")?;
            }
            f.write_str(")")?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

fn violation(rule: Rule, shot: Option<usize>, modality: Option<Modality>, detail: String) -> Violation {
    Violation {
        rule,
        shot,
        modality,
        detail,
    }
}

pub fn validate_manifest(m: &MovieManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = m.shots.len();
    if n < 2 {
        out.push(violation(Rule::TooFewShots, None, None, format!("n = {n}")));
    }
    if m.modality_dims.is_empty() {
        out.push(violation(Rule::NoModalities, None, None, String::new()));
    }
    for (&modality, &dim) in &m.modality_dims {
        if dim == 0 {
            out.push(violation(Rule::ZeroDimension, None, Some(modality), String::new()));
        }
    }

    for (i, shot) in m.shots.iter().enumerate() {
        if shot.index != i {
            out.push(violation(
                Rule::ShotIndexOrder,
                Some(i),
                None,
                format!("record carries index {}", shot.index),
            ));
        }
        if !shot.start_s.is_finite() || !shot.end_s.is_finite() {
            out.push(violation(Rule::NonFiniteTime, Some(i), None, String::new()));
        } else if shot.end_s <= shot.start_s {
            out.push(violation(
                Rule::NonPositiveDuration,
                Some(i),
                None,
                format!("start {} end {}", shot.start_s, shot.end_s),
            ));
        }
        if i > 0 {
            let prev_end = m.shots[i - 1].end_s;
            if prev_end.is_finite()
                && shot.start_s.is_finite()
                && (shot.start_s - prev_end).abs() > CONTIGUITY_TOL_S
            {
                out.push(violation(
                    Rule::NonContiguous,
                    Some(i),
                    None,
                    format!("previous shot ends at {prev_end}, this starts at {}", shot.start_s),
                ));
            }
        }
        for (&modality, &dim) in &m.modality_dims {
            match shot.features.get(&modality) {
                None => out.push(violation(Rule::MissingModality, Some(i), Some(modality), String::new())),
                Some(v) => {
                    if v.len() != dim {
                        out.push(violation(
                            Rule::DimensionMismatch,
                            Some(i),
                            Some(modality),
                            format!("expected {dim}, found {}", v.len()),
                        ));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        out.push(violation(Rule::NonFiniteFeature, Some(i), Some(modality), String::new()));
                    }
                }
            }
        }
        for modality in shot.features.keys() {
            if !m.modality_dims.contains_key(modality) {
                out.push(violation(Rule::UndeclaredModality, Some(i), Some(*modality), String::new()));
            }
        }
    }

    if let Some(gt) = &m.gt_boundaries {
        for &b in gt {
            if b == 0 || b >= n {
                out.push(violation(
                    Rule::BoundaryOutOfRange,
                    None,
                    None,
                    format!("boundary {b} not in [1, {}]", n.saturating_sub(1)),
                ));
            }
        }
    }
    if let Some(conf) = &m.gt_label_confidence {
        let empty = BTreeSet::new();
        let gt = m.gt_boundaries.as_ref().unwrap_or(&empty);
        for &b in conf.keys() {
            if !gt.contains(&b) {
                out.push(violation(
                    Rule::ConfidenceWithoutBoundary,
                    None,
                    None,
                    format!("boundary {b}"),
                ));
            }
        }
    }
    out
}

fn check(m: &MovieManifest) -> Result<()> {
    let violations = validate_manifest(m);
    if violations.is_empty() {
        Ok(())
    } else {
        let msg = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Validation(format!("movie `{}`: {msg}", m.movie_id)))
    }
}

pub fn parse_manifest(text: &str, origin: &Path) -> Result<MovieManifest> {
    let m: MovieManifest = serde_json::from_str(text).map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    check(&m)?;
    Ok(m)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<MovieManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

/// Serializes with one shot record per line. Output is byte-deterministic and
/// `f32` features use the shortest decimal that round-trips exactly.
pub fn manifest_to_string(m: &MovieManifest) -> Result<String> {
    check(m)?;
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("\"movie_id\": {},\n", js(&m.movie_id)));
    out.push_str(&format!("\"modality_dims\": {},\n", js(&m.modality_dims)));
    out.push_str("\"shots\": [\n");
    for (i, shot) in m.shots.iter().enumerate() {
        out.push_str(&js(shot));
        out.push_str(if i + 1 < m.shots.len() { ",\n" } else { "\n" });
    }
    out.push(']');
    if let Some(gt) = &m.gt_boundaries {
        out.push_str(&format!(",\n\"gt_boundaries\": {}", js(gt)));
    }
    if let Some(conf) = &m.gt_label_confidence {
        out.push_str(&format!(",\n\"gt_label_confidence\": {}", js(conf)));
    }
    out.push_str("\n}\n");
    Ok(out)
}

pub fn save_manifest(m: &MovieManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = manifest_to_string(m)?;
    crate::io::write_atomic(path, text.as_bytes())
}

fn js<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("manifest values always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_shot() -> MovieManifest {
        let mut dims = IndexMap::new();
        dims.insert(Modality::Place, 4);
        let shot = |i: usize, s: f64, e: f64| ShotRecord {
            index: i,
            start_s: s,
            end_s: e,
            features: [(Modality::Place, vec![0.5f32, -0.25, 1.0, 0.0])].into_iter().collect(),
        };
        MovieManifest {
            movie_id: "tiny".into(),
            modality_dims: dims,
            shots: vec![shot(0, 0.0, 1.5), shot(1, 1.5, 4.0)],
            gt_boundaries: None,
            gt_label_confidence: None,
        }
    }

    #[test]
    fn minimal_two_shot_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.json");
        save_manifest(&two_shot(), &path).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.n_shots(), 2);
        assert_eq!(m.n_boundaries(), 1);
        assert_eq!(m.boundary_times(), vec![1.5]);
    }

    #[test]
    fn reversed_shot_times_rejected_as_non_positive_duration() {
        let text = r#"{"movie_id":"bad","modality_dims":{"place":1},"shots":[
            {"index":0,"start_s":0.0,"end_s":2.0,"features":{"place":[1.0]}},
            {"index":1,"start_s":2.0,"end_s":1.0,"features":{"place":[1.0]}}]}"#;
        let err = parse_manifest(text, Path::new("bad.json")).unwrap_err();
        assert!(err.to_string().contains("non-positive duration"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\n\"movie_id\": \"x\",\n\"modality_dims\": {\"place\": 1},\n\"shots\": [oops]\n}";
        match parse_manifest(text, Path::new("x.json")).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn nan_feature_is_single_violation_naming_shot_and_modality() {
        let mut m = two_shot();
        m.modality_dims.insert(Modality::Audio, 2);
        for s in &mut m.shots {
            s.features.insert(Modality::Audio, vec![0.0, 1.0]);
        }
        assert!(validate_manifest(&m).is_empty());
        m.shots[1].features.get_mut(&Modality::Audio).unwrap()[0] = f32::NAN;
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::NonFiniteFeature);
        assert_eq!(v[0].shot, Some(1));
        assert_eq!(v[0].modality, Some(Modality::Audio));
    }

    #[test]
    fn boundary_index_n_is_out_of_range() {
        let mut m = two_shot();
        m.gt_boundaries = Some([2].into_iter().collect());
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule.name(), "boundary index out of range");
    }

    #[test]
    fn save_to_unwritable_path_is_io_error() {
        let err = save_manifest(&two_shot(), "/nonexistent-dir/for/sure/x.json").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn scene_id_view_matches_boundaries() {
        let b: BTreeSet<usize> = [2, 3].into_iter().collect();
        assert_eq!(scene_ids(5, &b), vec![0, 0, 1, 2, 2]);
        assert_eq!(boundaries_to_bits(5, &b), vec![0, 1, 1, 0]);
        assert_eq!(bits_to_boundaries(&[0, 1, 1, 0]), b);
    }
}
