//! From triplet responses to a normalized quality scale: comparison
//! matrices, Thurstone Case V scaling, observer screening and bootstrap
//! confidence intervals. One scale is built per (content, view type).

mod robust;
mod thurstone;

pub use robust::{
    bootstrap_ci, percentile_indices, screen_outliers, simulate_responses, BootstrapOptions, OutlierReport,
    SimulationOptions,
};
pub use thurstone::{thurstone_case_v, FitOptions};

use crate::lightfield::ViewType;
use crate::study::{validate_responses, AttentionReport, Choice, Phase, QuestionType, Response, StudyManifest, Triplet, REFERENCE};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, thiserror::Error)]
pub enum ScalingError {
    #[error("empty comparison matrix")]
    Empty,
    #[error("comparison graph is disconnected: {0:?}")]
    Disconnected(Vec<Vec<String>>),
    #[error("some condition never wins or never loses; scores are unbounded without a prior")]
    Unbounded,
    #[error("no convergence after {0} iterations")]
    NotConverged(usize),
    #[error("need at least {needed} observers, got {got}")]
    TooFewObservers { needed: usize, got: usize },
    #[error("unknown triplet {0:?}")]
    UnknownTriplet(String),
    #[error("response to {triplet} is outside group {group}")]
    OutsideGroup { triplet: String, group: String },
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("scores have zero range")]
    ZeroRange,
    #[error("scaling: {0}")]
    Config(String),
    #[error("no testing responses to analyze")]
    NoResponses,
    #[error("group {group}: {source}")]
    InGroup {
        group: String,
        #[source]
        source: Box<ScalingError>,
    },
    #[error(transparent)]
    Study(#[from] crate::study::StudyError),
}

pub type Result<T, E = ScalingError> = std::result::Result<T, E>;

/// Partition key of the scales.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub content_id: String,
    pub view_type: ViewType,
}

impl GroupKey {
    pub fn of(t: &Triplet) -> GroupKey {
        GroupKey {
            content_id: t.reference.content_id.clone(),
            view_type: t.reference.view_type,
        }
    }
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.content_id, self.view_type)
    }
}

/// `v[i][j]`: how often condition `i` was judged better than `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub conditions: Vec<String>,
    pub v: Vec<Vec<f64>>,
}

impl ComparisonMatrix {
    pub fn zeros(conditions: Vec<String>) -> Self {
        let n = conditions.len();
        ComparisonMatrix {
            conditions,
            v: vec![vec![0.0; n]; n],
        }
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.conditions
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| ScalingError::UnknownCondition(label.to_string()))
    }

    pub fn total(&self) -> f64 {
        self.v.iter().flatten().sum()
    }
}

fn sort_key(t: &crate::study::Stimulus) -> (bool, String, String, u64) {
    match &t.condition {
        None => (false, String::new(), String::new(), 0),
        Some(c) => (true, c.codec.clone(), c.method.to_string(), c.bitrate_bpp.to_bits()),
    }
}

/// Conditions of a group: the reference first, then codec, method and
/// ascending bitrate.
pub fn group_conditions(triplets: &[Triplet], group: &GroupKey) -> Vec<String> {
    let mut stimuli: Vec<&crate::study::Stimulus> = triplets
        .iter()
        .filter(|t| &GroupKey::of(t) == group && t.qtype != QuestionType::BiasControl)
        .flat_map(|t| [&t.left, &t.right])
        .collect();
    stimuli.sort_by_key(|s| sort_key(s));
    let mut seen = BTreeSet::new();
    stimuli
        .into_iter()
        .map(|s| s.condition_key())
        .filter(|k| seen.insert(k.clone()))
        .collect()
}

/// Tallies testing-phase responses of one group. The side picked as the
/// stronger flicker is the lower quality, so the other side's condition
/// gets the win; "Not Sure" gives half a win to each. Bias-control and
/// training responses are ignored.
pub fn build_matrix(responses: &[Response], triplets: &[Triplet], group: &GroupKey) -> Result<ComparisonMatrix> {
    let index: HashMap<&str, &Triplet> = triplets.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut m = ComparisonMatrix::zeros(group_conditions(triplets, group));
    for r in responses {
        let t = index
            .get(r.triplet_id.as_str())
            .ok_or_else(|| ScalingError::UnknownTriplet(r.triplet_id.clone()))?;
        if &GroupKey::of(t) != group {
            return Err(ScalingError::OutsideGroup {
                triplet: t.id.clone(),
                group: group.to_string(),
            });
        }
        if r.phase != Phase::Testing || t.qtype == QuestionType::BiasControl {
            continue;
        }
        let (l, rt) = (m.index(&t.left.condition_key())?, m.index(&t.right.condition_key())?);
        if l == rt {
            return Err(ScalingError::Config(format!("triplet {} compares a condition with itself", t.id)));
        }
        match r.triplet_choice() {
            Choice::Left => m.v[rt][l] += 1.0,
            Choice::Right => m.v[l][rt] += 1.0,
            Choice::NotSure => {
                m.v[l][rt] += 0.5;
                m.v[rt][l] += 0.5;
            }
        }
    }
    Ok(m)
}

/// Splits responses by the group of their triplet.
pub fn partition_responses(responses: &[Response], triplets: &[Triplet]) -> Result<BTreeMap<GroupKey, Vec<Response>>> {
    let index: HashMap<&str, &Triplet> = triplets.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut out: BTreeMap<GroupKey, Vec<Response>> = BTreeMap::new();
    for r in responses {
        let t = index
            .get(r.triplet_id.as_str())
            .ok_or_else(|| ScalingError::UnknownTriplet(r.triplet_id.clone()))?;
        out.entry(GroupKey::of(t)).or_default().push(r.clone());
    }
    Ok(out)
}

/// Direction of the raw scores handed to [`finalize_scale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Larger raw score means better quality (what `build_matrix` produces).
    Quality,
    /// Larger raw score means stronger flicker; negated before normalizing.
    FlickerStrength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub condition: String,
    pub raw: f64,
    pub score: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// The affine map `score = (sign * raw - min) / (max - min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub orientation: Orientation,
    pub sign: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScale {
    pub entries: Vec<ScaleEntry>,
    pub normalization: Normalization,
}

impl QualityScale {
    pub fn get(&self, condition: &str) -> Option<&ScaleEntry> {
        self.entries.iter().find(|e| e.condition == condition)
    }
}

/// Orients raw scores so that larger is better and maps scores and interval
/// endpoints to `[0,1]` with one affine transform. Intervals are widened to
/// contain their point score.
pub fn finalize_scale(labels: &[String], raw: &[f64], cis: &[(f64, f64)], orientation: Orientation) -> Result<QualityScale> {
    if raw.is_empty() || labels.len() != raw.len() || cis.len() != raw.len() {
        return Err(ScalingError::Config("labels, scores and intervals differ in length".into()));
    }
    let sign = match orientation {
        Orientation::Quality => 1.0,
        Orientation::FlickerStrength => -1.0,
    };
    let oriented: Vec<f64> = raw.iter().map(|r| sign * r).collect();
    let min = oriented.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = oriented.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max - min > 0.0) {
        return Err(ScalingError::ZeroRange);
    }
    let map = |x: f64| (sign * x - min) / (max - min);
    let entries = labels
        .iter()
        .zip(raw)
        .zip(cis)
        .map(|((label, &r), &(lo, hi))| {
            let (a, b) = (map(lo), map(hi));
            let score = map(r);
            ScaleEntry {
                condition: label.clone(),
                raw: r,
                score,
                ci_low: a.min(b).min(score),
                ci_high: a.max(b).max(score),
            }
        })
        .collect();
    Ok(QualityScale {
        entries,
        normalization: Normalization {
            orientation,
            sign,
            min,
            max,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub fit: FitOptions,
    pub bootstrap: BootstrapOptions,
    pub attention_threshold: f64,
    pub screen_outliers: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            fit: FitOptions::default(),
            bootstrap: BootstrapOptions::default(),
            attention_threshold: crate::study::DEFAULT_ATTENTION_THRESHOLD,
            screen_outliers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScale {
    pub group: GroupKey,
    pub matrix: ComparisonMatrix,
    pub raw_scores: Vec<f64>,
    pub outliers: Option<OutlierReport>,
    pub excluded: Vec<String>,
    pub scale: QualityScale,
}

/// Scale report written by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub version: u32,
    pub options: AnalyzeOptions,
    pub attention: AttentionReport,
    pub groups: Vec<GroupScale>,
}

impl ScaleReport {
    pub fn group(&self, content_id: &str, view_type: ViewType) -> Option<&GroupScale> {
        self.groups
            .iter()
            .find(|g| g.group.content_id == content_id && g.group.view_type == view_type)
    }
}

/// Attention screening, then per group: outlier screening, Case V fit,
/// observer bootstrap and normalization.
pub fn analyze(study: &StudyManifest, responses: &[Response], opts: &AnalyzeOptions) -> Result<ScaleReport> {
    let testing: Vec<Response> = responses.iter().filter(|r| r.phase == Phase::Testing).cloned().collect();
    if testing.is_empty() {
        return Err(ScalingError::NoResponses);
    }
    let attention = validate_responses(&study.triplets, &testing, opts.attention_threshold)?;
    let flagged: BTreeSet<String> = attention.flagged().into_iter().collect();
    let kept: Vec<Response> = testing.into_iter().filter(|r| !flagged.contains(&r.observer_id)).collect();
    let groups = partition_responses(&kept, &study.triplets)?
        .into_par_iter()
        .map(|(group, rs)| {
            let name = group.to_string();
            scale_group(study, group, rs, opts).map_err(|e| ScalingError::InGroup {
                group: name,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleReport {
        version: 1,
        options: opts.clone(),
        attention,
        groups,
    })
}

fn scale_group(study: &StudyManifest, group: GroupKey, rs: Vec<Response>, opts: &AnalyzeOptions) -> Result<GroupScale> {
    let observer_count = rs.iter().map(|r| &r.observer_id).collect::<BTreeSet<_>>().len();
    let outliers = if opts.screen_outliers && observer_count >= 3 {
        Some(screen_outliers(&rs, &study.triplets, &group, &opts.fit)?)
    } else {
        None
    };
    let excluded = outliers.as_ref().map(|o| o.excluded.clone()).unwrap_or_default();
    let rs: Vec<Response> = rs.into_iter().filter(|r| !excluded.contains(&r.observer_id)).collect();
    let matrix = build_matrix(&rs, &study.triplets, &group)?;
    let raw = thurstone_case_v(&matrix, &opts.fit)?;
    let cis = bootstrap_ci(&rs, &study.triplets, &group, &opts.fit, &opts.bootstrap)?;
    let scale = finalize_scale(&matrix.conditions, &raw, &cis, Orientation::Quality)?;
    Ok(GroupScale {
        group,
        matrix,
        raw_scores: raw,
        outliers,
        excluded,
        scale,
    })
}

/// Reference label in scale reports.
pub fn reference_label() -> &'static str {
    REFERENCE
}
