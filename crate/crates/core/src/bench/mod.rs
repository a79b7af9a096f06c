//! Benchmarking objective metrics against subjective scales: logistic
//! mapping, correlation statistics and plot-ready CSV series.

mod logistic;
mod stats;

pub use logistic::{initial_params, logistic_fit, logistic_fit_detailed, predict, LogisticFit, LogisticParams};
pub use stats::{average_ranks, correlate, pearson, spearman, Correlation};

use crate::lightfield::{load_view, Layout, ViewType};
use crate::metrics::{compute, MetricConfig, MetricError, MetricId};
use crate::pipeline::{ConditionManifest, Coord, Method};
use crate::scaling::ScaleReport;
use crate::study::REFERENCE;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub const REPORT_FILE: &str = "bench_report.json";
pub const METRIC_TABLE_FILE: &str = "metric_scores.json";
/// Samples per fitted-curve CSV.
pub const CURVE_SAMPLES: usize = 101;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("no {metric} score for {content_id}/{view_type}/{condition}")]
    MissingScore {
        content_id: String,
        view_type: ViewType,
        condition: String,
        metric: MetricId,
    },
    #[error("comparison group {0:?} matched no scaled conditions")]
    EmptyGroup(String),
    #[error("bad comparison group {0:?}: expected sides like codec5x5 or codec3x3 joined by _vs_")]
    BadGroup(String),
    #[error("bad condition label {0:?}")]
    BadLabel(String),
    #[error("group {group} / {metric}: {source}")]
    Group {
        group: String,
        metric: MetricId,
        #[source]
        source: Box<BenchError>,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    LightField(#[from] crate::lightfield::LightFieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

/// A set of (codec, method) series benchmarked together, named like
/// `pleno3x3_vs_vvc3x3`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ComparisonGroup {
    pub name: String,
    pub members: Vec<(String, Method)>,
}

impl ComparisonGroup {
    pub fn defaults() -> Vec<ComparisonGroup> {
        ["pleno3x3_vs_vvc3x3", "pleno5x5_vs_vvc5x5", "pleno5x5_vs_pleno3x3", "vvc5x5_vs_vvc3x3"]
            .iter()
            .map(|s| s.parse().expect("valid default group"))
            .collect()
    }

    pub fn contains(&self, codec: &str, method: Method) -> bool {
        self.members.iter().any(|(c, m)| c == codec && *m == method)
    }
}

impl FromStr for ComparisonGroup {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || BenchError::BadGroup(s.to_string());
        let members = s
            .split("_vs_")
            .map(|side| {
                let (codec, method) = if let Some(c) = side.strip_suffix("5x5") {
                    (c, Method::Full5x5)
                } else if let Some(c) = side.strip_suffix("3x3") {
                    (c, Method::Sparse3x3)
                } else {
                    return Err(bad());
                };
                if codec.is_empty() {
                    return Err(bad());
                }
                Ok((codec.to_string(), method))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComparisonGroup {
            name: s.to_string(),
            members,
        })
    }
}

impl TryFrom<String> for ComparisonGroup {
    type Error = BenchError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ComparisonGroup> for String {
    fn from(g: ComparisonGroup) -> String {
        g.name
    }
}

impl fmt::Display for ComparisonGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Splits `{codec}_{method}_{bitrate}`.
pub fn parse_condition_label(label: &str) -> Result<(String, Method, f64)> {
    let bad = || BenchError::BadLabel(label.to_string());
    let mut parts = label.rsplitn(3, '_');
    let bitrate = parts.next().and_then(|b| b.parse::<f64>().ok()).ok_or_else(bad)?;
    let method = parts.next().and_then(|m| m.parse::<Method>().ok()).ok_or_else(bad)?;
    let codec = parts.next().filter(|c| !c.is_empty()).ok_or_else(bad)?;
    Ok((codec.to_string(), method, bitrate))
}

/// Objective scores of one coded test view against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub content_id: String,
    pub view_type: ViewType,
    pub view: Coord,
    pub condition: String,
    pub scores: BTreeMap<MetricId, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    /// Scores every condition's selected test views, reading images from
    /// the directory that holds `manifest`.
    pub fn compute(manifest: &ConditionManifest, dir: &Path, metrics: &[MetricId], cfg: &MetricConfig) -> Result<MetricTable> {
        let layout = Layout::default();
        let mut jobs = Vec::new();
        for content in &manifest.contents {
            for (&view_type, &view) in &content.test_views {
                for cond in manifest.conditions.iter().filter(|c| c.content_id == content.content_id) {
                    jobs.push((content, view_type, view, cond));
                }
            }
        }
        let rows = jobs
            .par_iter()
            .map(|&(content, view_type, view, cond)| {
                let file = layout.file_name(view.0, view.1);
                let depth = Some(content.bit_depth);
                let reference = load_view(&dir.join(&content.reference).join(&file), depth)?;
                let test = load_view(&dir.join(&cond.path).join(&file), depth)?;
                let scores = metrics
                    .iter()
                    .map(|&m| Ok((m, compute(m, &reference, &test, cfg)?.value)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                Ok(MetricRow {
                    content_id: content.content_id.clone(),
                    view_type,
                    view,
                    condition: cond.id.clone(),
                    scores,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricTable { rows })
    }

    pub fn score(&self, content_id: &str, view_type: ViewType, condition: &str, metric: MetricId) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.content_id == content_id && r.view_type == view_type && r.condition == condition)
            .and_then(|r| r.scores.get(&metric).copied())
    }
}

/// One benchmarked condition; `o` and `q` are min-max normalized over the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub content_id: String,
    pub view_type: ViewType,
    pub condition: String,
    pub metric_value: f64,
    pub o: f64,
    pub q: f64,
    pub q_hat: f64,
    pub ci_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group: String,
    pub metric: MetricId,
    pub params: LogisticParams,
    pub stats: Correlation,
    pub points: Vec<SamplePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub version: u32,
    pub groups: Vec<ComparisonGroup>,
    pub metrics: Vec<MetricId>,
    pub results: Vec<GroupResult>,
}

impl BenchmarkReport {
    pub fn result(&self, group: &str, metric: MetricId) -> Option<&GroupResult> {
        self.results.iter().find(|r| r.group == group && r.metric == metric)
    }
}

struct RawPoint {
    content_id: String,
    view_type: ViewType,
    condition: String,
    metric_value: f64,
    q: f64,
    half: f64,
}

fn min_max(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn bench_group(group: &ComparisonGroup, metric: MetricId, scales: &ScaleReport, table: &MetricTable) -> Result<GroupResult> {
    let mut raw = Vec::new();
    for g in &scales.groups {
        for e in &g.scale.entries {
            if e.condition == REFERENCE {
                continue;
            }
            let (codec, method, _) = parse_condition_label(&e.condition)?;
            if !group.contains(&codec, method) {
                continue;
            }
            let metric_value = table
                .score(&g.group.content_id, g.group.view_type, &e.condition, metric)
                .ok_or_else(|| BenchError::MissingScore {
                    content_id: g.group.content_id.clone(),
                    view_type: g.group.view_type,
                    condition: e.condition.clone(),
                    metric,
                })?;
            raw.push(RawPoint {
                content_id: g.group.content_id.clone(),
                view_type: g.group.view_type,
                condition: e.condition.clone(),
                metric_value,
                q: e.score,
                half: (e.ci_high - e.ci_low) / 2.0,
            });
        }
    }
    if raw.is_empty() {
        return Err(BenchError::EmptyGroup(group.name.clone()));
    }
    let (omin, omax) = min_max(raw.iter().map(|p| p.metric_value));
    let (qmin, qmax) = min_max(raw.iter().map(|p| p.q));
    if !(omax > omin) {
        return Err(BenchError::Degenerate(format!("{metric} scores are constant over the group")));
    }
    if !(qmax > qmin) {
        return Err(BenchError::Degenerate("subjective scores are constant over the group".into()));
    }
    let (orange, qrange) = (omax - omin, qmax - qmin);
    let fit_points: Vec<(f64, f64)> = raw
        .iter()
        .map(|p| ((p.metric_value - omin) / orange, (p.q - qmin) / qrange))
        .collect();
    let params = logistic_fit(&fit_points)?;
    let points: Vec<SamplePoint> = raw
        .into_iter()
        .zip(&fit_points)
        .map(|(p, &(o, q))| SamplePoint {
            content_id: p.content_id,
            view_type: p.view_type,
            condition: p.condition,
            metric_value: p.metric_value,
            o,
            q,
            q_hat: predict(&params, o),
            ci_half_width: p.half / qrange,
        })
        .collect();
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.q_hat, p.q)).collect();
    let halves: Vec<f64> = points.iter().map(|p| p.ci_half_width).collect();
    let stats = correlate(&pairs, &halves)?;
    Ok(GroupResult {
        group: group.name.clone(),
        metric,
        params,
        stats,
        points,
    })
}

/// Fits and scores every (group, metric) pair in parallel.
pub fn benchmark(scales: &ScaleReport, table: &MetricTable, groups: &[ComparisonGroup], metrics: &[MetricId]) -> Result<BenchmarkReport> {
    let pairs: Vec<(&ComparisonGroup, MetricId)> = groups.iter().flat_map(|g| metrics.iter().map(move |&m| (g, m))).collect();
    let results = pairs
        .par_iter()
        .map(|&(g, m)| {
            bench_group(g, m, scales, table).map_err(|e| BenchError::Group {
                group: g.name.clone(),
                metric: m,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport {
        version: 1,
        groups: groups.to_vec(),
        metrics: metrics.to_vec(),
        results,
    })
}

#[derive(Serialize)]
struct ScatterRow<'a> {
    content_id: &'a str,
    view_type: ViewType,
    condition: &'a str,
    metric_value: f64,
    o: f64,
    q: f64,
    q_hat: f64,
    ci_half_width: f64,
}

#[derive(Serialize)]
struct RateRow<'a> {
    condition: &'a str,
    codec: &'a str,
    method: Method,
    target_bpp: f64,
    achieved_bpp: Option<f64>,
    score: f64,
    ci_low: f64,
    ci_high: f64,
}

/// Writes the report JSON plus `scatter_*`, `curve_*` and `rate_quality_*`
/// CSVs into `dir`.
pub fn write_outputs(report: &BenchmarkReport, scales: &ScaleReport, manifest: Option<&ConditionManifest>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(REPORT_FILE), serde_json::to_vec_pretty(report)?)?;
    for r in &report.results {
        let mut w = csv::Writer::from_path(dir.join(format!("scatter_{}_{}.csv", r.group, r.metric)))?;
        for p in &r.points {
            w.serialize(ScatterRow {
                content_id: &p.content_id,
                view_type: p.view_type,
                condition: &p.condition,
                metric_value: p.metric_value,
                o: p.o,
                q: p.q,
                q_hat: p.q_hat,
                ci_half_width: p.ci_half_width,
            })?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(format!("curve_{}_{}.csv", r.group, r.metric)))?;
        w.write_record(["o", "q_hat"])?;
        for i in 0..CURVE_SAMPLES {
            let o = i as f64 / (CURVE_SAMPLES - 1) as f64;
            w.write_record([o.to_string(), predict(&r.params, o).to_string()])?;
        }
        w.flush()?;
    }
    for g in &scales.groups {
        let path = dir.join(format!("rate_quality_{}_{}.csv", g.group.content_id, g.group.view_type));
        let mut w = csv::Writer::from_path(path)?;
        for e in g.scale.entries.iter().filter(|e| e.condition != REFERENCE) {
            let (codec, method, target) = parse_condition_label(&e.condition)?;
            let achieved = manifest
                .and_then(|m| m.condition(&g.group.content_id, &e.condition))
                .map(|c| c.condition.achieved_bitrate_bpp);
            w.serialize(RateRow {
                condition: &e.condition,
                codec: &codec,
                method,
                target_bpp: target,
                achieved_bpp: achieved,
                score: e.score,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
            })?;
        }
        w.flush()?;
    }
    Ok(())
}

/// [`benchmark`] followed by [`write_outputs`] when `dir` is given.
pub fn emit_report(
    scales: &ScaleReport,
    table: &MetricTable,
    groups: &[ComparisonGroup],
    metrics: &[MetricId],
    manifest: Option<&ConditionManifest>,
    dir: Option<&Path>,
) -> Result<BenchmarkReport> {
    let report = benchmark(scales, table, groups, metrics)?;
    if let Some(dir) = dir {
        write_outputs(&report, scales, manifest, dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::{finalize_scale, ComparisonMatrix, GroupKey, GroupScale, Orientation};
    use crate::study::AttentionReport;

    fn scales(labels: &[&str], scores: &[f64]) -> ScaleReport {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let cis: Vec<(f64, f64)> = scores.iter().map(|s| (s - 0.1, s + 0.1)).collect();
        let scale = finalize_scale(&labels, scores, &cis, Orientation::Quality).unwrap();
        ScaleReport {
            version: 1,
            options: Default::default(),
            attention: AttentionReport { threshold: 0.75, observers: Default::default() },
            groups: vec![GroupScale {
                group: GroupKey { content_id: "c".into(), view_type: ViewType::S },
                matrix: ComparisonMatrix::zeros(labels.clone()),
                raw_scores: scores.to_vec(),
                outliers: None,
                excluded: vec![],
                scale,
            }],
        }
    }

    fn table(labels: &[&str], values: &[f64]) -> MetricTable {
        MetricTable {
            rows: labels
                .iter()
                .zip(values)
                .map(|(l, &v)| MetricRow {
                    content_id: "c".into(),
                    view_type: ViewType::S,
                    view: (0, 0),
                    condition: l.to_string(),
                    scores: [(MetricId::MsSsim, v)].into_iter().collect(),
                })
                .collect(),
        }
    }

    const LABELS: [&str; 6] = [
        "REFERENCE",
        "k_full5x5_0.1",
        "k_full5x5_0.2",
        "k_full5x5_0.4",
        "k_full5x5_0.8",
        "k_full5x5_1.6",
    ];

    #[test]
    fn group_names_and_labels() {
        let g: ComparisonGroup = "pleno5x5_vs_vvc3x3".parse().unwrap();
        assert_eq!(g.members, vec![("pleno".into(), Method::Full5x5), ("vvc".into(), Method::Sparse3x3)]);
        assert!("pleno_vs_vvc".parse::<ComparisonGroup>().is_err());
        assert_eq!(ComparisonGroup::defaults().len(), 4);
        assert_eq!(parse_condition_label("my-codec_sparse3x3_0.472").unwrap(), ("my-codec".into(), Method::Sparse3x3, 0.472));
        assert!(parse_condition_label("REFERENCE").is_err());
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<ComparisonGroup>(&json).unwrap(), g);
    }

    #[test]
    fn single_group_single_metric() {
        let s = scales(&LABELS, &[3.0, 0.0, 0.8, 1.5, 2.1, 2.6]);
        let t = table(&LABELS[1..], &[0.80, 0.86, 0.91, 0.95, 0.975]);
        let g = vec!["k5x5".parse().unwrap()];
        let r = benchmark(&s, &t, &g, &[MetricId::MsSsim]).unwrap();
        assert_eq!(r.results.len(), 1);
        let res = &r.results[0];
        assert_eq!(res.points.len(), 5);
        assert!(res.points.iter().all(|p| (0.0..=1.0).contains(&p.o) && (0.0..=1.0).contains(&p.q)));
        assert!((res.stats.srocc - 1.0).abs() < 1e-12);
        assert!(res.stats.pcc > 0.99);
    }

    #[test]
    fn missing_score_is_named() {
        let s = scales(&LABELS, &[3.0, 0.0, 0.8, 1.5, 2.1, 2.6]);
        let t = table(&LABELS[1..5], &[0.80, 0.86, 0.91, 0.95]);
        let g = vec!["k5x5".parse().unwrap()];
        let err = benchmark(&s, &t, &g, &[MetricId::MsSsim]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("k_full5x5_1.6") && msg.contains("ms_ssim"), "{msg}");
        let g = vec!["other5x5".parse().unwrap()];
        assert!(benchmark(&s, &t, &g, &[MetricId::MsSsim]).is_err());
    }

    #[test]
    fn writes_plot_files() {
        let s = scales(&LABELS, &[3.0, 0.0, 0.8, 1.5, 2.1, 2.6]);
        let t = table(&LABELS[1..], &[0.80, 0.86, 0.91, 0.95, 0.975]);
        let dir = tempfile::tempdir().unwrap();
        let g = vec!["k5x5".parse().unwrap()];
        emit_report(&s, &t, &g, &[MetricId::MsSsim], None, Some(dir.path())).unwrap();
        for f in [REPORT_FILE, "scatter_k5x5_ms_ssim.csv", "curve_k5x5_ms_ssim.csv", "rate_quality_c_S.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let curve = std::fs::read_to_string(dir.path().join("curve_k5x5_ms_ssim.csv")).unwrap();
        assert_eq!(curve.lines().count(), CURVE_SAMPLES + 1);
    }
}
