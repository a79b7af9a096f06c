//! Condition matrix construction: full and sparse coding of each light field
//! through codec adapters, followed by two-stage view synthesis for the
//! views the sparse method does not transmit.

mod codec;
mod plan;
mod synth;

pub use codec::{
    quality_for_rate, quant_table, standin_encode_decode, Builtin, CodecAdapter, CodecSpec, IoFormat, LadderPoint,
    RateControl,
};
pub use plan::{build_synthesis_plan, Axis, Coord, SynthesisPlan, SynthesisStep};
pub use synth::{blend_synthesize, SynthesizerAdapter};

use crate::lightfield::{
    classify_view, crop_inner, sample_sparse, save_light_field, BitDepth, Layout, LightField, LightFieldError, View,
    ViewType,
};
use crate::metrics::{score_light_field, MetricConfig, MetricError, MetricId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::fmt;
use std::path::Path;
use std::process::Command;
use std::str::FromStr;
use std::time::Instant;

/// The standard ladder of target bitrates, in bits per pixel.
pub const DEFAULT_BITRATES: [f64; 4] = [0.118, 0.236, 0.472, 1.003];

pub const MANIFEST_FILE: &str = "conditions.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const REFERENCE_DIR: &str = "REFERENCE";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("adapter {name} failed (status {status:?}): {stderr}")]
    Adapter {
        name: String,
        status: Option<i32>,
        stderr: String,
    },
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("synthesis needs an odd square grid of at least 5x5, got {rows}x{cols}")]
    BadGrid { rows: usize, cols: usize },
    #[error("invalid synthesis plan: {0}")]
    Plan(String),
    #[error("expected {expected} view scores, got {got}")]
    MissingScores { expected: usize, got: usize },
    #[error("pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    LightField(#[from] LightFieldError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "full5x5")]
    Full5x5,
    #[serde(rename = "sparse3x3")]
    Sparse3x3,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Full5x5, Method::Sparse3x3];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Full5x5 => "full5x5",
            Method::Sparse3x3 => "sparse3x3",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown method {s:?}")))
    }
}

/// One coded condition. `wall_clock_s` is kept out of the manifest so that
/// reruns produce identical files; it is written to `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub codec: String,
    pub method: Method,
    pub target_bitrate_bpp: f64,
    pub achieved_bitrate_bpp: f64,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl Condition {
    pub fn id(&self) -> String {
        condition_id(&self.codec, self.method, self.target_bitrate_bpp)
    }
}

pub fn condition_id(codec: &str, method: Method, bitrate: f64) -> String {
    format!("{codec}_{method}_{bitrate}")
}

fn shell_quote(s: &OsStr) -> String {
    format!("'{}'", s.to_string_lossy().replace('\'', "'\\''"))
}

/// Substitutes `{key}` placeholders with shell-quoted values and runs the
/// result through `sh -c`.
pub(crate) fn run_template(name: &str, template: &str, values: &[(&str, &OsStr)]) -> Result<()> {
    let mut cmd = template.to_string();
    for (key, value) in values {
        cmd = cmd.replace(&format!("{{{key}}}"), &shell_quote(value));
    }
    let output = Command::new("sh").arg("-c").arg(&cmd).output().map_err(|e| PipelineError::Adapter {
        name: name.to_string(),
        status: None,
        stderr: e.to_string(),
    })?;
    if !output.status.success() {
        return Err(PipelineError::Adapter {
            name: name.to_string(),
            status: output.status.code(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(())
}

/// Runs `plan` over a grid in which the coded positions are filled.
pub fn execute_plan(
    grid: &mut [Option<View>],
    plan: &SynthesisPlan,
    synth: &SynthesizerAdapter,
    workdir: &Path,
) -> Result<()> {
    for (i, step) in plan.steps.iter().enumerate() {
        let get = |(r, c): Coord| {
            grid[r * plan.cols + c]
                .as_ref()
                .ok_or_else(|| PipelineError::Plan(format!("source ({r},{c}) missing for step {i}")))
        };
        let view = synth.synthesize(get(step.sources[0])?, get(step.sources[1])?, &workdir.join(format!("step_{i:02}")))?;
        grid[step.target.0 * plan.cols + step.target.1] = Some(view);
    }
    Ok(())
}

/// Produces one condition of `lf`. For the sparse method `lf` must be the
/// cropped grid; the coded views are re-embedded at even coordinates and the
/// rest synthesized.
pub fn run_condition(
    lf: &LightField,
    codec: &CodecAdapter,
    method: Method,
    bitrate: f64,
    synth: &SynthesizerAdapter,
    workdir: &Path,
) -> Result<(LightField, Condition)> {
    let start = Instant::now();
    std::fs::create_dir_all(workdir)?;
    let pixels = (lf.view_width() * lf.view_height()) as f64;
    let (out, bits, coded_views) = match method {
        Method::Full5x5 => {
            let (dec, bits) = codec.encode_decode(lf, bitrate, &workdir.join("codec"))?;
            (dec, bits, lf.views().len())
        }
        Method::Sparse3x3 => {
            let plan = build_synthesis_plan(lf.rows(), lf.cols())?;
            let sparse = sample_sparse(lf)?;
            let (dec, bits) = codec.encode_decode(&sparse, bitrate, &workdir.join("codec"))?;
            let mut grid: Vec<Option<View>> = vec![None; lf.rows() * lf.cols()];
            for (r, c, v) in dec.iter() {
                grid[2 * r * lf.cols() + 2 * c] = Some(v.clone());
            }
            execute_plan(&mut grid, &plan, synth, &workdir.join("synth"))?;
            let views = grid.into_iter().map(|v| v.expect("plan fills every position")).collect();
            (LightField::new(lf.content_id(), lf.rows(), lf.cols(), views)?, bits, sparse.views().len())
        }
    };
    let condition = Condition {
        codec: codec.name.clone(),
        method,
        target_bitrate_bpp: bitrate,
        achieved_bitrate_bpp: bits as f64 / (pixels * coded_views as f64),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok((out, condition))
}

/// Selected test view per view type.
pub type TestViews = BTreeMap<ViewType, Coord>;

/// Per view type, the coordinate with the lowest score (row-major order
/// breaks ties). `scores` is row-major over a `rows x cols` grid.
pub fn select_test_views(scores: &[f64], rows: usize, cols: usize) -> Result<TestViews> {
    if scores.len() != rows * cols || rows < 2 || cols < 2 {
        return Err(PipelineError::MissingScores {
            expected: rows.max(2) * cols.max(2),
            got: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(PipelineError::Config(format!("score for view ({},{}) is NaN", i / cols, i % cols)));
    }
    let mut best: BTreeMap<ViewType, (f64, Coord)> = BTreeMap::new();
    for (i, &s) in scores.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        let e = best.entry(classify_view(r, c)).or_insert((s, (r, c)));
        if s < e.0 {
            *e = (s, (r, c));
        }
    }
    Ok(best.into_iter().map(|(t, (_, coord))| (t, coord)).collect())
}

/// Adapter config file: codec name to invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub codecs: BTreeMap<String, CodecSpec>,
    #[serde(default)]
    pub synthesizer: SynthesizerAdapter,
}

impl AdapterConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: AdapterConfig = serde_json::from_str(text)?;
        if cfg.codecs.is_empty() {
            return Err(PipelineError::Config("adapter config lists no codecs".into()));
        }
        Ok(cfg)
    }

    pub fn adapters(&self) -> Vec<CodecAdapter> {
        self.codecs
            .iter()
            .map(|(name, spec)| CodecAdapter {
                name: name.clone(),
                spec: spec.clone(),
            })
            .collect()
    }
}

/// What `prepare` builds.
#[derive(Debug, Clone)]
pub struct PreparePlan {
    pub codecs: Vec<CodecAdapter>,
    pub synthesizer: SynthesizerAdapter,
    pub methods: Vec<Method>,
    pub bitrates: Vec<f64>,
    /// Side of the centered crop applied before coding.
    pub grid: usize,
    pub workers: usize,
    /// Condition whose highest-bitrate output picks the test views.
    pub selection_codec: Option<String>,
    pub selection_metric: MetricId,
}

impl PreparePlan {
    pub fn new(codecs: Vec<CodecAdapter>) -> Self {
        PreparePlan {
            codecs,
            synthesizer: SynthesizerAdapter::Blend,
            methods: Method::ALL.to_vec(),
            bitrates: DEFAULT_BITRATES.to_vec(),
            grid: 5,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            selection_codec: None,
            selection_metric: MetricId::MsSsim,
        }
    }

    fn selection(&self) -> Option<(String, Method, f64)> {
        let codec = match &self.selection_codec {
            Some(c) => c.clone(),
            None => self
                .codecs
                .iter()
                .find(|c| c.name == "vvc")
                .or(self.codecs.first())
                .map(|c| c.name.clone())?,
        };
        let method = if self.methods.contains(&Method::Sparse3x3) {
            Method::Sparse3x3
        } else {
            *self.methods.first()?
        };
        let top = self.bitrates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some((codec, method, top))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.codecs.is_empty() || self.methods.is_empty() || self.bitrates.is_empty() {
            return bad("need at least one codec, method and bitrate");
        }
        if self.bitrates.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return bad("bitrates must be positive");
        }
        let mut names: Vec<_> = self.codecs.iter().map(|c| c.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.codecs.len() {
            return bad("duplicate codec name");
        }
        if let Some(sel) = &self.selection_codec {
            if !names.contains(&sel.as_str()) {
                return bad("selection codec is not configured");
            }
        }
        if names.iter().any(|n| !safe_name(n)) {
            return bad("codec names may only use letters, digits, '-' and '.'");
        }
        Ok(())
    }
}

fn safe_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentEntry {
    pub content_id: String,
    /// Directory of the cropped reference, relative to the manifest.
    pub reference: String,
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
    pub bit_depth: BitDepth,
    pub test_views: TestViews,
    pub selection_metric: MetricId,
    /// Row-major selection scores.
    pub selection_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub content_id: String,
    pub id: String,
    pub condition: Condition,
    pub path: String,
    pub view_types: Vec<Vec<ViewType>>,
}

/// Every light field `prepare` produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionManifest {
    pub version: u32,
    pub codecs: Vec<String>,
    pub methods: Vec<Method>,
    pub bitrates: Vec<f64>,
    pub synthesizer: String,
    pub synthesis_plan: SynthesisPlan,
    pub contents: Vec<ContentEntry>,
    pub conditions: Vec<ConditionEntry>,
}

impl ConditionManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?)
    }

    pub fn condition(&self, content_id: &str, id: &str) -> Option<&ConditionEntry> {
        self.conditions.iter().find(|c| c.content_id == content_id && c.id == id)
    }
}

/// Crops each content, runs every (codec, method, bitrate) condition on a
/// pool of `plan.workers` threads, writes the outputs under `out_dir` and
/// returns the manifest (also written as `conditions.json`).
pub fn prepare(contents: &[LightField], plan: &PreparePlan, metrics: &MetricConfig, out_dir: &Path) -> Result<ConditionManifest> {
    plan.validate()?;
    for lf in contents {
        if !safe_name(&lf.content_id().replace('_', "-")) {
            return Err(PipelineError::Config(format!("content id {:?} is not a safe directory name", lf.content_id())));
        }
    }
    let synthesis_plan = build_synthesis_plan(plan.grid, plan.grid)?;
    let cropped = contents
        .iter()
        .map(|lf| crop_inner(lf, plan.grid, plan.grid))
        .collect::<Result<Vec<_>, _>>()?;
    let layout = Layout::default();
    let work_root = out_dir.join(".work");
    for lf in &cropped {
        save_light_field(lf, &out_dir.join(lf.content_id()).join(REFERENCE_DIR), &layout)?;
    }

    let mut jobs = Vec::new();
    for (ci, _) in cropped.iter().enumerate() {
        for codec in &plan.codecs {
            for &method in &plan.methods {
                for &bitrate in &plan.bitrates {
                    jobs.push((ci, codec, method, bitrate));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let results: Vec<(usize, LightField, Condition)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(ci, codec, method, bitrate)| {
                let lf = &cropped[ci];
                let id = condition_id(&codec.name, method, bitrate);
                let workdir = work_root.join(lf.content_id()).join(&id);
                let (out, cond) = run_condition(lf, codec, method, bitrate, &plan.synthesizer, &workdir)?;
                save_light_field(&out, &out_dir.join(lf.content_id()).join(&id), &layout)?;
                let _ = std::fs::remove_dir_all(&workdir);
                Ok((ci, out, cond))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let _ = std::fs::remove_dir_all(&work_root);

    let view_types: Vec<Vec<ViewType>> = (0..plan.grid)
        .map(|r| (0..plan.grid).map(|c| classify_view(r, c)).collect())
        .collect();
    let selection = plan.selection();
    let mut content_entries = Vec::new();
    for (ci, lf) in cropped.iter().enumerate() {
        let mut test_views = TestViews::new();
        let mut selection_metric = plan.selection_metric;
        let mut selection_scores = Vec::new();
        if let Some((codec, method, top)) = &selection {
            let coded = results
                .iter()
                .find(|(i, _, c)| *i == ci && &c.codec == codec && c.method == *method && c.target_bitrate_bpp == *top)
                .map(|(_, out, _)| out)
                .expect("selection condition was run");
            let scores = match score_light_field(lf, coded, selection_metric, metrics) {
                Err(MetricError::TooSmall { .. }) => {
                    // views below the multi-scale minimum fall back to PSNR
                    selection_metric = MetricId::Psnr;
                    score_light_field(lf, coded, selection_metric, metrics)?
                }
                other => other?,
            };
            selection_scores = scores.values();
            test_views = select_test_views(&selection_scores, lf.rows(), lf.cols())?;
        }
        content_entries.push(ContentEntry {
            content_id: lf.content_id().to_string(),
            reference: format!("{}/{REFERENCE_DIR}", lf.content_id()),
            rows: lf.rows(),
            cols: lf.cols(),
            width: lf.view_width(),
            height: lf.view_height(),
            bit_depth: lf.bit_depth(),
            test_views,
            selection_metric,
            selection_scores,
        });
    }

    let mut timings = BTreeMap::new();
    let conditions = results
        .iter()
        .map(|(ci, _, cond)| {
            let content_id = cropped[*ci].content_id().to_string();
            timings.insert(format!("{content_id}/{}", cond.id()), cond.wall_clock_s);
            ConditionEntry {
                path: format!("{content_id}/{}", cond.id()),
                content_id,
                id: cond.id(),
                condition: cond.clone(),
                view_types: view_types.clone(),
            }
        })
        .collect();
    let manifest = ConditionManifest {
        version: 1,
        codecs: plan.codecs.iter().map(|c| c.name.clone()).collect(),
        methods: plan.methods.clone(),
        bitrates: plan.bitrates.clone(),
        synthesizer: plan.synthesizer.name().to_string(),
        synthesis_plan,
        contents: content_entries,
        conditions,
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    std::fs::write(out_dir.join(TIMINGS_FILE), serde_json::to_vec_pretty(&timings)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{constant_light_field, synthetic_light_field};

    fn tmp(name: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("lfq-pipeline-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        d
    }

    fn mse(a: &LightField, b: &LightField) -> f64 {
        let n: usize = a.views().iter().map(|v| v.samples().len()).sum();
        a.views()
            .iter()
            .zip(b.views())
            .flat_map(|(x, y)| x.samples().iter().zip(y.samples()).map(|(p, q)| (p - q).powi(2)))
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn lossless_full_is_identity() {
        let lf = synthetic_light_field("a", 5, 5, 16, 16, 1.0, 1);
        let codec = CodecAdapter::standin("s", RateControl::Ladder { points: vec![LadderPoint { bpp: 8.0, quality: 100 }] });
        let (out, cond) = run_condition(&lf, &codec, Method::Full5x5, 8.0, &SynthesizerAdapter::Blend, &tmp("id")).unwrap();
        assert_eq!(out, lf);
        assert!(cond.achieved_bitrate_bpp > 0.0);
        assert_eq!(cond.id(), "s_full5x5_8");
    }

    #[test]
    fn constant_field_sparse_equals_full() {
        let lf = constant_light_field("c", 5, 5, 24, 16, 3);
        for q in [10, 60, 100] {
            let codec = CodecAdapter::standin("s", RateControl::Ladder { points: vec![LadderPoint { bpp: 1.0, quality: q }] });
            let (full, _) = run_condition(&lf, &codec, Method::Full5x5, 1.0, &SynthesizerAdapter::Blend, &tmp("f")).unwrap();
            let (sparse, _) = run_condition(&lf, &codec, Method::Sparse3x3, 1.0, &SynthesizerAdapter::Blend, &tmp("s")).unwrap();
            assert_eq!(full, sparse);
            assert!(sparse.views().iter().all(|v| v == sparse.view(0, 0)));
        }
    }

    #[test]
    fn sparse_reembeds_decoded_views() {
        let lf = synthetic_light_field("a", 5, 5, 16, 16, 1.5, 4);
        let codec = CodecAdapter::standin("s", RateControl::Ladder { points: vec![LadderPoint { bpp: 1.0, quality: 40 }] });
        let (out, cond) = run_condition(&lf, &codec, Method::Sparse3x3, 1.0, &SynthesizerAdapter::Blend, &tmp("re")).unwrap();
        let (dec, bits) = standin_encode_decode(&sample_sparse(&lf).unwrap(), 40).unwrap();
        for (r, c, v) in dec.iter() {
            assert_eq!(out.view(2 * r, 2 * c), v);
        }
        assert_eq!(cond.achieved_bitrate_bpp, bits as f64 / (16.0 * 16.0 * 9.0));
        // O view is the blend of its horizontal X neighbors
        let expect = blend_synthesize(out.view(1, 0), out.view(1, 2)).unwrap();
        assert_eq!(out.view(1, 1), &expect);
    }

    #[test]
    fn distortion_falls_with_bitrate() {
        let lf = synthetic_light_field("a", 5, 5, 32, 32, 0.5, 9);
        let points: Vec<_> = DEFAULT_BITRATES
            .iter()
            .zip([5, 20, 50, 90])
            .map(|(&bpp, quality)| LadderPoint { bpp, quality })
            .collect();
        for codec_name in ["p", "v"] {
            let codec = CodecAdapter::standin(codec_name, RateControl::Ladder { points: points.clone() });
            for method in Method::ALL {
                let mut last = f64::INFINITY;
                for b in DEFAULT_BITRATES {
                    let (out, _) = run_condition(&lf, &codec, method, b, &SynthesizerAdapter::Blend, &tmp("ladder")).unwrap();
                    let e = mse(&lf, &out);
                    assert!(e <= last, "{method} at {b}: {e} > {last}");
                    last = e;
                }
            }
        }
    }

    #[test]
    fn select_views_rules() {
        let flat = vec![0.5; 25];
        let tv = select_test_views(&flat, 5, 5).unwrap();
        assert_eq!(tv[&ViewType::S], (0, 0));
        assert_eq!(tv[&ViewType::X], (0, 1));
        assert_eq!(tv[&ViewType::O], (1, 1));
        let mut crafted = vec![0.9; 25];
        crafted[2 * 5 + 4] = 0.1; // S
        crafted[3 * 5 + 2] = 0.2; // X
        crafted[3 * 5 + 3] = 0.3; // O
        let tv = select_test_views(&crafted, 5, 5).unwrap();
        assert_eq!((tv[&ViewType::S], tv[&ViewType::X], tv[&ViewType::O]), ((2, 4), (3, 2), (3, 3)));
        assert!(matches!(select_test_views(&[0.5; 24], 5, 5), Err(PipelineError::MissingScores { .. })));
    }

    #[test]
    fn external_adapter_reports_failure() {
        let lf = synthetic_light_field("a", 1, 1, 8, 8, 0.0, 1);
        let codec = CodecAdapter::external("broken", "echo boom >&2; exit 7", "true", IoFormat::Ppm);
        match codec.encode_decode(&lf, 0.5, &tmp("ext")) {
            Err(PipelineError::Adapter { status, stderr, .. }) => {
                assert_eq!(status, Some(7));
                assert_eq!(stderr, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn external_copy_codec_roundtrips() {
        let lf = synthetic_light_field("a", 3, 3, 8, 8, 1.0, 1);
        let codec = CodecAdapter::external(
            "copy",
            "tar -C {input} -cf {output} .",
            "tar -C {output} -xf {input}",
            IoFormat::Png,
        );
        let (out, bits) = codec.encode_decode(&lf, 0.5, &tmp("copy")).unwrap();
        assert_eq!(out, lf);
        assert!(bits > 0);
        let synth = SynthesizerAdapter::External {
            name: "cp".into(),
            cmd: "cp {left} {output}".into(),
            io_format: IoFormat::Ppm,
        };
        let v = synth.synthesize(lf.view(0, 0), lf.view(0, 2), &tmp("syn")).unwrap();
        assert_eq!(&v, lf.view(0, 0));
    }
}
