//! The `prepare`, `analyze` and `simulate` workflows over a run directory.

use super::config::Config;
use crate::bench::{emit_report, BenchmarkReport, ComparisonGroup, MetricTable, METRIC_TABLE_FILE};
use crate::lightfield::{load_view, save_view, ImageFormat};
use crate::metrics::MetricId;
use crate::pipeline::{prepare, ConditionManifest};
use crate::scaling::{analyze, simulate_responses, ScaleReport, SimulationOptions};
use crate::service::render_stimulus;
use crate::study::{build_study, read_responses, write_responses, Catalog, Response, Stimulus, StudyManifest};
use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

pub const RUN_VERSION: u32 = 1;
pub const RUN_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.json";
pub const CONDITIONS_DIR: &str = "conditions";
pub const ASSETS_DIR: &str = "assets";
pub const STUDY_FILE: &str = "study.json";
pub const ANALYSIS_DIR: &str = "analysis";
pub const SCALES_FILE: &str = "scales.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0:#}")]
    Config(anyhow::Error),
    #[error("stage {stage} failed ({}): {source:#}", path.display())]
    Stage {
        stage: &'static str,
        path: PathBuf,
        source: anyhow::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
        }
    }
}

fn stage<T, E: Into<anyhow::Error>>(name: &'static str, path: &Path, f: impl FnOnce() -> Result<T, E>) -> Result<T, CliError> {
    f().map_err(|e| CliError::Stage {
        stage: name,
        path: path.to_path_buf(),
        source: e.into(),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Summary written as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub contents: Vec<String>,
    pub conditions: usize,
    pub triplets: usize,
    pub sessions: usize,
}

pub fn run_dir_name(cfg: &Config) -> String {
    format!("run-v{RUN_VERSION}-{}", &cfg.hash()[..12])
}

/// Renders every stimulus image once to an 8-bit PNG asset and points the
/// catalog at it.
fn render_assets(catalog: &mut Catalog, conditions: &Path, assets: &Path, depth_of: &BTreeMap<String, crate::lightfield::BitDepth>) -> anyhow::Result<()> {
    let mut done = BTreeSet::new();
    for entry in &mut catalog.entries {
        for s in &mut entry.stimuli {
            let png = Path::new(&s.image).with_extension("png").to_string_lossy().replace('\\', "/");
            if done.insert(png.clone()) {
                let view = load_view(&conditions.join(&s.image), depth_of.get(&s.content_id).copied())?;
                let dst = assets.join(&png);
                std::fs::create_dir_all(dst.parent().expect("asset has a parent"))?;
                save_view(&render_stimulus(&view), &dst, ImageFormat::Png)?;
            }
            s.image = png;
        }
    }
    Ok(())
}

/// Runs conditions, metrics, view selection, triplets, sessions and asset
/// rendering into `out_root/run-v1-<hash>` and returns that directory.
pub fn prepare_run(cfg: &Config, out_root: &Path) -> Result<PathBuf, CliError> {
    let run = out_root.join(run_dir_name(cfg));
    let metric_cfg = cfg.metric_config().map_err(CliError::Config)?;
    stage("setup", &run, || -> anyhow::Result<()> {
        if run.join(RUN_FILE).exists() || run.join(CONFIG_FILE).exists() {
            std::fs::remove_dir_all(&run)?;
        }
        std::fs::create_dir_all(&run)?;
        write_json(&run.join(CONFIG_FILE), cfg)
    })?;

    let contents = cfg
        .contents
        .iter()
        .map(|c| {
            let path = c.path.clone().unwrap_or_else(|| PathBuf::from(&c.id));
            stage("load", &path, || c.load())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let conditions = run.join(CONDITIONS_DIR);
    let manifest = stage("pipeline", &conditions, || prepare(&contents, &cfg.prepare_plan(), &metric_cfg, &conditions))?;

    let table_path = run.join(METRIC_TABLE_FILE);
    stage("metrics", &table_path, || -> anyhow::Result<()> {
        let table = MetricTable::compute(&manifest, &conditions, &cfg.metrics.benchmarked, &metric_cfg)?;
        write_json(&table_path, &table)
    })?;

    let study_path = run.join(STUDY_FILE);
    let study = stage("study", &study_path, || -> anyhow::Result<StudyManifest> {
        let mut full = Catalog::from_manifest(&manifest);
        let depth_of = manifest.contents.iter().map(|c| (c.content_id.clone(), c.bit_depth)).collect();
        render_assets(&mut full, &conditions, &run.join(ASSETS_DIR), &depth_of)?;
        let (training, testing): (Vec<_>, Vec<_>) = full
            .entries
            .into_iter()
            .partition(|e| cfg.study.training_contents.contains(&e.content_id));
        let testing = Catalog { entries: testing };
        let training = (!training.is_empty()).then_some(Catalog { entries: training });
        let study = build_study(&testing, &cfg.ruleset(), &cfg.study_params(), training.as_ref())?;
        write_json(&study_path, &study)?;
        Ok(study)
    })?;

    stage("setup", &run, || {
        write_json(
            &run.join(RUN_FILE),
            &RunInfo {
                version: RUN_VERSION,
                config_hash: cfg.hash(),
                seed: cfg.seed,
                contents: cfg.contents.iter().map(|c| c.id.clone()).collect(),
                conditions: manifest.conditions.len(),
                triplets: study.triplets.len(),
                sessions: study.sessions.len(),
            },
        )
    })?;
    Ok(run)
}

/// Everything `analyze` reads from a prepared run.
pub struct PreparedRun {
    pub dir: PathBuf,
    pub config: Config,
    pub manifest: ConditionManifest,
    pub study: StudyManifest,
    pub table: MetricTable,
}

impl PreparedRun {
    pub fn load(dir: &Path) -> Result<PreparedRun, CliError> {
        stage("load-run", dir, || -> anyhow::Result<PreparedRun> {
            Ok(PreparedRun {
                dir: dir.to_path_buf(),
                config: read_json(&dir.join(CONFIG_FILE))?,
                manifest: ConditionManifest::load(&dir.join(CONDITIONS_DIR))?,
                study: read_json(&dir.join(STUDY_FILE))?,
                table: read_json(&dir.join(METRIC_TABLE_FILE))?,
            })
        })
    }
}

pub struct Analysis {
    pub dir: PathBuf,
    pub scales: ScaleReport,
    pub bench: BenchmarkReport,
}

pub fn read_response_file(path: &Path) -> Result<Vec<Response>, CliError> {
    stage("responses", path, || -> anyhow::Result<Vec<Response>> {
        let f = std::fs::File::open(path)?;
        Ok(read_responses(std::io::BufReader::new(f))?)
    })
}

/// Attention and outlier screening, scaling, logistic fits, statistics and
/// plot CSVs. Writes into `out` (default `<run>/analysis`).
pub fn analyze_run(run: &PreparedRun, responses: &[Response], groups: Option<Vec<ComparisonGroup>>, out: Option<&Path>) -> Result<Analysis, CliError> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run.dir.join(ANALYSIS_DIR));
    if responses.is_empty() {
        return Err(CliError::Stage {
            stage: "scaling",
            path: out,
            source: anyhow!("the response set is empty"),
        });
    }
    let scales_path = out.join(SCALES_FILE);
    let scales = stage("scaling", &scales_path, || -> anyhow::Result<ScaleReport> {
        let scales = analyze(&run.study, responses, &run.config.analyze_options())?;
        std::fs::create_dir_all(&out)?;
        write_json(&scales_path, &scales)?;
        Ok(scales)
    })?;
    let groups = groups.unwrap_or_else(|| run.config.groups());
    let bench = stage("bench", &out, || {
        emit_report(&scales, &run.table, &groups, &run.config.metrics.benchmarked, Some(&run.manifest), Some(&out))
    })?;
    Ok(Analysis { dir: out, scales, bench })
}

/// Synthetic observers whose latent quality of a stimulus is `gain` times
/// its objective score under `metric`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub metric: MetricId,
    pub gain: f64,
    pub simulation: SimulationOptions,
}

pub fn simulate_run(run: &PreparedRun, opts: &SimulateOptions) -> Result<Vec<Response>, CliError> {
    stage("simulate", &run.dir, || -> anyhow::Result<Vec<Response>> {
        let truth = |s: &Stimulus| -> Option<f64> {
            let value = match &s.condition {
                None => Some(opts.metric.identity_value()),
                Some(_) => run.table.score(&s.content_id, s.view_type, &s.condition_key(), opts.metric),
            };
            value.map(|v| opts.gain * v)
        };
        for t in &run.study.triplets {
            for s in [&t.reference, &t.left, &t.right] {
                if truth(s).is_none() {
                    return Err(anyhow!("no {} score for {}", opts.metric, s.id()));
                }
            }
        }
        Ok(simulate_responses(
            &run.study.sessions,
            &run.study.triplets,
            |s| truth(s).expect("checked above"),
            &opts.simulation,
        )?)
    })
}

pub fn write_response_file(path: &Path, responses: &[Response]) -> Result<(), CliError> {
    stage("simulate", path, || -> anyhow::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_responses(&mut f, responses)?;
        Ok(())
    })
}
