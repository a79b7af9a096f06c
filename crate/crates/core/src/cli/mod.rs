//! The `lfq` command line: one subcommand per workflow stage.
//!
//! Exit codes: 0 success, 2 invalid config or arguments, 3 a stage failed.

pub mod config;
pub mod workflow;

pub use config::Config;
pub use workflow::{
    analyze_run, prepare_run, read_response_file, run_dir_name, simulate_run, write_response_file, Analysis, CliError, PreparedRun,
    RunInfo, SimulateOptions, ANALYSIS_DIR, ASSETS_DIR, CONDITIONS_DIR, CONFIG_FILE, RUN_FILE, SCALES_FILE, STUDY_FILE,
};

use crate::bench::{emit_report, ComparisonGroup, MetricTable};
use crate::lightfield::{load_view, load_with_sidecar, SIDECAR_FILE};
use crate::metrics::{compute, score_light_field, MetricConfig, MetricId};
use crate::pipeline::ConditionManifest;
use crate::scaling::{ScaleReport, SimulationOptions};
use crate::service::{router, StudyStore};
use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(name = "lfq", version, about = "Light field codec quality assessment workflow")]
pub struct Cli {
    /// Base for relative paths and default output locations.
    #[arg(long, env = "LFQ_DATA_ROOT", global = true)]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode, decode and synthesize conditions, score them, and build the study.
    Prepare {
        #[arg(long)]
        config: PathBuf,
        /// Directory that receives `run-v1-<hash>/` (default `<data-root>/runs`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve studies over HTTP.
    Serve {
        /// Study store directory (default `<data-root>/studies`).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Register the study of a prepared run before serving.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Screen, scale and benchmark exported responses.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        /// NDJSON response export.
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comparison groups such as `pleno3x3_vs_vvc3x3` (default from the config).
        #[arg(long, value_delimiter = ',')]
        groups: Vec<ComparisonGroup>,
    },
    /// Score a test view or light field against a reference.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = MetricId::BENCHMARKED)]
        metric: Vec<MetricId>,
        /// Directory overriding the bundled metric tables.
        #[arg(long)]
        metric_config: Option<PathBuf>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit and benchmark metrics against existing subjective scales.
    Bench {
        #[arg(long)]
        scales: PathBuf,
        /// Metric table (`metric_scores.json`).
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = ComparisonGroup::defaults())]
        groups: Vec<ComparisonGroup>,
        #[arg(long = "metric", value_delimiter = ',', default_values_t = MetricId::BENCHMARKED)]
        metric_ids: Vec<MetricId>,
        /// Condition directory, enabling rate-quality CSVs.
        #[arg(long)]
        conditions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer a prepared study with model observers.
    #[command(hide = true)]
    Simulate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = MetricId::PsnrHvs)]
        truth_metric: MetricId,
        #[arg(long, default_value_t = 0.3)]
        gain: f64,
        #[arg(long, default_value_t = 0.0)]
        not_sure_margin: f64,
        #[arg(long, value_delimiter = ',')]
        random_observers: Vec<String>,
    },
}

fn under(root: &Option<PathBuf>, p: &Path) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

fn stage_err(stage: &'static str, path: &Path) -> impl FnOnce(anyhow::Error) -> CliError + use<> {
    let path = path.to_path_buf();
    move |source| CliError::Stage { stage, path, source }
}

/// Loads and resolves a config. Relative paths inside it are taken from the
/// data root when given, else from the config file's directory.
pub fn load_config(path: &Path, data_root: Option<&Path>) -> Result<Config, CliError> {
    let mut cfg = Config::load(path).map_err(CliError::Config)?;
    let base = data_root
        .map(Path::to_path_buf)
        .or_else(|| path.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    cfg.resolve(&base).map_err(CliError::Config)?;
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| stage_err("output", p)(e.into())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn metrics_cmd(reference: &Path, test: &Path, metrics: &[MetricId], cfg: &MetricConfig, out: Option<&Path>) -> Result<(), CliError> {
    let mut result = serde_json::Map::new();
    if reference.is_dir() {
        let load = |p: &Path| {
            if p.join(SIDECAR_FILE).exists() {
                load_with_sidecar(p).map_err(anyhow::Error::from)
            } else {
                Err(anyhow!("{} has no {SIDECAR_FILE}", p.display()))
            }
        };
        let r = load(reference).map_err(stage_err("load", reference))?;
        let t = load(test).map_err(stage_err("load", test))?;
        for &m in metrics {
            let s = score_light_field(&r, &t, m, cfg).map_err(|e| stage_err("metrics", test)(e.into()))?;
            result.insert(m.to_string(), serde_json::to_value(s).expect("scores serialize"));
        }
    } else {
        let r = load_view(reference, None).map_err(|e| stage_err("load", reference)(e.into()))?;
        let t = load_view(test, None).map_err(|e| stage_err("load", test)(e.into()))?;
        for &m in metrics {
            let s = compute(m, &r, &t, cfg).map_err(|e| stage_err("metrics", test)(e.into()))?;
            result.insert(m.to_string(), serde_json::to_value(s).expect("scores serialize"));
        }
    }
    write_or_print(out, &serde_json::Value::Object(result))
}

fn serve_cmd(store_root: &Path, run: Option<&Path>, bind: &str) -> Result<(), CliError> {
    let store = StudyStore::open(store_root).map_err(|e| stage_err("serve", store_root)(e.into()))?;
    if let Some(run) = run {
        let prepared = PreparedRun::load(run)?;
        let id = store
            .create_study(prepared.study, &run.join(ASSETS_DIR), prepared.config.service.clone())
            .map_err(|e| stage_err("serve", run)(e.into()))?;
        eprintln!("study {id}");
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| stage_err("serve", store_root)(e.into()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(store)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })
    .map_err(stage_err("serve", store_root))
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(stage: &'static str, path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| stage_err(stage, path)(e.into()))?;
    serde_json::from_slice(&bytes).map_err(|e| stage_err(stage, path)(e.into()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let root = cli.data_root;
    let base = root.clone().unwrap_or_default();
    match cli.command {
        Command::Prepare { config, out } => {
            let cfg = load_config(&under(&root, &config), root.as_deref())?;
            let out = out.map(|o| under(&root, &o)).unwrap_or_else(|| base.join("runs"));
            let run = prepare_run(&cfg, &out)?;
            println!("{}", run.display());
        }
        Command::Serve { store, run, bind } => {
            let store = store.map(|s| under(&root, &s)).unwrap_or_else(|| base.join("studies"));
            serve_cmd(&store, run.map(|r| under(&root, &r)).as_deref(), &bind)?;
        }
        Command::Analyze { run, responses, out, groups } => {
            let prepared = PreparedRun::load(&under(&root, &run))?;
            let responses = read_response_file(&under(&root, &responses))?;
            let groups = (!groups.is_empty()).then_some(groups);
            let out = out.map(|o| under(&root, &o));
            let analysis = analyze_run(&prepared, &responses, groups, out.as_deref())?;
            println!("{}", analysis.dir.display());
        }
        Command::Metrics {
            reference,
            test,
            metric,
            metric_config,
            out,
        } => {
            let cfg = match metric_config {
                Some(d) => MetricConfig::load_dir(&under(&root, &d)).map_err(|e| CliError::Config(e.into()))?,
                None => MetricConfig::default(),
            };
            let out = out.map(|o| under(&root, &o));
            metrics_cmd(&under(&root, &reference), &under(&root, &test), &metric, &cfg, out.as_deref())?;
        }
        Command::Bench {
            scales,
            metrics,
            groups,
            metric_ids,
            conditions,
            out,
        } => {
            let scales: ScaleReport = read_json("bench", &under(&root, &scales))?;
            let table: MetricTable = read_json("bench", &under(&root, &metrics))?;
            let manifest = match conditions {
                Some(c) => {
                    let dir = under(&root, &c);
                    Some(ConditionManifest::load(&dir).map_err(|e| stage_err("bench", &dir)(e.into()))?)
                }
                None => None,
            };
            let out = under(&root, &out);
            emit_report(&scales, &table, &groups, &metric_ids, manifest.as_ref(), Some(&out)).map_err(|e| stage_err("bench", &out)(e.into()))?;
            println!("{}", out.display());
        }
        Command::Simulate {
            run,
            out,
            seed,
            truth_metric,
            gain,
            not_sure_margin,
            random_observers,
        } => {
            let prepared = PreparedRun::load(&under(&root, &run))?;
            let opts = SimulateOptions {
                metric: truth_metric,
                gain,
                simulation: SimulationOptions {
                    seed,
                    not_sure_margin,
                    random_observers,
                },
            };
            let responses = simulate_run(&prepared, &opts)?;
            write_response_file(&under(&root, &out), &responses)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
