//! The single config file that drives `prepare` and `analyze`.

use crate::bench::ComparisonGroup;
use crate::lightfield::{load_light_field, load_with_sidecar, BitDepth, Layout, LightField, SIDECAR_FILE};
use crate::metrics::{MetricConfig, MetricId};
use crate::pipeline::{AdapterConfig, CodecAdapter, CodecSpec, Method, PreparePlan, SynthesizerAdapter, DEFAULT_BITRATES};
use crate::scaling::{AnalyzeOptions, BootstrapOptions, FitOptions};
use crate::service::StudyOptions;
use crate::study::{Ruleset, StudyParams, DEFAULT_ATTENTION_THRESHOLD};
use crate::synthetic::synthetic_light_field;
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Seeds scheduling, bootstrap and training selection.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub contents: Vec<ContentSource>,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub service: StudyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "five")]
    pub rows: usize,
    #[serde(default = "five")]
    pub cols: usize,
    pub width: usize,
    pub height: usize,
    #[serde(default = "unit")]
    pub disparity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn five() -> usize {
    5
}

fn unit() -> f64 {
    1.0
}

/// A directory of views, or a procedurally generated light field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentSource {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// File pattern when the directory has no sidecar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl ContentSource {
    /// Relative paths must already be resolved (see [`Config::resolve`]).
    pub fn load(&self) -> anyhow::Result<LightField> {
        match (&self.path, &self.synthetic) {
            (Some(_), Some(_)) | (None, None) => bail!("content {}: give exactly one of path or synthetic", self.id),
            (None, Some(s)) => Ok(synthetic_light_field(&self.id, s.rows, s.cols, s.width, s.height, s.disparity, s.seed)),
            (Some(dir), None) => {
                if self.layout.is_none() && dir.join(SIDECAR_FILE).is_file() {
                    return Ok(load_with_sidecar(dir)?.with_content_id(&self.id));
                }
                let mut layout = match &self.layout {
                    Some(pattern) => Layout::new(pattern)?,
                    None => Layout::default(),
                };
                if let Some(bits) = self.bit_depth {
                    layout = layout.with_bit_depth(BitDepth::try_from(bits)?);
                }
                Ok(load_light_field(dir, &layout, &self.id)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default)]
    pub codecs: BTreeMap<String, CodecSpec>,
    /// Adapter JSON file merged into `codecs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapters_file: Option<PathBuf>,
    #[serde(default)]
    pub synthesizer: SynthesizerAdapter,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_bitrates")]
    pub bitrates: Vec<f64>,
    #[serde(default = "five")]
    pub grid: usize,
    /// 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_codec: Option<String>,
    #[serde(default = "ms_ssim")]
    pub selection_metric: MetricId,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_bitrates() -> Vec<f64> {
    DEFAULT_BITRATES.to_vec()
}

fn ms_ssim() -> MetricId {
    MetricId::MsSsim
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            codecs: BTreeMap::new(),
            adapters_file: None,
            synthesizer: SynthesizerAdapter::default(),
            methods: all_methods(),
            bitrates: default_bitrates(),
            grid: 5,
            workers: 0,
            selection_codec: None,
            selection_metric: MetricId::MsSsim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// Directory overriding the bundled metric tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_dir: Option<PathBuf>,
    #[serde(default = "benchmarked")]
    pub benchmarked: Vec<MetricId>,
}

fn benchmarked() -> Vec<MetricId> {
    MetricId::BENCHMARKED.to_vec()
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            config_dir: None,
            benchmarked: benchmarked(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "observers")]
    pub observers: usize,
    #[serde(default = "evals")]
    pub evals_per_triplet: usize,
    #[serde(default = "threshold")]
    pub attention_threshold: f64,
    /// Defaults to the standard rules over the configured codecs and ladder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruleset: Option<Ruleset>,
    /// Contents used only for training items.
    #[serde(default)]
    pub training_contents: Vec<String>,
}

fn observers() -> usize {
    32
}

fn evals() -> usize {
    16
}

fn threshold() -> f64 {
    DEFAULT_ATTENTION_THRESHOLD
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            observers: observers(),
            evals_per_triplet: evals(),
            attention_threshold: threshold(),
            ruleset: None,
            training_contents: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "level")]
    pub confidence_level: f64,
    #[serde(default = "prior")]
    pub prior: f64,
    #[serde(default = "yes")]
    pub screen_outliers: bool,
    /// Defaults to the standard panels that the configured codecs support,
    /// else one full-vs-sparse group per codec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<ComparisonGroup>>,
}

fn resamples() -> usize {
    1000
}

fn level() -> f64 {
    0.95
}

fn prior() -> f64 {
    FitOptions::default().prior
}

fn yes() -> bool {
    true
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            bootstrap_resamples: resamples(),
            confidence_level: level(),
            prior: prior(),
            screen_outliers: true,
            groups: None,
        }
    }
}

impl Config {
    /// Parses TOML or JSON, chosen by extension (JSON when it starts with `{`
    /// otherwise).
    pub fn parse(text: &str, path: Option<&Path>) -> anyhow::Result<Config> {
        let json = match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") => true,
            Some("toml") => false,
            _ => text.trim_start().starts_with('{'),
        };
        let cfg: Config = if json {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text)?
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Config::parse(&text, Some(path)).with_context(|| format!("parsing {}", path.display()))
    }

    /// Hash of the canonical JSON form; names the run directory.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Merges the adapter file, if any, into the inline codecs.
    pub fn resolve(&mut self, base: &Path) -> anyhow::Result<()> {
        if let Some(file) = self.pipeline.adapters_file.take() {
            let path = base.join(&file);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let adapters = AdapterConfig::from_json(&text)?;
            for (name, spec) in adapters.codecs {
                self.pipeline.codecs.entry(name).or_insert(spec);
            }
            if self.pipeline.synthesizer == SynthesizerAdapter::default() {
                self.pipeline.synthesizer = adapters.synthesizer;
            }
        }
        if let Some(dir) = &self.metrics.config_dir {
            self.metrics.config_dir = Some(base.join(dir));
        }
        for c in &mut self.contents {
            if let Some(p) = &c.path {
                c.path = Some(base.join(p));
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.contents.is_empty() {
            bail!("no contents configured");
        }
        let mut ids: Vec<&str> = self.contents.iter().map(|c| c.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.contents.len() {
            bail!("duplicate content id");
        }
        if self.pipeline.codecs.is_empty() {
            bail!("no codecs configured");
        }
        for t in &self.study.training_contents {
            if !ids.contains(&t.as_str()) {
                bail!("training content {t:?} is not configured");
            }
        }
        if self.study.training_contents.len() == self.contents.len() {
            bail!("every content is reserved for training");
        }
        if !(0.0..1.0).contains(&self.analysis.confidence_level) || self.analysis.bootstrap_resamples == 0 {
            bail!("bootstrap needs resamples > 0 and a level in (0,1)");
        }
        self.ruleset().validate()?;
        Ok(())
    }

    pub fn metric_config(&self) -> anyhow::Result<MetricConfig> {
        Ok(match &self.metrics.config_dir {
            Some(dir) => MetricConfig::load_dir(dir)?,
            None => MetricConfig::default(),
        })
    }

    pub fn prepare_plan(&self) -> PreparePlan {
        let adapters = self
            .pipeline
            .codecs
            .iter()
            .map(|(name, spec)| CodecAdapter {
                name: name.clone(),
                spec: spec.clone(),
            })
            .collect();
        let mut plan = PreparePlan::new(adapters);
        plan.synthesizer = self.pipeline.synthesizer.clone();
        plan.methods = self.pipeline.methods.clone();
        plan.bitrates = self.pipeline.bitrates.clone();
        plan.grid = self.pipeline.grid;
        if self.pipeline.workers > 0 {
            plan.workers = self.pipeline.workers;
        }
        plan.selection_codec = self.pipeline.selection_codec.clone();
        plan.selection_metric = self.pipeline.selection_metric;
        plan
    }

    pub fn ruleset(&self) -> Ruleset {
        if let Some(r) = &self.study.ruleset {
            return r.clone();
        }
        let codecs: Vec<String> = self.pipeline.codecs.keys().cloned().collect();
        let base = Ruleset::default();
        let exclusions = base
            .cross_codec_exclusions
            .into_iter()
            .filter(|ex| codecs.contains(&ex.codec) && codecs.contains(&ex.versus_codec))
            .map(|mut ex| {
                ex.bitrates.retain(|b| self.pipeline.bitrates.iter().any(|x| (x - b).abs() < 1e-9));
                ex
            })
            .filter(|ex| !ex.bitrates.is_empty())
            .collect();
        Ruleset {
            bitrates: self.pipeline.bitrates.clone(),
            codecs,
            methods: self.pipeline.methods.clone(),
            cross_codec_exclusions: exclusions,
            ..base
        }
    }

    pub fn study_params(&self) -> StudyParams {
        StudyParams {
            observers: self.study.observers,
            evals_per_triplet: self.study.evals_per_triplet,
            seed: self.seed,
            attention_threshold: self.study.attention_threshold,
        }
    }

    pub fn analyze_options(&self) -> AnalyzeOptions {
        AnalyzeOptions {
            fit: FitOptions {
                prior: self.analysis.prior,
                ..FitOptions::default()
            },
            bootstrap: BootstrapOptions {
                resamples: self.analysis.bootstrap_resamples,
                level: self.analysis.confidence_level,
                seed: self.seed,
            },
            attention_threshold: self.study.attention_threshold,
            screen_outliers: self.analysis.screen_outliers,
        }
    }

    pub fn groups(&self) -> Vec<ComparisonGroup> {
        if let Some(g) = &self.analysis.groups {
            return g.clone();
        }
        let supported = |g: &ComparisonGroup| {
            g.members
                .iter()
                .all(|(c, m)| self.pipeline.codecs.contains_key(c) && self.pipeline.methods.contains(m))
        };
        let standard: Vec<ComparisonGroup> = ComparisonGroup::defaults().into_iter().filter(supported).collect();
        if !standard.is_empty() {
            return standard;
        }
        self.pipeline
            .codecs
            .keys()
            .map(|c| format!("{c}5x5_vs_{c}3x3").parse().expect("codec names are safe"))
            .filter(supported)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"
seed = 7

[[contents]]
id = "synth"
synthetic = { width = 64, height = 64 }

[[contents]]
id = "intro"
synthetic = { width = 64, height = 64, seed = 3 }

[pipeline.codecs.standin]
builtin = "standin"
rate_control = { mode = "bisect" }

[study]
observers = 8
evals_per_triplet = 4
training_contents = ["intro"]
"#;

    #[test]
    fn toml_defaults_and_derived_settings() {
        let mut cfg = Config::parse(DESK, None).unwrap();
        cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pipeline.bitrates, DEFAULT_BITRATES.to_vec());
        let rs = cfg.ruleset();
        assert_eq!(rs.codecs, vec!["standin".to_string()]);
        assert!(rs.cross_codec_exclusions.is_empty());
        let groups = cfg.groups();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].name, "standin5x5_vs_standin3x3");
        assert_eq!(cfg.study_params().seed, 7);
        // JSON spelling of the same config hashes identically
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(Config::parse(&json, None).unwrap().hash(), cfg.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Config::parse("seed = 1\ncontents = []\nbogus = 2", None).is_err());
        let mut cfg = Config::parse(DESK, None).unwrap();
        cfg.pipeline.codecs.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = Config::parse(DESK, None).unwrap();
        cfg.study.training_contents = vec!["nope".into()];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn named_codecs_get_standard_panels() {
        let mut cfg = Config::parse(DESK, None).unwrap();
        let spec = cfg.pipeline.codecs["standin"].clone();
        cfg.pipeline.codecs = [("pleno".to_string(), spec.clone()), ("vvc".to_string(), spec)].into_iter().collect();
        assert_eq!(cfg.groups(), ComparisonGroup::defaults());
        assert_eq!(cfg.ruleset().cross_codec_exclusions.len(), 1);
    }
}
