//! Stimulus catalog, triplet generation and observer session scheduling.

mod attention;
mod schedule;
mod triplets;

pub use attention::{validate_responses, AttentionReport, ObserverAttention, DEFAULT_ATTENTION_THRESHOLD};
pub use schedule::{observer_id, schedule_sessions, SessionItem, SessionPlan};
pub use triplets::{census, generate_triplets, CrossExclusion, PairRule, Ruleset, TripletCensus, PUBLISHED_TRIPLET_TOTAL};

use crate::lightfield::{classify_view, Layout, ViewType};
use crate::pipeline::{condition_id, ConditionManifest, Coord, Method};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, Write};

pub const REFERENCE: &str = "REFERENCE";

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("catalog incomplete: {0}")]
    CatalogIncomplete(String),
    #[error("ruleset: {0}")]
    Ruleset(String),
    #[error("scheduling: {0}")]
    Schedule(String),
    #[error("unknown triplet {0:?}")]
    UnknownTriplet(String),
    #[error("response line {line}: {source}")]
    ResponseLine { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = StudyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    IntraMethod,
    CrossCodec,
    EncodingMethod,
    BiasControl,
    AttentionCheck,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::IntraMethod => "intra_method",
            QuestionType::CrossCodec => "cross_codec",
            QuestionType::EncodingMethod => "encoding_method",
            QuestionType::BiasControl => "bias_control",
            QuestionType::AttentionCheck => "attention_check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusCondition {
    pub codec: String,
    pub method: Method,
    pub bitrate_bpp: f64,
}

/// One displayable image: a view of a content under a condition, or the
/// reference rendering when `condition` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub content_id: String,
    pub view: Coord,
    pub view_type: ViewType,
    pub condition: Option<StimulusCondition>,
    /// Image path relative to the asset root.
    pub image: String,
}

impl Stimulus {
    pub fn is_reference(&self) -> bool {
        self.condition.is_none()
    }

    /// Condition label used for scaling: `{codec}_{method}_{bitrate}` or `REFERENCE`.
    pub fn condition_key(&self) -> String {
        match &self.condition {
            Some(c) => condition_id(&c.codec, c.method, c.bitrate_bpp),
            None => REFERENCE.to_string(),
        }
    }

    pub fn id(&self) -> String {
        format!("{}/{}-{}/{}", self.content_id, self.view.0, self.view.1, self.condition_key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub id: String,
    pub reference: Stimulus,
    pub left: Stimulus,
    pub right: Stimulus,
    pub qtype: QuestionType,
}

impl Triplet {
    pub fn new(reference: Stimulus, left: Stimulus, right: Stimulus, qtype: QuestionType, suffix: Option<usize>) -> Self {
        let mut id = format!(
            "{}/{}-{}/{}~{}",
            reference.content_id,
            reference.view.0,
            reference.view.1,
            left.condition_key(),
            right.condition_key()
        );
        if let Some(k) = suffix {
            id.push_str(&format!("#{k}"));
        }
        Triplet {
            id,
            reference,
            left,
            right,
            qtype,
        }
    }

    pub fn content_id(&self) -> &str {
        &self.reference.content_id
    }
}

/// All stimuli available for one (content, view).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub content_id: String,
    pub view: Coord,
    pub view_type: ViewType,
    pub stimuli: Vec<Stimulus>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    /// One entry per content and selected test view, with paths relative to
    /// the manifest directory.
    pub fn from_manifest(manifest: &ConditionManifest) -> Catalog {
        let layout = Layout::default();
        let mut entries = Vec::new();
        for content in &manifest.contents {
            for (&view_type, &view) in &content.test_views {
                let file = layout.file_name(view.0, view.1);
                let mut stimuli = vec![Stimulus {
                    content_id: content.content_id.clone(),
                    view,
                    view_type,
                    condition: None,
                    image: format!("{}/{file}", content.reference),
                }];
                for c in manifest.conditions.iter().filter(|c| c.content_id == content.content_id) {
                    stimuli.push(Stimulus {
                        content_id: content.content_id.clone(),
                        view,
                        view_type,
                        condition: Some(StimulusCondition {
                            codec: c.condition.codec.clone(),
                            method: c.condition.method,
                            bitrate_bpp: c.condition.target_bitrate_bpp,
                        }),
                        image: format!("{}/{file}", c.path),
                    });
                }
                entries.push(CatalogEntry {
                    content_id: content.content_id.clone(),
                    view,
                    view_type,
                    stimuli,
                });
            }
        }
        Catalog { entries }
    }

    /// A catalog with every (codec, method, bitrate) of `ruleset` for each
    /// content and view; image paths are synthetic.
    pub fn complete(contents: &[&str], views: &[Coord], ruleset: &Ruleset) -> Catalog {
        let mut entries = Vec::new();
        for &content in contents {
            for &view in views {
                let view_type = classify_view(view.0, view.1);
                let mk = |condition: Option<StimulusCondition>| {
                    let key = condition
                        .as_ref()
                        .map(|c| condition_id(&c.codec, c.method, c.bitrate_bpp))
                        .unwrap_or_else(|| REFERENCE.into());
                    Stimulus {
                        content_id: content.to_string(),
                        view,
                        view_type,
                        image: format!("{content}/{key}/v_{:02}_{:02}.ppm", view.0, view.1),
                        condition,
                    }
                };
                let mut stimuli = vec![mk(None)];
                for codec in &ruleset.codecs {
                    for &method in &ruleset.methods {
                        for &b in &ruleset.bitrates {
                            stimuli.push(mk(Some(StimulusCondition {
                                codec: codec.clone(),
                                method,
                                bitrate_bpp: b,
                            })));
                        }
                    }
                }
                entries.push(CatalogEntry {
                    content_id: content.to_string(),
                    view,
                    view_type,
                    stimuli,
                });
            }
        }
        Catalog { entries }
    }
}

/// Observer answer as shown on screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Left,
    Right,
    NotSure,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Choice::Left => "left",
            Choice::Right => "right",
            Choice::NotSure => "not_sure",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    #[default]
    Testing,
}

/// One judgment. `choice` is the screen side picked as the stronger
/// flicker; `presented_swapped` records whether the triplet's sides were
/// exchanged on screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub observer_id: String,
    pub triplet_id: String,
    pub choice: Choice,
    pub presented_swapped: bool,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

impl Response {
    /// The choice in terms of the triplet's own left and right.
    pub fn triplet_choice(&self) -> Choice {
        match (self.choice, self.presented_swapped) {
            (Choice::Left, true) => Choice::Right,
            (Choice::Right, true) => Choice::Left,
            (c, _) => c,
        }
    }
}

/// Reads newline-delimited JSON responses; blank lines are skipped.
pub fn read_responses(reader: impl BufRead) -> Result<Vec<Response>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| StudyError::ResponseLine { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_responses(mut writer: impl Write, responses: &[Response]) -> Result<()> {
    for r in responses {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyParams {
    pub observers: usize,
    pub evals_per_triplet: usize,
    pub seed: u64,
    pub attention_threshold: f64,
}

impl Default for StudyParams {
    fn default() -> Self {
        StudyParams {
            observers: 32,
            evals_per_triplet: 16,
            seed: 1,
            attention_threshold: DEFAULT_ATTENTION_THRESHOLD,
        }
    }
}

/// Everything the execution backend needs to run a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub version: u32,
    pub params: StudyParams,
    pub ruleset: Ruleset,
    pub census: TripletCensus,
    pub triplets: Vec<Triplet>,
    /// Shown to every observer before the test items; never scaled.
    #[serde(default)]
    pub training: Vec<Triplet>,
    pub sessions: Vec<SessionPlan>,
}

impl StudyManifest {
    pub fn triplet(&self, id: &str) -> Option<&Triplet> {
        self.triplets.iter().chain(&self.training).find(|t| t.id == id)
    }

    pub fn session(&self, observer: &str) -> Option<&SessionPlan> {
        self.sessions.iter().find(|s| s.observer_id == observer)
    }
}

/// Generates triplets and sessions. Training items are one triplet of each
/// question type drawn from `training` when given.
pub fn build_study(catalog: &Catalog, ruleset: &Ruleset, params: &StudyParams, training: Option<&Catalog>) -> Result<StudyManifest> {
    let triplets = generate_triplets(catalog, ruleset)?;
    let sessions = schedule_sessions(&triplets, params.observers, params.evals_per_triplet, params.seed)?;
    let training = match training {
        Some(cat) => {
            let all = generate_triplets(cat, ruleset)?;
            let mut seen = Vec::new();
            all.into_iter()
                .filter(|t| {
                    let new = !seen.contains(&t.qtype);
                    seen.push(t.qtype);
                    new
                })
                .collect()
        }
        None => Vec::new(),
    };
    Ok(StudyManifest {
        version: 1,
        params: params.clone(),
        ruleset: ruleset.clone(),
        census: census(&triplets),
        triplets,
        training,
        sessions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, BTreeSet};

    const VIEWS: [Coord; 3] = [(0, 0), (0, 1), (1, 1)];

    fn reference_catalog() -> (Catalog, Ruleset) {
        let rs = Ruleset::default();
        (Catalog::complete(&["bikes", "fountain", "bicycle", "sideboard"], &VIEWS, &rs), rs)
    }

    fn rate(s: &Stimulus) -> Option<f64> {
        s.condition.as_ref().map(|c| c.bitrate_bpp)
    }

    #[test]
    fn intra_method_single_group() {
        let rs = Ruleset {
            codecs: vec!["a".into()],
            methods: vec![Method::Full5x5],
            cross_codec_exclusions: vec![],
            bias_controls_per_view: 0,
            attention_checks_per_group: false,
            ..Ruleset::default()
        };
        let cat = Catalog::complete(&["c"], &[(0, 0)], &rs);
        let ts = generate_triplets(&cat, &rs).unwrap();
        let pairs: Vec<(f64, f64)> = ts.iter().map(|t| (rate(&t.left).unwrap(), rate(&t.right).unwrap())).collect();
        assert_eq!(pairs, vec![(0.118, 0.236), (0.118, 0.472), (0.236, 0.472), (0.236, 1.003), (0.472, 1.003)]);
    }

    #[test]
    fn default_ruleset_census_and_exclusions() {
        let (cat, rs) = reference_catalog();
        let ts = generate_triplets(&cat, &rs).unwrap();
        let c = census(&ts);
        assert_eq!(c.per_type[&QuestionType::IntraMethod], 12 * 20);
        assert_eq!(c.per_type[&QuestionType::CrossCodec], 12 * 10);
        assert_eq!(c.per_type[&QuestionType::EncodingMethod], 12 * 20);
        assert_eq!(c.per_type[&QuestionType::BiasControl], 12);
        assert_eq!(c.per_type[&QuestionType::AttentionCheck], 12 * 4);
        assert_eq!(c.total, 660);
        assert_eq!(c.published_total, 776);
        for t in &ts {
            assert_eq!(t.left.content_id, t.reference.content_id);
            assert_eq!(t.right.view, t.reference.view);
            if let (Some(a), Some(b)) = (&t.left.condition, &t.right.condition) {
                let rates = [a.bitrate_bpp, b.bitrate_bpp];
                assert!(!(rates.contains(&0.118) && rates.contains(&1.003)), "{}", t.id);
                for (x, y) in [(a, b), (b, a)] {
                    assert!(!(x.codec == "pleno" && [0.118, 0.236].contains(&x.bitrate_bpp) && y.codec == "vvc"), "{}", t.id);
                }
            }
            match t.qtype {
                QuestionType::BiasControl => assert!(t.left == t.reference && t.right == t.reference),
                QuestionType::AttentionCheck => {
                    assert_eq!(rate(&t.left), Some(0.118));
                    assert!(t.right.is_reference());
                }
                _ => assert!(!t.left.is_reference() && !t.right.is_reference()),
            }
        }
        let ids: BTreeSet<_> = ts.iter().map(|t| &t.id).collect();
        assert_eq!(ids.len(), ts.len());
    }

    #[test]
    fn incomplete_catalog_and_bad_ruleset() {
        let (mut cat, rs) = reference_catalog();
        cat.entries[0].stimuli.pop();
        assert!(matches!(generate_triplets(&cat, &rs), Err(StudyError::CatalogIncomplete(_))));
        let mut bad = Ruleset::default();
        bad.cross_codec_exclusions[0].bitrates.push(0.3);
        assert!(matches!(bad.validate(), Err(StudyError::Ruleset(_))));
        let json = serde_json::to_string(&Ruleset::default()).unwrap();
        assert_eq!(Ruleset::from_json(&json).unwrap(), Ruleset::default());
    }

    fn check_schedule(ts: &[Triplet], plans: &[SessionPlan], evals: usize) {
        let content: BTreeMap<&str, &str> = ts.iter().map(|t| (t.id.as_str(), t.content_id())).collect();
        let mut per_triplet: BTreeMap<&str, (BTreeSet<&str>, usize, usize)> = BTreeMap::new();
        for p in plans {
            assert_eq!(p.break_index, p.items.len().div_ceil(2));
            for w in p.items.windows(2) {
                assert_ne!(content[w[0].triplet_id.as_str()], content[w[1].triplet_id.as_str()]);
            }
            for it in &p.items {
                let e = per_triplet.entry(&it.triplet_id).or_default();
                assert!(e.0.insert(&p.observer_id), "observer repeats a triplet");
                e.1 += 1;
                e.2 += usize::from(it.swapped);
            }
        }
        assert_eq!(per_triplet.len(), ts.len());
        for (_, (_, n, swapped)) in per_triplet {
            assert_eq!(n, evals);
            assert_eq!(swapped, evals / 2);
        }
        let loads: Vec<usize> = plans.iter().map(|p| p.items.len()).collect();
        assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 1);
    }

    #[test]
    fn full_schedule_constraints() {
        let (cat, rs) = reference_catalog();
        let ts = generate_triplets(&cat, &rs).unwrap();
        let plans = schedule_sessions(&ts, 32, 16, 7).unwrap();
        assert_eq!(plans.len(), 32);
        check_schedule(&ts, &plans, 16);
        assert_eq!(plans, schedule_sessions(&ts, 32, 16, 7).unwrap());
        assert_ne!(plans, schedule_sessions(&ts, 32, 16, 8).unwrap());
    }

    #[test]
    fn small_schedules() {
        let rs = Ruleset::default();
        let cat = Catalog::complete(&["a", "b"], &[(0, 0), (0, 1)], &rs);
        let all = generate_triplets(&cat, &rs).unwrap();
        // two triplets per content, alternating contents
        let four: Vec<Triplet> = [0, 1, 110, 111].iter().map(|&i| all[i].clone()).collect();
        let plans = schedule_sessions(&four, 4, 2, 3).unwrap();
        assert!(plans.iter().all(|p| p.items.len() == 2));
        check_schedule(&four, &plans, 2);

        let plans = schedule_sessions(&four[..1], 2, 2, 3).unwrap();
        assert_eq!(plans.iter().filter(|p| p.items[0].swapped).count(), 1);

        let same: Vec<Triplet> = all[..4].to_vec();
        assert!(matches!(schedule_sessions(&same, 2, 2, 1), Err(StudyError::Schedule(_))));
        assert!(schedule_sessions(&four, 4, 3, 1).is_err());
        assert!(schedule_sessions(&four, 1, 2, 1).is_err());
    }

    fn resp(obs: &str, t: &Triplet, choice: Choice, swapped: bool) -> Response {
        Response {
            observer_id: obs.into(),
            triplet_id: t.id.clone(),
            choice,
            presented_swapped: swapped,
            phase: Phase::Testing,
            latency_ms: None,
        }
    }

    #[test]
    fn attention_rules() {
        let (cat, rs) = reference_catalog();
        let ts = generate_triplets(&cat, &rs).unwrap();
        let checks: Vec<&Triplet> = ts.iter().filter(|t| t.qtype == QuestionType::AttentionCheck).take(4).collect();
        let mut rs_all = Vec::new();
        for (i, t) in checks.iter().enumerate() {
            // coded side is triplet-left; on a swapped screen it shows on the right
            let swapped = i % 2 == 1;
            rs_all.push(resp("good", t, if swapped { Choice::Right } else { Choice::Left }, swapped));
            rs_all.push(resp("bad", t, if swapped { Choice::Left } else { Choice::Right }, swapped));
            let c = if i == 3 { Choice::NotSure } else { Choice::Left };
            rs_all.push(resp("edge", t, c, false));
        }
        let report = validate_responses(&ts, &rs_all, 0.75).unwrap();
        assert!(report.observers["good"].passed);
        assert!(!report.observers["bad"].passed);
        assert_eq!(report.observers["edge"].fraction, Some(0.75));
        assert!(report.observers["edge"].passed);
        assert_eq!(report.flagged(), vec!["bad".to_string()]);
        let mut unknown = rs_all[0].clone();
        unknown.triplet_id = "nope".into();
        assert!(matches!(validate_responses(&ts, &[unknown], 0.75), Err(StudyError::UnknownTriplet(_))));
    }

    #[test]
    fn responses_jsonl_roundtrip() {
        let (cat, rs) = reference_catalog();
        let ts = generate_triplets(&cat, &rs).unwrap();
        let rs_all = vec![resp("o", &ts[0], Choice::NotSure, true), resp("p", &ts[1], Choice::Left, false)];
        let mut buf = Vec::new();
        write_responses(&mut buf, &rs_all).unwrap();
        assert_eq!(read_responses(&buf[..]).unwrap(), rs_all);
        assert!(matches!(read_responses(&b"{}\n"[..]), Err(StudyError::ResponseLine { line: 1, .. })));
    }
}
