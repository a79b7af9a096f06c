use super::{Catalog, CatalogEntry, QuestionType, Result, Stimulus, StudyError, Triplet};
use crate::pipeline::{Method, DEFAULT_BITRATES};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Total reported for the original study; compared against for information only.
pub const PUBLISHED_TRIPLET_TOTAL: usize = 776;

/// Never pair `codec` at any of `bitrates` with any stimulus of `versus_codec`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossExclusion {
    pub codec: String,
    pub bitrates: Vec<f64>,
    pub versus_codec: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRule {
    pub enabled: bool,
    /// Whether the two sides may share a bitrate.
    #[serde(default)]
    pub allow_equal_bitrates: bool,
}

/// Data-driven triplet rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ruleset {
    pub bitrates: Vec<f64>,
    pub codecs: Vec<String>,
    pub methods: Vec<Method>,
    /// Drop any pair of the ladder's lowest and highest bitrate.
    pub exclude_lowest_vs_highest: bool,
    pub intra_method: PairRule,
    pub cross_codec: PairRule,
    #[serde(default)]
    pub cross_codec_exclusions: Vec<CrossExclusion>,
    pub encoding_method: PairRule,
    pub bias_controls_per_view: usize,
    /// One attention check per (codec, method) group, pairing its lowest
    /// bitrate with the reference.
    pub attention_checks_per_group: bool,
}

impl Default for Ruleset {
    fn default() -> Self {
        Ruleset {
            bitrates: DEFAULT_BITRATES.to_vec(),
            codecs: vec!["pleno".into(), "vvc".into()],
            methods: Method::ALL.to_vec(),
            exclude_lowest_vs_highest: true,
            intra_method: PairRule {
                enabled: true,
                allow_equal_bitrates: false,
            },
            cross_codec: PairRule {
                enabled: true,
                allow_equal_bitrates: false,
            },
            cross_codec_exclusions: vec![CrossExclusion {
                codec: "pleno".into(),
                bitrates: vec![0.118, 0.236],
                versus_codec: "vvc".into(),
            }],
            encoding_method: PairRule {
                enabled: true,
                allow_equal_bitrates: false,
            },
            bias_controls_per_view: 1,
            attention_checks_per_group: true,
        }
    }
}

fn same_rate(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

impl Ruleset {
    pub fn from_json(text: &str) -> Result<Self> {
        let r: Ruleset = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let known = |b: f64| self.bitrates.iter().any(|&x| same_rate(x, b));
        if self.bitrates.is_empty() || self.codecs.is_empty() || self.methods.is_empty() {
            return Err(StudyError::Ruleset("ladder, codecs and methods must be non-empty".into()));
        }
        for ex in &self.cross_codec_exclusions {
            if let Some(b) = ex.bitrates.iter().find(|&&b| !known(b)) {
                return Err(StudyError::Ruleset(format!("exclusion references unknown bitrate {b}")));
            }
            for c in [&ex.codec, &ex.versus_codec] {
                if !self.codecs.contains(c) {
                    return Err(StudyError::Ruleset(format!("exclusion references unknown codec {c}")));
                }
            }
        }
        Ok(())
    }

    fn lowest(&self) -> f64 {
        self.bitrates.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn highest(&self) -> f64 {
        self.bitrates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn extremes(&self, a: f64, b: f64) -> bool {
        self.exclude_lowest_vs_highest
            && self.bitrates.len() > 1
            && ((same_rate(a, self.lowest()) && same_rate(b, self.highest()))
                || (same_rate(b, self.lowest()) && same_rate(a, self.highest())))
    }

    fn cross_excluded(&self, codec_a: &str, rate_a: f64, codec_b: &str, rate_b: f64) -> bool {
        self.cross_codec_exclusions.iter().any(|ex| {
            let hit = |c: &str, r: f64, other: &str| {
                c == ex.codec && other == ex.versus_codec && ex.bitrates.iter().any(|&b| same_rate(b, r))
            };
            hit(codec_a, rate_a, codec_b) || hit(codec_b, rate_b, codec_a)
        })
    }
}

/// Counts of generated triplets by type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletCensus {
    pub per_type: BTreeMap<QuestionType, usize>,
    pub total: usize,
    pub published_total: usize,
}

pub fn census(triplets: &[Triplet]) -> TripletCensus {
    let mut per_type = BTreeMap::new();
    for t in triplets {
        *per_type.entry(t.qtype).or_insert(0) += 1;
    }
    TripletCensus {
        per_type,
        total: triplets.len(),
        published_total: PUBLISHED_TRIPLET_TOTAL,
    }
}

fn coded<'a>(entry: &'a CatalogEntry, codec: &str, method: Method, bitrate: f64) -> Option<&'a Stimulus> {
    entry.stimuli.iter().find(|s| {
        s.condition
            .as_ref()
            .is_some_and(|c| c.codec == codec && c.method == method && same_rate(c.bitrate_bpp, bitrate))
    })
}

/// Emits every triplet the ruleset admits, per catalog entry, in a fixed order.
pub fn generate_triplets(catalog: &Catalog, ruleset: &Ruleset) -> Result<Vec<Triplet>> {
    ruleset.validate()?;
    let mut out = Vec::new();
    for entry in &catalog.entries {
        let reference = entry
            .stimuli
            .iter()
            .find(|s| s.condition.is_none())
            .ok_or_else(|| StudyError::CatalogIncomplete(format!("{} {:?}: no reference", entry.content_id, entry.view)))?;
        let mut missing = Vec::new();
        for codec in &ruleset.codecs {
            for &method in &ruleset.methods {
                for &b in &ruleset.bitrates {
                    if coded(entry, codec, method, b).is_none() {
                        missing.push(format!("{codec}_{method}_{b}"));
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(StudyError::CatalogIncomplete(format!(
                "{} {:?}: missing {}",
                entry.content_id,
                entry.view,
                missing.join(", ")
            )));
        }
        let get = |codec: &str, method: Method, b: f64| coded(entry, codec, method, b).expect("checked above").clone();
        let mut push = |qtype, left: Stimulus, right: Stimulus, suffix: Option<usize>| {
            out.push(Triplet::new(reference.clone(), left, right, qtype, suffix));
        };
        let rates = &ruleset.bitrates;
        let pairs = |allow_equal: bool| {
            let mut v = Vec::new();
            for (i, &a) in rates.iter().enumerate() {
                for (j, &b) in rates.iter().enumerate() {
                    if (i < j || (allow_equal && i == j)) && !ruleset.extremes(a, b) {
                        v.push((a, b));
                    }
                }
            }
            v
        };

        if ruleset.intra_method.enabled {
            for codec in &ruleset.codecs {
                for &method in &ruleset.methods {
                    for (a, b) in pairs(false) {
                        push(QuestionType::IntraMethod, get(codec, method, a), get(codec, method, b), None);
                    }
                }
            }
        }
        if ruleset.cross_codec.enabled {
            for &method in &ruleset.methods {
                for (ci, ca) in ruleset.codecs.iter().enumerate() {
                    for cb in &ruleset.codecs[ci + 1..] {
                        for &a in rates {
                            for &b in rates {
                                if (!ruleset.cross_codec.allow_equal_bitrates && same_rate(a, b))
                                    || ruleset.extremes(a, b)
                                    || ruleset.cross_excluded(ca, a, cb, b)
                                {
                                    continue;
                                }
                                push(QuestionType::CrossCodec, get(ca, method, a), get(cb, method, b), None);
                            }
                        }
                    }
                }
            }
        }
        if ruleset.encoding_method.enabled {
            for (mi, &ma) in ruleset.methods.iter().enumerate() {
                for &mb in &ruleset.methods[mi + 1..] {
                    for codec in &ruleset.codecs {
                        for &a in rates {
                            for &b in rates {
                                if (!ruleset.encoding_method.allow_equal_bitrates && same_rate(a, b))
                                    || ruleset.extremes(a, b)
                                {
                                    continue;
                                }
                                push(QuestionType::EncodingMethod, get(codec, ma, a), get(codec, mb, b), None);
                            }
                        }
                    }
                }
            }
        }
        for k in 0..ruleset.bias_controls_per_view {
            push(QuestionType::BiasControl, reference.clone(), reference.clone(), (k > 0).then_some(k));
        }
        if ruleset.attention_checks_per_group {
            let low = ruleset.lowest();
            for codec in &ruleset.codecs {
                for &method in &ruleset.methods {
                    push(QuestionType::AttentionCheck, get(codec, method, low), reference.clone(), None);
                }
            }
        }
    }
    Ok(out)
}
