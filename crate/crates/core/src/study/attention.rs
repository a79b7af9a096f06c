use super::{Choice, QuestionType, Response, Result, StudyError, Triplet};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_ATTENTION_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverAttention {
    pub checks: usize,
    pub correct: usize,
    /// `None` when the observer answered no attention checks.
    pub fraction: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub threshold: f64,
    pub observers: BTreeMap<String, ObserverAttention>,
}

impl AttentionReport {
    pub fn flagged(&self) -> Vec<String> {
        self.observers
            .iter()
            .filter(|(_, a)| !a.passed)
            .map(|(o, _)| o.clone())
            .collect()
    }
}

/// Scores attention checks per observer. A check is answered correctly
/// when the coded side is picked as the stronger flicker; picking the
/// reference side or "Not Sure" is incorrect. The threshold is inclusive.
pub fn validate_responses(triplets: &[Triplet], responses: &[Response], threshold: f64) -> Result<AttentionReport> {
    let index: HashMap<&str, &Triplet> = triplets.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut observers: BTreeMap<String, ObserverAttention> = BTreeMap::new();
    for r in responses {
        let t = index
            .get(r.triplet_id.as_str())
            .ok_or_else(|| StudyError::UnknownTriplet(r.triplet_id.clone()))?;
        let entry = observers.entry(r.observer_id.clone()).or_insert(ObserverAttention {
            checks: 0,
            correct: 0,
            fraction: None,
            passed: true,
        });
        if t.qtype != QuestionType::AttentionCheck {
            continue;
        }
        entry.checks += 1;
        let coded_side = if t.left.is_reference() { Choice::Right } else { Choice::Left };
        if r.triplet_choice() == coded_side {
            entry.correct += 1;
        }
    }
    for a in observers.values_mut() {
        if a.checks > 0 {
            let f = a.correct as f64 / a.checks as f64;
            a.fraction = Some(f);
            a.passed = f >= threshold;
        }
    }
    Ok(AttentionReport { threshold, observers })
}
