use super::{Result, StudyError, Triplet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Reshuffles of the observer assignment tried before giving up.
const MAX_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionItem {
    pub triplet_id: String,
    /// Left and right stimuli trade places on screen.
    pub swapped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub observer_id: String,
    pub items: Vec<SessionItem>,
    /// Number of items before the mandatory break.
    pub break_index: usize,
}

pub fn observer_id(index: usize) -> String {
    format!("obs{:02}", index + 1)
}

/// Assigns each triplet to `evals_per_triplet` distinct observers with
/// exact swap balance, then orders every session so that no two
/// consecutive items share content.
pub fn schedule_sessions(triplets: &[Triplet], observers: usize, evals_per_triplet: usize, seed: u64) -> Result<Vec<SessionPlan>> {
    if evals_per_triplet == 0 || !evals_per_triplet.is_multiple_of(2) {
        return Err(StudyError::Schedule(format!("evals_per_triplet must be even and positive, got {evals_per_triplet}")));
    }
    if evals_per_triplet > observers {
        return Err(StudyError::Schedule(format!(
            "{evals_per_triplet} distinct observers per triplet but only {observers} observers"
        )));
    }
    let mut ids: Vec<&str> = triplets.iter().map(|t| t.id.as_str()).collect();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(StudyError::Schedule("duplicate triplet ids".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_failure = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.shuffle(&mut rng);
        let mut loads: Vec<Vec<(usize, bool)>> = vec![Vec::new(); observers];
        for (k, &t) in order.iter().enumerate() {
            let mut swaps: Vec<bool> = (0..evals_per_triplet).map(|e| e < evals_per_triplet / 2).collect();
            swaps.shuffle(&mut rng);
            for (e, swapped) in swaps.into_iter().enumerate() {
                loads[(k * evals_per_triplet + e) % observers].push((t, swapped));
            }
        }
        match order_all(triplets, loads, &mut rng) {
            Ok(plans) => return Ok(plans),
            Err(msg) => last_failure = msg,
        }
    }
    Err(StudyError::Schedule(last_failure))
}

fn order_all(triplets: &[Triplet], loads: Vec<Vec<(usize, bool)>>, rng: &mut ChaCha8Rng) -> Result<Vec<SessionPlan>, String> {
    loads
        .into_iter()
        .enumerate()
        .map(|(o, items)| {
            let ordered = order_session(triplets, items, rng).map_err(|counts| {
                format!(
                    "no ordering without consecutive same-content items for {}: content counts {counts:?}",
                    observer_id(o)
                )
            })?;
            let break_index = ordered.len().div_ceil(2);
            Ok(SessionPlan {
                observer_id: observer_id(o),
                items: ordered
                    .into_iter()
                    .map(|(t, swapped)| SessionItem {
                        triplet_id: triplets[t].id.clone(),
                        swapped,
                    })
                    .collect(),
                break_index,
            })
        })
        .collect()
}

/// True when the remaining counts can still be laid out with no adjacent
/// repeats, given the content shown just before.
fn feasible(counts: &BTreeMap<&str, usize>, previous: Option<&str>) -> bool {
    let r: usize = counts.values().sum();
    counts.iter().all(|(&c, &n)| {
        if Some(c) == previous {
            n <= r / 2
        } else {
            n <= r.div_ceil(2)
        }
    })
}

/// Randomized greedy ordering that keeps the remainder feasible at every step.
fn order_session(
    triplets: &[Triplet],
    mut items: Vec<(usize, bool)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, bool)>, BTreeMap<String, usize>> {
    items.shuffle(rng);
    let mut by_content: BTreeMap<&str, Vec<(usize, bool)>> = BTreeMap::new();
    for it in items {
        by_content.entry(triplets[it.0].content_id()).or_default().push(it);
    }
    let mut counts: BTreeMap<&str, usize> = by_content.iter().map(|(&c, v)| (c, v.len())).collect();
    if !feasible(&counts, None) {
        return Err(counts.into_iter().map(|(c, n)| (c.to_string(), n)).collect());
    }
    let total: usize = counts.values().sum();
    let mut out = Vec::with_capacity(total);
    let mut previous: Option<&str> = None;
    while out.len() < total {
        let candidates: Vec<&str> = counts
            .iter()
            .filter(|(&c, &n)| n > 0 && Some(c) != previous)
            .filter(|(&c, _)| {
                let mut next = counts.clone();
                *next.get_mut(c).expect("present") -= 1;
                feasible(&next, Some(c))
            })
            .map(|(&c, _)| c)
            .collect();
        // feasibility of the current state guarantees a candidate
        let pick = candidates[rng.random_range(0..candidates.len())];
        *counts.get_mut(pick).expect("present") -= 1;
        out.push(by_content.get_mut(pick).expect("present").pop().expect("count matches"));
        previous = Some(pick);
    }
    Ok(out)
}
