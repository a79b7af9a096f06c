//! Observer screening and observer-bootstrap confidence intervals.

use super::thurstone::{log_phi, thurstone_case_v, FitOptions};
use super::{build_matrix, ComparisonMatrix, GroupKey, Result, ScalingError};
use crate::study::{Choice, Response, Triplet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::SQRT_2;

/// Per-observer discrepancy and the resulting decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    /// Mean negative log-likelihood per response under the leave-one-out fit.
    pub statistic: BTreeMap<String, f64>,
    pub threshold: f64,
    pub excluded: Vec<String>,
}

fn observers(responses: &[Response]) -> Vec<String> {
    let mut ids: Vec<String> = responses.iter().map(|r| r.observer_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Quantile with linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Negative log-likelihood of one observer's tallies under `q`, and the
/// number of responses behind them.
fn observer_nll(own: &ComparisonMatrix, q: &[f64]) -> (f64, f64) {
    let n = q.len();
    let mut nll = 0.0;
    let mut count = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = own.v[i][j];
            if i != j && w > 0.0 {
                nll -= w * log_phi((q[i] - q[j]) / SQRT_2);
                count += w;
            }
        }
    }
    (nll, count)
}

/// Leave-one-out screening: an observer whose mean per-response negative
/// log-likelihood exceeds `Q3 + 1.5 IQR` of all observers' values is
/// excluded. Applied once.
pub fn screen_outliers(responses: &[Response], triplets: &[Triplet], group: &GroupKey, fit: &FitOptions) -> Result<OutlierReport> {
    let ids = observers(responses);
    if ids.len() < 3 {
        return Err(ScalingError::TooFewObservers { needed: 3, got: ids.len() });
    }
    let stats = ids
        .par_iter()
        .map(|o| {
            let (mine, rest): (Vec<Response>, Vec<Response>) = responses.iter().cloned().partition(|r| &r.observer_id == o);
            let others = build_matrix(&rest, triplets, group)?;
            let q = thurstone_case_v(&others, fit)?;
            let own = build_matrix(&mine, triplets, group)?;
            let (nll, count) = observer_nll(&own, &q);
            Ok((o.clone(), if count > 0.0 { nll / count } else { 0.0 }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sorted: Vec<f64> = stats.iter().map(|(_, s)| *s).collect();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    // slack absorbs rounding when all observers agree
    let threshold = q3 + 1.5 * (q3 - q1) + 1e-9 * q3.abs().max(1.0);
    let excluded = stats.iter().filter(|(_, s)| *s > threshold).map(|(o, _)| o.clone()).collect();
    Ok(OutlierReport {
        statistic: stats.into_iter().collect(),
        threshold,
        excluded,
    })
}

/// 0-based positions of the lower and upper percentile in `b` sorted resamples.
pub fn percentile_indices(b: usize, level: f64) -> (usize, usize) {
    let alpha = (1.0 - level) / 2.0;
    let lo = (b as f64 * alpha).round() as usize;
    let hi = (b as f64 * (1.0 - alpha)).round() as usize;
    (lo.min(b - 1), hi.min(b - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            resamples: 1000,
            level: 0.95,
            seed: 1,
        }
    }
}

/// Basic (reverse percentile) intervals `2q - q*_hi ..= 2q - q*_lo` from
/// resampling observers with replacement. Reflecting the percentiles about
/// the estimate cancels the small-sample bias of the fit, which a plain
/// percentile interval would repeat. Each resample has its own RNG stream,
/// so results do not depend on thread scheduling. Returned in the order of
/// `build_matrix`'s conditions.
pub fn bootstrap_ci(
    responses: &[Response],
    triplets: &[Triplet],
    group: &GroupKey,
    fit: &FitOptions,
    opts: &BootstrapOptions,
) -> Result<Vec<(f64, f64)>> {
    if opts.resamples < 100 {
        return Err(ScalingError::Config(format!("need at least 100 resamples, got {}", opts.resamples)));
    }
    let ids = observers(responses);
    if ids.len() < 2 {
        return Err(ScalingError::TooFewObservers { needed: 2, got: ids.len() });
    }
    let mut by_observer: HashMap<&str, Vec<Response>> = HashMap::new();
    for r in responses {
        by_observer.entry(&r.observer_id).or_default().push(r.clone());
    }
    let point = thurstone_case_v(&build_matrix(responses, triplets, group)?, fit)?;
    let n = point.len();
    let draws: Vec<Option<Vec<f64>>> = (0..opts.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64 + 1);
            let mut sample = Vec::new();
            for _ in 0..ids.len() {
                let o = &ids[rng.random_range(0..ids.len())];
                sample.extend(by_observer[o.as_str()].iter().cloned());
            }
            build_matrix(&sample, triplets, group)
                .ok()
                .and_then(|m| thurstone_case_v(&m, fit).ok())
        })
        .collect();
    let fits: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    if fits.len() * 2 < opts.resamples {
        return Err(ScalingError::Config(format!(
            "only {} of {} resamples could be scaled",
            fits.len(),
            opts.resamples
        )));
    }
    let (lo, hi) = percentile_indices(fits.len(), opts.level);
    Ok((0..n)
        .map(|k| {
            let mut col: Vec<f64> = fits.iter().map(|f| f[k]).collect();
            col.sort_by(f64::total_cmp);
            (2.0 * point[k] - col[hi], 2.0 * point[k] - col[lo])
        })
        .collect())
}

/// Model observer behaviour for simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub seed: u64,
    /// Latent quality differences smaller than this are answered "Not Sure".
    pub not_sure_margin: f64,
    /// Observers answering left or right uniformly at random.
    pub random_observers: Vec<String>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            seed: 1,
            not_sure_margin: 0.0,
            random_observers: Vec::new(),
        }
    }
}

/// Answers every session item under the Case V model: each side's latent
/// quality is `truth + N(0,1)` and the lower one shows the stronger flicker.
pub fn simulate_responses(
    sessions: &[crate::study::SessionPlan],
    triplets: &[Triplet],
    truth: impl Fn(&crate::study::Stimulus) -> f64,
    opts: &SimulationOptions,
) -> Result<Vec<Response>> {
    let index: HashMap<&str, &Triplet> = triplets.iter().map(|t| (t.id.as_str(), t)).collect();
    let normal = rand_distr::StandardNormal;
    let mut out = Vec::new();
    for (k, session) in sessions.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(k as u64 + 1);
        let random = opts.random_observers.contains(&session.observer_id);
        for item in &session.items {
            let t = index
                .get(item.triplet_id.as_str())
                .ok_or_else(|| ScalingError::UnknownTriplet(item.triplet_id.clone()))?;
            let triplet_choice = if random {
                if rng.random::<bool>() {
                    Choice::Left
                } else {
                    Choice::Right
                }
            } else {
                let xl: f64 = truth(&t.left) + rng.sample::<f64, _>(normal);
                let xr: f64 = truth(&t.right) + rng.sample::<f64, _>(normal);
                if (xl - xr).abs() < opts.not_sure_margin {
                    Choice::NotSure
                } else if xl < xr {
                    Choice::Left
                } else {
                    Choice::Right
                }
            };
            let choice = match (triplet_choice, item.swapped) {
                (Choice::Left, true) => Choice::Right,
                (Choice::Right, true) => Choice::Left,
                (c, _) => c,
            };
            out.push(Response {
                observer_id: session.observer_id.clone(),
                triplet_id: t.id.clone(),
                choice,
                presented_swapped: item.swapped,
                phase: crate::study::Phase::Testing,
                latency_ms: None,
            });
        }
    }
    Ok(out)
}
