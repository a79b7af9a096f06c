//! Four-parameter logistic mapping from objective scores to subjective
//! quality, fitted by multi-start Nelder-Mead.

use super::{BenchError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const MAX_ITERATIONS: usize = 2000;
pub const PARAMETER_TOLERANCE: f64 = 1e-9;
pub const RESTARTS: usize = 5;
const MIN_POINTS: usize = 5;

/// `q = a + b / (1 + exp(-c (o - d)))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl LogisticParams {
    fn to_vec(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn from_vec(v: &[f64; 4]) -> Self {
        LogisticParams {
            a: v[0],
            b: v[1],
            c: v[2],
            d: v[3],
        }
    }
}

pub fn predict(p: &LogisticParams, o: f64) -> f64 {
    let z = p.c * (o - p.d);
    // evaluate the exponential only where it cannot overflow
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.a + p.b * s
}

fn sse(p: &[f64; 4], points: &[(f64, f64)]) -> f64 {
    let lp = LogisticParams::from_vec(p);
    let s: f64 = points.iter().map(|&(o, q)| (predict(&lp, o) - q).powi(2)).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Result of one fit, including the objective at the documented start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub sse: f64,
    pub initial_sse: f64,
}

/// Documented initialization: `a = min Q`, `b = range Q`, `c = 4 / sd(O)`, `d = mean O`.
pub fn initial_params(points: &[(f64, f64)]) -> Result<LogisticParams> {
    check(points)?;
    let n = points.len() as f64;
    let qmin = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let qmax = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sd = (points.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LogisticParams {
        a: qmin,
        b: qmax - qmin,
        c: 4.0 / sd,
        d: mean,
    })
}

fn check(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < MIN_POINTS {
        return Err(BenchError::TooFewPoints {
            needed: MIN_POINTS,
            got: points.len(),
        });
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(BenchError::NonFinite("input points".into()));
    }
    let first = points[0].0;
    if points.iter().all(|p| p.0 == first) {
        return Err(BenchError::Degenerate("all objective scores are equal".into()));
    }
    Ok(())
}

pub fn logistic_fit(points: &[(f64, f64)]) -> Result<LogisticParams> {
    Ok(logistic_fit_detailed(points, 1)?.params)
}

/// Nelder-Mead from the documented start and from `RESTARTS` seeded
/// perturbations of it, then one polishing run from the best vertex.
pub fn logistic_fit_detailed(points: &[(f64, f64)], seed: u64) -> Result<LogisticFit> {
    let init = initial_params(points)?.to_vec();
    let initial_sse = sse(&init, points);
    if !initial_sse.is_finite() {
        return Err(BenchError::NonFinite("objective at the initial parameters".into()));
    }
    let f = |p: &[f64; 4]| sse(p, points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![init];
    let spread = [init[1].abs().max(0.1) * 0.1, 0.2, 0.5, 0.2 / (init[2].abs().max(1e-3))];
    for _ in 0..RESTARTS {
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        starts.push([
            init[0] + spread[0] * z(),
            init[1] * (1.0 + spread[1] * z()),
            init[2] * (spread[2] * z()).exp(),
            init[3] + spread[3] * z(),
        ]);
    }
    let mut best = (init, initial_sse);
    for s in starts {
        let r = nelder_mead(&f, s);
        if r.1 < best.1 {
            best = r;
        }
    }
    let polished = nelder_mead(&f, best.0);
    if polished.1 < best.1 {
        best = polished;
    }
    if !best.0.iter().all(|v| v.is_finite()) || !best.1.is_finite() {
        return Err(BenchError::NonFinite("fitted parameters".into()));
    }
    Ok(LogisticFit {
        params: LogisticParams::from_vec(&best.0),
        sse: best.1,
        initial_sse,
    })
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2). Returns the best vertex and its value.
fn nelder_mead(f: &impl Fn(&[f64; 4]) -> f64, start: [f64; 4]) -> ([f64; 4], f64) {
    const N: usize = 4;
    let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut v = start;
        v[i] = if v[i] != 0.0 { v[i] * 1.05 } else { 0.00025 };
        simplex.push((v, f(&v)));
    }
    for _ in 0..MAX_ITERATIONS {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        if spread <= PARAMETER_TOLERANCE {
            break;
        }
        let mut centroid = [0.0; N];
        for (v, _) in &simplex[..N] {
            for k in 0..N {
                centroid[k] += v[k] / N as f64;
            }
        }
        let worst = simplex[N];
        let along = |t: f64| -> [f64; 4] { std::array::from_fn(|k| centroid[k] + t * (worst.0[k] - centroid[k])) };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            simplex[N] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < worst.1.min(fr) {
                simplex[N] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for (v, fv) in simplex.iter_mut().skip(1) {
                    *v = std::array::from_fn(|k| best[k] + 0.5 * (v[k] - best[k]));
                    *fv = f(v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRUE: LogisticParams = LogisticParams { a: 0.0, b: 1.0, c: 8.0, d: 0.5 };

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&TRUE, 0.5), 0.5);
        let p = LogisticParams { a: 0.3, b: 1.7, c: 2.0, d: -1.0 };
        assert_eq!(predict(&p, -1.0), p.a + p.b / 2.0);
        assert!((predict(&TRUE, 0.75) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((predict(&TRUE, 0.75) - 0.8808).abs() < 1e-4);
        let steep = LogisticParams { c: 1e6, ..TRUE };
        assert_eq!(predict(&steep, 0.6), 1.0);
        assert_eq!(predict(&steep, 0.4), 0.0);
        let wild = LogisticParams { c: 700.0, d: 0.0, ..TRUE };
        assert!(predict(&wild, 1.0).is_finite() && predict(&wild, -1.0).is_finite());
    }

    #[test]
    fn recovers_generating_curve() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| i as f64 / 19.0).map(|o| (o, predict(&TRUE, o))).collect();
        let fit = logistic_fit_detailed(&pts, 1).unwrap();
        let err = pts.iter().map(|&(o, q)| (predict(&fit.params, o) - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "max error {err}, params {:?}", fit.params);
        assert!(fit.sse <= fit.initial_sse);
    }

    #[test]
    fn flat_target_and_preconditions() {
        let flat: Vec<(f64, f64)> = (0..8).map(|i| (i as f64 / 7.0, 0.4)).collect();
        let p = logistic_fit(&flat).unwrap();
        assert_eq!(p.b, 0.0);
        assert!(flat.iter().all(|&(o, q)| predict(&p, o) == q));
        let same_o: Vec<(f64, f64)> = (0..8).map(|i| (0.3, i as f64)).collect();
        assert!(matches!(logistic_fit(&same_o), Err(BenchError::Degenerate(_))));
        assert!(matches!(logistic_fit(&flat[..4]), Err(BenchError::TooFewPoints { .. })));
        let mut nan = flat.clone();
        nan[2].1 = f64::NAN;
        assert!(matches!(logistic_fit(&nan), Err(BenchError::NonFinite(_))));
    }

    #[test]
    fn never_worse_than_start_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let pts: Vec<(f64, f64)> = (0..12)
                .map(|i| {
                    let o = i as f64 / 11.0;
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    (o, predict(&TRUE, o) + 0.1 * noise)
                })
                .collect();
            let fit = logistic_fit_detailed(&pts, 9).unwrap();
            assert!(fit.sse <= fit.initial_sse);
        }
    }
}
