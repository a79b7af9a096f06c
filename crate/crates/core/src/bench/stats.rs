use super::{BenchError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pcc: f64,
    pub srocc: f64,
    pub rmse: f64,
    pub outlier_ratio: f64,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(BenchError::Degenerate("series differ in length or are empty".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(BenchError::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// `pairs` are `(predicted, observed)`; a condition is an outlier when its
/// absolute residual exceeds its interval half-width.
pub fn correlate(pairs: &[(f64, f64)], half_widths: &[f64]) -> Result<Correlation> {
    if pairs.len() < 3 {
        return Err(BenchError::TooFewPoints { needed: 3, got: pairs.len() });
    }
    if half_widths.len() != pairs.len() {
        return Err(BenchError::Degenerate("one half-width per pair is required".into()));
    }
    if pairs.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(BenchError::NonFinite("correlation input".into()));
    }
    // canonical order makes the floating-point sums independent of input order
    let mut rows: Vec<(f64, f64, f64)> = pairs.iter().zip(half_widths).map(|(p, &h)| (p.0, p.1, h)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let pred: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let obs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let rmse = (rows.iter().map(|r| (r.0 - r.1).powi(2)).sum::<f64>() / rows.len() as f64).sqrt();
    let outliers = rows.iter().filter(|r| (r.0 - r.1).abs() > r.2).count();
    Ok(Correlation {
        pcc: pearson(&pred, &obs)?,
        srocc: spearman(&pred, &obs)?,
        rmse,
        outlier_ratio: outliers as f64 / pairs.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_reversal() {
        let q = [0.1, 0.5, 0.2, 0.9, 0.7];
        let same: Vec<(f64, f64)> = q.iter().map(|&v| (v, v)).collect();
        let c = correlate(&same, &[0.0; 5]).unwrap();
        assert_eq!((c.pcc, c.srocc, c.rmse, c.outlier_ratio), (1.0, 1.0, 0.0, 0.0));
        let rev: Vec<(f64, f64)> = q.iter().map(|&v| (1.0 - v, v)).collect();
        let c = correlate(&rev, &[0.0; 5]).unwrap();
        assert_eq!((c.pcc, c.srocc), (-1.0, -1.0));
    }

    #[test]
    fn tied_rank_fixture() {
        // predicted 1,2,2,3,4,4 -> ranks 1,2.5,2.5,4,5.5,5.5
        // observed  1,3,2,4,6,5 -> ranks 1,3,2,4,6,5
        // rank deviations from 3.5: sum dx*dy = 16.5, sum dx^2 = 16.5, sum dy^2 = 17.5
        let pairs = [(1.0, 1.0), (2.0, 3.0), (2.0, 2.0), (3.0, 4.0), (4.0, 6.0), (4.0, 5.0)];
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0, 4.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0, 5.5, 5.5]);
        let c = correlate(&pairs, &[1.0; 6]).unwrap();
        assert!((c.srocc - (16.5f64 / 17.5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn outlier_ratio_limits_and_errors() {
        let pairs = [(0.0, 0.1), (0.5, 0.4), (1.0, 0.9)];
        assert_eq!(correlate(&pairs, &[f64::INFINITY; 3]).unwrap().outlier_ratio, 0.0);
        assert_eq!(correlate(&pairs, &[0.0; 3]).unwrap().outlier_ratio, 1.0);
        assert!(matches!(correlate(&[(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)], &[0.0; 3]), Err(BenchError::Degenerate(_))));
        assert!(correlate(&pairs[..2], &[0.0; 2]).is_err());
    }

    proptest! {
        #[test]
        fn srocc_invariant_under_monotone_maps(
            xs in proptest::collection::vec(-5.0f64..5.0, 4..30),
            scale in 0.1f64..10.0,
            shift in -3.0f64..3.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x.sin() + 0.1 * i as f64).collect();
            let mapped: Vec<f64> = xs.iter().map(|x| (scale * x + shift).exp().ln_1p() + x.powi(3)).collect();
            if let (Ok(a), Ok(b)) = (spearman(&xs, &ys), spearman(&mapped, &ys)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn correlate_ignores_order(
            pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..25),
            rot in 0usize..25,
        ) {
            let hw: Vec<f64> = pairs.iter().map(|p| p.0 * 0.2).collect();
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            idx.rotate_left(rot % pairs.len());
            idx.reverse();
            let p2: Vec<(f64, f64)> = idx.iter().map(|&i| pairs[i]).collect();
            let h2: Vec<f64> = idx.iter().map(|&i| hw[i]).collect();
            match (correlate(&pairs, &hw), correlate(&p2, &h2)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a, b);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "error status differs"),
            }
        }
    }
}
