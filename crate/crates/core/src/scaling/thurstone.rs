//! Case V maximum likelihood: `P(i preferred over j) = Phi((q_i - q_j) / sqrt 2)`.

use super::{ComparisonMatrix, Result, ScalingError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Pseudo-wins added in both directions of every compared pair.
    pub prior: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            prior: 0.1,
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

impl FitOptions {
    pub fn unregularized() -> Self {
        FitOptions {
            prior: 0.0,
            ..FitOptions::default()
        }
    }
}

const TAIL: f64 = -30.0;

pub(crate) fn log_phi(x: f64) -> f64 {
    if x > TAIL {
        (0.5 * erfc(-x / SQRT_2)).ln()
    } else {
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln()
    }
}

/// `phi(x) / Phi(x)`.
fn mills(x: f64) -> f64 {
    if x > TAIL {
        let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        pdf / (0.5 * erfc(-x / SQRT_2))
    } else {
        let t = -x;
        t / (1.0 - 1.0 / (t * t) + 3.0 / t.powi(4))
    }
}

fn components(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut stack = vec![s];
        let mut comp = Vec::new();
        seen[s] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..n {
                if !seen[j] && linked(i, j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out
}

fn log_likelihood(w: &[Vec<f64>], q: &[f64]) -> f64 {
    let n = q.len();
    let mut l = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && w[i][j] > 0.0 {
                l += w[i][j] * log_phi((q[i] - q[j]) / SQRT_2);
            }
        }
    }
    l
}

/// Fits scores anchored at `q[0] = 0`.
pub fn thurstone_case_v(m: &ComparisonMatrix, opts: &FitOptions) -> Result<Vec<f64>> {
    let n = m.conditions.len();
    if n == 0 {
        return Err(ScalingError::Empty);
    }
    let compared = |i: usize, j: usize| m.v[i][j] + m.v[j][i] > 0.0;
    let comps = components(n, compared);
    if comps.len() > 1 {
        return Err(ScalingError::Disconnected(
            comps
                .into_iter()
                .map(|c| c.into_iter().map(|i| m.conditions[i].clone()).collect())
                .collect(),
        ));
    }
    let w: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i != j && compared(i, j) { m.v[i][j] + opts.prior } else { 0.0 })
                .collect()
        })
        .collect();
    if opts.prior <= 0.0 {
        // without a prior the likelihood is bounded only if every condition
        // both wins and loses along some chain: strong connectivity
        let forward = components(n, |i, j| reaches(&w, i, j) && reaches(&w, j, i));
        if forward.len() > 1 {
            return Err(ScalingError::Unbounded);
        }
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }

    let mut q = vec![0.0; n];
    let mut current = log_likelihood(&w, &q);
    for _ in 0..opts.max_iterations {
        let mut g = vec![0.0; n];
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if w[i][j] == 0.0 && w[j][i] == 0.0 {
                    continue;
                }
                let d = (q[i] - q[j]) / SQRT_2;
                let (li, lj) = (mills(d), mills(-d));
                let f1 = w[i][j] * li - w[j][i] * lj;
                let f2 = w[i][j] * li * (d + li) + w[j][i] * lj * (-d + lj);
                g[i] += f1 / SQRT_2;
                g[j] -= f1 / SQRT_2;
                // negative Hessian of the log-likelihood
                h[(i, i)] += f2 / 2.0;
                h[(j, j)] += f2 / 2.0;
                h[(i, j)] -= f2 / 2.0;
                h[(j, i)] -= f2 / 2.0;
            }
        }
        let grad = DVector::from_iterator(n - 1, g[1..].iter().copied());
        if grad.amax() < opts.tolerance {
            return Ok(q);
        }
        let reduced = h.view((1, 1), (n - 1, n - 1)).into_owned();
        let step = match reduced.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        if step.amax() < 1e-13 * (1.0 + q.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            // remaining gradient is rounding noise
            return Ok(q);
        }
        // near the optimum the gain drops below the rounding of the sum
        let noise = 1e-12 * current.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = std::iter::once(0.0)
                .chain(q[1..].iter().zip(step.iter()).map(|(a, s)| a + t * s))
                .collect();
            let l = log_likelihood(&w, &trial);
            if l >= current - noise {
                q = trial;
                current = current.max(l);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(q);
        }
    }
    Err(ScalingError::NotConverged(opts.max_iterations))
}

fn reaches(w: &[Vec<f64>], from: usize, to: usize) -> bool {
    let n = w.len();
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(i) = stack.pop() {
        if i == to {
            return true;
        }
        for j in 0..n {
            if !seen[j] && w[i][j] > 0.0 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn matrix(v: Vec<Vec<f64>>) -> ComparisonMatrix {
        ComparisonMatrix {
            conditions: (0..v.len()).map(|i| format!("c{i}")).collect(),
            v,
        }
    }

    fn probit(p: f64) -> f64 {
        Normal::standard().inverse_cdf(p)
    }

    #[test]
    fn two_condition_closed_form() {
        let m = matrix(vec![vec![0.0, 15.0], vec![1.0, 0.0]]);
        let q = thurstone_case_v(&m, &FitOptions::unregularized()).unwrap();
        let expect = SQRT_2 * probit(15.0 / 16.0);
        assert!((q[0] - q[1] - expect).abs() < 1e-6);
        assert!((expect - 2.1696).abs() < 1e-4);
        let q = thurstone_case_v(&m, &FitOptions::default()).unwrap();
        assert!((q[0] - q[1] - SQRT_2 * probit(15.1 / 16.2)).abs() < 1e-6);
    }

    #[test]
    fn ties_give_zero() {
        let m = matrix(vec![vec![0.0, 2.5, 1.0], vec![2.5, 0.0, 4.0], vec![1.0, 4.0, 0.0]]);
        assert_eq!(thurstone_case_v(&m, &FitOptions::default()).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn permutation_invariance() {
        let v = vec![
            vec![0.0, 7.0, 9.0, 12.0],
            vec![5.0, 0.0, 8.0, 10.5],
            vec![3.0, 4.0, 0.0, 9.0],
            vec![0.0, 1.5, 3.0, 0.0],
        ];
        let q = thurstone_case_v(&matrix(v.clone()), &FitOptions::default()).unwrap();
        let perm = [2, 0, 3, 1];
        let pv: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| v[i][j]).collect()).collect();
        let pq = thurstone_case_v(&matrix(pv), &FitOptions::default()).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!(((pq[k] - pq[0]) - (q[i] - q[perm[0]])).abs() < 1e-7);
        }
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        let v = vec![vec![0.0, 6.0, 10.0], vec![4.0, 0.0, 7.0], vec![1.0, 3.0, 0.0]];
        let q = thurstone_case_v(&matrix(v.clone()), &FitOptions::unregularized()).unwrap();
        // finite-difference check of optimality
        let l0 = log_likelihood(&v, &q);
        for k in 1..3 {
            for h in [1e-4, -1e-4] {
                let mut p = q.clone();
                p[k] += h;
                assert!(log_likelihood(&v, &p) <= l0 + 1e-12);
            }
        }
    }

    #[test]
    fn structural_errors() {
        let m = matrix(vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]);
        match thurstone_case_v(&m, &FitOptions::default()) {
            Err(ScalingError::Disconnected(c)) => assert_eq!(c, vec![vec!["c0".to_string(), "c1".into()], vec!["c2".into()]]),
            other => panic!("{other:?}"),
        }
        let unanimous = matrix(vec![vec![0.0, 16.0], vec![0.0, 0.0]]);
        assert!(matches!(thurstone_case_v(&unanimous, &FitOptions::unregularized()), Err(ScalingError::Unbounded)));
        let q = thurstone_case_v(&unanimous, &FitOptions::default()).unwrap();
        assert!((q[0] - q[1] - SQRT_2 * probit(16.1 / 16.2)).abs() < 1e-6);
        assert!(matches!(thurstone_case_v(&matrix(vec![]), &FitOptions::default()), Err(ScalingError::Empty)));
    }

    #[test]
    fn tails_are_continuous() {
        for x in [TAIL - 1e-9, TAIL + 1e-9] {
            assert!((log_phi(x) - log_phi(TAIL)).abs() / log_phi(TAIL).abs() < 1e-3);
            assert!((mills(x) - mills(TAIL)).abs() / mills(TAIL) < 1e-3);
        }
        assert!((mills(0.0) - 2.0 * (1.0 / (2.0 * PI).sqrt())).abs() < 1e-15);
    }
}
