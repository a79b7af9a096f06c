//! Test oracles shared by integration targets.

#![allow(dead_code)]

use lfq_core::metrics::Plane;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_plane(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Plane {
    Plane::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect())
}

/// Correlated pair: smooth random field plus independent perturbation.
pub fn random_pair(w: usize, h: usize, rng: &mut ChaCha8Rng) -> (Plane, Plane) {
    let base = random_plane(w, h, rng);
    let noisy = Plane::new(
        w,
        h,
        base.data.iter().map(|&v| (0.7 * v + 0.3 * rng.random::<f64>()).clamp(0.0, 1.0)).collect(),
    );
    (base, noisy)
}

/// Straightforward MS-SSIM: explicit 2-D Gaussian windows, two-pass local
/// moments, explicit 2x2 averaging.
pub fn brute_force_ms_ssim(a: &Plane, b: &Plane) -> f64 {
    let published = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let total: f64 = published.iter().sum();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let size = 11usize;
    let sigma = 1.5f64;
    let mut window = vec![vec![0.0; size]; size];
    let mut wsum = 0.0;
    for (i, row) in window.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *w = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            wsum += *w;
        }
    }
    for row in window.iter_mut() {
        for w in row.iter_mut() {
            *w /= wsum;
        }
    }

    let mut x: Vec<Vec<f64>> = (0..a.height).map(|r| a.data[r * a.width..(r + 1) * a.width].to_vec()).collect();
    let mut y: Vec<Vec<f64>> = (0..b.height).map(|r| b.data[r * b.width..(r + 1) * b.width].to_vec()).collect();
    let mut result = 1.0;
    for (s, weight) in published.iter().map(|w| w / total).enumerate() {
        let (h, w) = (x.len(), x[0].len());
        let mut cs_sum = 0.0;
        let mut ssim_sum = 0.0;
        let mut count = 0.0;
        for r in 0..=h - size {
            for c in 0..=w - size {
                let mut mx = 0.0;
                let mut my = 0.0;
                for i in 0..size {
                    for j in 0..size {
                        mx += window[i][j] * x[r + i][c + j];
                        my += window[i][j] * y[r + i][c + j];
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..size {
                    for j in 0..size {
                        let dx = x[r + i][c + j] - mx;
                        let dy = y[r + i][c + j] - my;
                        vx += window[i][j] * dx * dx;
                        vy += window[i][j] * dy * dy;
                        cxy += window[i][j] * dx * dy;
                    }
                }
                let cs = (2.0 * cxy + c2) / (vx + vy + c2);
                let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                cs_sum += cs;
                ssim_sum += cs * l;
                count += 1.0;
            }
        }
        let pooled = if s == 4 { ssim_sum / count } else { cs_sum / count };
        result *= pooled.powf(weight);
        let down = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..m.len() / 2)
                .map(|r| {
                    (0..m[0].len() / 2)
                        .map(|c| (m[2 * r][2 * c] + m[2 * r][2 * c + 1] + m[2 * r + 1][2 * c] + m[2 * r + 1][2 * c + 1]) / 4.0)
                        .collect()
                })
                .collect()
        };
        x = down(&x);
        y = down(&y);
    }
    result
}
