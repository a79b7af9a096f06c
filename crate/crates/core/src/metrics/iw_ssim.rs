//! Information content weighted SSIM.
//!
//! Contrast-structure maps are pooled per scale with weights equal to the
//! mutual information between the reference and distorted Laplacian bands
//! under a Gaussian scale mixture source and a gain-plus-noise channel. The
//! low-pass pyramid is the one MS-SSIM uses, so disabling the weighting
//! reproduces MS-SSIM.

use super::config::{IwSsimConfig, MetricConfig};
use super::ms_ssim::{check_size, lowpass_pyramid, ssim_maps, weighted_term};
use super::plane::{check_same_size, expand_to, filter_valid, Plane};
use super::Result;
use nalgebra::{DMatrix, SymmetricEigen};

pub fn iw_ssim(reference: &Plane, test: &Plane, cfg: &MetricConfig) -> Result<f64> {
    let ms = &cfg.ms_ssim;
    let iw = &cfg.iw_ssim;
    check_same_size(reference, test)?;
    check_size(reference, ms)?;
    let scales = ms.scales();
    let px = lowpass_pyramid(reference, scales);
    let py = lowpass_pyramid(test, scales);
    let (bands_x, bands_y) = if iw.information_weighting {
        (laplacian_bands(&px, iw.intensity_scale), laplacian_bands(&py, iw.intensity_scale))
    } else {
        (Vec::new(), Vec::new())
    };
    let margin = ms.window_size / 2 - iw.block_size / 2;
    let mut score = 1.0;
    for (s, weight) in ms.scale_weights.iter().enumerate() {
        let maps = ssim_maps(&px[s], &py[s], ms);
        let last = s + 1 == scales;
        let cs = if last {
            maps.cs.zip_map(&maps.luminance, |c, l| c * l)
        } else {
            maps.cs
        };
        let pooled = if iw.information_weighting && !last {
            let parent = if iw.use_parent && s + 1 < bands_x.len() {
                Some(&bands_x[s + 1])
            } else {
                None
            };
            let weights = information_weights(&bands_x[s], &bands_y[s], parent, iw).shrink(margin);
            weighted_mean(&cs, &weights)
        } else {
            cs.mean()
        };
        score *= weighted_term(pooled, *weight);
    }
    Ok(score)
}

fn weighted_mean(values: &Plane, weights: &Plane) -> f64 {
    debug_assert!(values.same_size(weights));
    let total: f64 = weights.data.iter().sum();
    if total > 0.0 {
        values.data.iter().zip(&weights.data).map(|(v, w)| v * w).sum::<f64>() / total
    } else {
        values.mean()
    }
}

/// Band-pass levels `G_s - expand(G_{s+1})` for every level but the coarsest.
fn laplacian_bands(pyramid: &[Plane], scale: f64) -> Vec<Plane> {
    pyramid
        .windows(2)
        .map(|pair| {
            let up = expand_to(&pair[1], pair[0].width, pair[0].height);
            pair[0].zip_map(&up, |a, b| (a - b) * scale)
        })
        .collect()
}

/// Per-position information content over the `block x block` neighborhoods
/// that fit entirely inside the band.
pub(crate) fn information_weights(
    reference: &Plane,
    distorted: &Plane,
    parent: Option<&Plane>,
    cfg: &IwSsimConfig,
) -> Plane {
    let b = cfg.block_size;
    let tol = cfg.tolerance;
    let noise = cfg.noise_variance;
    let taps = vec![1.0 / b as f64; b];

    // distortion channel: distorted = g * reference + v, fitted locally
    let mu_x = filter_valid(reference, &taps);
    let mu_y = filter_valid(distorted, &taps);
    let e_xx = filter_valid(&reference.zip_map(reference, |a, c| a * c), &taps);
    let e_yy = filter_valid(&distorted.zip_map(distorted, |a, c| a * c), &taps);
    let e_xy = filter_valid(&reference.zip_map(distorted, |a, c| a * c), &taps);
    let (w, h) = (mu_x.width, mu_x.height);
    let n_exp = w * h;
    let mut gain = vec![0.0; n_exp];
    let mut vv = vec![0.0; n_exp];
    for i in 0..n_exp {
        let ss_x = (e_xx.data[i] - mu_x.data[i] * mu_x.data[i]).max(0.0);
        let ss_y = (e_yy.data[i] - mu_y.data[i] * mu_y.data[i]).max(0.0);
        let cov = e_xy.data[i] - mu_x.data[i] * mu_y.data[i];
        let mut g = cov / (ss_x + tol);
        let mut v = ss_y - g * cov;
        if ss_x < tol {
            g = 0.0;
            v = ss_y;
        }
        if ss_y < tol {
            g = 0.0;
            v = 0.0;
        }
        gain[i] = g;
        vv[i] = v;
    }

    // neighborhood vectors of the reference band (plus the parent coefficient)
    let parent_band = parent.map(|p| expand_to(p, reference.width, reference.height));
    let dim = b * b + usize::from(parent_band.is_some());
    let r = b / 2;
    let mut vectors = DMatrix::<f64>::zeros(n_exp, dim);
    for y in 0..h {
        for x in 0..w {
            let row = y * w + x;
            let mut k = 0;
            for dy in 0..b {
                for dx in 0..b {
                    vectors[(row, k)] = reference.at(x + dx, y + dy);
                    k += 1;
                }
            }
            if let Some(p) = &parent_band {
                vectors[(row, k)] = p.at(x + r, y + r);
            }
        }
    }
    let cov = vectors.tr_mul(&vectors) / n_exp as f64;
    let eig = SymmetricEigen::new(cov);
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let positive_sum: f64 = raw.iter().filter(|&&l| l > 0.0).sum();
    let total: f64 = raw.iter().sum();
    let rescale = total / if positive_sum == 0.0 { 1.0 } else { positive_sum };
    let eigenvalues: Vec<f64> = raw.iter().map(|&l| l.max(0.0) * rescale).collect();
    let max_eig = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = max_eig * 1e-12;

    // multiplier estimate s = y^T C^-1 y / N via the eigenbasis (pseudo-inverse)
    let projected = &vectors * &eig.eigenvectors;
    let mut out = vec![0.0; n_exp];
    for i in 0..n_exp {
        let mut ss = 0.0;
        for (k, &lambda) in eigenvalues.iter().enumerate() {
            if lambda > cutoff {
                let p = projected[(i, k)];
                ss += p * p / lambda;
            }
        }
        ss /= dim as f64;
        let g = gain[i];
        let v = vv[i];
        let mut info = 0.0;
        for &lambda in &eigenvalues {
            info += (1.0 + ((v + (1.0 + g * g) * noise) * ss * lambda + noise * v) / (noise * noise)).log2();
        }
        out[i] = if info < tol { 0.0 } else { info };
    }
    Plane::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Plane {
        Plane::new(
            w,
            h,
            (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    0.5 + 0.2 * (x * 0.37).sin() * (y * 0.21).cos() + 0.1 * ((x + 2.0 * y) * 0.9).sin()
                })
                .collect(),
        )
    }

    #[test]
    fn identical_is_exactly_one() {
        let cfg = MetricConfig::default();
        let p = textured(180, 176);
        assert_eq!(iw_ssim(&p, &p, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn weights_are_nonnegative_and_larger_in_texture() {
        let cfg = MetricConfig::default().iw_ssim;
        let mut data = vec![0.0; 40 * 40];
        for y in 0..40 {
            for x in 20..40 {
                data[y * 40 + x] = if (x + y) % 2 == 0 { 40.0 } else { -40.0 };
            }
        }
        let band = Plane::new(40, 40, data);
        let w = information_weights(&band, &band, None, &cfg);
        assert!(w.data.iter().all(|&v| v >= 0.0));
        assert!(w.at(30, 20) > w.at(5, 20));
    }

    #[test]
    fn flat_content_does_not_produce_nan() {
        let cfg = MetricConfig::default();
        let a = Plane::filled(176, 176, 0.4);
        let b = Plane::filled(176, 176, 0.6);
        let v = iw_ssim(&a, &b, &cfg).unwrap();
        assert!(v.is_finite() && v > 0.0 && v <= 1.0);
    }
}
