//! Feature similarity (FSIM / FSIMc): phase congruency and gradient
//! magnitude similarity on the luminance channel, optionally multiplied by
//! chrominance similarity on the I/Q opponent channels, pooled with the
//! larger of the two phase congruency maps.

use super::config::FsimConfig;
use super::plane::{check_same_size, filter_same, Plane};
use super::{MetricError, Result};
use crate::lightfield::View;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsimScores {
    /// Luminance-only FSIM.
    pub fsim: f64,
    /// FSIM with chrominance similarity.
    pub fsimc: f64,
}

pub fn fsimc(reference: &View, test: &View, cfg: &FsimConfig) -> Result<f64> {
    Ok(fsim_scores(reference, test, cfg)?.fsimc)
}

pub fn fsim_scores(reference: &View, test: &View, cfg: &FsimConfig) -> Result<FsimScores> {
    if !reference.same_geometry(test) {
        return Err(MetricError::DimensionMismatch {
            a: (reference.width(), reference.height()),
            b: (test.width(), test.height()),
        });
    }
    let [y1, i1, q1] = yiq(reference, cfg.intensity_scale);
    let [y2, i2, q2] = yiq(test, cfg.intensity_scale);
    let f = downsample_factor(&y1, cfg);
    let (y1, i1, q1) = (downsample(&y1, f), downsample(&i1, f), downsample(&q1, f));
    let (y2, i2, q2) = (downsample(&y2, f), downsample(&i2, f), downsample(&q2, f));
    Ok(pool(&y1, &y2, Some((&i1, &q1, &i2, &q2)), cfg, reference == test))
}

/// FSIM on single intensity planes in `[0,1]`.
pub fn fsim_luma(reference: &Plane, test: &Plane, cfg: &FsimConfig) -> Result<f64> {
    check_same_size(reference, test)?;
    let a = reference.map(|v| v * cfg.intensity_scale);
    let b = test.map(|v| v * cfg.intensity_scale);
    let f = downsample_factor(&a, cfg);
    Ok(pool(&downsample(&a, f), &downsample(&b, f), None, cfg, reference == test).fsim)
}

fn pool(y1: &Plane, y2: &Plane, chroma: Option<(&Plane, &Plane, &Plane, &Plane)>, cfg: &FsimConfig, equal: bool) -> FsimScores {
    let pc1 = phase_congruency(y1, cfg);
    let pc2 = phase_congruency(y2, cfg);
    let g1 = gradient_magnitude(y1);
    let g2 = gradient_magnitude(y2);
    let n = y1.data.len();
    let mut num = 0.0;
    let mut num_c = 0.0;
    let mut den = 0.0;
    let mut plain = 0.0;
    let mut plain_c = 0.0;
    for k in 0..n {
        let (p1, p2) = (pc1.data[k], pc2.data[k]);
        let pcs = (2.0 * p1 * p2 + cfg.t1) / (p1 * p1 + p2 * p2 + cfg.t1);
        let (a, b) = (g1.data[k], g2.data[k]);
        let gs = (2.0 * a * b + cfg.t2) / (a * a + b * b + cfg.t2);
        let sim = gs * pcs;
        let chroma_term = match chroma {
            Some((i1, q1, i2, q2)) => {
                let (ia, ib, qa, qb) = (i1.data[k], i2.data[k], q1.data[k], q2.data[k]);
                let isim = (2.0 * ia * ib + cfg.t3) / (ia * ia + ib * ib + cfg.t3);
                let qsim = (2.0 * qa * qb + cfg.t4) / (qa * qa + qb * qb + cfg.t4);
                real_pow(isim * qsim, cfg.lambda)
            }
            None => 1.0,
        };
        let pcm = p1.max(p2);
        num += sim * pcm;
        num_c += sim * chroma_term * pcm;
        den += pcm;
        plain += sim;
        plain_c += sim * chroma_term;
    }
    if den > 0.0 {
        FsimScores {
            fsim: num / den,
            fsimc: num_c / den,
        }
    } else if equal {
        // no phase structure anywhere (flat content)
        FsimScores { fsim: 1.0, fsimc: 1.0 }
    } else {
        FsimScores {
            fsim: plain / n as f64,
            fsimc: plain_c / n as f64,
        }
    }
}

/// Real part of the principal power, as the complex-valued original does.
fn real_pow(x: f64, lambda: f64) -> f64 {
    if x >= 0.0 {
        x.powf(lambda)
    } else {
        (-x).powf(lambda) * (lambda * PI).cos()
    }
}

fn yiq(v: &View, scale: f64) -> [Plane; 3] {
    let (w, h) = (v.width(), v.height());
    let mut y = Vec::with_capacity(w * h);
    let mut i = Vec::with_capacity(w * h);
    let mut q = Vec::with_capacity(w * h);
    for px in v.samples().chunks_exact(3) {
        let (r, g, b) = (px[0] * scale, px[1] * scale, px[2] * scale);
        y.push(0.299 * r + 0.587 * g + 0.114 * b);
        i.push(0.596 * r - 0.274 * g - 0.322 * b);
        q.push(0.211 * r - 0.523 * g + 0.312 * b);
    }
    [Plane::new(w, h, y), Plane::new(w, h, i), Plane::new(w, h, q)]
}

fn downsample_factor(p: &Plane, cfg: &FsimConfig) -> usize {
    if cfg.auto_downsample {
        ((p.width.min(p.height) as f64 / 256.0).round() as usize).max(1)
    } else {
        1
    }
}

fn downsample(p: &Plane, f: usize) -> Plane {
    if f == 1 {
        return p.clone();
    }
    let kernel = vec![1.0 / (f * f) as f64; f * f];
    let smooth = filter_same(p, &kernel, f, f);
    let w = p.width.div_ceil(f);
    let h = p.height.div_ceil(f);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(smooth.at(x * f, y * f));
        }
    }
    Plane::new(w, h, out)
}

fn gradient_magnitude(p: &Plane) -> Plane {
    #[rustfmt::skip]
    let dx = [
        3.0 / 16.0, 0.0, -3.0 / 16.0,
        10.0 / 16.0, 0.0, -10.0 / 16.0,
        3.0 / 16.0, 0.0, -3.0 / 16.0,
    ];
    #[rustfmt::skip]
    let dy = [
        3.0 / 16.0, 10.0 / 16.0, 3.0 / 16.0,
        0.0, 0.0, 0.0,
        -3.0 / 16.0, -10.0 / 16.0, -3.0 / 16.0,
    ];
    let gx = filter_same(p, &dx, 3, 3);
    let gy = filter_same(p, &dy, 3, 3);
    gx.zip_map(&gy, |a, b| (a * a + b * b).sqrt())
}

struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn run(&self, data: &mut [Complex<f64>], inverse: bool) {
        let (rows, cols) = (self.rows, self.cols);
        let (rf, cf) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for row in data.chunks_exact_mut(cols) {
            rf.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); rows];
        for c in 0..cols {
            for r in 0..rows {
                col[r] = data[r * cols + c];
            }
            cf.process(&mut col);
            for r in 0..rows {
                data[r * cols + c] = col[r];
            }
        }
        if inverse {
            let norm = 1.0 / (rows * cols) as f64;
            for v in data.iter_mut() {
                *v *= norm;
            }
        }
    }
}

/// Frequency coordinate of unshifted FFT bin `p` of `n`, on the grid
/// normalized to `[-0.5, 0.5]`.
fn bin_frequency(p: usize, n: usize) -> f64 {
    let signed = if p <= (n - 1) / 2 { p as f64 } else { p as f64 - n as f64 };
    let denom = if n % 2 == 1 { (n - 1).max(1) } else { n };
    signed / denom as f64
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Phase congruency summed over orientations, with the per-orientation noise
/// threshold estimated from the smallest-scale response.
pub(crate) fn phase_congruency(img: &Plane, cfg: &FsimConfig) -> Plane {
    let (rows, cols) = (img.height, img.width);
    let n = rows * cols;
    let fft = Fft2::new(rows, cols);
    let mut image_fft: Vec<Complex<f64>> = img.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.run(&mut image_fft, false);

    let mut radius = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    let mut cos_t = vec![0.0; n];
    let mut lowpass = vec![0.0; n];
    for r in 0..rows {
        let fy = bin_frequency(r, rows);
        for c in 0..cols {
            let fx = bin_frequency(c, cols);
            let k = r * cols + c;
            let rad = (fx * fx + fy * fy).sqrt();
            lowpass[k] = 1.0 / (1.0 + (rad / cfg.lowpass_cutoff).powi(2 * cfg.lowpass_order));
            radius[k] = if k == 0 { 1.0 } else { rad };
            let theta = (-fy).atan2(fx);
            sin_t[k] = theta.sin();
            cos_t[k] = theta.cos();
        }
    }

    let log_sigma = cfg.sigma_on_f.ln();
    let log_gabor: Vec<Vec<f64>> = (0..cfg.scales)
        .map(|s| {
            let fo = 1.0 / (cfg.min_wavelength * cfg.mult.powi(s as i32));
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&rad, &lp)| (-(rad / fo).ln().powi(2) / (2.0 * log_sigma * log_sigma)).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    let theta_sigma = PI / cfg.orientations as f64 / cfg.d_theta_on_sigma;
    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for o in 0..cfg.orientations {
        let angle = o as f64 * PI / cfg.orientations as f64;
        let (ca, sa) = (angle.cos(), angle.sin());
        let spread: Vec<f64> = (0..n)
            .map(|k| {
                let ds = sin_t[k] * ca - cos_t[k] * sa;
                let dc = cos_t[k] * ca + sin_t[k] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut responses: Vec<Vec<Complex<f64>>> = Vec::with_capacity(cfg.scales);
        let mut spatial_filters: Vec<Vec<f64>> = Vec::with_capacity(cfg.scales);
        let mut em_n = 0.0;
        for (s, gabor) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = gabor.iter().zip(&spread).map(|(g, sp)| g * sp).collect();
            if s == 0 {
                em_n = filter.iter().map(|f| f * f).sum();
            }
            for k in 0..n {
                buf[k] = Complex::new(filter[k], 0.0);
            }
            fft.run(&mut buf, true);
            let root_n = (n as f64).sqrt();
            spatial_filters.push(buf.iter().map(|c| c.re * root_n).collect());

            for k in 0..n {
                buf[k] = image_fft[k] * filter[k];
            }
            fft.run(&mut buf, true);
            for k in 0..n {
                sum_an[k] += buf[k].norm();
                sum_e[k] += buf[k].re;
                sum_o[k] += buf[k].im;
            }
            responses.push(buf.clone());
        }

        let mut energy = vec![0.0; n];
        for k in 0..n {
            let x_energy = (sum_e[k] * sum_e[k] + sum_o[k] * sum_o[k]).sqrt() + cfg.epsilon;
            let mean_e = sum_e[k] / x_energy;
            let mean_o = sum_o[k] / x_energy;
            for resp in &responses {
                let (e, od) = (resp[k].re, resp[k].im);
                energy[k] += e * mean_e + od * mean_o - (e * mean_o - od * mean_e).abs();
            }
        }

        let mut small_scale_power: Vec<f64> = responses[0].iter().map(|c| c.norm_sqr()).collect();
        let median_e2n = median(&mut small_scale_power);
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = if em_n > 0.0 { mean_e2n / em_n } else { 0.0 };
        let mut sum_an2 = 0.0;
        let mut sum_aiaj = 0.0;
        for k in 0..n {
            for si in 0..spatial_filters.len() {
                let a = spatial_filters[si][k];
                sum_an2 += a * a;
                for sj in si + 1..spatial_filters.len() {
                    sum_aiaj += a * spatial_filters[sj][k];
                }
            }
        }
        let noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        let tau = (noise_energy2 / 2.0).max(0.0).sqrt();
        let noise_mean = tau * (PI / 2.0).sqrt();
        let noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (noise_mean + cfg.noise_k * noise_sigma) / cfg.noise_divisor;

        for k in 0..n {
            energy_all[k] += (energy[k] - threshold).max(0.0);
            an_all[k] += sum_an[k];
        }
    }
    Plane::new(
        cols,
        rows,
        energy_all
            .iter()
            .zip(&an_all)
            .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::BitDepth;
    use crate::metrics::MetricConfig;

    fn edge_plane(w: usize, h: usize) -> Plane {
        Plane::new(w, h, (0..w * h).map(|i| if i % w < w / 2 { 40.0 } else { 200.0 }).collect())
    }

    #[test]
    fn bin_frequencies_match_shifted_grid() {
        let even: Vec<f64> = (0..4).map(|p| bin_frequency(p, 4)).collect();
        assert_eq!(even, vec![0.0, 0.25, -0.5, -0.25]);
        let odd: Vec<f64> = (0..5).map(|p| bin_frequency(p, 5)).collect();
        assert_eq!(odd, vec![0.0, 0.25, 0.5, -0.5, -0.25]);
    }

    #[test]
    fn phase_congruency_peaks_at_step_edge() {
        let cfg = MetricConfig::default().fsimc;
        let pc = phase_congruency(&edge_plane(64, 48), &cfg);
        let at_edge = pc.at(32, 24).max(pc.at(31, 24));
        assert!(at_edge > 0.3, "edge pc {at_edge}");
        assert!(pc.at(16, 24) < at_edge);
        assert!(pc.data.iter().all(|v| (0.0..=1.0 + 1e-9).contains(v)));
    }

    #[test]
    fn constant_images() {
        let cfg = MetricConfig::default().fsimc;
        let a = View::filled(32, 32, BitDepth::Eight, 0.5).unwrap();
        let b = View::filled(32, 32, BitDepth::Eight, 0.6).unwrap();
        assert_eq!(fsimc(&a, &a, &cfg).unwrap(), 1.0);
        let v = fsimc(&a, &b, &cfg).unwrap();
        assert!(v.is_finite() && v > 0.0 && v <= 1.0);
    }

    #[test]
    fn negative_chroma_product_uses_real_part() {
        assert!((real_pow(-1.0, 0.5) - 0.0).abs() < 1e-15);
        assert_eq!(real_pow(0.25, 0.5), 0.5);
    }
}
