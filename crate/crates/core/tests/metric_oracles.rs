//! Metric identities checked against independent oracles: a direct,
//! unoptimized MS-SSIM, Parseval for PSNR-HVS, and the unweighted IW-SSIM
//! degeneracy.

mod common;

use common::{brute_force_ms_ssim, random_pair};

use lfq_core::lightfield::{BitDepth, View};
use lfq_core::metrics::{
    fsim_luma, fsim_scores, iw_ssim, ms_ssim, psnr, psnr_hvs, to_luma, MetricConfig, Plane, PsnrHvsConfig,
};
use lfq_core::synthetic::natural_image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ms_ssim_matches_brute_force_oracle() {
    let cfg = MetricConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(176);
    for _ in 0..3 {
        let (a, b) = random_pair(176, 176, &mut rng);
        let fast = ms_ssim(&a, &b, &cfg.ms_ssim).unwrap();
        let slow = brute_force_ms_ssim(&a, &b);
        assert!((fast - slow).abs() < 1e-8, "fast {fast} oracle {slow}");
    }
}

#[test]
fn ms_ssim_is_symmetric() {
    let cfg = MetricConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, b) = random_pair(180, 190, &mut rng);
    let ab = ms_ssim(&a, &b, &cfg.ms_ssim).unwrap();
    let ba = ms_ssim(&b, &a, &cfg.ms_ssim).unwrap();
    assert!((ab - ba).abs() <= 1e-12);
}

#[test]
fn psnr_hvs_with_unit_csf_is_psnr() {
    let unit = PsnrHvsConfig::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let (w, h) = (8 * rng.random_range(2..8), 8 * rng.random_range(2..8));
        let (a, b) = random_pair(w, h, &mut rng);
        let d = (psnr_hvs(&a, &b, &unit).unwrap() - psnr(&a, &b).unwrap()).abs();
        assert!(d < 1e-9, "difference {d} dB");
    }
}

#[test]
fn iw_ssim_without_weighting_is_ms_ssim() {
    let mut cfg = MetricConfig::default();
    cfg.iw_ssim.information_weighting = false;
    let img = to_luma(&natural_image(192, 176, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noisy = Plane::new(img.width, img.height, img.data.iter().map(|v| (v + 0.03 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)).collect());
    let iw = iw_ssim(&img, &noisy, &cfg).unwrap();
    let ms = ms_ssim(&img, &noisy, &cfg.ms_ssim).unwrap();
    assert!((iw - ms).abs() < 1e-6);
    // with weighting the value moves but stays a similarity
    let weighted = iw_ssim(&img, &noisy, &MetricConfig::default()).unwrap();
    assert!(weighted > 0.0 && weighted < 1.0);
}

#[test]
fn fsimc_of_gray_pair_equals_luma_variant() {
    let cfg = MetricConfig::default().fsimc;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let gray = to_luma(&natural_image(64, 48, 4));
    let noisy = Plane::new(gray.width, gray.height, gray.data.iter().map(|v| (v + 0.05 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)).collect());
    let as_rgb = |p: &Plane| View::new(p.width, p.height, BitDepth::Eight, p.data.iter().flat_map(|&v| [v, v, v]).collect()).unwrap();
    let scores = fsim_scores(&as_rgb(&gray), &as_rgb(&noisy), &cfg).unwrap();
    assert_eq!(scores.fsimc, scores.fsim);
    // equal channels: YIQ luma equals the plane up to rounding of the weights
    let luma_only = fsim_luma(&gray, &noisy, &cfg).unwrap();
    assert!((scores.fsimc - luma_only).abs() < 1e-9, "{} vs {}", scores.fsimc, luma_only);
    assert!(scores.fsimc < 1.0);
}
