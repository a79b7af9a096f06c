use super::config::MsSsimConfig;
use super::plane::{check_same_size, downsample_box2, filter_valid, gaussian_taps, Plane};
use super::{MetricError, Result};

/// Contrast-structure and luminance maps of one scale, over the positions
/// fully covered by the Gaussian window.
pub(crate) struct SsimMaps {
    pub cs: Plane,
    pub luminance: Plane,
}

pub(crate) fn ssim_maps(x: &Plane, y: &Plane, cfg: &MsSsimConfig) -> SsimMaps {
    let taps = gaussian_taps(cfg.window_size, cfg.window_sigma);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let mu_x = filter_valid(x, &taps);
    let mu_y = filter_valid(y, &taps);
    let e_xx = filter_valid(&x.zip_map(x, |a, b| a * b), &taps);
    let e_yy = filter_valid(&y.zip_map(y, |a, b| a * b), &taps);
    let e_xy = filter_valid(&x.zip_map(y, |a, b| a * b), &taps);
    let n = mu_x.data.len();
    let mut cs = Vec::with_capacity(n);
    let mut lum = Vec::with_capacity(n);
    for i in 0..n {
        let (mx, my) = (mu_x.data[i], mu_y.data[i]);
        let sxx = e_xx.data[i] - mx * mx;
        let syy = e_yy.data[i] - my * my;
        let sxy = e_xy.data[i] - mx * my;
        lum.push((2.0 * mx * my + c1) / (mx * mx + my * my + c1));
        cs.push((2.0 * sxy + c2) / (sxx + syy + c2));
    }
    SsimMaps {
        cs: Plane::new(mu_x.width, mu_x.height, cs),
        luminance: Plane::new(mu_x.width, mu_x.height, lum),
    }
}

/// Low-pass pyramid: level 0 is the input, each next level is a 2x2 box
/// average decimated by two.
pub(crate) fn lowpass_pyramid(p: &Plane, levels: usize) -> Vec<Plane> {
    let mut out = Vec::with_capacity(levels);
    out.push(p.clone());
    for _ in 1..levels {
        let next = downsample_box2(out.last().unwrap());
        out.push(next);
    }
    out
}

pub(crate) fn check_size(p: &Plane, cfg: &MsSsimConfig) -> Result<()> {
    let need = cfg.min_dimension();
    if p.width.min(p.height) < need {
        return Err(MetricError::TooSmall {
            width: p.width,
            height: p.height,
            needed: need,
            scales: cfg.scales(),
        });
    }
    Ok(())
}

/// Raises a pooled similarity to its scale weight. Anti-correlated content
/// can pool to a non-positive value; it is floored so the product stays in (0,1].
pub(crate) fn weighted_term(value: f64, weight: f64) -> f64 {
    value.max(f64::MIN_POSITIVE).powf(weight)
}

/// Multi-scale SSIM on one plane. The scale count is fixed by the weight
/// table; undersized input is an error rather than a silent reduction.
pub fn ms_ssim(reference: &Plane, test: &Plane, cfg: &MsSsimConfig) -> Result<f64> {
    check_same_size(reference, test)?;
    check_size(reference, cfg)?;
    let scales = cfg.scales();
    let px = lowpass_pyramid(reference, scales);
    let py = lowpass_pyramid(test, scales);
    let mut score = 1.0;
    for (s, weight) in cfg.scale_weights.iter().enumerate() {
        let maps = ssim_maps(&px[s], &py[s], cfg);
        let pooled = if s + 1 == scales {
            maps.cs.zip_map(&maps.luminance, |c, l| c * l).mean()
        } else {
            maps.cs.mean()
        };
        score *= weighted_term(pooled, *weight);
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricConfig;

    #[test]
    fn too_small_is_error() {
        let cfg = MetricConfig::default().ms_ssim;
        let p = Plane::filled(175, 200, 0.5);
        assert!(matches!(ms_ssim(&p, &p, &cfg), Err(MetricError::TooSmall { needed: 176, .. })));
    }

    #[test]
    fn identical_is_exactly_one() {
        let cfg = MetricConfig::default().ms_ssim;
        let p = Plane::new(176, 176, (0..176 * 176).map(|i| ((i * 37) % 101) as f64 / 100.0).collect());
        assert_eq!(ms_ssim(&p, &p, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn pyramid_sizes() {
        let p = Plane::filled(176, 180, 0.0);
        let sizes: Vec<_> = lowpass_pyramid(&p, 5).iter().map(|l| (l.width, l.height)).collect();
        assert_eq!(sizes, vec![(176, 180), (88, 90), (44, 45), (22, 23), (11, 12)]);
    }
}
