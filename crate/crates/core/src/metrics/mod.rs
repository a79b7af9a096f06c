//! Full-reference objective quality metrics.
//!
//! PSNR, PSNR-HVS, MS-SSIM and IW-SSIM operate on BT.709 luma; FSIMc uses
//! all three color channels. Inputs are the normalized `[0,1]` samples of a
//! [`View`], whatever the source bit depth.

mod config;
mod fsim;
mod iw_ssim;
mod ms_ssim;
mod plane;
mod psnr;

pub use config::{FsimConfig, IwSsimConfig, MetricConfig, MsSsimConfig, PsnrHvsConfig};
pub use fsim::{fsim_luma, fsim_scores, fsimc, FsimScores};
pub use iw_ssim::iw_ssim;
pub use ms_ssim::ms_ssim;
pub use plane::Plane;
pub use psnr::{psnr, psnr_hvs};

use crate::lightfield::{classify_view, LightField, View, ViewType};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Value reported by the PSNR family for identical inputs.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("{width}x{height} is too small for {scales} scales (need {needed} on the short side)")]
    TooSmall {
        width: usize,
        height: usize,
        needed: usize,
        scales: usize,
    },
    #[error("light field geometry mismatch")]
    GeometryMismatch,
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("metric config: {0}")]
    Config(String),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    PsnrHvs,
    MsSsim,
    Fsimc,
    IwSsim,
    Psnr,
}

impl MetricId {
    pub const ALL: [MetricId; 5] = [
        MetricId::PsnrHvs,
        MetricId::MsSsim,
        MetricId::Fsimc,
        MetricId::IwSsim,
        MetricId::Psnr,
    ];

    /// The four metrics benchmarked against subjective scores.
    pub const BENCHMARKED: [MetricId; 4] = [MetricId::PsnrHvs, MetricId::MsSsim, MetricId::Fsimc, MetricId::IwSsim];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::PsnrHvs => "psnr_hvs",
            MetricId::MsSsim => "ms_ssim",
            MetricId::Fsimc => "fsimc",
            MetricId::IwSsim => "iw_ssim",
            MetricId::Psnr => "psnr",
        }
    }

    /// Score attained when the test equals the reference.
    pub fn identity_value(self) -> f64 {
        match self {
            MetricId::PsnrHvs | MetricId::Psnr => PSNR_CAP_DB,
            _ => 1.0,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| MetricError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: MetricId,
    pub value: f64,
    /// Per-channel values where the metric has them (FSIMc: `[fsim, fsimc]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<f64>>,
}

/// BT.709 luma.
pub fn to_luma(view: &View) -> Plane {
    let data = view
        .samples()
        .chunks_exact(3)
        .map(|p| 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2])
        .collect();
    Plane::new(view.width(), view.height(), data)
}

/// Evaluates one metric on a pair of views.
pub fn compute(metric: MetricId, reference: &View, test: &View, cfg: &MetricConfig) -> Result<MetricResult> {
    if !reference.same_geometry(test) {
        return Err(MetricError::DimensionMismatch {
            a: (reference.width(), reference.height()),
            b: (test.width(), test.height()),
        });
    }
    let (value, channels) = match metric {
        MetricId::Fsimc => {
            let s = fsim_scores(reference, test, &cfg.fsimc)?;
            (s.fsimc, Some(vec![s.fsim, s.fsimc]))
        }
        _ => {
            let (a, b) = (to_luma(reference), to_luma(test));
            let v = match metric {
                MetricId::Psnr => psnr(&a, &b)?,
                MetricId::PsnrHvs => psnr_hvs(&a, &b, &cfg.psnr_hvs)?,
                MetricId::MsSsim => ms_ssim(&a, &b, &cfg.ms_ssim)?,
                MetricId::IwSsim => iw_ssim(&a, &b, cfg)?,
                MetricId::Fsimc => unreachable!(),
            };
            (v, None)
        }
    };
    Ok(MetricResult { metric, value, channels })
}

/// Per-view scores of one metric over a light field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightFieldScores {
    pub metric: MetricId,
    pub rows: usize,
    pub cols: usize,
    /// Row-major per-view results.
    pub grid: Vec<MetricResult>,
    pub mean: f64,
    pub per_type: BTreeMap<ViewType, f64>,
}

impl LightFieldScores {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.cols + col].value
    }

    /// Grid of plain values, row-major.
    pub fn values(&self) -> Vec<f64> {
        self.grid.iter().map(|r| r.value).collect()
    }
}

pub fn score_light_field(
    reference: &LightField,
    test: &LightField,
    metric: MetricId,
    cfg: &MetricConfig,
) -> Result<LightFieldScores> {
    if !reference.same_geometry(test) {
        return Err(MetricError::GeometryMismatch);
    }
    let grid = reference
        .views()
        .par_iter()
        .zip(test.views().par_iter())
        .map(|(r, t)| compute(metric, r, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mean = grid.iter().map(|r| r.value).sum::<f64>() / grid.len() as f64;
    let mut sums: BTreeMap<ViewType, (f64, usize)> = BTreeMap::new();
    for (i, r) in grid.iter().enumerate() {
        let e = sums
            .entry(classify_view(i / reference.cols(), i % reference.cols()))
            .or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    Ok(LightFieldScores {
        metric,
        rows: reference.rows(),
        cols: reference.cols(),
        grid,
        mean,
        per_type: sums.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::BitDepth;

    fn rgb(r: f64, g: f64, b: f64) -> View {
        View::new(1, 1, BitDepth::Eight, vec![r, g, b]).unwrap()
    }

    #[test]
    fn luma_examples() {
        assert!((to_luma(&rgb(1.0, 1.0, 1.0)).data[0] - 1.0).abs() < 1e-15);
        assert_eq!(to_luma(&rgb(0.0, 1.0, 0.0)).data[0], 0.7152);
        assert_eq!(to_luma(&rgb(0.0, 0.0, 0.0)).data[0], 0.0);
    }

    #[test]
    fn metric_names_parse() {
        for m in MetricId::ALL {
            assert_eq!(m.as_str().parse::<MetricId>().unwrap(), m);
        }
        assert_eq!("PSNR-HVS".parse::<MetricId>().unwrap(), MetricId::PsnrHvs);
        assert!("vmaf".parse::<MetricId>().is_err());
    }
}
