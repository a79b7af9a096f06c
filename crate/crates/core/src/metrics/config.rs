//! Parameter tables for the objective metrics. Defaults are compiled in from
//! `data/metrics/`; a directory with the same file names overrides them.

use super::{MetricError, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

const CSF_FILE: &str = "psnr_hvs_csf.csv";
const MS_SSIM_FILE: &str = "ms_ssim.json";
const IW_SSIM_FILE: &str = "iw_ssim.json";
const FSIMC_FILE: &str = "fsimc.json";

const DEFAULT_CSF: &str = include_str!("../../data/metrics/psnr_hvs_csf.csv");
const DEFAULT_MS_SSIM: &str = include_str!("../../data/metrics/ms_ssim.json");
const DEFAULT_IW_SSIM: &str = include_str!("../../data/metrics/iw_ssim.json");
const DEFAULT_FSIMC: &str = include_str!("../../data/metrics/fsimc.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnrHvsConfig {
    /// `csf[v][u]` weights the DCT coefficient at vertical frequency `v`.
    pub csf: [[f64; 8]; 8],
}

impl PsnrHvsConfig {
    pub fn unit() -> Self {
        PsnrHvsConfig { csf: [[1.0; 8]; 8] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsSsimConfig {
    #[serde(default)]
    pub version: u32,
    #[serde(default)]
    pub source: String,
    pub scale_weights: Vec<f64>,
    pub window_size: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl MsSsimConfig {
    pub fn scales(&self) -> usize {
        self.scale_weights.len()
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Smallest image side the pyramid supports without shrinking below the window.
    pub fn min_dimension(&self) -> usize {
        self.window_size << (self.scales() - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwSsimConfig {
    #[serde(default)]
    pub version: u32,
    #[serde(default)]
    pub source: String,
    /// When false every pixel gets unit weight and the metric degenerates to MS-SSIM.
    pub information_weighting: bool,
    pub block_size: usize,
    pub use_parent: bool,
    /// Visual noise variance of the channel model, in `intensity_scale` units.
    pub noise_variance: f64,
    pub intensity_scale: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsimConfig {
    #[serde(default)]
    pub version: u32,
    #[serde(default)]
    pub source: String,
    pub scales: usize,
    pub orientations: usize,
    pub min_wavelength: f64,
    pub mult: f64,
    pub sigma_on_f: f64,
    pub d_theta_on_sigma: f64,
    pub noise_k: f64,
    pub noise_divisor: f64,
    pub epsilon: f64,
    pub lowpass_cutoff: f64,
    pub lowpass_order: i32,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub lambda: f64,
    pub intensity_scale: f64,
    pub auto_downsample: bool,
}

/// Immutable bundle of every metric's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub psnr_hvs: PsnrHvsConfig,
    pub ms_ssim: MsSsimConfig,
    pub iw_ssim: IwSsimConfig,
    pub fsimc: FsimConfig,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig::from_sources(DEFAULT_CSF, DEFAULT_MS_SSIM, DEFAULT_IW_SSIM, DEFAULT_FSIMC)
            .expect("bundled metric tables are valid")
    }
}

impl MetricConfig {
    /// Loads tables from `dir`; any file that is absent keeps its default.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str, default: &'static str| -> Result<String> {
            let p = dir.join(name);
            if p.exists() {
                std::fs::read_to_string(&p).map_err(|e| MetricError::Config(format!("{}: {e}", p.display())))
            } else {
                Ok(default.to_string())
            }
        };
        MetricConfig::from_sources(
            &read(CSF_FILE, DEFAULT_CSF)?,
            &read(MS_SSIM_FILE, DEFAULT_MS_SSIM)?,
            &read(IW_SSIM_FILE, DEFAULT_IW_SSIM)?,
            &read(FSIMC_FILE, DEFAULT_FSIMC)?,
        )
    }

    pub fn from_sources(csf: &str, ms_ssim: &str, iw_ssim: &str, fsimc: &str) -> Result<Self> {
        let json_err = |what: &str, e: serde_json::Error| MetricError::Config(format!("{what}: {e}"));
        let mut cfg = MetricConfig {
            psnr_hvs: PsnrHvsConfig { csf: parse_csf(csf)? },
            ms_ssim: serde_json::from_str(ms_ssim).map_err(|e| json_err(MS_SSIM_FILE, e))?,
            iw_ssim: serde_json::from_str(iw_ssim).map_err(|e| json_err(IW_SSIM_FILE, e))?,
            fsimc: serde_json::from_str(fsimc).map_err(|e| json_err(FSIMC_FILE, e))?,
        };
        let sum: f64 = cfg.ms_ssim.scale_weights.iter().sum();
        if cfg.ms_ssim.scale_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(MetricError::Config("scale weights must be positive".into()));
        }
        // The published five-scale weights sum to 1.0001.
        for w in &mut cfg.ms_ssim.scale_weights {
            *w /= sum;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MetricError::Config(m.to_string()));
        if self.psnr_hvs.csf.iter().flatten().any(|&v| !(v > 0.0)) {
            return bad("CSF weights must be positive");
        }
        let m = &self.ms_ssim;
        if m.scale_weights.is_empty() {
            return bad("at least one MS-SSIM scale is required");
        }
        if (m.scale_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("MS-SSIM scale weights must sum to 1");
        }
        if m.window_size.is_multiple_of(2) || m.window_size == 0 || !(m.window_sigma > 0.0) {
            return bad("SSIM window must be odd with positive sigma");
        }
        if !(m.k1 > 0.0 && m.k2 > 0.0 && m.dynamic_range > 0.0) {
            return bad("SSIM stabilization constants must be positive");
        }
        let iw = &self.iw_ssim;
        if iw.block_size.is_multiple_of(2) || iw.block_size > m.window_size || !(iw.noise_variance > 0.0) {
            return bad("IW-SSIM block must be odd, no larger than the SSIM window, with positive noise variance");
        }
        let f = &self.fsimc;
        if f.scales == 0 || f.orientations == 0 || !(f.t1 > 0.0 && f.t2 > 0.0 && f.t3 > 0.0 && f.t4 > 0.0) {
            return bad("FSIM scales/orientations and T constants must be positive");
        }
        Ok(())
    }
}

fn parse_csf(text: &str) -> Result<[[f64; 8]; 8]> {
    let mut out = [[0.0; 8]; 8];
    let rows: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if rows.len() != 8 {
        return Err(MetricError::Config(format!("CSF table has {} rows, expected 8", rows.len())));
    }
    for (r, line) in rows.iter().enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| MetricError::Config(format!("CSF row {r}: {e}")))?;
        if vals.len() != 8 {
            return Err(MetricError::Config(format!("CSF row {r} has {} columns", vals.len())));
        }
        out[r].copy_from_slice(&vals);
    }
    Ok(out)
}
