use super::config::PsnrHvsConfig;
use super::plane::{check_same_size, reflect, Plane};
use super::{Result, PSNR_CAP_DB};
use crate::dct;

fn mse_to_db(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// PSNR on normalized samples (peak 1), capped at 100 dB.
pub fn psnr(reference: &Plane, test: &Plane) -> Result<f64> {
    check_same_size(reference, test)?;
    let se: f64 = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(mse_to_db(se / reference.data.len() as f64))
}

/// PSNR-HVS: mean squared error of CSF-weighted 8x8 DCT coefficients over
/// non-overlapping blocks. Sides that are not a multiple of 8 are extended
/// symmetrically.
pub fn psnr_hvs(reference: &Plane, test: &Plane, cfg: &PsnrHvsConfig) -> Result<f64> {
    check_same_size(reference, test)?;
    let bw = reference.width.div_ceil(8);
    let bh = reference.height.div_ceil(8);
    let mut acc = 0.0;
    for by in 0..bh {
        for bx in 0..bw {
            let a = dct::forward(&block(reference, bx, by));
            let b = dct::forward(&block(test, bx, by));
            for v in 0..8 {
                for u in 0..8 {
                    let e = (a[v][u] - b[v][u]) * cfg.csf[v][u];
                    acc += e * e;
                }
            }
        }
    }
    Ok(mse_to_db(acc / (bw * bh * 64) as f64))
}

fn block(p: &Plane, bx: usize, by: usize) -> dct::Block {
    let mut out = [[0.0; 8]; 8];
    for (i, row) in out.iter_mut().enumerate() {
        let y = reflect((by * 8 + i) as isize, p.height);
        for (j, v) in row.iter_mut().enumerate() {
            *v = p.at(reflect((bx * 8 + j) as isize, p.width), y);
        }
    }
    out
}
