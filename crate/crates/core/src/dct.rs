//! Orthonormal 8x8 type-II DCT shared by PSNR-HVS and the stand-in codec.

use std::sync::OnceLock;

pub type Block = [[f64; 8]; 8];

fn basis() -> &'static Block {
    static BASIS: OnceLock<Block> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (k, row) in c.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
            }
        }
        c
    })
}

/// `C * x * C^T`; `out[v][u]` is vertical frequency `v`, horizontal `u`.
pub fn forward(x: &Block) -> Block {
    let c = basis();
    let mut tmp = [[0.0; 8]; 8];
    for v in 0..8 {
        for n in 0..8 {
            tmp[v][n] = (0..8).map(|m| c[v][m] * x[m][n]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for v in 0..8 {
        for u in 0..8 {
            out[v][u] = (0..8).map(|n| tmp[v][n] * c[u][n]).sum();
        }
    }
    out
}

/// `C^T * y * C`.
pub fn inverse(y: &Block) -> Block {
    let c = basis();
    let mut tmp = [[0.0; 8]; 8];
    for m in 0..8 {
        for u in 0..8 {
            tmp[m][u] = (0..8).map(|v| c[v][m] * y[v][u]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for m in 0..8 {
        for n in 0..8 {
            out[m][n] = (0..8).map(|u| tmp[m][u] * c[u][n]).sum();
        }
    }
    out
}
