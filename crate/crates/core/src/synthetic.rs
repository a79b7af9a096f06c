//! Procedural content for desk-scale runs and tests: a layered scene with
//! smooth shading, fractal texture and occluding edges, rendered from a grid
//! of viewpoints so nearer layers shift between views.

use crate::lightfield::{BitDepth, LightField, View};

fn hash(x: i64, y: i64, seed: u64) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 31;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 29;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (tx, ty) = (smooth(x - x0), smooth(y - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = hash(ix, iy, seed);
    let b = hash(ix + 1, iy, seed);
    let c = hash(ix, iy + 1, seed);
    let d = hash(ix + 1, iy + 1, seed);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * ty
}

/// Fractal noise in roughly `[0,1]`.
fn fbm(x: f64, y: f64, seed: u64) -> f64 {
    let mut total = 0.0;
    let mut amp = 0.5;
    let mut freq = 1.0;
    let mut norm = 0.0;
    for octave in 0..5 {
        total += amp * value_noise(x * freq, y * freq, seed.wrapping_add(octave));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    total / norm
}

fn scene(x: f64, y: f64, w: f64, h: f64, seed: u64, shift: (f64, f64)) -> [f64; 3] {
    let (u, v) = (x / w, y / h);
    // far layer: shaded backdrop with texture, no parallax
    let tex = fbm(x / 12.0, y / 12.0, seed);
    let mut rgb = [
        0.25 + 0.35 * v + 0.25 * tex,
        0.35 + 0.2 * u + 0.3 * tex,
        0.55 - 0.2 * v + 0.2 * tex,
    ];
    // middle layer: striped panel, one unit of disparity
    let (mx, my) = (x + shift.0, y + shift.1);
    if mx > 0.15 * w && mx < 0.55 * w && my > 0.2 * h && my < 0.7 * h {
        let stripes = 0.5 + 0.5 * ((mx + 0.5 * my) * 0.6).sin();
        let grain = fbm(mx / 4.0, my / 4.0, seed ^ 0xA5);
        rgb = [0.6 + 0.25 * stripes, 0.3 + 0.2 * grain, 0.2 + 0.15 * stripes];
    }
    // near layer: disc, two units of disparity
    let (nx, ny) = (x + 2.0 * shift.0, y + 2.0 * shift.1);
    let (cx, cy, r) = (0.65 * w, 0.6 * h, 0.2 * w.min(h));
    let d = ((nx - cx).powi(2) + (ny - cy).powi(2)).sqrt();
    if d < r {
        let shade = 1.0 - 0.5 * (d / r).powi(2);
        let spots = fbm(nx / 3.0, ny / 3.0, seed ^ 0x5A);
        rgb = [0.2 * shade, 0.45 * shade + 0.3 * spots, 0.7 * shade];
    }
    rgb.map(|c| c.clamp(0.02, 0.98))
}

/// One 8-bit view of the scene seen from `shift` (pixels of disparity per layer unit).
pub fn render_view(width: usize, height: usize, seed: u64, shift: (f64, f64)) -> View {
    let mut codes = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let px = scene(x as f64, y as f64, width as f64, height as f64, seed, shift);
            codes.extend(px.map(|c| (c * 255.0).round() as u32));
        }
    }
    View::from_codes(width, height, BitDepth::Eight, &codes).expect("codes within 8 bits")
}

/// A single natural-looking test image.
pub fn natural_image(width: usize, height: usize, seed: u64) -> View {
    render_view(width, height, seed, (0.0, 0.0))
}

/// A `rows x cols` light field with `disparity` pixels of shift per view
/// step for the middle layer (twice that for the near layer).
pub fn synthetic_light_field(
    content_id: &str,
    rows: usize,
    cols: usize,
    width: usize,
    height: usize,
    disparity: f64,
    seed: u64,
) -> LightField {
    let (cr, cc) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let views = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            render_view(width, height, seed, ((c - cc) * disparity, (r - cr) * disparity))
        })
        .collect();
    LightField::new(content_id, rows, cols, views).expect("uniform synthetic grid")
}

/// Every view identical.
pub fn constant_light_field(content_id: &str, rows: usize, cols: usize, width: usize, height: usize, seed: u64) -> LightField {
    let v = natural_image(width, height, seed);
    LightField::new(content_id, rows, cols, vec![v; rows * cols]).expect("uniform grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_parallax() {
        let a = synthetic_light_field("s", 3, 3, 32, 32, 1.0, 7);
        let b = synthetic_light_field("s", 3, 3, 32, 32, 1.0, 7);
        assert_eq!(a, b);
        assert_ne!(a.view(0, 0), a.view(0, 2));
        assert!(natural_image(16, 16, 1).samples().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
