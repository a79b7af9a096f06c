use super::{MetricError, Result};

/// A single-channel image of reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer does not match {width}x{height}");
        Plane { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        debug_assert!(self.same_size(other));
        Plane::new(
            self.width,
            self.height,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn same_size(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Crops `margin` pixels from every side.
    pub fn shrink(&self, margin: usize) -> Plane {
        let w = self.width - 2 * margin;
        let h = self.height - 2 * margin;
        let mut out = Vec::with_capacity(w * h);
        for y in margin..margin + h {
            out.extend_from_slice(&self.data[y * self.width + margin..y * self.width + margin + w]);
        }
        Plane::new(w, h, out)
    }
}

pub(crate) fn check_same_size(a: &Plane, b: &Plane) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(MetricError::DimensionMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        })
    }
}

/// Half-sample symmetric reflection of index `i` into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Normalized 1-D Gaussian taps of odd length `size`.
pub(crate) fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable correlation keeping only fully-covered positions.
pub(crate) fn filter_valid(p: &Plane, taps: &[f64]) -> Plane {
    let k = taps.len();
    let w = p.width + 1 - k;
    let h = p.height + 1 - k;
    let mut rows = vec![0.0; w * p.height];
    for y in 0..p.height {
        let src = &p.data[y * p.width..(y + 1) * p.width];
        for x in 0..w {
            rows[y * w + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, t) in taps.iter().enumerate() {
                acc += t * rows[(y + j) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Plane::new(w, h, out)
}

/// Same-size 2-D correlation with symmetric boundary extension. The kernel
/// is `kh x kw`, row-major, anchored at `(kh/2, kw/2)`.
pub(crate) fn filter_same(p: &Plane, kernel: &[f64], kw: usize, kh: usize) -> Plane {
    let ax = (kw / 2) as isize;
    let ay = (kh / 2) as isize;
    let mut out = vec![0.0; p.width * p.height];
    for y in 0..p.height {
        for x in 0..p.width {
            let mut acc = 0.0;
            for j in 0..kh {
                let sy = reflect(y as isize + j as isize - ay, p.height);
                for i in 0..kw {
                    let sx = reflect(x as isize + i as isize - ax, p.width);
                    acc += kernel[j * kw + i] * p.data[sy * p.width + sx];
                }
            }
            out[y * p.width + x] = acc;
        }
    }
    Plane::new(p.width, p.height, out)
}

/// 2x2 box average (symmetric extension at the far edges) followed by
/// keeping every other sample; output is `ceil(n/2)` per axis.
pub(crate) fn downsample_box2(p: &Plane) -> Plane {
    let w = p.width.div_ceil(2);
    let h = p.height.div_ceil(2);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let y0 = 2 * y;
        let y1 = reflect(y0 as isize + 1, p.height);
        for x in 0..w {
            let x0 = 2 * x;
            let x1 = reflect(x0 as isize + 1, p.width);
            out.push((p.at(x0, y0) + p.at(x1, y0) + p.at(x0, y1) + p.at(x1, y1)) / 4.0);
        }
    }
    Plane::new(w, h, out)
}

/// Pixel-replication upsampling to an explicit target size.
pub(crate) fn expand_to(p: &Plane, width: usize, height: usize) -> Plane {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy = (y / 2).min(p.height - 1);
        for x in 0..width {
            out.push(p.at((x / 2).min(p.width - 1), sy));
        }
    }
    Plane::new(width, height, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_is_half_sample_symmetric() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }

    #[test]
    fn gaussian_taps_normalized_and_symmetric() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..5 {
            assert_eq!(t[i], t[10 - i]);
        }
    }

    #[test]
    fn valid_filter_of_constant_is_constant() {
        let p = Plane::filled(20, 15, 0.25);
        let f = filter_valid(&p, &gaussian_taps(11, 1.5));
        assert_eq!((f.width, f.height), (10, 5));
        assert!(f.data.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn box_downsample_odd_edge() {
        let p = Plane::new(3, 1, vec![1.0, 3.0, 5.0]);
        let d = downsample_box2(&p);
        assert_eq!(d.data, vec![2.0, 5.0]);
    }
}
