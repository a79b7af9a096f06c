use super::{BitDepth, LightFieldError, Result, View};
use std::io::{BufWriter, Write};
use std::path::Path;

/// On-disk container for a single view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary P6; one byte per sample at 8 bits, two (big endian) otherwise.
    Ppm,
    /// 8-bit or 16-bit RGB PNG.
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ppm") | Some("pnm") => Ok(ImageFormat::Ppm),
            Some("png") => Ok(ImageFormat::Png),
            _ => Err(LightFieldError::Decode {
                path: path.to_path_buf(),
                reason: "unknown image extension".into(),
            }),
        }
    }
}

/// Reads one view. `declared` is the capture depth when it is lower than the
/// container depth (e.g. 10-bit codes stored in 16-bit samples); codes are
/// then scaled by `1/(2^declared - 1)`.
pub fn load_view(path: &Path, declared: Option<BitDepth>) -> Result<View> {
    let (width, height, container, codes) = match ImageFormat::from_path(path)? {
        ImageFormat::Ppm => read_ppm(path)?,
        ImageFormat::Png => read_png(path)?,
    };
    let depth = match declared {
        Some(d) if d.bits() > container.bits() => {
            return Err(LightFieldError::Decode {
                path: path.to_path_buf(),
                reason: format!("{}-bit content in a {}-bit container", d.bits(), container.bits()),
            })
        }
        Some(d) => d,
        None => container,
    };
    View::from_codes(width, height, depth, &codes).map_err(|e| LightFieldError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes a view losslessly at its recorded depth.
pub fn save_view(view: &View, path: &Path, format: ImageFormat) -> Result<()> {
    let codes = view.to_codes();
    match format {
        ImageFormat::Ppm => write_ppm(path, view.width(), view.height(), view.bit_depth(), &codes),
        ImageFormat::Png => write_png(path, view.width(), view.height(), view.bit_depth(), &codes),
    }
}

fn decode_err(path: &Path, reason: impl Into<String>) -> LightFieldError {
    LightFieldError::Decode {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_ppm(path: &Path) -> Result<(usize, usize, BitDepth, Vec<u32>)> {
    let data = std::fs::read(path)?;
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments between header fields
        while pos < data.len() {
            if data[pos].is_ascii_whitespace() {
                pos += 1;
            } else if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(decode_err(path, "truncated header"));
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| decode_err(path, "bad header"))?);
    }
    if fields[0] != "P6" {
        return Err(decode_err(path, format!("magic {:?} is not P6", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| decode_err(path, format!("bad header field {s:?}")));
    let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    let depth = match maxval {
        255 => BitDepth::Eight,
        1023 => BitDepth::Ten,
        65535 => BitDepth::Sixteen,
        other => return Err(LightFieldError::UnsupportedBitDepth(usize::BITS - other.leading_zeros())),
    };
    pos += 1; // single whitespace after maxval
    let n = width * height * 3;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let body = data
        .get(pos..pos + n * bytes_per)
        .ok_or_else(|| decode_err(path, "truncated pixel data"))?;
    let codes: Vec<u32> = if bytes_per == 1 {
        body.iter().map(|&b| u32::from(b)).collect()
    } else {
        body.chunks_exact(2).map(|p| u32::from(u16::from_be_bytes([p[0], p[1]]))).collect()
    };
    Ok((width, height, depth, codes))
}

fn write_ppm(path: &Path, width: usize, height: usize, depth: BitDepth, codes: &[u32]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P6\n{} {}\n{}\n", width, height, depth.max_code())?;
    if depth == BitDepth::Eight {
        out.write_all(&codes.iter().map(|&c| c as u8).collect::<Vec<_>>())?;
    } else {
        for &c in codes {
            out.write_all(&(c as u16).to_be_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_png(path: &Path) -> Result<(usize, usize, BitDepth, Vec<u32>)> {
    let img = image::open(path).map_err(|e| decode_err(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    use image::DynamicImage::*;
    Ok(match img {
        ImageRgb8(_) | ImageLuma8(_) | ImageLumaA8(_) | ImageRgba8(_) => {
            let rgb = img.to_rgb8();
            (w, h, BitDepth::Eight, rgb.into_raw().into_iter().map(u32::from).collect())
        }
        _ => {
            let rgb = img.to_rgb16();
            (w, h, BitDepth::Sixteen, rgb.into_raw().into_iter().map(u32::from).collect())
        }
    })
}

fn write_png(path: &Path, width: usize, height: usize, depth: BitDepth, codes: &[u32]) -> Result<()> {
    let (w, h) = (width as u32, height as u32);
    let result = if depth == BitDepth::Eight {
        let buf = image::RgbImage::from_raw(w, h, codes.iter().map(|&c| c as u8).collect())
            .expect("buffer matches geometry");
        buf.save_with_format(path, image::ImageFormat::Png)
    } else {
        let buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::from_raw(w, h, codes.iter().map(|&c| c as u16).collect())
            .expect("buffer matches geometry");
        buf.save_with_format(path, image::ImageFormat::Png)
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => LightFieldError::Io(io),
        other => decode_err(path, other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_view(depth: BitDepth, seed: u64) -> View {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let codes: Vec<u32> = (0..7 * 5 * 3).map(|_| rng.random_range(0..=depth.max_code())).collect();
        View::from_codes(7, 5, depth, &codes).unwrap()
    }

    #[test]
    fn round_trips_all_depths_and_formats() {
        let dir = tempfile::tempdir().unwrap();
        for (i, depth) in [BitDepth::Eight, BitDepth::Ten, BitDepth::Sixteen].into_iter().enumerate() {
            for (ext, fmt) in [("ppm", ImageFormat::Ppm), ("png", ImageFormat::Png)] {
                let v = random_view(depth, i as u64);
                let path = dir.path().join(format!("v{i}.{ext}"));
                save_view(&v, &path, fmt).unwrap();
                let back = load_view(&path, Some(depth)).unwrap();
                assert_eq!(back, v, "{depth:?} {ext}");
            }
        }
    }

    #[test]
    fn ten_bit_ppm_loads_without_hint() {
        let dir = tempfile::tempdir().unwrap();
        let v = random_view(BitDepth::Ten, 9);
        let path = dir.path().join("v.ppm");
        save_view(&v, &path, ImageFormat::Ppm).unwrap();
        assert_eq!(load_view(&path, None).unwrap(), v);
    }

    #[test]
    fn ten_bit_codes_in_sixteen_bit_container_scale_by_1023() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.ppm");
        // 16-bit container whose samples are raw 10-bit codes
        let mut bytes = b"P6\n1 1\n65535\n".to_vec();
        for c in [1023u16, 0, 512] {
            bytes.extend_from_slice(&c.to_be_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let v = load_view(&path, Some(BitDepth::Ten)).unwrap();
        assert_eq!(v.bit_depth(), BitDepth::Ten);
        assert_eq!(v.samples(), &[1.0, 0.0, 512.0 / 1023.0]);
        let as16 = load_view(&path, None).unwrap();
        assert_eq!(as16.samples()[0], 1023.0 / 65535.0);
    }

    #[test]
    fn ppm_comments_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        std::fs::write(&path, b"P6\n# comment\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(load_view(&path, None).unwrap().to_codes(), vec![1, 2, 3]);
        std::fs::write(&path, b"P6\n2 2\n255\n\x01").unwrap();
        assert!(load_view(&path, None).is_err());
        std::fs::write(&path, b"P3\n1 1\n255\n1 2 3").unwrap();
        assert!(load_view(&path, None).is_err());
        std::fs::write(&path, b"P6\n1 1\n4095\n\x00\x01\x00\x01\x00\x01").unwrap();
        assert!(matches!(load_view(&path, None), Err(LightFieldError::UnsupportedBitDepth(12))));
    }

    #[test]
    fn write_to_missing_directory_fails() {
        let v = random_view(BitDepth::Eight, 1);
        let path = Path::new("/nonexistent-dir/sub/v.ppm");
        assert!(save_view(&v, path, ImageFormat::Ppm).is_err());
        assert!(save_view(&v, &path.with_extension("png"), ImageFormat::Png).is_err());
    }
}
