//! Light field data model: a grid of sub-aperture views with a shared
//! geometry and bit depth, plus the grid operations used to derive the
//! stimulus conditions (centered crop, parity sampling, view typing).

mod io;
mod layout;

pub use io::{load_view, save_view, ImageFormat};
pub use layout::Layout;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum LightFieldError {
    #[error("missing view file for coordinate ({row},{col}): {path}")]
    MissingView { row: usize, col: usize, path: PathBuf },
    #[error("view ({row},{col}) is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    MixedDimensions {
        row: usize,
        col: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("unsupported bit depth {0}")]
    UnsupportedBitDepth(u32),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("crop {target_rows}x{target_cols} is not centerable in {rows}x{cols}")]
    NonCenterableCrop {
        rows: usize,
        cols: usize,
        target_rows: usize,
        target_cols: usize,
    },
    #[error("crop {target_rows}x{target_cols} exceeds source {rows}x{cols}")]
    CropTooLarge {
        rows: usize,
        cols: usize,
        target_rows: usize,
        target_cols: usize,
    },
    #[error("parity sampling needs an odd square grid of at least 5x5, got {rows}x{cols}")]
    BadSparseGrid { rows: usize, cols: usize },
    #[error("malformed image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("invalid view: {0}")]
    InvalidView(String),
    #[error("invalid layout pattern {0:?}")]
    Layout(String),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LightFieldError> = std::result::Result<T, E>;

/// Sample precision of the captured content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum BitDepth {
    Eight,
    Ten,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Ten => 10,
            BitDepth::Sixteen => 16,
        }
    }

    /// Largest integer code, `2^bits - 1`.
    pub fn max_code(self) -> u32 {
        (1u32 << self.bits()) - 1
    }
}

impl TryFrom<u32> for BitDepth {
    type Error = LightFieldError;

    fn try_from(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            10 => Ok(BitDepth::Ten),
            16 => Ok(BitDepth::Sixteen),
            other => Err(LightFieldError::UnsupportedBitDepth(other)),
        }
    }
}

impl From<BitDepth> for u32 {
    fn from(b: BitDepth) -> u32 {
        b.bits()
    }
}

/// One RGB sub-aperture image. Samples are interleaved `R,G,B` in row-major
/// order and normalized to `[0,1]` by the recorded bit depth.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    width: usize,
    height: usize,
    bit_depth: BitDepth,
    samples: Vec<f64>,
}

impl View {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, bit_depth: BitDepth, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(LightFieldError::InvalidView("zero-sized view".into()));
        }
        if samples.len() != width * height * Self::CHANNELS {
            return Err(LightFieldError::InvalidView(format!(
                "{} samples for {}x{}x3",
                samples.len(),
                width,
                height
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(LightFieldError::InvalidView(format!("sample {bad} outside [0,1]")));
        }
        Ok(View {
            width,
            height,
            bit_depth,
            samples,
        })
    }

    /// A view with every channel of every pixel set to `value`.
    pub fn filled(width: usize, height: usize, bit_depth: BitDepth, value: f64) -> Result<Self> {
        View::new(width, height, bit_depth, vec![value; width * height * Self::CHANNELS])
    }

    /// Builds a view from integer codes at the given depth.
    pub fn from_codes(width: usize, height: usize, bit_depth: BitDepth, codes: &[u32]) -> Result<Self> {
        let max = bit_depth.max_code();
        if let Some(c) = codes.iter().find(|&&c| c > max) {
            return Err(LightFieldError::InvalidView(format!("code {c} exceeds {max}")));
        }
        let scale = f64::from(max);
        View::new(
            width,
            height,
            bit_depth,
            codes.iter().map(|&c| f64::from(c) / scale).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Integer codes at the recorded depth, rounding to nearest.
    pub fn to_codes(&self) -> Vec<u32> {
        let scale = f64::from(self.bit_depth.max_code());
        self.samples.iter().map(|&v| (v * scale).round() as u32).collect()
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.iter().skip(c).step_by(Self::CHANNELS).copied().collect()
    }

    pub fn same_geometry(&self, other: &View) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Position class of a view in the (cropped) grid, by coordinate parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewType {
    /// Directly coded view: both coordinates even.
    S,
    /// First-generation synthesized: exactly one coordinate odd.
    X,
    /// Second-generation synthesized: both coordinates odd.
    O,
}

impl ViewType {
    pub const ALL: [ViewType; 3] = [ViewType::S, ViewType::X, ViewType::O];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewType::S => "S",
            ViewType::X => "X",
            ViewType::O => "O",
        }
    }
}

impl fmt::Display for ViewType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_view(row: usize, col: usize) -> ViewType {
    match (row % 2, col % 2) {
        (0, 0) => ViewType::S,
        (1, 1) => ViewType::O,
        _ => ViewType::X,
    }
}

/// The unit of content: a fully populated grid of equally sized views.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    content_id: String,
    rows: usize,
    cols: usize,
    bit_depth: BitDepth,
    views: Vec<View>,
}

impl LightField {
    /// `views` are in row-major grid order.
    pub fn new(content_id: impl Into<String>, rows: usize, cols: usize, views: Vec<View>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LightFieldError::InvalidGrid(format!("{rows}x{cols}")));
        }
        if views.len() != rows * cols {
            return Err(LightFieldError::InvalidGrid(format!(
                "{} views for a {rows}x{cols} grid",
                views.len()
            )));
        }
        let first = &views[0];
        for (i, v) in views.iter().enumerate() {
            if !v.same_geometry(first) {
                return Err(LightFieldError::MixedDimensions {
                    row: i / cols,
                    col: i % cols,
                    got_w: v.width,
                    got_h: v.height,
                    want_w: first.width,
                    want_h: first.height,
                });
            }
            if v.bit_depth != first.bit_depth {
                return Err(LightFieldError::InvalidGrid(format!(
                    "view ({},{}) has bit depth {}, expected {}",
                    i / cols,
                    i % cols,
                    v.bit_depth.bits(),
                    first.bit_depth.bits()
                )));
            }
        }
        Ok(LightField {
            content_id: content_id.into(),
            rows,
            cols,
            bit_depth: first.bit_depth,
            views,
        })
    }

    pub fn content_id(&self) -> &str {
        &self.content_id
    }

    pub fn with_content_id(mut self, content_id: impl Into<String>) -> Self {
        self.content_id = content_id.into();
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn view_width(&self) -> usize {
        self.views[0].width
    }

    pub fn view_height(&self) -> usize {
        self.views[0].height
    }

    pub fn view(&self, row: usize, col: usize) -> &View {
        assert!(row < self.rows && col < self.cols, "({row},{col}) outside grid");
        &self.views[row * self.cols + col]
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn into_views(self) -> Vec<View> {
        self.views
    }

    /// Iterates `(row, col, view)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &View)> {
        let cols = self.cols;
        self.views.iter().enumerate().map(move |(i, v)| (i / cols, i % cols, v))
    }

    pub fn same_geometry(&self, other: &LightField) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.views[0].same_geometry(&other.views[0])
    }

    fn subgrid(&self, rows: impl Iterator<Item = usize> + Clone, cols: impl Iterator<Item = usize> + Clone) -> LightField {
        let mut views = Vec::new();
        let mut n_rows = 0;
        let mut n_cols = 0;
        for r in rows {
            n_rows += 1;
            n_cols = 0;
            for c in cols.clone() {
                n_cols += 1;
                views.push(self.view(r, c).clone());
            }
        }
        LightField {
            content_id: self.content_id.clone(),
            rows: n_rows,
            cols: n_cols,
            bit_depth: self.bit_depth,
            views,
        }
    }
}

/// Centered `target_rows x target_cols` subgrid, re-based to `(0,0)`.
pub fn crop_inner(lf: &LightField, target_rows: usize, target_cols: usize) -> Result<LightField> {
    let (rows, cols) = (lf.rows, lf.cols);
    if target_rows == 0 || target_cols == 0 || target_rows > rows || target_cols > cols {
        return Err(LightFieldError::CropTooLarge {
            rows,
            cols,
            target_rows,
            target_cols,
        });
    }
    if !(rows - target_rows).is_multiple_of(2) || !(cols - target_cols).is_multiple_of(2) {
        return Err(LightFieldError::NonCenterableCrop {
            rows,
            cols,
            target_rows,
            target_cols,
        });
    }
    let r0 = (rows - target_rows) / 2;
    let c0 = (cols - target_cols) / 2;
    Ok(lf.subgrid(r0..r0 + target_rows, c0..c0 + target_cols))
}

/// Views at even coordinates of an odd `(2k+1)x(2k+1)` grid, `k >= 2`.
pub fn sample_sparse(lf: &LightField) -> Result<LightField> {
    let (rows, cols) = (lf.rows, lf.cols);
    if rows != cols || rows % 2 == 0 || rows < 5 {
        return Err(LightFieldError::BadSparseGrid { rows, cols });
    }
    Ok(lf.subgrid((0..rows).step_by(2), (0..cols).step_by(2)))
}

/// Contents of the `lightfield.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub content_id: String,
    pub rows: usize,
    pub cols: usize,
    pub bit_depth: BitDepth,
    #[serde(default = "Layout::default_pattern")]
    pub layout: String,
}

pub const SIDECAR_FILE: &str = "lightfield.json";

/// Loads a grid of views from `dir` using `layout`. Grid extent comes from
/// the layout when given, otherwise from the files present.
pub fn load_light_field(dir: &Path, layout: &Layout, content_id: &str) -> Result<LightField> {
    let (rows, cols) = match (layout.rows, layout.cols) {
        (Some(r), Some(c)) => (r, c),
        _ => layout.discover_extent(dir)?,
    };
    if rows == 0 || cols == 0 {
        return Err(LightFieldError::InvalidGrid(format!("no views found in {}", dir.display())));
    }
    let mut views = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let path = dir.join(layout.file_name(r, c));
            if !path.is_file() {
                return Err(LightFieldError::MissingView { row: r, col: c, path });
            }
            views.push(load_view(&path, layout.bit_depth)?);
        }
    }
    LightField::new(content_id, rows, cols, views)
}

/// Loads a light field described by a `lightfield.json` sidecar in `dir`.
pub fn load_with_sidecar(dir: &Path) -> Result<LightField> {
    let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(dir.join(SIDECAR_FILE))?)?;
    let layout = Layout::new(&sidecar.layout)?
        .with_extent(sidecar.rows, sidecar.cols)
        .with_bit_depth(sidecar.bit_depth);
    load_light_field(dir, &layout, &sidecar.content_id)
}

/// Writes every view plus a sidecar; the inverse of [`load_with_sidecar`].
pub fn save_light_field(lf: &LightField, dir: &Path, layout: &Layout) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let format = ImageFormat::from_path(Path::new(&layout.pattern))?;
    for (r, c, v) in lf.iter() {
        save_view(v, &dir.join(layout.file_name(r, c)), format)?;
    }
    let sidecar = Sidecar {
        content_id: lf.content_id.clone(),
        rows: lf.rows,
        cols: lf.cols,
        bit_depth: lf.bit_depth,
        layout: layout.pattern.clone(),
    };
    std::fs::write(dir.join(SIDECAR_FILE), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}
