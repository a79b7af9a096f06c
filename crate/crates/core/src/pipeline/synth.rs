use super::codec::IoFormat;
use super::{run_template, PipelineError, Result};
use crate::lightfield::{load_view, save_view, ImageFormat, View};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Produces an in-between view from two neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
#[derive(Default)]
pub enum SynthesizerAdapter {
    #[default]
    Blend,
    /// Command template with `{left}`, `{right}` and `{output}` placeholders.
    External {
        name: String,
        cmd: String,
        #[serde(default)]
        io_format: IoFormat,
    },
}


impl SynthesizerAdapter {
    pub fn name(&self) -> &str {
        match self {
            SynthesizerAdapter::Blend => "blend",
            SynthesizerAdapter::External { name, .. } => name,
        }
    }

    pub fn synthesize(&self, a: &View, b: &View, workdir: &Path) -> Result<View> {
        match self {
            SynthesizerAdapter::Blend => blend_synthesize(a, b),
            SynthesizerAdapter::External { name, cmd, io_format } => {
                if !a.same_geometry(b) {
                    return Err(dimension_error(a, b));
                }
                let (ext, format) = match io_format {
                    IoFormat::Ppm => ("ppm", ImageFormat::Ppm),
                    IoFormat::Png => ("png", ImageFormat::Png),
                };
                std::fs::create_dir_all(workdir)?;
                let left = workdir.join(format!("left.{ext}"));
                let right = workdir.join(format!("right.{ext}"));
                let output = workdir.join(format!("mid.{ext}"));
                save_view(a, &left, format)?;
                save_view(b, &right, format)?;
                run_template(
                    name,
                    cmd,
                    &[("left", left.as_os_str()), ("right", right.as_os_str()), ("output", output.as_os_str())],
                )?;
                let out = load_view(&output, Some(a.bit_depth()))?;
                if !out.same_geometry(a) {
                    return Err(PipelineError::Geometry(format!(
                        "synthesizer {name} returned {}x{}, expected {}x{}",
                        out.width(),
                        out.height(),
                        a.width(),
                        a.height()
                    )));
                }
                Ok(out)
            }
        }
    }
}

fn dimension_error(a: &View, b: &View) -> PipelineError {
    PipelineError::Geometry(format!(
        "cannot synthesize from {}x{} and {}x{} views",
        a.width(),
        a.height(),
        b.width(),
        b.height()
    ))
}

/// Per-pixel mean of two views.
pub fn blend_synthesize(a: &View, b: &View) -> Result<View> {
    if !a.same_geometry(b) {
        return Err(dimension_error(a, b));
    }
    let samples = a.samples().iter().zip(b.samples()).map(|(x, y)| 0.5 * (x + y)).collect();
    Ok(View::new(a.width(), a.height(), a.bit_depth(), samples)?)
}
