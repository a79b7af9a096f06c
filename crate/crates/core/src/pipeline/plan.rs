use super::{PipelineError, Result};
use crate::lightfield::{classify_view, ViewType};
use serde::{Deserialize, Serialize};

pub type Coord = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisStep {
    pub target: Coord,
    pub sources: [Coord; 2],
    pub stage: u8,
}

/// Ordered synthesis steps that fill every X and then every O position of
/// a grid whose even-coordinate views are known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub rows: usize,
    pub cols: usize,
    /// Axis of the source pair for second-stage views. Fixed to horizontal.
    pub stage2_axis: Axis,
    pub steps: Vec<SynthesisStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Horizontal,
    Vertical,
}

pub fn build_synthesis_plan(rows: usize, cols: usize) -> Result<SynthesisPlan> {
    if rows != cols || rows.is_multiple_of(2) || rows < 5 {
        return Err(PipelineError::BadGrid { rows, cols });
    }
    let mut steps = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if classify_view(r, c) == ViewType::X {
                let sources = if r % 2 == 0 {
                    [(r, c - 1), (r, c + 1)]
                } else {
                    [(r - 1, c), (r + 1, c)]
                };
                steps.push(SynthesisStep { target: (r, c), sources, stage: 1 });
            }
        }
    }
    for r in (1..rows).step_by(2) {
        for c in (1..cols).step_by(2) {
            steps.push(SynthesisStep {
                target: (r, c),
                sources: [(r, c - 1), (r, c + 1)],
                stage: 2,
            });
        }
    }
    Ok(SynthesisPlan {
        rows,
        cols,
        stage2_axis: Axis::Horizontal,
        steps,
    })
}

impl SynthesisPlan {
    pub fn stage_count(&self, stage: u8) -> usize {
        self.steps.iter().filter(|s| s.stage == stage).count()
    }

    /// Checks the structural invariants: sources are available when each
    /// step runs, adjacency matches the stage, and every non-S position is
    /// produced exactly once.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PipelineError::Plan(msg));
        let mut known: Vec<bool> = (0..self.rows * self.cols)
            .map(|i| classify_view(i / self.cols, i % self.cols) == ViewType::S)
            .collect();
        for step in &self.steps {
            let (tr, tc) = step.target;
            if tr >= self.rows || tc >= self.cols {
                return bad(format!("target {:?} outside grid", step.target));
            }
            if known[tr * self.cols + tc] {
                return bad(format!("target {:?} produced twice or is coded", step.target));
            }
            let want = if step.stage == 1 { ViewType::S } else { ViewType::X };
            for &(sr, sc) in &step.sources {
                if classify_view(sr, sc) != want || !known[sr * self.cols + sc] {
                    return bad(format!("source {:?} not available for {:?}", (sr, sc), step.target));
                }
                if tr.abs_diff(sr) + tc.abs_diff(sc) != 1 {
                    return bad(format!("source {:?} not adjacent to {:?}", (sr, sc), step.target));
                }
            }
            let [(ar, ac), (br, bc)] = step.sources;
            if ar.abs_diff(br) + ac.abs_diff(bc) != 2 || !(ar == br || ac == bc) {
                return bad(format!("sources of {:?} are not collinear", step.target));
            }
            known[tr * self.cols + tc] = true;
        }
        if known.iter().all(|&k| k) {
            Ok(())
        } else {
            bad("plan leaves positions unfilled".into())
        }
    }
}
