//! End-to-end alignment of one piece.

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::align::{
    assemble_global, cost_block, dtw, global_linear_baseline, query_time_at_pixel, AlignmentPath, DtwOptions,
    LinearBaseline,
};
use crate::bootleg::{BootlegConfig, BootlegScore, MidiProjection, Timeline};
use crate::eval::{evaluate, ErrorCurve, MidiBeatAnnotation, SheetBeatAnnotation};
use crate::midi::MidiPerformance;
use crate::noteheads::{boxes_to_bootleg, detect_all_classical, raw_bootleg, NoteheadBox, SheetBootleg};
use crate::sheet::{binarize_all, ImageStrip};
use crate::staff::{detect_staves, StaffDetection, StaffSearch, StaffSystem};
use crate::{Error, Result};

/// Source of the sheet-side bootleg score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SheetMode {
    /// Boxes supplied by an external notehead detector.
    Noteheads,
    /// Boxes from the built-in morphological detector.
    Classical,
    /// The binarized strips themselves.
    Raw,
}

impl SheetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SheetMode::Noteheads => "noteheads",
            SheetMode::Classical => "classical",
            SheetMode::Raw => "raw",
        }
    }
}

impl FromStr for SheetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noteheads" => Ok(SheetMode::Noteheads),
            "classical" => Ok(SheetMode::Classical),
            "raw" => Ok(SheetMode::Raw),
            other => Err(Error::Validation(format!(
                "unknown mode {other:?} (expected noteheads, classical or raw)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub mode: SheetMode,
    pub bootleg: BootlegConfig,
    pub staff_search: StaffSearch,
    pub dtw: DtwOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            mode: SheetMode::Noteheads,
            bootleg: BootlegConfig::default(),
            staff_search: StaffSearch::default(),
            dtw: DtwOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub path: AlignmentPath,
    pub timeline: Arc<Timeline>,
    pub staves: Vec<StaffDetection>,
    pub sheet: SheetBootleg,
    pub midi_scores: Vec<BootlegScore>,
    /// Boxes behind the sheet bootleg; empty in raw mode.
    pub boxes: Vec<NoteheadBox>,
    pub duration_sec: f64,
}

/// Runs staff detection, both bootleg projections and the block DTW.
/// `boxes` is required in notehead mode and ignored otherwise.
pub fn align_piece(
    perf: &MidiPerformance,
    strips: &[ImageStrip],
    boxes: Option<&[NoteheadBox]>,
    opts: &PipelineOptions,
) -> Result<Alignment> {
    perf.ensure_nonempty()?;
    if strips.is_empty() {
        return Err(Error::EmptyInput("no strips"));
    }
    let binary = binarize_all(strips);
    let staves = detect_staves(&binary, &opts.staff_search)?;
    let systems: Vec<StaffSystem> = staves.iter().map(|d| d.system).collect();
    let dims: Vec<(usize, usize)> = strips.iter().map(|s| (s.width(), s.height())).collect();
    let (sheet, boxes) = match opts.mode {
        SheetMode::Noteheads => {
            let boxes = boxes
                .ok_or_else(|| Error::Validation("notehead mode requires a box file".into()))?
                .to_vec();
            (boxes_to_bootleg(&dims, &boxes), boxes)
        }
        SheetMode::Classical => {
            let boxes = detect_all_classical(&binary, &systems);
            (boxes_to_bootleg(&dims, &boxes), boxes)
        }
        SheetMode::Raw => (raw_bootleg(&binary), Vec::new()),
    };
    let projection = MidiProjection::new(perf, sheet.total_width(), &opts.bootleg)?;
    let heights: Vec<usize> = strips.iter().map(ImageStrip::height).collect();
    let midi_scores = projection.render_all(&systems, &heights);
    let blocks = midi_scores
        .par_iter()
        .zip(sheet.masks.par_iter())
        .enumerate()
        .map(|(k, (m, s))| cost_block(Arc::new(m.mask.clone()), Arc::new(s.clone()), k))
        .collect::<Result<Vec<_>>>()?;
    let global = assemble_global(blocks)?;
    let path = dtw(&global, &opts.dtw)?;
    Ok(Alignment {
        path,
        timeline: Arc::clone(&projection.timeline),
        staves,
        sheet,
        midi_scores,
        boxes,
        duration_sec: perf.duration_sec,
    })
}

impl Alignment {
    pub fn widths(&self) -> Vec<usize> {
        self.sheet.masks.iter().map(|m| m.width()).collect()
    }

    pub fn total_width(&self) -> usize {
        self.sheet.total_width()
    }

    /// Performance time at a strip pixel.
    pub fn time_at(&self, strip_index: usize, pixel_x: f64) -> Result<f64> {
        query_time_at_pixel(
            &self.path,
            &self.sheet.offsets,
            &self.widths(),
            strip_index,
            pixel_x,
            &self.timeline,
        )
    }

    pub fn baseline(&self) -> Result<LinearBaseline> {
        global_linear_baseline(self.total_width(), self.duration_sec)
    }

    pub fn evaluate(
        &self,
        sheet: &[SheetBeatAnnotation],
        midi: &[MidiBeatAnnotation],
        tolerances_sec: &[f64],
    ) -> Result<ErrorCurve> {
        evaluate(|a| self.time_at(a.strip_index, a.pixel_x as f64), sheet, midi, tolerances_sec)
    }

    pub fn evaluate_baseline(
        &self,
        sheet: &[SheetBeatAnnotation],
        midi: &[MidiBeatAnnotation],
        tolerances_sec: &[f64],
    ) -> Result<ErrorCurve> {
        let baseline = self.baseline()?;
        let widths = self.widths();
        evaluate(
            |a| {
                if a.strip_index >= widths.len() || a.pixel_x >= widths[a.strip_index] {
                    return Err(Error::Domain(format!(
                        "annotation pixel {} outside strip {}",
                        a.pixel_x, a.strip_index
                    )));
                }
                Ok(baseline.time_at_pixel(&self.sheet.offsets, a.strip_index, a.pixel_x as f64))
            },
            sheet,
            midi,
            tolerances_sec,
        )
    }

    /// True when the sheet side carries no ink at all.
    pub fn sheet_is_blank(&self) -> bool {
        self.sheet.ink() == 0
    }
}
