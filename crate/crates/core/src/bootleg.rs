//! MIDI-side bootleg score synthesis.
//!
//! Every chord onset becomes one or more rectangular blobs, placed with the
//! staff geometry of a particular strip. One score of the whole performance
//! is produced per strip; all of them share a single timeline so that column
//! `k` means the same instant in every strip's score.

use std::sync::Arc;

use rayon::prelude::*;

use crate::mask::BitMask;
use crate::midi::{merge_simultaneous, MidiPerformance};
use crate::sheet::ImageStrip;
use crate::staff::{Staff, StaffSystem};
use crate::{Error, Result};

/// Lowest and highest staff positions that get a placement: two ledger lines
/// below and above the five-line staff.
pub const LEDGER_WINDOW: (i32, i32) = (-4, 12);

/// Diatonic index of E4, the bottom line of the treble staff.
const TREBLE_ANCHOR: i32 = 30;
/// Diatonic index of G2, the bottom line of the bass staff.
const BASS_ANCHOR: i32 = 18;

/// Letter index (C=0 .. B=6) of natural pitch classes; black keys are `None`.
const LETTER_OF_PITCH_CLASS: [Option<i32>; 12] = [
    Some(0),
    None,
    Some(1),
    None,
    Some(2),
    Some(3),
    None,
    Some(4),
    None,
    Some(5),
    None,
    Some(6),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StaffPlacement {
    pub staff: Staff,
    /// Half-space index; 0 is the bottom line, +1 per half-space upwards.
    /// For ambiguous placements this is the lower (sharp) spelling.
    pub position: i32,
    /// Black key: the blob spans `position` and `position + 1`.
    pub ambiguous: bool,
    /// Neither staff's window held the pitch; it was put on the nearer one.
    pub clamped: bool,
}

/// `7 * octave + letter`, with MIDI 60 in octave 4. Black keys report the
/// index of the letter below (their sharp spelling).
pub fn diatonic_index(pitch: u8) -> (i32, bool) {
    let octave = pitch as i32 / 12 - 1;
    let pc = pitch as usize % 12;
    match LETTER_OF_PITCH_CLASS[pc] {
        Some(letter) => (7 * octave + letter, false),
        None => (7 * octave + LETTER_OF_PITCH_CLASS[pc - 1].unwrap(), true),
    }
}

/// Staff placements of a MIDI pitch: one per staff whose ledger window
/// touches the (possibly two-position) span, and at least one overall.
pub fn pitch_to_placements(pitch: u8) -> Vec<StaffPlacement> {
    let (d, ambiguous) = diatonic_index(pitch);
    let extent = i32::from(ambiguous);
    let (lo, hi) = LEDGER_WINDOW;
    let candidates = [(Staff::Upper, d - TREBLE_ANCHOR), (Staff::Lower, d - BASS_ANCHOR)];

    let distance = |position: i32| -> i32 {
        if position + extent < lo {
            lo - (position + extent)
        } else if position > hi {
            position - hi
        } else {
            0
        }
    };
    let mut placements: Vec<StaffPlacement> = candidates
        .iter()
        .filter(|&&(_, p)| distance(p) == 0)
        .map(|&(staff, position)| StaffPlacement {
            staff,
            position,
            ambiguous,
            clamped: false,
        })
        .collect();
    if placements.is_empty() {
        let &(staff, position) = candidates.iter().min_by_key(|&&(_, p)| distance(p)).unwrap();
        placements.push(StaffPlacement {
            staff,
            position,
            ambiguous,
            clamped: true,
        });
    }
    placements
}

/// Blob proportions relative to the staff spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobGeometry {
    pub width_factor: f64,
    pub ambiguous_height_factor: f64,
}

impl Default for BlobGeometry {
    fn default() -> Self {
        BlobGeometry {
            width_factor: 1.2,
            ambiguous_height_factor: 1.5,
        }
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

impl BlobGeometry {
    pub fn width(&self, spacing: f64) -> i64 {
        round_half_up(self.width_factor * spacing).max(1)
    }

    /// Vertical centre of a placement in strip rows.
    pub fn center_row(&self, staff: &StaffSystem, p: &StaffPlacement) -> f64 {
        let half_space = staff.spacing_px / 2.0;
        let position = p.position as f64 + if p.ambiguous { 0.5 } else { 0.0 };
        staff.bottom_row(p.staff) - position * half_space
    }

    /// Half-open row range `[top, bottom)` of a placement's blob.
    pub fn rows(&self, staff: &StaffSystem, p: &StaffPlacement) -> (i64, i64) {
        let height = if p.ambiguous {
            self.ambiguous_height_factor * staff.spacing_px
        } else {
            staff.spacing_px
        };
        let top = round_half_up(self.center_row(staff, p) - height / 2.0);
        (top, top + round_half_up(height).max(1))
    }
}

/// Piecewise-linear, strictly monotonic map between original and compressed
/// seconds. Outside the breakpoints both directions extrapolate with slope 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMap {
    original: Vec<f64>,
    compressed: Vec<f64>,
}

impl TimeMap {
    pub fn identity() -> Self {
        TimeMap {
            original: vec![0.0],
            compressed: vec![0.0],
        }
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.original.iter().copied().zip(self.compressed.iter().copied())
    }

    pub fn to_compressed(&self, t: f64) -> f64 {
        interpolate(&self.original, &self.compressed, t)
    }

    pub fn to_original(&self, c: f64) -> f64 {
        interpolate(&self.compressed, &self.original, c)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = xs.partition_point(|&v| v < x);
    if i < n && xs[i] == x {
        return ys[i];
    }
    if i == 0 {
        return ys[0] + (x - xs[0]);
    }
    if i == n {
        return ys[n - 1] + (x - xs[n - 1]);
    }
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (x - x0) * (y1 - y0) / (x1 - x0)
}

/// Clips every gap between consecutive (sorted) times to `tau_sec`. The first
/// time is kept as is. Duplicate times collapse into one breakpoint.
pub fn compress_gaps(onsets: &[f64], tau_sec: f64) -> (Vec<f64>, TimeMap) {
    assert!(tau_sec > 0.0, "gap threshold must be positive");
    let mut original: Vec<f64> = Vec::with_capacity(onsets.len());
    let mut compressed: Vec<f64> = Vec::with_capacity(onsets.len());
    let mut out = Vec::with_capacity(onsets.len());
    // Total time removed so far; unclipped stretches stay bit-exact.
    let mut removed = 0.0;
    for &t in onsets {
        match (original.last(), compressed.last()) {
            (Some(&prev), Some(&prev_c)) => {
                if t - prev > tau_sec {
                    removed += t - prev - tau_sec;
                }
                let c = if t > prev { t - removed } else { prev_c };
                if t > prev {
                    original.push(t);
                    compressed.push(c);
                }
                out.push(c);
            }
            _ => {
                original.push(t);
                compressed.push(t);
                out.push(t);
            }
        }
    }
    if original.is_empty() {
        return (out, TimeMap::identity());
    }
    (out, TimeMap { original, compressed })
}

/// Columns per second that make the MIDI bootleg exactly as wide as the
/// strips laid end to end.
pub fn choose_columns_per_second(compressed_duration_sec: f64, strips: &[ImageStrip]) -> Result<f64> {
    let total: usize = strips.iter().map(|s| s.width()).sum();
    columns_per_second_for_width(compressed_duration_sec, total)
}

fn columns_per_second_for_width(compressed_duration_sec: f64, total_width: usize) -> Result<f64> {
    if total_width == 0 {
        return Err(Error::Validation("strips have zero total width".into()));
    }
    if !(compressed_duration_sec > 0.0) {
        return Err(Error::Validation(format!(
            "non-positive compressed duration {compressed_duration_sec}"
        )));
    }
    Ok(total_width as f64 / compressed_duration_sec)
}

/// Column <-> compressed seconds <-> original seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub columns_per_second: f64,
    pub width: usize,
    pub time_map: TimeMap,
}

impl Timeline {
    /// Column (fractional allowed) to original performance seconds.
    pub fn column_to_seconds(&self, column: f64) -> f64 {
        self.time_map.to_original(column / self.columns_per_second)
    }

    /// Original seconds to the (fractional) column; stamping uses its floor.
    pub fn seconds_to_column(&self, t: f64) -> f64 {
        self.time_map.to_compressed(t) * self.columns_per_second
    }

    fn stamp_column(&self, t: f64) -> usize {
        (self.seconds_to_column(t).floor().max(0.0) as usize).min(self.width - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootlegConfig {
    pub tau_sec: f64,
    pub chord_epsilon_sec: f64,
    pub blob: BlobGeometry,
}

impl Default for BootlegConfig {
    fn default() -> Self {
        BootlegConfig {
            tau_sec: 2.0,
            chord_epsilon_sec: 0.05,
            blob: BlobGeometry::default(),
        }
    }
}

/// MIDI bootleg score in one strip's coordinate system.
#[derive(Debug, Clone)]
pub struct BootlegScore {
    /// Strip whose coordinates were used; `None` for sheet-side masks.
    pub strip_index: Option<usize>,
    pub mask: BitMask,
    pub timeline: Arc<Timeline>,
}

/// Strip-independent part of synthesis: chord groups and their columns.
#[derive(Debug, Clone)]
pub struct MidiProjection {
    pub timeline: Arc<Timeline>,
    /// (column, pitches) per chord group, in time order.
    pub chords: Vec<(usize, Vec<u8>)>,
    pub blob: BlobGeometry,
}

impl MidiProjection {
    /// Lays the performance out over `total_width` columns. The timeline
    /// starts at time zero and ends at the performance duration; every gap
    /// between those and the chord onsets is clipped to `tau_sec`.
    pub fn new(perf: &MidiPerformance, total_width: usize, config: &BootlegConfig) -> Result<Self> {
        perf.ensure_nonempty()?;
        if !(config.tau_sec > 0.0) {
            return Err(Error::Validation(format!("gap threshold {} must be positive", config.tau_sec)));
        }
        let groups = merge_simultaneous(perf, config.chord_epsilon_sec.max(0.0));
        let mut times = Vec::with_capacity(groups.len() + 2);
        times.push(0.0);
        times.extend(groups.iter().map(|g| g.onset_sec));
        times.push(perf.duration_sec);
        let (compressed, time_map) = compress_gaps(&times, config.tau_sec);
        let mut duration = *compressed.last().unwrap();
        if duration <= 0.0 {
            // A lone onset at t = 0 with no note-off: give it one second.
            duration = 1.0;
        }
        let timeline = Timeline {
            columns_per_second: columns_per_second_for_width(duration, total_width)?,
            width: total_width,
            time_map,
        };
        let chords = groups
            .into_iter()
            .map(|g| (timeline.stamp_column(g.onset_sec), g.pitches))
            .collect();
        Ok(MidiProjection {
            timeline: Arc::new(timeline),
            chords,
            blob: config.blob,
        })
    }

    pub fn width(&self) -> usize {
        self.timeline.width
    }

    /// Stamps every chord into a mask of the given strip height.
    pub fn render(&self, staff: &StaffSystem, height: usize) -> BootlegScore {
        let mut mask = BitMask::new(height, self.width());
        let blob_width = self.blob.width(staff.spacing_px);
        for (column, pitches) in &self.chords {
            for &pitch in pitches {
                for p in pitch_to_placements(pitch) {
                    let (top, bottom) = self.blob.rows(staff, &p);
                    mask.fill_rect(top, bottom, *column as i64, *column as i64 + blob_width);
                }
            }
        }
        BootlegScore {
            strip_index: Some(staff.strip_index),
            mask,
            timeline: Arc::clone(&self.timeline),
        }
    }

    /// One score per strip, in strip order.
    pub fn render_all(&self, staves: &[StaffSystem], heights: &[usize]) -> Vec<BootlegScore> {
        staves
            .par_iter()
            .zip(heights.par_iter())
            .map(|(s, &h)| self.render(s, h))
            .collect()
    }
}

/// Bootleg score of the whole performance in the coordinates of the strip
/// `staff` belongs to; the width equals the summed widths of `strips`.
pub fn synthesize_bootleg(
    perf: &MidiPerformance,
    staff: &StaffSystem,
    strips: &[ImageStrip],
    config: &BootlegConfig,
) -> Result<BootlegScore> {
    if strips.is_empty() {
        return Err(Error::EmptyInput("no strips"));
    }
    let target = strips
        .iter()
        .find(|s| s.strip_index == staff.strip_index)
        .ok_or_else(|| Error::Validation(format!("no strip with index {}", staff.strip_index)))?;
    let total: usize = strips.iter().map(|s| s.width()).sum();
    let projection = MidiProjection::new(perf, total, config)?;
    Ok(projection.render(staff, target.height()))
}
