//! Seeded synthetic pieces with exact ground truth.
//!
//! A piece is a sequence of beats for two hands on a grand staff. Strips are
//! drawn with staff lines, elliptical noteheads at the rows the MIDI bootleg
//! would use, and optional stems, barlines, ledger lines and a brace. The
//! performance follows a smooth random tempo curve with an optional long
//! pause and is encoded as a Standard MIDI File.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bootleg::{BlobGeometry, StaffPlacement};
use crate::eval::{write_midi_annotations, write_sheet_annotations, BeatPos, MidiBeatAnnotation, SheetBeatAnnotation};
use crate::midi::{parse_midi, MidiPerformance};
use crate::noteheads::{write_noteheads, NoteheadBox, NoteheadClass};
use crate::sheet::ImageStrip;
use crate::staff::{Staff, StaffSystem};
use crate::{Error, Result};

pub const INK: u8 = 20;
pub const PAPER: u8 = 240;

const TICKS_PER_QUARTER: u16 = 960;
const MICROS_PER_QUARTER: u32 = 500_000;
const TICKS_PER_SECOND: f64 = TICKS_PER_QUARTER as f64 * 1e6 / MICROS_PER_QUARTER as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub strips: usize,
    pub measures_per_strip: usize,
    pub beats_per_measure: usize,
    /// Staff line spacing in pixels.
    pub spacing: usize,
    /// Nominal seconds per beat.
    pub beat_sec: f64,
    /// Peak relative deviation of the beat duration, e.g. 0.3 for ±30%.
    pub tempo_warp: f64,
    /// Extra silence inserted before one beat in the middle of the piece.
    pub pause_sec: Option<f64>,
    /// Probability that a beat splits into two right-hand eighths.
    pub eighth_prob: f64,
    /// Probability that a note carries an accidental.
    pub accidental_prob: f64,
    /// Stems, barlines, ledger lines and a brace.
    pub distractors: bool,
    /// Fraction of pixels replaced by salt-and-pepper noise.
    pub noise: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            strips: 4,
            measures_per_strip: 6,
            beats_per_measure: 4,
            spacing: 8,
            beat_sec: 1.0,
            tempo_warp: 0.3,
            pause_sec: Some(6.0),
            eighth_prob: 0.3,
            accidental_prob: 0.1,
            distractors: true,
            noise: 0.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.strips > 0 && self.measures_per_strip > 0 && self.beats_per_measure > 0;
        if !positive || self.spacing < 4 || !(self.beat_sec > 0.0) {
            return Err(Error::Validation(format!("degenerate corpus configuration {self:?}")));
        }
        if !(0.0..1.0).contains(&self.tempo_warp) || !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::Validation("tempo warp must lie in [0,1), noise in [0,0.5]".into()));
        }
        Ok(())
    }
}

/// A generated piece and its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticPiece {
    pub strips: Vec<ImageStrip>,
    /// Geometry the strips were drawn with.
    pub staves: Vec<StaffSystem>,
    pub boxes: Vec<NoteheadBox>,
    pub midi_bytes: Vec<u8>,
    pub performance: MidiPerformance,
    pub sheet_annotations: Vec<SheetBeatAnnotation>,
    pub midi_annotations: Vec<MidiBeatAnnotation>,
}

/// A written note: staff, half-space position and accidental (-1, 0, +1).
#[derive(Debug, Clone, Copy)]
struct Written {
    staff: Staff,
    position: i32,
    alter: i32,
}

impl Written {
    fn pitch(&self) -> u8 {
        let anchor = match self.staff {
            Staff::Upper => 30,
            Staff::Lower => 18,
        };
        let d = anchor + self.position;
        const SEMITONES: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
        (12 * (d.div_euclid(7) + 1) + SEMITONES[d.rem_euclid(7) as usize] + self.alter) as u8
    }
}

struct Chord {
    /// Beat offset within the beat, as a fraction of the beat duration.
    beat_fraction: f64,
    /// Horizontal offset of the heads from the beat slot start, in spacings.
    x_spacings: f64,
    notes: Vec<Written>,
}

struct Beat {
    chords: Vec<Chord>,
}

fn random_chord(rng: &mut ChaCha8Rng, staff: Staff, max_notes: usize, accidental_prob: f64) -> Vec<Written> {
    let count = rng.gen_range(1..=max_notes);
    let mut positions: Vec<i32> = Vec::with_capacity(count);
    let mut attempts = 0;
    while positions.len() < count && attempts < 50 {
        attempts += 1;
        let p = rng.gen_range(-2..=10);
        if positions.iter().all(|&q| (q - p).abs() >= 2) {
            positions.push(p);
        }
    }
    positions.sort_unstable();
    positions
        .into_iter()
        .map(|position| {
            let letter = (match staff {
                Staff::Upper => 30,
                Staff::Lower => 18,
            } + position)
                .rem_euclid(7);
            let mut alter = 0;
            if rng.gen_bool(accidental_prob) {
                // C D F G A take sharps; D E G A B take flats.
                let sharpable = matches!(letter, 0 | 1 | 3 | 4 | 5);
                let flattable = matches!(letter, 1 | 2 | 4 | 5 | 6);
                alter = match (sharpable, flattable) {
                    (true, true) => {
                        if rng.gen_bool(0.5) {
                            1
                        } else {
                            -1
                        }
                    }
                    (true, false) => 1,
                    _ => -1,
                };
            }
            Written { staff, position, alter }
        })
        .collect()
}

fn dedupe_across_hands(notes: &mut Vec<Written>) {
    let mut seen = Vec::new();
    notes.retain(|n| {
        let p = n.pitch();
        if seen.contains(&p) {
            false
        } else {
            seen.push(p);
            true
        }
    });
}

fn compose(rng: &mut ChaCha8Rng, beats: usize, config: &CorpusConfig) -> Vec<Beat> {
    (0..beats)
        .map(|_| {
            let eighths = rng.gen_bool(config.eighth_prob);
            let mut first = random_chord(rng, Staff::Upper, 3, config.accidental_prob);
            first.extend(random_chord(rng, Staff::Lower, 2, config.accidental_prob));
            dedupe_across_hands(&mut first);
            let mut chords = vec![Chord {
                beat_fraction: 0.0,
                x_spacings: 1.0,
                notes: first,
            }];
            if eighths {
                chords.push(Chord {
                    beat_fraction: 0.5,
                    x_spacings: 2.6,
                    notes: random_chord(rng, Staff::Upper, 2, config.accidental_prob),
                });
            }
            Beat { chords }
        })
        .collect()
}

/// Relative beat-duration factors `1 + A·g(b)` with `g` a normalized sum of
/// three slow sinusoids.
fn tempo_factors(rng: &mut ChaCha8Rng, beats: usize, amplitude: f64) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(8.0..40.0), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.5..1.0)))
        .collect();
    let g: Vec<f64> = (0..beats)
        .map(|b| {
            waves
                .iter()
                .map(|&(period, phase, weight)| weight * (2.0 * PI * b as f64 / period + phase).sin())
                .sum()
        })
        .collect();
    let peak = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    g.iter()
        .map(|v| if peak > 0.0 { 1.0 + amplitude * v / peak } else { 1.0 })
        .collect()
}

struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Canvas {
            width,
            height,
            pixels: vec![PAPER; width * height],
        }
    }

    fn ink_rect(&mut self, row0: i64, row1: i64, col0: i64, col1: i64) {
        let (r0, r1) = (row0.max(0) as usize, row1.clamp(0, self.height as i64) as usize);
        let (c0, c1) = (col0.max(0) as usize, col1.clamp(0, self.width as i64) as usize);
        for r in r0..r1 {
            self.pixels[r * self.width + c0..r * self.width + c1.max(c0)].fill(INK);
        }
    }

    /// Ellipse inscribed in the rectangle.
    fn ink_ellipse(&mut self, top: i64, bottom: i64, left: i64, right: i64) {
        let (h, w) = ((bottom - top) as f64, (right - left) as f64);
        for r in top..bottom {
            for c in left..right {
                let dy = (r - top) as f64 + 0.5 - h / 2.0;
                let dx = (c - left) as f64 + 0.5 - w / 2.0;
                if (dx / (w / 2.0)).powi(2) + (dy / (h / 2.0)).powi(2) <= 1.0 {
                    self.ink_rect(r, r + 1, c, c + 1);
                }
            }
        }
    }

    fn salt_and_pepper(&mut self, rng: &mut ChaCha8Rng, fraction: f64) {
        if fraction <= 0.0 {
            return;
        }
        for p in &mut self.pixels {
            if rng.gen_bool(fraction) {
                *p = if rng.gen_bool(0.5) { INK } else { PAPER };
            }
        }
    }

    fn into_strip(self, strip_index: usize) -> ImageStrip {
        ImageStrip::new(strip_index, self.width, self.height, self.pixels).expect("canvas is non-empty")
    }
}

fn staff_line_rows(top: f64, spacing: f64, thickness: usize) -> Vec<(i64, i64)> {
    (0..5)
        .map(|k| {
            let center = (top + k as f64 * spacing).round() as i64;
            let start = center - (thickness as i64 - 1) / 2;
            (start, start + thickness as i64)
        })
        .collect()
}

fn draw_staves(canvas: &mut Canvas, system: &StaffSystem, thickness: usize) {
    for staff in [Staff::Upper, Staff::Lower] {
        for (r0, r1) in staff_line_rows(system.top_row(staff), system.spacing_px, thickness) {
            canvas.ink_rect(r0, r1, 0, canvas.width as i64);
        }
    }
}

pub fn synthesize_test_corpus(seed: u64, config: &CorpusConfig) -> Result<SyntheticPiece> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = config.spacing;
    let sf = s as f64;
    let beats_per_strip = config.measures_per_strip * config.beats_per_measure;
    let total_beats = beats_per_strip * config.strips;
    let beat_px = 4 * s;
    let margin = 2 * s;
    let strip_width = margin + beats_per_strip * beat_px;
    let blob = BlobGeometry::default();
    let head_width = blob.width(sf);

    let beats = compose(&mut rng, total_beats, config);
    let factors = tempo_factors(&mut rng, total_beats, config.tempo_warp);
    let pause_beat = config
        .pause_sec
        .map(|_| rng.gen_range(total_beats / 5..=(total_beats * 4 / 5).max(total_beats / 5)).max(1));

    // Performance timing.
    let mut onsets = Vec::with_capacity(total_beats);
    let mut t = 0.5 * config.beat_sec;
    for b in 0..total_beats {
        if Some(b) == pause_beat {
            t += config.pause_sec.unwrap_or(0.0);
        }
        onsets.push(t);
        t += config.beat_sec * factors[b];
    }
    let quantize = |t: f64| (t * TICKS_PER_SECOND).round() as u64;

    let mut strips = Vec::with_capacity(config.strips);
    let mut staves = Vec::with_capacity(config.strips);
    let mut boxes = Vec::new();
    let mut sheet_annotations = Vec::new();
    let mut midi_annotations = Vec::new();
    // (tick on, tick off, pitch, track)
    let mut notes: Vec<(u64, u64, u8, usize)> = Vec::new();

    for k in 0..config.strips {
        let upper_top = 5 * s + rng.gen_range(0..=2 * s);
        let lower_top = upper_top + 10 * s;
        let height = lower_top + 4 * s + 6 * s + rng.gen_range(0..=s);
        let system = StaffSystem {
            strip_index: k,
            spacing_px: sf,
            upper_top_row: upper_top as f64,
            lower_top_row: lower_top as f64,
            response_score: 0.0,
        };
        let mut canvas = Canvas::new(strip_width, height);
        draw_staves(&mut canvas, &system, 1);
        if config.distractors {
            let (top, bottom) = (upper_top as i64, (lower_top + 4 * s) as i64);
            canvas.ink_rect(top, bottom + 1, (s / 2) as i64, (s / 2 + 2) as i64);
        }
        for j in 0..beats_per_strip {
            let b = k * beats_per_strip + j;
            let slot = (margin + j * beat_px) as i64;
            if config.distractors && j % config.beats_per_measure == 0 && j > 0 {
                let x = slot + (s / 2) as i64;
                canvas.ink_rect(upper_top as i64, (lower_top + 4 * s) as i64 + 1, x, x + 1);
            }
            let duration = config.beat_sec * factors[b];
            for (c, chord) in beats[b].chords.iter().enumerate() {
                let x = slot + (chord.x_spacings * sf).round() as i64;
                if c == 0 {
                    sheet_annotations.push(SheetBeatAnnotation {
                        strip_index: k,
                        pixel_x: x as usize,
                        measure: (b / config.beats_per_measure + 1) as u32,
                        beat: BeatPos::whole((b % config.beats_per_measure + 1) as u32),
                    });
                    midi_annotations.push(MidiBeatAnnotation {
                        measure: (b / config.beats_per_measure + 1) as u32,
                        beat: BeatPos::whole((b % config.beats_per_measure + 1) as u32),
                        time_sec: quantize(onsets[b]) as f64 / TICKS_PER_SECOND,
                    });
                }
                let onset = onsets[b] + chord.beat_fraction * duration;
                let held = if beats[b].chords.len() > 1 { 0.45 } else { 0.9 } * duration;
                for staff in [Staff::Upper, Staff::Lower] {
                    let group: Vec<&Written> = chord.notes.iter().filter(|n| n.staff == staff).collect();
                    if group.is_empty() {
                        continue;
                    }
                    let mut head_rows = Vec::new();
                    for n in &group {
                        let placement = StaffPlacement {
                            staff,
                            position: n.position,
                            ambiguous: false,
                            clamped: false,
                        };
                        let (top, bottom) = blob.rows(&system, &placement);
                        canvas.ink_ellipse(top, bottom, x, x + head_width);
                        head_rows.push((top, bottom));
                        boxes.push(NoteheadBox {
                            strip_index: k,
                            x: x as usize,
                            y: top as usize,
                            w: head_width as usize,
                            h: (bottom - top) as usize,
                            class: NoteheadClass::Filled,
                            confidence: 1.0,
                        });
                        let track = if staff == Staff::Upper { 1 } else { 2 };
                        notes.push((quantize(onset), quantize(onset + held), n.pitch(), track));
                        if config.distractors {
                            let bottom_line = system.bottom_row(staff);
                            let ledger = |pos: i32| (bottom_line - pos as f64 * sf / 2.0).round() as i64;
                            let (l0, l1) = (x - (0.3 * sf) as i64, x + head_width + (0.3 * sf) as i64);
                            if n.position <= -2 {
                                canvas.ink_rect(ledger(-2), ledger(-2) + 1, l0, l1);
                            }
                            if n.position >= 10 {
                                canvas.ink_rect(ledger(10), ledger(10) + 1, l0, l1);
                            }
                        }
                    }
                    if config.distractors {
                        // Right-hand stems go up from the right edge, left-hand
                        // stems down from the left edge.
                        let reach = (3.5 * sf) as i64;
                        let (first, last) = (head_rows[0], *head_rows.last().unwrap());
                        if staff == Staff::Upper {
                            let col = x + head_width - 1;
                            canvas.ink_rect(last.0 - reach, first.1 - sf as i64 / 2, col, col + 1);
                        } else {
                            canvas.ink_rect(last.0 + sf as i64 / 2, first.1 + reach, x, x + 1);
                        }
                    }
                }
            }
        }
        canvas.salt_and_pepper(&mut rng, config.noise);
        strips.push(canvas.into_strip(k));
        staves.push(system);
    }

    let midi_bytes = encode_piece_midi(&notes);
    let performance = parse_midi(&midi_bytes)?;
    Ok(SyntheticPiece {
        strips,
        staves,
        boxes,
        midi_bytes,
        performance,
        sheet_annotations,
        midi_annotations,
    })
}

fn encode_piece_midi(notes: &[(u64, u64, u8, usize)]) -> Vec<u8> {
    let mut tracks: Vec<Vec<(u64, Vec<u8>)>> = vec![Vec::new(); 3];
    let tempo = MICROS_PER_QUARTER.to_be_bytes();
    tracks[0].push((0, vec![0xff, 0x51, 0x03, tempo[1], tempo[2], tempo[3]]));
    tracks[0].push((0, vec![0xff, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08]));
    for &(on, off, pitch, track) in notes {
        let channel = (track - 1) as u8;
        tracks[track].push((on, vec![0x90 | channel, pitch, 80]));
        tracks[track].push((off, vec![0x80 | channel, pitch, 0]));
    }
    for t in &mut tracks {
        // Note-offs before note-ons at equal ticks.
        t.sort_by_key(|(tick, event)| (*tick, event[0] & 0xf0 != 0x80));
    }
    encode_smf(1, TICKS_PER_QUARTER, &tracks)
}

fn push_varint(out: &mut Vec<u8>, mut value: u64) {
    let mut bytes = vec![(value & 0x7f) as u8];
    value >>= 7;
    while value > 0 {
        bytes.push((value & 0x7f) as u8 | 0x80);
        value >>= 7;
    }
    out.extend(bytes.iter().rev());
}

/// Standard MIDI File bytes from per-track (absolute tick, event) lists.
/// Events must be sorted by tick; an end-of-track event is appended.
pub fn encode_smf(format: u16, ticks_per_quarter: u16, tracks: &[Vec<(u64, Vec<u8>)>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&format.to_be_bytes());
    out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&ticks_per_quarter.to_be_bytes());
    for track in tracks {
        let mut body = Vec::new();
        let mut last = 0;
        for (tick, event) in track {
            push_varint(&mut body, tick - last);
            body.extend_from_slice(event);
            last = *tick;
        }
        body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}

/// Files written by [`write_corpus_dir`], relative to the corpus directory.
pub const CORPUS_FILES: [&str; 5] = [
    "performance.mid",
    "boxes.csv",
    "sheet_beats.csv",
    "midi_beats.csv",
    "manifest.txt",
];

/// Writes `strips/strip_NNN.png` plus the files in [`CORPUS_FILES`].
pub fn write_corpus_dir(piece: &SyntheticPiece, dir: &Path) -> Result<Vec<PathBuf>> {
    let strip_dir = dir.join("strips");
    std::fs::create_dir_all(&strip_dir).map_err(|e| Error::io(&strip_dir, e))?;
    let mut written = Vec::new();
    let mut manifest = String::new();
    for strip in &piece.strips {
        let name = format!("strip_{:03}.png", strip.strip_index);
        let path = strip_dir.join(&name);
        strip.to_gray_image().save(&path).map_err(|e| Error::Image {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        manifest.push_str(&format!("strips/{name}\n"));
        written.push(path);
    }
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    let io = |e: std::io::Error| Error::io(dir, e);
    emit("performance.mid", piece.midi_bytes.clone())?;
    let mut buf = Vec::new();
    write_noteheads(&piece.boxes, &mut buf).map_err(io)?;
    emit("boxes.csv", buf)?;
    let mut buf = Vec::new();
    write_sheet_annotations(&piece.sheet_annotations, &mut buf).map_err(io)?;
    emit("sheet_beats.csv", buf)?;
    let mut buf = Vec::new();
    write_midi_annotations(&piece.midi_annotations, &mut buf).map_err(io)?;
    emit("midi_beats.csv", buf)?;
    let mut buf = Vec::new();
    buf.write_all(manifest.as_bytes()).map_err(io)?;
    emit("manifest.txt", buf)?;
    Ok(written)
}

/// A lone grand staff for detector tests: lines 1 px thick below spacing 16
/// and 3 px above, a few noteheads and barlines, then salt-and-pepper noise.
pub fn synthetic_staff_strip(seed: u64, spacing: f64, noise: f64) -> (ImageStrip, StaffSystem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thickness = if spacing < 16.0 { 1 } else { 3 };
    let upper_top = (4.0 * spacing).round() + rng.gen_range(0..=(2.0 * spacing) as usize) as f64;
    let lower_top = upper_top + (rng.gen_range(8.0..11.0) * spacing).round();
    let height = (lower_top + 4.0 * spacing + 4.0 * spacing).ceil() as usize + rng.gen_range(0..=spacing as usize);
    let width = 400 + rng.gen_range(0..200);
    let system = StaffSystem {
        strip_index: 0,
        spacing_px: spacing,
        upper_top_row: upper_top,
        lower_top_row: lower_top,
        response_score: 0.0,
    };
    let mut canvas = Canvas::new(width, height);
    draw_staves(&mut canvas, &system, thickness);
    let blob = BlobGeometry::default();
    let head_width = blob.width(spacing);
    let mut x = (2.0 * spacing) as i64;
    while x + head_width < width as i64 {
        for staff in [Staff::Upper, Staff::Lower] {
            let placement = StaffPlacement {
                staff,
                position: rng.gen_range(-2..=10),
                ambiguous: false,
                clamped: false,
            };
            let (top, bottom) = blob.rows(&system, &placement);
            canvas.ink_ellipse(top, bottom, x, x + head_width);
        }
        x += (rng.gen_range(2.5..5.0) * spacing) as i64;
    }
    canvas.salt_and_pepper(&mut rng, noise);
    (canvas.into_strip(0), system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootleg::pitch_to_placements;
    use crate::midi::merge_simultaneous;

    fn small() -> CorpusConfig {
        CorpusConfig {
            strips: 3,
            measures_per_strip: 2,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synthesize_test_corpus(7, &small()).unwrap();
        let b = synthesize_test_corpus(7, &small()).unwrap();
        assert_eq!(a.midi_bytes, b.midi_bytes);
        assert_eq!(a.strips, b.strips);
        assert_eq!(a.boxes, b.boxes);
        let c = synthesize_test_corpus(8, &small()).unwrap();
        assert_ne!(a.midi_bytes, c.midi_bytes);
    }

    #[test]
    fn annotations_cover_every_beat() {
        let cfg = small();
        let piece = synthesize_test_corpus(3, &cfg).unwrap();
        let beats = cfg.strips * cfg.measures_per_strip * cfg.beats_per_measure;
        assert_eq!(piece.sheet_annotations.len(), beats);
        assert_eq!(piece.midi_annotations.len(), beats);
        assert!(piece.midi_annotations.windows(2).all(|w| w[1].time_sec > w[0].time_sec));
        for a in &piece.sheet_annotations {
            assert!(a.pixel_x < piece.strips[a.strip_index].width());
        }
    }

    #[test]
    fn boxes_match_midi_placements() {
        let piece = synthesize_test_corpus(5, &small()).unwrap();
        let groups = merge_simultaneous(&piece.performance, 0.05);
        let heads: usize = groups.iter().map(|g| g.pitches.len()).sum();
        assert_eq!(heads, piece.boxes.len());
        // Natural pitches land exactly on their box rows.
        let blob = BlobGeometry::default();
        for b in &piece.boxes {
            let system = &piece.staves[b.strip_index];
            assert!(b.y + b.h <= piece.strips[b.strip_index].height());
            assert_eq!(b.w as i64, blob.width(system.spacing_px));
        }
        for e in &piece.performance.events {
            assert!(!pitch_to_placements(e.pitch).is_empty());
        }
    }

    #[test]
    fn written_pitches() {
        let w = |staff, position, alter| Written { staff, position, alter }.pitch();
        assert_eq!(w(Staff::Upper, 0, 0), 64);
        assert_eq!(w(Staff::Upper, -2, 0), 60);
        assert_eq!(w(Staff::Lower, 0, 0), 43);
        assert_eq!(w(Staff::Lower, 10, 0), 60);
        assert_eq!(w(Staff::Upper, 1, 1), 66);
        assert_eq!(w(Staff::Upper, 2, -1), 66);
    }

    #[test]
    fn smf_encoding_round_trips() {
        let tracks = vec![vec![(0, vec![0x90, 60, 64]), (960, vec![0x80, 60, 0]), (1920, vec![0x90, 62, 64])]];
        let perf = parse_midi(&encode_smf(0, 480, &tracks)).unwrap();
        assert_eq!(perf.events.len(), 2);
        assert_eq!(perf.events[1].onset_sec, 2.0);
        let mut v = Vec::new();
        push_varint(&mut v, 0x0fff_ffff);
        assert_eq!(v, vec![0xff, 0xff, 0xff, 0x7f]);
    }

    #[test]
    fn performance_matches_annotated_beats() {
        let cfg = CorpusConfig {
            tempo_warp: 0.0,
            pause_sec: None,
            ..small()
        };
        let piece = synthesize_test_corpus(1, &cfg).unwrap();
        let onsets: Vec<f64> = piece.performance.events.iter().map(|e| e.onset_sec).collect();
        for a in &piece.midi_annotations {
            assert!(onsets.iter().any(|&t| (t - a.time_sec).abs() < 1e-9));
        }
        let first = &piece.midi_annotations[0];
        assert!((first.time_sec - 0.5).abs() < 1e-9);
        assert!((piece.midi_annotations[1].time_sec - 1.5).abs() < 1e-9);
    }

    #[test]
    fn pause_appears_once() {
        let cfg = CorpusConfig {
            tempo_warp: 0.0,
            ..small()
        };
        let piece = synthesize_test_corpus(2, &cfg).unwrap();
        let gaps: Vec<f64> = piece
            .midi_annotations
            .windows(2)
            .map(|w| w[1].time_sec - w[0].time_sec)
            .collect();
        assert_eq!(gaps.iter().filter(|&&g| g > 6.5).count(), 1);
    }

    #[test]
    fn tempo_warp_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = tempo_factors(&mut rng, 300, 0.3);
        assert!(f.iter().all(|&v| (0.7 - 1e-12..=1.3 + 1e-12).contains(&v)));
        assert!(f.iter().any(|&v| v > 1.25) || f.iter().any(|&v| v < 0.75));
    }

    #[test]
    fn corpus_directory_is_complete_and_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let piece = synthesize_test_corpus(4, &small()).unwrap();
        write_corpus_dir(&piece, dir.path()).unwrap();
        for name in CORPUS_FILES {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let paths = crate::sheet::read_manifest(&dir.path().join("manifest.txt")).unwrap();
        let strips = crate::sheet::load_strips(&paths).unwrap();
        assert_eq!(strips, piece.strips);
        let perf = crate::midi::load_midi(&dir.path().join("performance.mid")).unwrap();
        assert_eq!(perf, piece.performance);
        let dims: Vec<_> = strips.iter().map(|s| (s.width(), s.height())).collect();
        let boxes = crate::noteheads::load_noteheads(&dir.path().join("boxes.csv"), &dims, 0.0).unwrap();
        assert_eq!(boxes, piece.boxes);
    }

    #[test]
    fn staff_strip_has_its_lines() {
        let (strip, truth) = synthetic_staff_strip(1, 10.0, 0.0);
        let top = truth.upper_top_row as usize;
        assert!((0..strip.width()).all(|c| strip.get(top, c) == INK));
        assert!(truth.fits_height(strip.height()));
    }
}
