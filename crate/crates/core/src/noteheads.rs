//! Sheet-side projection into bootleg space.
//!
//! Three sources are supported: notehead boxes from an external detector
//! (read from a box file), a classical morphological blob detector, and the
//! raw binarized ink.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::mask::BitMask;
use crate::sheet::BinaryStrip;
use crate::staff::StaffSystem;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoteheadClass {
    Filled,
    Half,
    Whole,
}

impl NoteheadClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NoteheadClass::Filled => "filled",
            NoteheadClass::Half => "half",
            NoteheadClass::Whole => "whole",
        }
    }
}

impl FromStr for NoteheadClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "filled" => Ok(NoteheadClass::Filled),
            "half" => Ok(NoteheadClass::Half),
            "whole" => Ok(NoteheadClass::Whole),
            other => Err(format!("unknown notehead class {other:?}")),
        }
    }
}

/// Notehead bounding box in strip pixels (top-left origin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteheadBox {
    pub strip_index: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub class: NoteheadClass,
    pub confidence: f64,
}

impl NoteheadBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn iou(&self, other: &NoteheadBox) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let inter = ((x1 - x0) * (y1 - y0)) as f64;
        inter / ((self.area() + other.area()) as f64 - inter)
    }
}

/// Parses box-file text (`strip_index,x,y,w,h,class,confidence` per line).
/// `dims` holds `(width, height)` per strip; boxes are clipped to their strip
/// and those below `min_confidence` dropped.
pub fn parse_noteheads(text: &str, dims: &[(usize, usize)], min_confidence: f64) -> Result<Vec<NoteheadBox>> {
    let mut boxes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| Error::Parse { line: line_no, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(parse_err(format!("expected 7 comma-separated fields, found {}", fields.len())));
        }
        let int = |k: usize, name: &str| -> Result<i64> {
            fields[k]
                .parse::<i64>()
                .map_err(|_| parse_err(format!("{name} is not an integer: {:?}", fields[k])))
        };
        let strip_index = int(0, "strip_index")?;
        let (x, y, w, h) = (int(1, "x")?, int(2, "y")?, int(3, "w")?, int(4, "h")?);
        let class: NoteheadClass = fields[5].parse().map_err(parse_err)?;
        let confidence: f64 = fields[6]
            .parse()
            .map_err(|_| parse_err(format!("confidence is not a number: {:?}", fields[6])))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(parse_err(format!("confidence {confidence} outside [0, 1]")));
        }
        if w < 1 || h < 1 {
            return Err(parse_err(format!("box extent {w}x{h} must be positive")));
        }
        if strip_index < 0 || strip_index as usize >= dims.len() {
            return Err(Error::Validation(format!(
                "line {line_no}: strip_index {strip_index} out of range (0..{})",
                dims.len()
            )));
        }
        let (sw, sh) = dims[strip_index as usize];
        let x0 = x.clamp(0, sw as i64);
        let y0 = y.clamp(0, sh as i64);
        let x1 = (x + w).clamp(0, sw as i64);
        let y1 = (y + h).clamp(0, sh as i64);
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::Validation(format!(
                "line {line_no}: box lies entirely outside strip {strip_index}"
            )));
        }
        if confidence < min_confidence {
            continue;
        }
        boxes.push(NoteheadBox {
            strip_index: strip_index as usize,
            x: x0 as usize,
            y: y0 as usize,
            w: (x1 - x0) as usize,
            h: (y1 - y0) as usize,
            class,
            confidence,
        });
    }
    Ok(boxes)
}

pub fn load_noteheads(path: &Path, dims: &[(usize, usize)], min_confidence: f64) -> Result<Vec<NoteheadBox>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_noteheads(&text, dims, min_confidence)
}

pub fn write_noteheads(boxes: &[NoteheadBox], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# strip_index,x,y,w,h,class,confidence")?;
    for b in boxes {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            b.strip_index,
            b.x,
            b.y,
            b.w,
            b.h,
            b.class.as_str(),
            b.confidence
        )?;
    }
    Ok(())
}

/// Per-strip sheet masks and their placement along the concatenated sheet.
#[derive(Debug, Clone)]
pub struct SheetBootleg {
    pub masks: Vec<BitMask>,
    /// Prefix sums of strip widths; `offsets[0] == 0`.
    pub offsets: Vec<usize>,
}

impl SheetBootleg {
    pub fn new(masks: Vec<BitMask>) -> Self {
        let mut offsets = Vec::with_capacity(masks.len());
        let mut acc = 0;
        for m in &masks {
            offsets.push(acc);
            acc += m.width();
        }
        SheetBootleg { masks, offsets }
    }

    pub fn total_width(&self) -> usize {
        self.offsets.last().zip(self.masks.last()).map_or(0, |(o, m)| o + m.width())
    }

    pub fn global_column(&self, strip: usize, local: usize) -> usize {
        self.offsets[strip] + local
    }

    /// Owning strip and local column of a global column.
    pub fn locate(&self, global: usize) -> Option<(usize, usize)> {
        if global >= self.total_width() {
            return None;
        }
        let strip = self.offsets.partition_point(|&o| o <= global) - 1;
        Some((strip, global - self.offsets[strip]))
    }

    pub fn ink(&self) -> usize {
        self.masks.iter().map(BitMask::count_ones).sum()
    }
}

/// Fills every box into a blank mask of its strip's shape.
pub fn boxes_to_bootleg(dims: &[(usize, usize)], boxes: &[NoteheadBox]) -> SheetBootleg {
    let mut masks: Vec<BitMask> = dims.iter().map(|&(w, h)| BitMask::new(h, w)).collect();
    for b in boxes {
        if let Some(mask) = masks.get_mut(b.strip_index) {
            mask.fill_rect(b.y as i64, (b.y + b.h) as i64, b.x as i64, (b.x + b.w) as i64);
        }
    }
    SheetBootleg::new(masks)
}

/// The binarized strips themselves.
pub fn raw_bootleg(strips: &[BinaryStrip]) -> SheetBootleg {
    SheetBootleg::new(strips.iter().map(|s| s.mask.clone()).collect())
}

/// Tunables of the classical detector, in units of staff spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalParams {
    pub element_width: f64,
    pub element_height: f64,
    pub min_area: f64,
    pub max_area: f64,
    pub min_aspect: f64,
    pub max_aspect: f64,
}

impl Default for ClassicalParams {
    fn default() -> Self {
        ClassicalParams {
            element_width: 1.0,
            element_height: 0.8,
            min_area: 0.4,
            max_area: 2.5,
            min_aspect: 0.8,
            max_aspect: 2.5,
        }
    }
}

/// Elliptical structuring element as offsets from its centre.
fn ellipse_element(width: usize, height: usize) -> Vec<(i64, i64)> {
    let (a, b) = (width as f64 / 2.0, height as f64 / 2.0);
    let (cx, cy) = ((width / 2) as i64, (height / 2) as i64);
    let mut offsets = Vec::new();
    for r in 0..height {
        for c in 0..width {
            let dx = (c as f64 + 0.5 - a) / a;
            let dy = (r as f64 + 0.5 - b) / b;
            if dx * dx + dy * dy <= 1.0 {
                offsets.push((r as i64 - cy, c as i64 - cx));
            }
        }
    }
    offsets
}

fn erode(mask: &BitMask, element: &[(i64, i64)]) -> BitMask {
    let (h, w) = (mask.height() as i64, mask.width() as i64);
    BitMask::from_fn(mask.height(), mask.width(), |r, c| {
        mask.get(r, c)
            && element.iter().all(|&(dr, dc)| {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                rr >= 0 && rr < h && cc >= 0 && cc < w && mask.get(rr as usize, cc as usize)
            })
    })
}

fn dilate(mask: &BitMask, element: &[(i64, i64)]) -> BitMask {
    let (h, w) = (mask.height() as i64, mask.width() as i64);
    let mut out = BitMask::new(mask.height(), mask.width());
    for c in 0..mask.width() {
        if mask.column_is_empty(c) {
            continue;
        }
        for r in 0..mask.height() {
            if !mask.get(r, c) {
                continue;
            }
            for &(dr, dc) in element {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr >= 0 && rr < h && cc >= 0 && cc < w {
                    out.set(rr as usize, cc as usize, true);
                }
            }
        }
    }
    out
}

/// Morphological opening: erosion followed by dilation with the same element.
pub fn open(mask: &BitMask, element_width: usize, element_height: usize) -> BitMask {
    let element = ellipse_element(element_width.max(1), element_height.max(1));
    dilate(&erode(mask, &element), &element)
}

/// 8-connected components as (pixel count, top, left, bottom, right) with
/// exclusive bottom/right bounds.
pub fn connected_components(mask: &BitMask) -> Vec<(usize, usize, usize, usize, usize)> {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = BitMask::new(h, w);
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for c in 0..w {
        for r in 0..h {
            if !mask.get(r, c) || seen.get(r, c) {
                continue;
            }
            seen.set(r, c, true);
            queue.push_back((r, c));
            let (mut area, mut top, mut left, mut bottom, mut right) = (0, r, c, r + 1, c + 1);
            while let Some((pr, pc)) = queue.pop_front() {
                area += 1;
                top = top.min(pr);
                left = left.min(pc);
                bottom = bottom.max(pr + 1);
                right = right.max(pc + 1);
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (pr as i64 + dr, pc as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if mask.get(nr, nc) && !seen.get(nr, nc) {
                            seen.set(nr, nc, true);
                            queue.push_back((nr, nc));
                        }
                    }
                }
            }
            components.push((area, top, left, bottom, right));
        }
    }
    components
}

/// Finds filled noteheads by opening the ink with an elliptical element about
/// one space wide and keeping notehead-sized components. Thin strokes (staff
/// lines, stems) vanish under the opening; so do hollow heads.
pub fn detect_noteheads_classical(strip: &BinaryStrip, staff: &StaffSystem) -> Vec<NoteheadBox> {
    detect_noteheads_with(strip, staff, &ClassicalParams::default())
}

pub fn detect_noteheads_with(strip: &BinaryStrip, staff: &StaffSystem, params: &ClassicalParams) -> Vec<NoteheadBox> {
    let s = staff.spacing_px;
    let size = |x: f64| (x.round() as usize).max(1);
    let opened = open(&strip.mask, size(params.element_width * s), size(params.element_height * s));
    let s2 = s * s;
    connected_components(&opened)
        .into_iter()
        .filter_map(|(area, top, left, bottom, right)| {
            let (w, h) = (right - left, bottom - top);
            let aspect = w as f64 / h as f64;
            let area = area as f64;
            let keep = area >= params.min_area * s2
                && area <= params.max_area * s2
                && aspect >= params.min_aspect
                && aspect <= params.max_aspect;
            keep.then_some(NoteheadBox {
                strip_index: strip.strip_index,
                x: left,
                y: top,
                w,
                h,
                class: NoteheadClass::Filled,
                confidence: 0.5,
            })
        })
        .collect()
}

/// Runs the classical detector over every strip.
pub fn detect_all_classical(strips: &[BinaryStrip], staves: &[StaffSystem]) -> Vec<NoteheadBox> {
    strips
        .par_iter()
        .zip(staves.par_iter())
        .flat_map_iter(|(strip, staff)| detect_noteheads_classical(strip, staff))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(strip: usize, x: usize, y: usize, w: usize, h: usize) -> NoteheadBox {
        NoteheadBox {
            strip_index: strip,
            x,
            y,
            w,
            h,
            class: NoteheadClass::Filled,
            confidence: 1.0,
        }
    }

    #[test]
    fn parses_a_box_line() {
        let boxes = parse_noteheads("0,100,200,12,10,filled,0.97\n", &[(500, 300)], 0.0).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = boxes[0];
        assert_eq!((b.strip_index, b.x, b.y, b.w, b.h), (0, 100, 200, 12, 10));
        assert_eq!(b.class, NoteheadClass::Filled);
        assert_eq!(b.confidence, 0.97);
    }

    #[test]
    fn clips_to_strip_and_skips_comments() {
        let text = "# header\n\n0,95,5,10,8,half,0.5\n";
        let boxes = parse_noteheads(text, &[(100, 50)], 0.0).unwrap();
        assert_eq!(boxes[0].w, 5);
        assert_eq!(boxes[0].class, NoteheadClass::Half);
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(parse_noteheads("", &[(10, 10)], 0.0).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_noteheads("0,1,2,3,4,filled,0.5\n0,1,2,x,4,filled,1\n", &[(10, 10)], 0.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_noteheads("0,1,2,3,4,square,0.5", &[(10, 10)], 0.0),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_noteheads("0,1,2,3", &[(10, 10)], 0.0), Err(Error::Parse { .. })));
    }

    #[test]
    fn strip_out_of_range_is_validation_error() {
        assert!(matches!(
            parse_noteheads("3,1,2,3,4,filled,0.5", &[(10, 10)], 0.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn confidence_threshold_filters() {
        let text = "0,0,0,2,2,filled,0.2\n0,4,4,2,2,filled,0.9\n";
        assert_eq!(parse_noteheads(text, &[(10, 10)], 0.5).unwrap().len(), 1);
        assert_eq!(parse_noteheads(text, &[(10, 10)], 0.0).unwrap().len(), 2);
    }

    #[test]
    fn write_then_parse() {
        let boxes = vec![bx(0, 3, 4, 5, 6), bx(1, 0, 0, 1, 1)];
        let mut buf = Vec::new();
        write_noteheads(&boxes, &mut buf).unwrap();
        let parsed = parse_noteheads(std::str::from_utf8(&buf).unwrap(), &[(20, 20), (5, 5)], 0.0).unwrap();
        assert_eq!(parsed, boxes);
    }

    #[test]
    fn single_box_fills_its_area() {
        let sheet = boxes_to_bootleg(&[(4, 4)], &[bx(0, 0, 0, 2, 2)]);
        assert_eq!(sheet.masks[0].count_ones(), 4);
        let sheet = boxes_to_bootleg(&[(4, 4)], &[bx(0, 0, 0, 2, 2), bx(0, 1, 1, 2, 2)]);
        assert_eq!(sheet.masks[0].count_ones(), 7);
        let sheet = boxes_to_bootleg(&[(4, 4)], &[]);
        assert_eq!(sheet.masks[0].count_ones(), 0);
    }

    #[test]
    fn global_columns_round_trip() {
        let sheet = boxes_to_bootleg(&[(3, 2), (4, 2), (5, 2)], &[]);
        assert_eq!(sheet.offsets, vec![0, 3, 7]);
        assert_eq!(sheet.total_width(), 12);
        for strip in 0..3 {
            for c in 0..sheet.masks[strip].width() {
                let g = sheet.global_column(strip, c);
                assert_eq!(sheet.locate(g), Some((strip, c)));
            }
        }
        assert_eq!(sheet.locate(5), Some((1, 2)));
        assert_eq!(sheet.locate(12), None);
    }

    #[test]
    fn raw_mode_is_identity() {
        let mask = BitMask::from_fn(9, 7, |r, c| (r * c) % 4 == 1);
        let strip = BinaryStrip { strip_index: 0, mask: mask.clone() };
        assert_eq!(raw_bootleg(&[strip]).masks[0], mask);
        let blank = BinaryStrip { strip_index: 0, mask: BitMask::new(3, 3) };
        assert_eq!(raw_bootleg(&[blank]).ink(), 0);
    }

    fn staff(spacing: f64) -> StaffSystem {
        StaffSystem {
            strip_index: 0,
            spacing_px: spacing,
            upper_top_row: 40.0,
            lower_top_row: 120.0,
            response_score: 0.0,
        }
    }

    fn stamp_ellipse(mask: &mut BitMask, top: usize, left: usize, w: usize, h: usize) {
        let (a, b) = (w as f64 / 2.0, h as f64 / 2.0);
        for r in 0..h {
            for c in 0..w {
                let dx = (c as f64 + 0.5 - a) / a;
                let dy = (r as f64 + 0.5 - b) / b;
                if dx * dx + dy * dy <= 1.0 {
                    mask.set(top + r, left + c, true);
                }
            }
        }
    }

    #[test]
    fn classical_detector_finds_stamped_heads() {
        let s = 10.0;
        let mut mask = BitMask::new(200, 300);
        let heads = [(50usize, 20usize), (70, 60), (130, 110), (95, 200), (150, 250)];
        for &(top, left) in &heads {
            stamp_ellipse(&mut mask, top, left, 12, 10);
        }
        let strip = BinaryStrip { strip_index: 0, mask };
        let found = detect_noteheads_classical(&strip, &staff(s));
        assert_eq!(found.len(), heads.len());
        for &(top, left) in &heads {
            let truth = bx(0, left, top, 12, 10);
            assert!(found.iter().any(|b| b.iou(&truth) >= 0.5), "missed head at {top},{left}: {found:?}");
        }
    }

    #[test]
    fn classical_detector_ignores_lines_and_blank() {
        let blank = BinaryStrip { strip_index: 0, mask: BitMask::new(200, 100) };
        assert!(detect_noteheads_classical(&blank, &staff(10.0)).is_empty());
        let lines = BitMask::from_fn(200, 100, |r, c| ((40..=80).contains(&r) && r % 10 == 0) || c == 50);
        let strip = BinaryStrip { strip_index: 0, mask: lines };
        assert!(detect_noteheads_classical(&strip, &staff(10.0)).is_empty());
    }

    #[test]
    fn components_are_eight_connected() {
        let mask = BitMask::from_fn(4, 4, |r, c| r == c);
        let comps = connected_components(&mask);
        assert_eq!(comps, vec![(4, 0, 0, 4, 4)]);
    }

    #[test]
    fn iou_of_identical_and_disjoint() {
        let a = bx(0, 0, 0, 4, 4);
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        assert_eq!(a.iou(&bx(0, 10, 10, 2, 2)), 0.0);
        assert!((a.iou(&bx(0, 2, 0, 4, 4)) - 8.0 / 24.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn filled_count_bounded_by_box_areas(
            raw in proptest::collection::vec((0usize..30, 0usize..30, 1usize..8, 1usize..8), 0..12)
        ) {
            let boxes: Vec<NoteheadBox> = raw.iter().map(|&(x, y, w, h)| bx(0, x, y, w, h)).collect();
            let clipped: Vec<NoteheadBox> = boxes.iter().map(|b| {
                let mut b = *b;
                b.w = b.w.min(32 - b.x);
                b.h = b.h.min(32 - b.y);
                b
            }).collect();
            let sheet = boxes_to_bootleg(&[(32, 32)], &clipped);
            let area: usize = clipped.iter().map(NoteheadBox::area).sum();
            let overlapping = clipped.iter().enumerate().any(|(i, a)| {
                clipped[i + 1..].iter().any(|b| a.iou(b) > 0.0)
            });
            let ink = sheet.masks[0].count_ones();
            prop_assert!(ink <= area);
            prop_assert_eq!(ink == area, !overlapping);
        }
    }
}
