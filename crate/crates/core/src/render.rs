//! Static visualizations of bootleg scores and alignments.

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::mask::BitMask;
use crate::noteheads::NoteheadBox;
use crate::pipeline::Alignment;
use crate::sheet::ImageStrip;
use crate::staff::{Staff, StaffSystem};
use crate::{Error, Result};

const BOX_COLOR: Rgb<u8> = Rgb([220, 30, 30]);
const STAFF_GRAY: u8 = 190;

fn staff_rows(staff: &StaffSystem, height: usize) -> Vec<usize> {
    [Staff::Upper, Staff::Lower]
        .iter()
        .flat_map(|&which| (0..5).map(move |k| staff.top_row(which) + k as f64 * staff.spacing_px))
        .map(|r| r.round())
        .filter(|&r| r >= 0.0 && r < height as f64)
        .map(|r| r as usize)
        .collect()
}

/// Ink black on white; staff lines, if given, in light gray underneath.
pub fn bootleg_image(mask: &BitMask, staff: Option<&StaffSystem>) -> GrayImage {
    let mut img = GrayImage::from_pixel(mask.width() as u32, mask.height() as u32, Luma([255]));
    if let Some(staff) = staff {
        for r in staff_rows(staff, mask.height()) {
            for c in 0..mask.width() {
                img.put_pixel(c as u32, r as u32, Luma([STAFF_GRAY]));
            }
        }
    }
    for c in 0..mask.width() {
        if mask.column_is_empty(c) {
            continue;
        }
        for r in 0..mask.height() {
            if mask.get(r, c) {
                img.put_pixel(c as u32, r as u32, Luma([0]));
            }
        }
    }
    img
}

fn outline(img: &mut RgbImage, b: &NoteheadBox) {
    let (w, h) = img.dimensions();
    let x1 = (b.x + b.w - 1).min(w as usize - 1);
    let y1 = (b.y + b.h - 1).min(h as usize - 1);
    for x in b.x..=x1 {
        img.put_pixel(x as u32, b.y as u32, BOX_COLOR);
        img.put_pixel(x as u32, y1 as u32, BOX_COLOR);
    }
    for y in b.y..=y1 {
        img.put_pixel(b.x as u32, y as u32, BOX_COLOR);
        img.put_pixel(x1 as u32, y as u32, BOX_COLOR);
    }
}

/// Top: the strip with its notehead boxes outlined. Bottom: for every strip
/// column, the MIDI bootleg column the alignment maps onto it.
pub fn render_overlay(strip: &ImageStrip, boxes: &[NoteheadBox], alignment: &Alignment) -> Result<RgbImage> {
    let k = strip.strip_index;
    let midi = alignment
        .midi_scores
        .get(k)
        .ok_or_else(|| Error::Validation(format!("strip {k} is not part of the alignment")))?;
    let (w, h) = (strip.width(), strip.height());
    if midi.mask.height() != h || alignment.sheet.masks[k].width() != w {
        return Err(Error::Contract(format!("strip {k} does not match the aligned geometry")));
    }
    let mut img = RgbImage::from_pixel(w as u32, 2 * h as u32, Rgb([255, 255, 255]));
    for r in 0..h {
        for c in 0..w {
            let v = strip.get(r, c);
            img.put_pixel(c as u32, r as u32, Rgb([v, v, v]));
        }
    }
    for b in boxes.iter().filter(|b| b.strip_index == k) {
        outline(&mut img, b);
    }
    let staff = &alignment.staves[k].system;
    let offset = alignment.sheet.offsets[k];
    let lines = staff_rows(staff, h);
    let last = midi.mask.width() - 1;
    for c in 0..w {
        let source = (alignment.path.midi_col_at((offset + c) as f64).round() as usize).min(last);
        for &r in &lines {
            img.put_pixel(c as u32, (h + r) as u32, Rgb([STAFF_GRAY; 3]));
        }
        if midi.mask.column_is_empty(source) {
            continue;
        }
        for r in 0..h {
            if midi.mask.get(r, source) {
                img.put_pixel(c as u32, (h + r) as u32, Rgb([0, 0, 0]));
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootleg_image_shows_ink_over_staff() {
        let mask = BitMask::from_fn(60, 10, |r, c| r == 20 && c < 3);
        let staff = StaffSystem {
            strip_index: 0,
            spacing_px: 4.0,
            upper_top_row: 4.0,
            lower_top_row: 30.0,
            response_score: 0.0,
        };
        let img = bootleg_image(&mask, Some(&staff));
        assert_eq!(img.get_pixel(0, 20).0, [0]);
        assert_eq!(img.get_pixel(5, 20).0, [STAFF_GRAY]);
        assert_eq!(img.get_pixel(5, 5).0, [255]);
        let plain = bootleg_image(&mask, None);
        assert_eq!(plain.get_pixel(5, 20).0, [255]);
    }
}
