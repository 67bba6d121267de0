//! Grand-staff coordinate system of a strip.
//!
//! The row projection of the ink mask is correlated with combs of five
//! equally spaced impulses over a geometric range of spacings. For each
//! spacing the two best non-overlapping comb placements are paired; the
//! spacing with the strongest pair wins (smallest spacing among near-ties,
//! since a comb at twice the true pitch also fires on a staff). The winner is
//! refined on a fine spacing grid and by parabolic interpolation of the
//! placement response, and finally by a least-squares fit to the centroids
//! of the ten lines.

use std::io::Write;

use rayon::prelude::*;

use crate::sheet::BinaryStrip;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaffSystem {
    pub strip_index: usize,
    /// Distance between adjacent staff lines.
    pub spacing_px: f64,
    /// Row of the treble staff's top line.
    pub upper_top_row: f64,
    /// Row of the bass staff's top line.
    pub lower_top_row: f64,
    pub response_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Staff {
    Upper,
    Lower,
}

impl StaffSystem {
    pub fn top_row(&self, staff: Staff) -> f64 {
        match staff {
            Staff::Upper => self.upper_top_row,
            Staff::Lower => self.lower_top_row,
        }
    }

    /// Row of the bottom line of `staff`, the origin of staff positions.
    pub fn bottom_row(&self, staff: Staff) -> f64 {
        self.top_row(staff) + 4.0 * self.spacing_px
    }

    pub fn fits_height(&self, height: usize) -> bool {
        self.spacing_px > 0.0
            && self.upper_top_row >= 0.0
            && self.upper_top_row + 4.0 * self.spacing_px < self.lower_top_row
            && self.lower_top_row + 4.0 * self.spacing_px < height as f64
    }
}

/// Spacing search range for the comb bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaffSearch {
    pub spacing_min: f64,
    pub spacing_max: f64,
    pub spacing_steps: usize,
}

impl Default for StaffSearch {
    fn default() -> Self {
        StaffSearch {
            spacing_min: 4.0,
            spacing_max: 30.0,
            spacing_steps: 60,
        }
    }
}

impl StaffSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_min >= 2.0) || !(self.spacing_max >= self.spacing_min) || self.spacing_steps == 0 {
            return Err(Error::Validation(format!(
                "invalid staff search range [{}, {}] with {} steps",
                self.spacing_min, self.spacing_max, self.spacing_steps
            )));
        }
        Ok(())
    }

    /// Geometrically spaced candidates over `[spacing_min, upper]`.
    fn grid(&self, upper: f64) -> Vec<f64> {
        let hi = self.spacing_max.min(upper);
        if hi < self.spacing_min {
            return Vec::new();
        }
        if self.spacing_steps == 1 || hi == self.spacing_min {
            return vec![self.spacing_min];
        }
        let ratio = (hi / self.spacing_min).powf(1.0 / (self.spacing_steps - 1) as f64);
        (0..self.spacing_steps)
            .map(|k| self.spacing_min * ratio.powi(k as i32))
            .collect()
    }
}

/// Best pair of comb placements at one spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombMatch {
    pub spacing_px: f64,
    pub upper_top_row: f64,
    pub lower_top_row: f64,
    pub response_score: f64,
}

/// Ink count per row.
pub fn row_projection(strip: &BinaryStrip) -> Vec<u32> {
    strip.mask.row_counts()
}

fn sample(projection: &[f64], x: f64) -> f64 {
    let i = x.floor();
    let frac = x - i;
    let i = i as usize;
    let a = projection.get(i).copied().unwrap_or(0.0);
    if frac == 0.0 {
        return a;
    }
    let b = projection.get(i + 1).copied().unwrap_or(0.0);
    a + (b - a) * frac
}

fn comb_at(projection: &[f64], top: f64, spacing: f64) -> f64 {
    (0..5).map(|k| sample(projection, top + k as f64 * spacing)).sum()
}

/// Integer-row placement responses and the best non-overlapping pair
/// (`r2 > r1 + 4 * spacing`) at a fixed spacing.
fn best_pair(projection: &[f64], spacing: f64) -> Option<(usize, usize, f64, Vec<f64>)> {
    let height = projection.len();
    let span = 4.0 * spacing;
    if span + 1.0 > height as f64 {
        return None;
    }
    let last = (height as f64 - 1.0 - span).floor() as usize;
    let responses: Vec<f64> = (0..=last).map(|r| comb_at(projection, r as f64, spacing)).collect();
    let gap = span.floor() as usize + 1;
    let mut best: Option<(usize, usize, f64)> = None;
    let mut prefix_best: Option<usize> = None;
    for r2 in gap..=last {
        let r1_candidate = r2 - gap;
        if prefix_best.is_none_or(|p| responses[r1_candidate] > responses[p]) {
            prefix_best = Some(r1_candidate);
        }
        let r1 = prefix_best.unwrap();
        let total = responses[r1] + responses[r2];
        if best.is_none_or(|(_, _, b)| total > b) {
            best = Some((r1, r2, total));
        }
    }
    let (r1, r2, total) = best?;
    if responses[r1] <= 0.0 || responses[r2] <= 0.0 {
        return None;
    }
    Some((r1, r2, total, responses))
}

fn parabolic_offset(responses: &[f64], r: usize) -> f64 {
    if r == 0 || r + 1 >= responses.len() {
        return 0.0;
    }
    let (a, b, c) = (responses[r - 1], responses[r], responses[r + 1]);
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// Pair response of the comb at one spacing, with sub-pixel placement rows.
pub fn comb_response(projection: &[u32], spacing: f64) -> Option<CombMatch> {
    let projection: Vec<f64> = projection.iter().map(|&v| v as f64).collect();
    comb_response_f64(&projection, spacing)
}

fn comb_response_f64(projection: &[f64], spacing: f64) -> Option<CombMatch> {
    let (r1, r2, total, responses) = best_pair(projection, spacing)?;
    Some(CombMatch {
        spacing_px: spacing,
        upper_top_row: r1 as f64 + parabolic_offset(&responses, r1),
        lower_top_row: r2 as f64 + parabolic_offset(&responses, r2),
        response_score: total,
    })
}

const HARMONIC_TOLERANCE: f64 = 0.02;
const FINE_STEP_PX: f64 = 0.02;

/// Searches the comb bank for the grand staff. Spacings that cannot fit two
/// five-line staves (`spacing >= height / 9`) are skipped. Returns `None` when
/// no pair of non-overlapping placements has positive response.
pub fn comb_filter_bank(projection: &[u32], search: &StaffSearch) -> Option<CombMatch> {
    let height = projection.len();
    let fit_limit = (height as f64 - 1.0) / 9.0;
    let grid = search.grid(fit_limit);
    // A one-row max filter lets fractional comb taps see a thin line at full
    // strength; the line-centroid fit restores sub-pixel precision later.
    let projection: Vec<f64> = (0..height)
        .map(|r| projection[r.saturating_sub(1)..(r + 2).min(height)].iter().copied().max().unwrap_or(0) as f64)
        .collect();

    let scored: Vec<(usize, f64)> = grid
        .iter()
        .enumerate()
        .filter_map(|(k, &s)| best_pair(&projection, s).map(|(_, _, total, _)| (k, total)))
        .collect();
    let max = scored.iter().map(|&(_, t)| t).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max <= 0.0 {
        return None;
    }
    let coarse = scored
        .iter()
        .find(|&&(_, t)| t >= (1.0 - HARMONIC_TOLERANCE) * max)
        .map(|&(k, _)| k)?;

    // Fine search across two grid cells either side of the coarse pick.
    let lo = grid[coarse.saturating_sub(2)].max(search.spacing_min);
    let hi = grid[(coarse + 2).min(grid.len() - 1)].min(fit_limit);
    let mut best: Option<CombMatch> = None;
    let steps = ((hi - lo) / FINE_STEP_PX).ceil() as usize;
    for i in 0..=steps {
        let s = (lo + i as f64 * FINE_STEP_PX).min(hi);
        if let Some(m) = comb_response_f64(&projection, s) {
            if best.is_none_or(|b| m.response_score > b.response_score) {
                best = Some(m);
            }
        }
    }
    best
}

/// Thresholded centroid of the projection mass near `row`: rows within a
/// third of a spacing that reach half the local peak.
fn line_centroid(projection: &[f64], row: f64, spacing: f64) -> Option<f64> {
    let radius = (spacing / 3.0).max(1.0);
    let lo = (row - radius).floor().max(0.0) as usize;
    let hi = ((row + radius).ceil() as usize).min(projection.len().checked_sub(1)?);
    let peak = projection.get(lo..=hi)?.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let (mut mass, mut moment) = (0.0, 0.0);
    for (r, &v) in projection.iter().enumerate().take(hi + 1).skip(lo) {
        if v >= 0.5 * peak {
            mass += v;
            moment += v * r as f64;
        }
    }
    Some(moment / mass)
}

/// Least-squares fit of a shared spacing and two top rows to the centroids
/// of the ten lines the comb found. Keeps the comb estimate when a line has
/// no mass or the fit wanders off.
fn refine_by_line_centroids(projection: &[f64], m: CombMatch) -> CombMatch {
    let mut tops = [m.upper_top_row, m.lower_top_row];
    let mut spacing = m.spacing_px;
    for _ in 0..2 {
        let mut centroids = [[0.0; 5]; 2];
        for (staff, top) in tops.iter().enumerate() {
            for k in 0..5 {
                match line_centroid(projection, top + k as f64 * spacing, spacing) {
                    Some(c) => centroids[staff][k] = c,
                    None => return m,
                }
            }
        }
        let means = centroids.map(|c| c.iter().sum::<f64>() / 5.0);
        let num: f64 = (0..2)
            .map(|st| (0..5).map(|k| (k as f64 - 2.0) * (centroids[st][k] - means[st])).sum::<f64>())
            .sum();
        let fitted = num / 20.0;
        if !((fitted - m.spacing_px).abs() <= m.spacing_px / 8.0) {
            return m;
        }
        spacing = fitted;
        tops = [means[0] - 2.0 * spacing, means[1] - 2.0 * spacing];
    }
    CombMatch {
        spacing_px: spacing,
        upper_top_row: tops[0],
        lower_top_row: tops[1],
        response_score: m.response_score,
    }
}

/// Staff geometry of a single strip.
pub fn detect_staff(strip: &BinaryStrip, search: &StaffSearch) -> Result<StaffSystem> {
    search.validate()?;
    let projection = row_projection(strip);
    let m = comb_filter_bank(&projection, search).ok_or_else(|| Error::StaffDetection {
        strip_index: strip.strip_index,
        reason: "no pair of non-overlapping staff placements responds".into(),
    })?;
    let projection: Vec<f64> = projection.iter().map(|&v| v as f64).collect();
    let m = refine_by_line_centroids(&projection, m);
    Ok(StaffSystem {
        strip_index: strip.strip_index,
        spacing_px: m.spacing_px,
        upper_top_row: m.upper_top_row,
        lower_top_row: m.lower_top_row,
        response_score: m.response_score,
    })
}

/// Per-strip outcome; failed strips carry fallback geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct StaffDetection {
    pub system: StaffSystem,
    pub fallback: bool,
    pub failure: Option<String>,
}

/// Detects every strip. A strip that fails borrows the median geometry of the
/// strips that succeeded (recentred vertically if it would not fit) and is
/// flagged. Fails only when no strip succeeds.
pub fn detect_staves(strips: &[BinaryStrip], search: &StaffSearch) -> Result<Vec<StaffDetection>> {
    if strips.is_empty() {
        return Err(Error::EmptyInput("no strips to detect staves on"));
    }
    search.validate()?;
    let results: Vec<Result<StaffSystem>> = strips.par_iter().map(|s| detect_staff(s, search)).collect();

    let ok: Vec<&StaffSystem> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        let reasons: Vec<String> = results
            .iter()
            .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
            .collect();
        return Err(Error::StaffDetection {
            strip_index: strips[0].strip_index,
            reason: format!("all strips failed ({})", reasons.join("; ")),
        });
    }
    let spacing = median(ok.iter().map(|s| s.spacing_px));
    let upper = median(ok.iter().map(|s| s.upper_top_row));
    let lower = median(ok.iter().map(|s| s.lower_top_row));

    Ok(strips
        .iter()
        .zip(results)
        .map(|(strip, result)| match result {
            Ok(system) => StaffDetection {
                system,
                fallback: false,
                failure: None,
            },
            Err(e) => {
                let mut system = StaffSystem {
                    strip_index: strip.strip_index,
                    spacing_px: spacing,
                    upper_top_row: upper,
                    lower_top_row: lower,
                    response_score: 0.0,
                };
                if !system.fits_height(strip.height()) {
                    let extent = lower + 4.0 * spacing - upper;
                    let shift = (strip.height() as f64 - extent) / 2.0 - upper;
                    system.upper_top_row += shift;
                    system.lower_top_row += shift;
                }
                StaffDetection {
                    system,
                    fallback: true,
                    failure: Some(e.to_string()),
                }
            }
        })
        .collect())
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One line per strip:
/// `strip_index,spacing_px,upper_top_row,lower_top_row,response_score,fallback`.
pub fn write_diagnostics(detections: &[StaffDetection], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "strip_index,spacing_px,upper_top_row,lower_top_row,response_score,fallback")?;
    for d in detections {
        let s = &d.system;
        writeln!(
            out,
            "{},{:.3},{:.3},{:.3},{:.1},{}",
            s.strip_index,
            s.spacing_px,
            s.upper_top_row,
            s.lower_top_row,
            s.response_score,
            u8::from(d.fallback)
        )?;
    }
    Ok(())
}
