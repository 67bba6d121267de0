//! Beat-level evaluation: error rate as a function of error tolerance.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Beat position within a measure as a reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BeatPos {
    num: u32,
    den: u32,
}

impl BeatPos {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 {
            return Err(Error::Validation("beat denominator is zero".into()));
        }
        let g = gcd(num, den);
        Ok(BeatPos { num: num / g, den: den / g })
    }

    pub fn whole(beat: u32) -> Self {
        BeatPos { num: beat, den: 1 }
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl fmt::Display for BeatPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

pub type BeatKey = (u32, BeatPos);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SheetBeatAnnotation {
    pub strip_index: usize,
    pub pixel_x: usize,
    pub measure: u32,
    pub beat: BeatPos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidiBeatAnnotation {
    pub measure: u32,
    pub beat: BeatPos,
    pub time_sec: f64,
}

/// Out-of-tolerance counts over a tolerance grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub tolerances_sec: Vec<f64>,
    pub out_of_tolerance: Vec<usize>,
    pub n_beats: usize,
}

impl ErrorCurve {
    pub fn from_errors(errors: &[f64], tolerances_sec: &[f64]) -> Self {
        ErrorCurve {
            tolerances_sec: tolerances_sec.to_vec(),
            out_of_tolerance: tolerances_sec
                .iter()
                .map(|&tol| errors.iter().filter(|&&e| e > tol).count())
                .collect(),
            n_beats: errors.len(),
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        self.out_of_tolerance
            .iter()
            .map(|&k| if self.n_beats == 0 { 0.0 } else { k as f64 / self.n_beats as f64 })
            .collect()
    }

    /// Error rate at a tolerance on the grid.
    pub fn rate_at(&self, tolerance_sec: f64) -> Option<f64> {
        let k = self
            .tolerances_sec
            .iter()
            .position(|&t| (t - tolerance_sec).abs() < 1e-9)?;
        Some(self.rates()[k])
    }

    /// Rates never increase with the tolerance (grid assumed ascending).
    pub fn is_monotone(&self) -> bool {
        let mut order: Vec<usize> = (0..self.tolerances_sec.len()).collect();
        order.sort_by(|&a, &b| self.tolerances_sec[a].total_cmp(&self.tolerances_sec[b]));
        order
            .windows(2)
            .all(|w| self.out_of_tolerance[w[1]] <= self.out_of_tolerance[w[0]])
    }

    /// `tolerance_ms,error_rate,n_beats` rows.
    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "tolerance_ms,error_rate,n_beats")?;
        for (tol, rate) in self.tolerances_sec.iter().zip(self.rates()) {
            writeln!(out, "{},{:.6},{}", (tol * 1000.0).round() as i64, rate, self.n_beats)?;
        }
        Ok(())
    }
}

/// 0 to 2000 ms in 50 ms steps.
pub fn default_tolerances() -> Vec<f64> {
    (0..=40).map(|k| k as f64 * 0.05).collect()
}

pub fn validate_tolerances(tolerances_sec: &[f64]) -> Result<()> {
    if tolerances_sec.is_empty() {
        return Err(Error::Validation("empty tolerance grid".into()));
    }
    if let Some(t) = tolerances_sec.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Validation(format!("invalid tolerance {t}")));
    }
    Ok(())
}

/// Scores predicted times against ground truth. `predict` maps a sheet
/// annotation to a predicted performance time.
pub fn evaluate(
    predict: impl Fn(&SheetBeatAnnotation) -> Result<f64>,
    sheet: &[SheetBeatAnnotation],
    midi: &[MidiBeatAnnotation],
    tolerances_sec: &[f64],
) -> Result<ErrorCurve> {
    validate_tolerances(tolerances_sec)?;
    let truth: BTreeMap<BeatKey, f64> = midi.iter().map(|a| ((a.measure, a.beat), a.time_sec)).collect();
    let missing: Vec<String> = sheet
        .iter()
        .filter(|a| !truth.contains_key(&(a.measure, a.beat)))
        .map(|a| format!("{}:{}", a.measure, a.beat))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "sheet beats without MIDI annotation: {}",
            missing.join(", ")
        )));
    }
    let errors = sheet
        .iter()
        .map(|a| Ok((predict(a)? - truth[&(a.measure, a.beat)]).abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ErrorCurve::from_errors(&errors, tolerances_sec))
}

/// Pools curves, weighting every beat equally.
pub fn aggregate(curves: &[ErrorCurve]) -> Result<ErrorCurve> {
    let first = curves.first().ok_or(Error::EmptyInput("no curves to aggregate"))?;
    let mut pooled = ErrorCurve {
        tolerances_sec: first.tolerances_sec.clone(),
        out_of_tolerance: vec![0; first.tolerances_sec.len()],
        n_beats: 0,
    };
    for c in curves {
        if c.tolerances_sec != first.tolerances_sec {
            return Err(Error::Validation("curves use different tolerance grids".into()));
        }
        pooled.n_beats += c.n_beats;
        for (acc, k) in pooled.out_of_tolerance.iter_mut().zip(&c.out_of_tolerance) {
            *acc += k;
        }
    }
    if pooled.n_beats == 0 {
        return Err(Error::Validation("curves contain no evaluated beats".into()));
    }
    Ok(pooled)
}

fn fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("bad {name}: {raw:?}"),
    })
}

fn expect_fields(line: usize, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Parse {
            line,
            reason: format!("expected {want} fields, found {got}"),
        });
    }
    Ok(())
}

/// `strip_index,pixel_x,measure,beat_num,beat_den` rows.
pub fn parse_sheet_annotations(text: &str) -> Result<Vec<SheetBeatAnnotation>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        let f = fields(line);
        expect_fields(n, f.len(), 5)?;
        out.push(SheetBeatAnnotation {
            strip_index: parse_field(n, "strip_index", f[0])?,
            pixel_x: parse_field(n, "pixel_x", f[1])?,
            measure: parse_field(n, "measure", f[2])?,
            beat: BeatPos::new(parse_field(n, "beat_num", f[3])?, parse_field(n, "beat_den", f[4])?)
                .map_err(|e| Error::Parse { line: n, reason: e.to_string() })?,
        });
    }
    Ok(out)
}

/// `measure,beat_num,beat_den,time_sec` rows.
pub fn parse_midi_annotations(text: &str) -> Result<Vec<MidiBeatAnnotation>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        let f = fields(line);
        expect_fields(n, f.len(), 4)?;
        let time_sec: f64 = parse_field(n, "time_sec", f[3])?;
        if !(time_sec >= 0.0) {
            return Err(Error::Parse {
                line: n,
                reason: format!("negative time {time_sec}"),
            });
        }
        out.push(MidiBeatAnnotation {
            measure: parse_field(n, "measure", f[0])?,
            beat: BeatPos::new(parse_field(n, "beat_num", f[1])?, parse_field(n, "beat_den", f[2])?)
                .map_err(|e| Error::Parse { line: n, reason: e.to_string() })?,
            time_sec,
        });
    }
    Ok(out)
}

pub fn load_sheet_annotations(path: &Path) -> Result<Vec<SheetBeatAnnotation>> {
    parse_sheet_annotations(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_midi_annotations(path: &Path) -> Result<Vec<MidiBeatAnnotation>> {
    parse_midi_annotations(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_sheet_annotations(annotations: &[SheetBeatAnnotation], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# strip_index,pixel_x,measure,beat_num,beat_den")?;
    for a in annotations {
        writeln!(out, "{},{},{},{},{}", a.strip_index, a.pixel_x, a.measure, a.beat.num, a.beat.den)?;
    }
    Ok(())
}

pub fn write_midi_annotations(annotations: &[MidiBeatAnnotation], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# measure,beat_num,beat_den,time_sec")?;
    for a in annotations {
        writeln!(out, "{},{},{},{:.6}", a.measure, a.beat.num, a.beat.den, a.time_sec)?;
    }
    Ok(())
}
