//! Cost blocks, block-assembled DTW and time/pixel queries.
//!
//! Rows of the global cost matrix are MIDI bootleg columns and its columns
//! are sheet columns of the concatenated strips. Block `i` compares the MIDI
//! bootleg rendered in strip `i`'s coordinates against strip `i`'s sheet
//! mask. Entries are resolved lazily from the two bit masks.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bootleg::Timeline;
use crate::mask::BitMask;
use crate::{Error, Result};

/// Lazily evaluated cost block of one strip.
#[derive(Debug, Clone)]
pub struct CostBlock {
    pub strip_index: usize,
    midi: Arc<BitMask>,
    sheet: Arc<BitMask>,
}

impl CostBlock {
    pub fn rows(&self) -> usize {
        self.midi.width()
    }

    pub fn cols(&self) -> usize {
        self.sheet.width()
    }

    /// Minus the number of rows inked in both columns.
    #[inline]
    pub fn get(&self, k: usize, l: usize) -> i64 {
        -(self.midi.column_overlap(k, &self.sheet, l) as i64)
    }

    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        (0..self.rows())
            .map(|k| (0..self.cols()).map(|l| self.get(k, l)).collect())
            .collect()
    }
}

pub fn cost_block(midi_bootleg: Arc<BitMask>, sheet_mask: Arc<BitMask>, strip_index: usize) -> Result<CostBlock> {
    if midi_bootleg.height() != sheet_mask.height() {
        return Err(Error::Contract(format!(
            "strip {strip_index}: MIDI bootleg height {} differs from sheet height {}",
            midi_bootleg.height(),
            sheet_mask.height()
        )));
    }
    Ok(CostBlock {
        strip_index,
        midi: midi_bootleg,
        sheet: sheet_mask,
    })
}

/// Read access to a cost matrix. Costs are integers so DTW is exact.
pub trait CostMatrix: Sync {
    fn shape(&self) -> (usize, usize);
    fn cost(&self, i: usize, j: usize) -> i64;
}

/// Blocks laid side by side; column `j` resolves to its owning block.
#[derive(Debug, Clone)]
pub struct GlobalCost {
    blocks: Vec<CostBlock>,
    offsets: Vec<usize>,
    owner: Vec<u32>,
    rows: usize,
}

pub fn assemble_global(blocks: Vec<CostBlock>) -> Result<GlobalCost> {
    let first = blocks.first().ok_or(Error::EmptyInput("no cost blocks"))?;
    let rows = first.rows();
    let total: usize = blocks.iter().map(CostBlock::cols).sum();
    if let Some(b) = blocks.iter().find(|b| b.rows() != rows) {
        return Err(Error::Contract(format!(
            "block {} has {} rows, expected {rows}",
            b.strip_index,
            b.rows()
        )));
    }
    if total != rows {
        return Err(Error::Contract(format!(
            "block widths sum to {total}, expected {rows}"
        )));
    }
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut owner = Vec::with_capacity(total);
    for (k, b) in blocks.iter().enumerate() {
        offsets.push(owner.len());
        owner.extend(std::iter::repeat_n(k as u32, b.cols()));
    }
    Ok(GlobalCost {
        blocks,
        offsets,
        owner,
        rows,
    })
}

impl GlobalCost {
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn blocks(&self) -> &[CostBlock] {
        &self.blocks
    }

    /// Owning block and local column of global column `j`.
    pub fn locate(&self, j: usize) -> (usize, usize) {
        let k = self.owner[j] as usize;
        (k, j - self.offsets[k])
    }
}

impl CostMatrix for GlobalCost {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.owner.len())
    }

    #[inline]
    fn cost(&self, i: usize, j: usize) -> i64 {
        let (k, l) = self.locate(j);
        self.blocks[k].get(i, l)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCost {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl DenseCost {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        DenseCost { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        DenseCost::new(rows.len(), cols, rows.concat())
    }
}

impl CostMatrix for DenseCost {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn cost(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }
}

/// Allowed steps as (row, column) advances, in tie-break order, with weights.
pub const STEPS: [(usize, usize, i64); 3] = [(1, 1, 2), (1, 2, 3), (2, 1, 3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DtwOptions {
    /// Above this many columns the backtrace is packed at 2 bits per cell.
    pub memory_limit: usize,
}

impl Default for DtwOptions {
    fn default() -> Self {
        DtwOptions { memory_limit: 30_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    /// (midi column, global sheet column), strictly increasing in both.
    pub points: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Column range of row `i` that can lie on a path from (0,0) to (n-1,m-1),
/// given slopes between 1/2 and 2; `None` when no path can touch the row
/// (a (2,1) step may skip it).
fn band(i: usize, n: usize, m: usize) -> Option<(usize, usize)> {
    let rest = n - 1 - i;
    let lo = i.div_ceil(2).max((m - 1).saturating_sub(2 * rest));
    let hi_bwd = (m - 1).checked_sub(rest.div_ceil(2))?;
    let hi = (2 * i).min(hi_bwd);
    (lo <= hi).then_some((lo, hi))
}

const NONE: u8 = 3;

/// Backtrace codes of one band row, one byte or two bits per cell.
enum TraceRow {
    Bytes(Vec<u8>),
    Packed(Vec<u8>),
}

impl TraceRow {
    fn new(len: usize, packed: bool) -> Self {
        if packed {
            TraceRow::Packed(vec![0xff; len.div_ceil(4)])
        } else {
            TraceRow::Bytes(vec![NONE; len])
        }
    }

    fn set(&mut self, k: usize, code: u8) {
        match self {
            TraceRow::Bytes(v) => v[k] = code,
            TraceRow::Packed(v) => {
                let shift = 2 * (k % 4);
                v[k / 4] = (v[k / 4] & !(3 << shift)) | (code << shift);
            }
        }
    }

    fn get(&self, k: usize) -> u8 {
        match self {
            TraceRow::Bytes(v) => v[k],
            TraceRow::Packed(v) => (v[k / 4] >> (2 * (k % 4))) & 3,
        }
    }
}

/// Minimum-cost path from (0,0) to (n-1,m-1) with steps (1,1), (1,2), (2,1)
/// weighted 2, 3, 3 and D(0,0) = 2·C(0,0). Ties prefer (1,1), then (1,2),
/// then (2,1).
pub fn dtw<C: CostMatrix + ?Sized>(cost: &C, opts: &DtwOptions) -> Result<AlignmentPath> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput("empty cost matrix"));
    }
    let bands: Vec<Option<(usize, usize)>> = (0..n).map(|i| band(i, n, m)).collect();
    if bands[0].is_none() || bands[n - 1].is_none() {
        return Err(Error::Infeasible { rows: n, cols: m });
    }
    let packed = m > opts.memory_limit;
    const INF: i64 = i64::MAX;
    // Rolling full-width rows: D(i-1, ·) and D(i-2, ·); the third buffer last
    // held row i-3. Only band cells are ever written, so clearing a buffer
    // means resetting that row's band.
    let mut prev1 = vec![INF; m];
    let mut prev2 = vec![INF; m];
    let mut current = vec![INF; m];
    let mut trace: Vec<TraceRow> = Vec::with_capacity(n);
    let mut costs: Vec<i64> = Vec::new();
    for (i, &range) in bands.iter().enumerate() {
        if let Some(Some((lo, hi))) = i.checked_sub(3).map(|k| bands[k]) {
            current[lo..=hi].fill(INF);
        }
        let Some((lo, hi)) = range else {
            trace.push(TraceRow::new(0, packed));
            std::mem::swap(&mut prev2, &mut prev1);
            std::mem::swap(&mut prev1, &mut current);
            continue;
        };
        let width = hi - lo + 1;
        costs.clear();
        costs.resize(width, 0);
        if width >= 2048 {
            costs.par_iter_mut().enumerate().for_each(|(k, c)| *c = cost.cost(i, lo + k));
        } else {
            for (k, c) in costs.iter_mut().enumerate() {
                *c = cost.cost(i, lo + k);
            }
        }
        let mut row = TraceRow::new(width, packed);
        for j in lo..=hi {
            let c = costs[j - lo];
            if i == 0 && j == 0 {
                current[0] = 2 * c;
                continue;
            }
            let mut best = INF;
            let mut best_code = NONE;
            for (code, &(di, dj, w)) in STEPS.iter().enumerate() {
                if i < di || j < dj {
                    continue;
                }
                let pred = if di == 1 { prev1[j - dj] } else { prev2[j - dj] };
                if pred == INF {
                    continue;
                }
                let candidate = pred + w * c;
                if candidate < best {
                    best = candidate;
                    best_code = code as u8;
                }
            }
            current[j] = best;
            row.set(j - lo, best_code);
        }
        trace.push(row);
        std::mem::swap(&mut prev2, &mut prev1);
        std::mem::swap(&mut prev1, &mut current);
    }
    let total = prev1[m - 1];
    if total == INF {
        return Err(Error::Infeasible { rows: n, cols: m });
    }
    let mut points = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let code = trace[i].get(j - bands[i].expect("path cells lie in the band").0);
        let (di, dj, _) = STEPS[code as usize];
        i -= di;
        j -= dj;
        points.push((i, j));
    }
    points.reverse();
    Ok(AlignmentPath {
        points,
        total_cost: total as f64,
    })
}

impl AlignmentPath {
    /// Checks the structural invariants against a matrix shape.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        match (self.points.first(), self.points.last()) {
            (Some(&(0, 0)), Some(&end)) if end == (rows - 1, cols - 1) => {}
            _ => return bad(format!("path does not span (0,0)..({},{})", rows - 1, cols - 1)),
        }
        for w in self.points.windows(2) {
            let step = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !STEPS.iter().any(|&(di, dj, _)| (di, dj) == step) {
                return bad(format!("illegal step {:?} -> {:?}", w[0], w[1]));
            }
        }
        Ok(())
    }

    /// Recomputes the weighted cost of the path.
    pub fn cost_on<C: CostMatrix + ?Sized>(&self, cost: &C) -> i64 {
        let mut total = 2 * cost.cost(0, 0);
        for w in self.points.windows(2) {
            let (i, j) = w[1];
            let weight = if w[1].0 - w[0].0 == 1 && w[1].1 - w[0].1 == 1 { 2 } else { 3 };
            total += weight * cost.cost(i, j);
        }
        total
    }

    /// MIDI column matched to a (fractional) global sheet column, linearly
    /// interpolated between the bracketing path points.
    pub fn midi_col_at(&self, sheet_col: f64) -> f64 {
        interpolate_points(&self.points, sheet_col, |p| p.1 as f64, |p| p.0 as f64)
    }

    /// Global sheet column matched to a (fractional) MIDI column.
    pub fn sheet_col_at(&self, midi_col: f64) -> f64 {
        interpolate_points(&self.points, midi_col, |p| p.0 as f64, |p| p.1 as f64)
    }
}

fn interpolate_points(
    points: &[(usize, usize)],
    x: f64,
    key: impl Fn(&(usize, usize)) -> f64,
    value: impl Fn(&(usize, usize)) -> f64,
) -> f64 {
    let k = points.partition_point(|p| key(p) < x);
    if k == 0 {
        return value(&points[0]);
    }
    if k == points.len() {
        return value(&points[k - 1]);
    }
    let (a, b) = (&points[k - 1], &points[k]);
    if key(b) == x {
        return value(b);
    }
    value(a) + (x - key(a)) * (value(b) - value(a)) / (key(b) - key(a))
}

/// Original performance seconds at `pixel_x` of strip `strip_index`.
/// `offsets` and `widths` describe the concatenated strips.
pub fn query_time_at_pixel(
    path: &AlignmentPath,
    offsets: &[usize],
    widths: &[usize],
    strip_index: usize,
    pixel_x: f64,
    timeline: &Timeline,
) -> Result<f64> {
    let width = *widths
        .get(strip_index)
        .ok_or_else(|| Error::Domain(format!("strip {strip_index} out of range (0..{})", widths.len())))?;
    if !(pixel_x >= 0.0 && pixel_x <= (width - 1) as f64) {
        return Err(Error::Domain(format!(
            "pixel {pixel_x} outside strip {strip_index} of width {width}"
        )));
    }
    let global = offsets[strip_index] as f64 + pixel_x;
    Ok(timeline.column_to_seconds(path.midi_col_at(global)))
}

/// Time-to-pixel direction: the global sheet column matched to `t` seconds.
pub fn query_pixel_at_time(path: &AlignmentPath, t: f64, timeline: &Timeline) -> f64 {
    path.sheet_col_at(timeline.seconds_to_column(t))
}

/// Maps the concatenated sheet uniformly onto the performance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBaseline {
    pub total_width: usize,
    pub duration_sec: f64,
}

pub fn global_linear_baseline(total_width: usize, duration_sec: f64) -> Result<LinearBaseline> {
    if total_width == 0 {
        return Err(Error::EmptyInput("no sheet columns"));
    }
    Ok(LinearBaseline {
        total_width,
        duration_sec,
    })
}

impl LinearBaseline {
    pub fn time_at_global(&self, g: f64) -> f64 {
        if self.total_width < 2 {
            return 0.0;
        }
        g / (self.total_width - 1) as f64 * self.duration_sec
    }

    pub fn time_at_pixel(&self, offsets: &[usize], strip_index: usize, pixel_x: f64) -> f64 {
        self.time_at_global(offsets[strip_index] as f64 + pixel_x)
    }
}

/// Writes one line per path point:
/// `midi_col,global_sheet_col,strip_index,local_col,time_sec`.
pub fn write_alignment(
    path: &AlignmentPath,
    offsets: &[usize],
    timeline: &Timeline,
    config_digest: &str,
    mut out: impl Write,
) -> std::io::Result<()> {
    writeln!(out, "# w_total={} config_digest={config_digest}", timeline.width)?;
    writeln!(out, "# midi_col,global_sheet_col,strip_index,local_col,time_sec")?;
    for &(i, j) in &path.points {
        let strip = offsets.partition_point(|&o| o <= j) - 1;
        writeln!(
            out,
            "{i},{j},{strip},{},{:.6}",
            j - offsets[strip],
            timeline.column_to_seconds(i as f64)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootleg::TimeMap;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over all step-constrained paths.
    fn brute_force(cost: &DenseCost) -> Option<i64> {
        fn go(c: &DenseCost, i: usize, j: usize) -> Option<i64> {
            if (i, j) == (c.rows - 1, c.cols - 1) {
                return Some(0);
            }
            STEPS
                .iter()
                .filter(|&&(di, dj, _)| i + di < c.rows && j + dj < c.cols)
                .filter_map(|&(di, dj, w)| go(c, i + di, j + dj).map(|rest| w * c.cost(i + di, j + dj) + rest))
                .min()
        }
        go(cost, 0, 0).map(|rest| 2 * cost.cost(0, 0) + rest)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, max: usize) -> DenseCost {
        let rows = rng.gen_range(1..=max);
        let cols = rng.gen_range(1..=max);
        DenseCost::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-9..=0)).collect())
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut feasible = 0;
        for _ in 0..1000 {
            let c = random_matrix(&mut rng, 8);
            match (brute_force(&c), dtw(&c, &DtwOptions::default())) {
                (Some(best), Ok(path)) => {
                    feasible += 1;
                    assert_eq!(path.total_cost, best as f64);
                    path.validate(c.rows, c.cols).unwrap();
                    assert_eq!(path.cost_on(&c), best);
                }
                (None, Err(Error::Infeasible { rows, cols })) => assert_eq!((rows, cols), (c.rows, c.cols)),
                (b, p) => panic!("oracle {b:?} vs dtw {p:?} on {c:?}"),
            }
        }
        assert!(feasible > 300);
    }

    #[test]
    fn one_by_one() {
        let c = DenseCost::from_rows(&[vec![-4]]);
        let p = dtw(&c, &DtwOptions::default()).unwrap();
        assert_eq!(p.points, vec![(0, 0)]);
        assert_eq!(p.total_cost, -8.0);
    }

    #[test]
    fn zero_matrix_takes_the_diagonal() {
        let c = DenseCost::new(3, 3, vec![0; 9]);
        let p = dtw(&c, &DtwOptions::default()).unwrap();
        assert_eq!(p.points, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(p.total_cost, 0.0);
    }

    #[test]
    fn unreachable_end_is_infeasible() {
        let c = DenseCost::new(2, 6, vec![0; 12]);
        assert!(matches!(
            dtw(&c, &DtwOptions::default()),
            Err(Error::Infeasible { rows: 2, cols: 6 })
        ));
        let c = DenseCost::new(2, 2, vec![0; 4]);
        assert!(dtw(&c, &DtwOptions::default()).is_ok());
    }

    #[test]
    fn packed_backtrace_gives_identical_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let c = random_matrix(&mut rng, 40);
            let wide = dtw(&c, &DtwOptions { memory_limit: 1 << 20 });
            let packed = dtw(&c, &DtwOptions { memory_limit: 0 });
            assert_eq!(wide.ok(), packed.ok());
        }
    }

    #[test]
    fn band_matches_reachability() {
        for n in 1..9 {
            for m in 1..9 {
                let zeros = DenseCost::new(n, m, vec![0; n * m]);
                let feasible = brute_force(&zeros).is_some();
                let banded = dtw(&zeros, &DtwOptions::default()).is_ok();
                assert_eq!(feasible, banded, "{n}x{m}");
            }
        }
    }

    fn masks_block(midi: &[&[bool]], sheet: &[&[bool]], idx: usize) -> CostBlock {
        let mk = |cols: &[&[bool]]| {
            Arc::new(BitMask::from_fn(cols[0].len(), cols.len(), |r, c| cols[c][r]))
        };
        cost_block(mk(midi), mk(sheet), idx).unwrap()
    }

    #[test]
    fn cost_entries_are_negative_overlap() {
        let t = true;
        let f = false;
        let b = masks_block(&[&[t, t, t, t, t, f], &[t; 6]], &[&[t, t, t, t, t, f], &[f, f, f, f, f, t], &[t, f, t, f, f, f]], 0);
        assert_eq!(b.get(0, 0), -5);
        assert_eq!(b.get(0, 1), 0);
        assert_eq!(b.get(1, 2), -2);
        assert!(b.to_dense().iter().flatten().all(|&v| v <= 0));
    }

    #[test]
    fn height_mismatch_is_contract_error() {
        let r = cost_block(Arc::new(BitMask::new(4, 3)), Arc::new(BitMask::new(5, 3)), 0);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn global_assembly_resolves_owners() {
        let midi = Arc::new(BitMask::from_fn(4, 7, |r, c| (r + c) % 2 == 0));
        let a = cost_block(midi.clone(), Arc::new(BitMask::from_fn(4, 3, |r, _| r == 0)), 0).unwrap();
        let b = cost_block(midi.clone(), Arc::new(BitMask::from_fn(4, 4, |r, _| r < 2)), 1).unwrap();
        let g = assemble_global(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(g.shape(), (7, 7));
        assert_eq!(g.offsets(), &[0, 3]);
        assert_eq!(g.locate(5), (1, 2));
        assert_eq!(g.locate(2), (0, 2));
        for i in 0..7 {
            for j in 0..3 {
                assert_eq!(g.cost(i, j), a.get(i, j));
            }
            for j in 3..7 {
                assert_eq!(g.cost(i, j), b.get(i, j - 3));
            }
        }

        let single = cost_block(midi.clone(), Arc::new(BitMask::from_fn(4, 7, |_, c| c == 3)), 0).unwrap();
        let g = assemble_global(vec![single.clone()]).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(g.cost(i, j), single.get(i, j));
            }
        }

        let short = cost_block(midi, Arc::new(BitMask::new(4, 2)), 0).unwrap();
        assert!(matches!(assemble_global(vec![short]), Err(Error::Contract(_))));
        assert!(assemble_global(vec![]).is_err());
    }

    fn timeline(cps: f64, width: usize, map: TimeMap) -> Timeline {
        Timeline {
            columns_per_second: cps,
            width,
            time_map: map,
        }
    }

    fn diagonal(n: usize) -> AlignmentPath {
        AlignmentPath {
            points: (0..n).map(|i| (i, i)).collect(),
            total_cost: 0.0,
        }
    }

    #[test]
    fn identity_path_query() {
        let tl = timeline(20.0, 100, TimeMap::identity());
        let t = query_time_at_pixel(&diagonal(100), &[0, 50], &[50, 50], 0, 40.0, &tl).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        let t = query_time_at_pixel(&diagonal(100), &[0, 50], &[50, 50], 1, 10.0, &tl).unwrap();
        assert!((t - 3.0).abs() < 1e-12);
        assert!(matches!(
            query_time_at_pixel(&diagonal(100), &[0, 50], &[50, 50], 1, 50.0, &tl),
            Err(Error::Domain(_))
        ));
        assert!(query_time_at_pixel(&diagonal(100), &[0, 50], &[50, 50], 2, 0.0, &tl).is_err());
    }

    #[test]
    fn query_interpolates_between_points() {
        let path = AlignmentPath {
            points: vec![(0, 0), (10, 20), (12, 21)],
            total_cost: 0.0,
        };
        assert_eq!(path.midi_col_at(20.0), 10.0);
        assert_eq!(path.midi_col_at(20.5), 11.0);
        assert_eq!(path.midi_col_at(10.0), 5.0);
        assert_eq!(path.sheet_col_at(11.0), 20.5);
    }

    #[test]
    fn query_inside_compressed_gap_maps_proportionally() {
        // 5 s of silence after t = 1 compressed to 2 s.
        let (_, map) = crate::bootleg::compress_gaps(&[0.0, 1.0, 6.0, 7.0], 2.0);
        let tl = timeline(10.0, 41, map);
        let path = diagonal(41);
        // Compressed 2.0 s (column 20) is 1/2 through the 1..3 compressed gap.
        let t = query_time_at_pixel(&path, &[0], &[41], 0, 20.0, &tl).unwrap();
        assert!((t - 3.5).abs() < 1e-9);
    }

    #[test]
    fn linear_baseline_endpoints() {
        let b = global_linear_baseline(101, 50.0).unwrap();
        assert_eq!(b.time_at_global(0.0), 0.0);
        assert_eq!(b.time_at_global(100.0), 50.0);
        assert_eq!(b.time_at_global(50.0), 25.0);
        assert_eq!(b.time_at_pixel(&[0, 60], 1, 40.0), 50.0);
        assert!(global_linear_baseline(0, 1.0).is_err());
    }

    #[test]
    fn export_format() {
        let tl = timeline(1.0, 4, TimeMap::identity());
        let path = AlignmentPath {
            points: vec![(0, 0), (1, 2), (3, 3)],
            total_cost: -3.0,
        };
        let mut buf = Vec::new();
        write_alignment(&path, &[0, 2], &tl, "abc", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# w_total=4 config_digest=abc");
        assert_eq!(lines[2], "0,0,0,0,0.000000");
        assert_eq!(lines[3], "1,2,1,0,1.000000");
        assert_eq!(lines[4], "3,3,1,1,3.000000");
    }

    proptest! {
        #[test]
        fn scaling_costs_keeps_the_path(
            rows in 1usize..10, cols in 1usize..10, seed in any::<u64>(), k in 1i64..7
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<i64> = (0..rows * cols).map(|_| rng.gen_range(-9..=0)).collect();
            let a = DenseCost::new(rows, cols, data.clone());
            let b = DenseCost::new(rows, cols, data.iter().map(|v| v * k).collect());
            let (pa, pb) = (dtw(&a, &DtwOptions::default()), dtw(&b, &DtwOptions::default()));
            match (pa, pb) {
                (Ok(pa), Ok(pb)) => {
                    prop_assert_eq!(&pa.points, &pb.points);
                    prop_assert_eq!(pa.total_cost * k as f64, pb.total_cost);
                    pa.validate(rows, cols).unwrap();
                    for w in pa.points.windows(2) {
                        prop_assert!(w[1].0 > w[0].0 && w[1].1 > w[0].1);
                    }
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "feasibility differs under scaling"),
            }
        }

        #[test]
        fn query_is_monotone_in_pixel(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 30;
            let data: Vec<i64> = (0..n * n).map(|_| rng.gen_range(-9..=0)).collect();
            let path = dtw(&DenseCost::new(n, n, data), &DtwOptions::default()).unwrap();
            let (_, map) = crate::bootleg::compress_gaps(&[0.0, 0.5, 4.0, 5.0], 1.0);
            let tl = timeline(12.0, n, map);
            let mut last = f64::NEG_INFINITY;
            for strip in 0..2 {
                for x in 0..15 {
                    let t = query_time_at_pixel(&path, &[0, 15], &[15, 15], strip, x as f64 + 0.5 * (x < 14) as u8 as f64, &tl).unwrap();
                    prop_assert!(t >= last);
                    last = t;
                }
            }
        }
    }
}
