//! Packed binary images.
//!
//! Masks are stored column-major with each column packed into `u64` words,
//! because every consumer downstream (cost blocks, bootleg stamping) works a
//! column at a time: the overlap of two columns is a popcount over a few words.

use std::fmt;

#[derive(Clone, PartialEq, Eq)]
pub struct BitMask {
    height: usize,
    width: usize,
    words_per_col: usize,
    bits: Vec<u64>,
}

impl BitMask {
    pub fn new(height: usize, width: usize) -> Self {
        let words_per_col = height.div_ceil(64);
        BitMask {
            height,
            width,
            words_per_col,
            bits: vec![0; words_per_col * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = BitMask::new(height, width);
        for col in 0..width {
            for row in 0..height {
                if f(row, col) {
                    mask.set(row, col, true);
                }
            }
        }
        mask
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.height && col < self.width);
        let word = self.bits[col * self.words_per_col + row / 64];
        (word >> (row % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.height && col < self.width);
        let word = &mut self.bits[col * self.words_per_col + row / 64];
        let bit = 1u64 << (row % 64);
        if value {
            *word |= bit;
        } else {
            *word &= !bit;
        }
    }

    /// Sets every pixel of the half-open rectangle `[row0, row1) x [col0, col1)`,
    /// clipped to the mask. Coordinates may lie outside the mask.
    pub fn fill_rect(&mut self, row0: i64, row1: i64, col0: i64, col1: i64) {
        let r0 = row0.clamp(0, self.height as i64) as usize;
        let r1 = row1.clamp(0, self.height as i64) as usize;
        let c0 = col0.clamp(0, self.width as i64) as usize;
        let c1 = col1.clamp(0, self.width as i64) as usize;
        if r0 >= r1 || c0 >= c1 {
            return;
        }
        for col in c0..c1 {
            let base = col * self.words_per_col;
            for row in r0..r1 {
                self.bits[base + row / 64] |= 1u64 << (row % 64);
            }
        }
    }

    /// Packed words of one column; bit `r % 64` of word `r / 64` is row `r`.
    #[inline]
    pub fn column(&self, col: usize) -> &[u64] {
        let start = col * self.words_per_col;
        &self.bits[start..start + self.words_per_col]
    }

    pub fn column_is_empty(&self, col: usize) -> bool {
        self.column(col).iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of rows where column `col` of `self` and column `other_col` of
    /// `other` are both set. Heights must agree.
    #[inline]
    pub fn column_overlap(&self, col: usize, other: &BitMask, other_col: usize) -> u32 {
        debug_assert_eq!(self.height, other.height);
        self.column(col)
            .iter()
            .zip(other.column(other_col))
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    /// Ink count per row.
    pub fn row_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.height];
        for col in 0..self.width {
            for (w, &word) in self.column(col).iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    counts[w * 64 + b] += 1;
                    bits &= bits - 1;
                }
            }
        }
        counts
    }

    pub fn invert(&mut self) {
        let tail = self.height % 64;
        for col in 0..self.width {
            let base = col * self.words_per_col;
            for w in 0..self.words_per_col {
                self.bits[base + w] = !self.bits[base + w];
            }
            if tail != 0 {
                self.bits[base + self.words_per_col - 1] &= (1u64 << tail) - 1;
            }
        }
    }

    pub fn union_with(&mut self, other: &BitMask) {
        assert_eq!((self.height, self.width), (other.height, other.width));
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }
}

impl fmt::Debug for BitMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitMask({}x{}, {} set)", self.height, self.width, self.count_ones())
    }
}
