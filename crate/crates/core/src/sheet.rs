//! Sheet-music image strips: loading, grayscale conversion and binarization.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::mask::BitMask;
use crate::{Error, Result};

/// One line of music (a single grand staff), grayscale, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageStrip {
    pub strip_index: usize,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageStrip {
    pub fn new(strip_index: usize, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "strip {strip_index} has empty extent {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Contract(format!(
                "strip {strip_index}: {} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(ImageStrip {
            strip_index,
            width,
            height,
            pixels,
        })
    }

    pub fn from_gray(strip_index: usize, image: &image::GrayImage) -> Result<Self> {
        let (w, h) = image.dimensions();
        ImageStrip::new(strip_index, w as usize, h as usize, image.as_raw().clone())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Row-major intensities.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn to_gray_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel buffer matches dimensions")
    }
}

/// Ink mask of one strip (`true` = ink).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryStrip {
    pub strip_index: usize,
    pub mask: BitMask,
}

impl BinaryStrip {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }
}

/// Decodes each path into a grayscale strip; `strip_index` is the list position.
pub fn load_strips(paths: &[PathBuf]) -> Result<Vec<ImageStrip>> {
    paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| load_strip(i, path))
        .collect()
}

fn load_strip(strip_index: usize, path: &Path) -> Result<ImageStrip> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    ImageStrip::from_gray(strip_index, &decoded.to_luma8())
}

/// Reads a manifest (one image path per line, `#` comments and blank lines
/// skipped). Relative entries resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

/// Image files of a directory in lexicographic order.
pub fn strip_paths_in_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "tif" | "tiff"))
            .unwrap_or(false);
        if is_image {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Otsu threshold over a 256-bin histogram. Intensities `<= t` form the dark
/// class. Returns `None` when fewer than two intensity levels are present.
pub fn otsu_threshold(histogram: &[u64; 256]) -> Option<u8> {
    let total: i128 = histogram.iter().map(|&n| n as i128).sum();
    let weighted_total: i128 = histogram
        .iter()
        .enumerate()
        .map(|(v, &n)| v as i128 * n as i128)
        .sum();
    let mut w0 = 0i128;
    let mut sum0 = 0i128;
    let mut best: Option<(u8, f64)> = None;
    for t in 0..255usize {
        w0 += histogram[t] as i128;
        sum0 += t as i128 * histogram[t] as i128;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        // N^2 times the between-class variance; the class-mean difference is
        // kept in exact integers so ties resolve identically under rescaling.
        let d = (w1 * sum0 - w0 * (weighted_total - sum0)) as f64;
        let between = d * d / (w0 as f64 * w1 as f64);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t)
}

/// Global Otsu binarization. If more than half the pixels come out as ink the
/// polarity is flipped, since scores are dark ink on light paper.
pub fn binarize(strip: &ImageStrip) -> BinaryStrip {
    let mut histogram = [0u64; 256];
    for &p in &strip.pixels {
        histogram[p as usize] += 1;
    }
    let mut mask = BitMask::new(strip.height, strip.width);
    if let Some(t) = otsu_threshold(&histogram) {
        for row in 0..strip.height {
            for col in 0..strip.width {
                if strip.get(row, col) <= t {
                    mask.set(row, col, true);
                }
            }
        }
        if mask.count_ones() * 2 > strip.width * strip.height {
            mask.invert();
        }
    }
    BinaryStrip {
        strip_index: strip.strip_index,
        mask,
    }
}

pub fn binarize_all(strips: &[ImageStrip]) -> Vec<BinaryStrip> {
    strips.par_iter().map(binarize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strip_from(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> ImageStrip {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        ImageStrip::new(0, width, height, pixels).unwrap()
    }

    #[test]
    fn bimodal_image_marks_dark_pixels() {
        let strip = strip_from(20, 10, |r, c| if (r * 7 + c) % 5 == 0 { 20 } else { 235 });
        let bin = binarize(&strip);
        for r in 0..10 {
            for c in 0..20 {
                assert_eq!(bin.mask.get(r, c), strip.get(r, c) == 20);
            }
        }
    }

    #[test]
    fn uniform_image_has_no_ink() {
        let bin = binarize(&strip_from(8, 8, |_, _| 255));
        assert_eq!(bin.mask.count_ones(), 0);
        let bin = binarize(&strip_from(8, 8, |_, _| 0));
        assert_eq!(bin.mask.count_ones(), 0);
    }

    #[test]
    fn synthetic_staff_lines_are_pixel_exact() {
        let lines = [10usize, 18, 26, 34, 42];
        let strip = strip_from(60, 60, |r, _| if lines.contains(&r) { 0 } else { 255 });
        let bin = binarize(&strip);
        for r in 0..60 {
            for c in 0..60 {
                assert_eq!(bin.mask.get(r, c), lines.contains(&r), "row {r} col {c}");
            }
        }
    }

    #[test]
    fn inverted_scan_is_flipped() {
        // White ink on black: the majority class would otherwise be "ink".
        let strip = strip_from(10, 10, |r, _| if r == 3 { 250 } else { 5 });
        let bin = binarize(&strip);
        assert_eq!(bin.mask.count_ones(), 10);
        assert!((0..10).all(|c| bin.mask.get(3, c)));
    }

    #[test]
    fn empty_extent_rejected() {
        assert!(ImageStrip::new(0, 0, 5, vec![]).is_err());
    }

    #[test]
    fn rgb_rows_convert_by_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("page.png");
        let img = image::RgbImage::from_fn(30, 9, |_, y| {
            if y == 4 {
                image::Rgb([0, 0, 0])
            } else {
                image::Rgb([255, 255, 255])
            }
        });
        img.save(&path).unwrap();
        let strips = load_strips(&[path]).unwrap();
        assert_eq!(strips.len(), 1);
        let s = &strips[0];
        let row_mean = |r: usize| (0..s.width()).map(|c| s.get(r, c) as f64).sum::<f64>() / s.width() as f64;
        assert_eq!(row_mean(4), 0.0);
        assert_eq!(row_mean(0), 255.0);
    }

    #[test]
    fn load_strips_indexes_by_position_and_names_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for i in 0..3 {
            let p = dir.path().join(format!("s{i}.png"));
            image::GrayImage::from_pixel(4 + i, 3, image::Luma([200])).save(&p).unwrap();
            paths.push(p);
        }
        let strips = load_strips(&paths).unwrap();
        assert_eq!(strips.iter().map(|s| s.strip_index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(strips[2].width(), 6);
        assert!(load_strips(&[]).unwrap().is_empty());

        let bogus = dir.path().join("bogus.png");
        std::fs::write(&bogus, b"not an image").unwrap();
        let err = load_strips(std::slice::from_ref(&bogus)).unwrap_err();
        assert!(err.to_string().contains("bogus.png"));
    }

    #[test]
    fn manifest_and_directory_ordering() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.png", "c.txt"] {
            std::fs::write(dir.path().join(name), b"").unwrap();
        }
        let listed = strip_paths_in_dir(dir.path()).unwrap();
        let names: Vec<_> = listed.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, vec!["a.png", "b.png"]);

        let manifest = dir.path().join("strips.txt");
        std::fs::write(&manifest, "# order\nb.png\n\na.png\n").unwrap();
        let listed = read_manifest(&manifest).unwrap();
        assert_eq!(listed, vec![dir.path().join("b.png"), dir.path().join("a.png")]);
    }

    proptest! {
        #[test]
        fn affine_rescaling_preserves_mask(
            pixels in proptest::collection::vec(0u8..=127, 64),
            offset in 0u8..=1,
        ) {
            let a = ImageStrip::new(0, 8, 8, pixels.clone()).unwrap();
            let scaled: Vec<u8> = pixels.iter().map(|&p| p * 2 + offset).collect();
            let b = ImageStrip::new(0, 8, 8, scaled).unwrap();
            prop_assert_eq!(binarize(&a).mask, binarize(&b).mask);
        }

        #[test]
        fn ink_fraction_at_most_half(pixels in proptest::collection::vec(any::<u8>(), 1..200)) {
            let n = pixels.len();
            let strip = ImageStrip::new(0, n, 1, pixels).unwrap();
            let bin = binarize(&strip);
            prop_assert!(bin.mask.count_ones() * 2 <= n);
        }
    }
}
