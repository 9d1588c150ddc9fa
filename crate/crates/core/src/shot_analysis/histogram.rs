use serde::{Deserialize, Serialize};

use super::ShotConfig;
use crate::{Error, Result};

/// Packed 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::LayoutMismatch(format!(
                "{}x{} RGB image needs {} bytes, got {}",
                width,
                height,
                width * height * 3,
                data.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        RgbImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Quantization of the HSV cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HsvBins {
    pub h: usize,
    pub s: usize,
    pub v: usize,
}

impl HsvBins {
    pub fn len(&self) -> usize {
        self.h * self.s * self.v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat bin of an 8-bit RGB pixel.
    ///
    /// Hue, saturation and value are binned uniformly on `[0, 360)`, `[0, 1]`
    /// and `[0, 1]`; the computation is carried out on integers so that pixels
    /// lying exactly on a bin edge always fall into the upper bin.
    pub fn bin_of(&self, [r, g, b]: [u8; 3]) -> usize {
        let (r, g, b) = (r as u64, g as u64, b as u64);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;

        let v_bin = ((max * self.v as u64) / 255).min(self.v as u64 - 1);
        let s_bin = (delta * self.s as u64)
            .checked_div(max)
            .map_or(0, |b| b.min(self.s as u64 - 1));
        let h_bin = if delta == 0 {
            0
        } else {
            // hue / 60deg scaled by delta, in [0, 6 * delta)
            let sixths = if max == r {
                if g >= b {
                    g - b
                } else {
                    6 * delta - (b - g)
                }
            } else if max == g {
                2 * delta + b - r
            } else {
                4 * delta + r - g
            };
            ((sixths * self.h as u64) / (6 * delta)).min(self.h as u64 - 1)
        };
        ((h_bin as usize * self.s) + s_bin as usize) * self.v + v_bin as usize
    }
}

/// Per-block normalized HSV histograms of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockHistogram {
    pub rows: usize,
    pub cols: usize,
    pub bins: HsvBins,
    /// `rows * cols` blocks of `bins.len()` masses each, block-major.
    pub masses: Vec<f64>,
}

impl BlockHistogram {
    pub fn from_masses(rows: usize, cols: usize, bins: HsvBins, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != rows * cols * bins.len() {
            return Err(Error::LayoutMismatch(format!(
                "expected {} masses for {}x{} blocks of {} bins, got {}",
                rows * cols * bins.len(),
                rows,
                cols,
                bins.len(),
                masses.len()
            )));
        }
        Ok(BlockHistogram {
            rows,
            cols,
            bins,
            masses,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.rows * self.cols
    }

    pub fn block(&self, index: usize) -> &[f64] {
        let n = self.bins.len();
        &self.masses[index * n..(index + 1) * n]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.masses.chunks(self.bins.len())
    }

    pub fn same_layout(&self, other: &BlockHistogram) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.bins == other.bins
    }
}

/// Start offsets of `parts` tiles over `len`; the last tile absorbs the remainder.
fn tile_bounds(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let step = len / parts;
    (0..parts)
        .map(|i| {
            let start = i * step;
            let end = if i + 1 == parts { len } else { start + step };
            (start, end)
        })
        .collect()
}

pub fn compute_block_histograms(image: &RgbImage, config: &ShotConfig) -> Result<BlockHistogram> {
    config.validate()?;
    if image.width == 0 || image.height == 0 {
        return Err(Error::EmptyImage);
    }
    if image.width < config.block_cols || image.height < config.block_rows {
        return Err(Error::ImageSmallerThanGrid {
            width: image.width,
            height: image.height,
            rows: config.block_rows,
            cols: config.block_cols,
        });
    }
    let bins = config.bins();
    let nbins = bins.len();
    let row_tiles = tile_bounds(image.height, config.block_rows);
    let col_tiles = tile_bounds(image.width, config.block_cols);

    let mut masses = vec![0.0; config.block_rows * config.block_cols * nbins];
    for (br, &(y0, y1)) in row_tiles.iter().enumerate() {
        for (bc, &(x0, x1)) in col_tiles.iter().enumerate() {
            let block = br * config.block_cols + bc;
            let mut counts = vec![0u64; nbins];
            for y in y0..y1 {
                for x in x0..x1 {
                    counts[bins.bin_of(image.pixel(x, y))] += 1;
                }
            }
            let total = ((y1 - y0) * (x1 - x0)) as f64;
            let dst = &mut masses[block * nbins..(block + 1) * nbins];
            for (m, c) in dst.iter_mut().zip(counts) {
                *m = c as f64 / total;
            }
        }
    }
    Ok(BlockHistogram {
        rows: config.block_rows,
        cols: config.block_cols,
        bins,
        masses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(rows: usize, cols: usize) -> ShotConfig {
        ShotConfig {
            block_rows: rows,
            block_cols: cols,
            ..ShotConfig::default()
        }
    }

    #[test]
    fn uniform_image_puts_all_mass_in_one_bin() {
        let img = RgbImage::filled(30, 20, [40, 200, 90]);
        let hist = compute_block_histograms(&img, &config(5, 6)).unwrap();
        let bin = hist.bins.bin_of([40, 200, 90]);
        for block in hist.blocks() {
            assert_eq!(block[bin], 1.0);
            assert_eq!(block.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn half_red_half_blue() {
        let mut img = RgbImage::filled(10, 4, [255, 0, 0]);
        for y in 0..4 {
            for x in 5..10 {
                img.set_pixel(x, y, [0, 0, 255]);
            }
        }
        let hist = compute_block_histograms(&img, &config(1, 1)).unwrap();
        let red = hist.bins.bin_of([255, 0, 0]);
        let blue = hist.bins.bin_of([0, 0, 255]);
        assert_ne!(red, blue);
        assert_eq!(hist.block(0)[red], 0.5);
        assert_eq!(hist.block(0)[blue], 0.5);
        assert_eq!(hist.block(0).iter().filter(|&&m| m > 0.0).count(), 2);
    }

    #[test]
    fn last_block_absorbs_remainder() {
        assert_eq!(tile_bounds(11, 3), vec![(0, 3), (3, 6), (6, 11)]);
    }

    #[test]
    fn primary_colors_bin_by_hue() {
        let bins = HsvBins { h: 6, s: 1, v: 1 };
        assert_eq!(bins.bin_of([255, 0, 0]), 0);
        assert_eq!(bins.bin_of([255, 255, 0]), 1);
        assert_eq!(bins.bin_of([0, 255, 0]), 2);
        assert_eq!(bins.bin_of([0, 255, 255]), 3);
        assert_eq!(bins.bin_of([0, 0, 255]), 4);
        assert_eq!(bins.bin_of([255, 0, 255]), 5);
        assert_eq!(bins.bin_of([255, 0, 1]), 5);
    }

    #[test]
    fn rejects_empty_and_too_small_images() {
        let empty = RgbImage::new(0, 0, vec![]).unwrap();
        assert!(matches!(
            compute_block_histograms(&empty, &config(5, 6)),
            Err(Error::EmptyImage)
        ));
        let small = RgbImage::filled(4, 4, [0, 0, 0]);
        assert!(matches!(
            compute_block_histograms(&small, &config(5, 6)),
            Err(Error::ImageSmallerThanGrid { .. })
        ));
    }
}
