//! Shot segmentation and recurring-shot labeling from block color histograms.

mod histogram;
pub mod ppm;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use histogram::{compute_block_histograms, BlockHistogram, HsvBins, RgbImage};

use crate::union_find::UnionFind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotConfig {
    /// Adjacent frames whose similarity falls below this value are split by a cut.
    pub cut_threshold: f64,
    /// A shot is similar to an earlier one when the boundary frames correlate at least this much.
    pub similarity_threshold: f64,
    pub block_rows: usize,
    pub block_cols: usize,
    pub bins_h: usize,
    pub bins_s: usize,
    pub bins_v: usize,
    /// Number of earlier shots compared against; `None` compares against all of them.
    pub lookback_shots: Option<usize>,
}

impl Default for ShotConfig {
    fn default() -> Self {
        ShotConfig {
            cut_threshold: 0.5,
            similarity_threshold: 0.8,
            block_rows: 5,
            block_cols: 6,
            bins_h: 8,
            bins_s: 4,
            bins_v: 4,
            lookback_shots: None,
        }
    }
}

impl ShotConfig {
    pub fn bins(&self) -> HsvBins {
        HsvBins {
            h: self.bins_h,
            s: self.bins_s,
            v: self.bins_v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_rows == 0 || self.block_cols == 0 {
            return Err(Error::InvalidConfig(
                "block grid dimensions must be >= 1".into(),
            ));
        }
        if self.bins_h == 0 || self.bins_s == 0 || self.bins_v == 0 {
            return Err(Error::InvalidConfig("HSV bin counts must be >= 1".into()));
        }
        if self.lookback_shots == Some(0) {
            return Err(Error::InvalidConfig(
                "lookback must be >= 1 when set".into(),
            ));
        }
        if self.cut_threshold.is_nan() || self.similarity_threshold.is_nan() {
            return Err(Error::InvalidConfig("thresholds must not be NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDescriptor {
    pub frame_index: u64,
    pub timestamp: f64,
    pub histogram: BlockHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub id: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_time: f64,
    pub end_time: f64,
}

/// One label per shot; shots sharing a label are recurring views of the same setup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotLabeling {
    pub labels: Vec<u32>,
}

impl ShotLabeling {
    pub fn num_labels(&self) -> usize {
        self.labels
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    }
}

/// Pearson correlation of two histograms with total conventions for flat inputs.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    match (var_a == 0.0, var_b == 0.0) {
        (true, true) => {
            if a == b {
                1.0
            } else {
                0.0
            }
        }
        (true, false) | (false, true) => 0.0,
        (false, false) => (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0),
    }
}

/// Mean over blocks of the per-block histogram correlation.
pub fn histogram_similarity(a: &BlockHistogram, b: &BlockHistogram) -> Result<f64> {
    if !a.same_layout(b) {
        return Err(Error::LayoutMismatch(format!(
            "{}x{}/{:?} vs {}x{}/{:?}",
            a.rows, a.cols, a.bins, b.rows, b.cols, b.bins
        )));
    }
    let total: f64 = a.blocks().zip(b.blocks()).map(|(x, y)| pearson(x, y)).sum();
    Ok(total / a.num_blocks() as f64)
}

pub fn frame_similarity(a: &FrameDescriptor, b: &FrameDescriptor) -> Result<f64> {
    histogram_similarity(&a.histogram, &b.histogram)
}

fn check_stream(frames: &[FrameDescriptor]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames"));
    }
    for w in frames.windows(2) {
        if w[1].frame_index <= w[0].frame_index || w[1].timestamp < w[0].timestamp {
            return Err(Error::InconsistentShots(format!(
                "frame {} does not follow frame {}",
                w[1].frame_index, w[0].frame_index
            )));
        }
    }
    Ok(())
}

/// Similarities between each pair of adjacent frames.
pub fn adjacent_similarities(frames: &[FrameDescriptor]) -> Result<Vec<f64>> {
    frames
        .par_windows(2)
        .map(|w| frame_similarity(&w[0], &w[1]))
        .collect()
}

/// Splits frames into shots at the given cut positions (index of the first frame after each cut).
pub fn shots_from_cuts(frames: &[FrameDescriptor], cut_positions: &[usize]) -> Vec<Shot> {
    let n = frames.len();
    let mut starts = vec![0];
    starts.extend(cut_positions.iter().copied().filter(|&p| p > 0 && p < n));
    let tail = if n >= 2 {
        frames[n - 1].timestamp - frames[n - 2].timestamp
    } else {
        0.0
    };
    starts
        .iter()
        .enumerate()
        .map(|(id, &s)| {
            let e = starts.get(id + 1).map_or(n, |&next| next);
            Shot {
                id,
                start_frame: frames[s].frame_index,
                end_frame: frames[e - 1].frame_index,
                start_time: frames[s].timestamp,
                end_time: if e < n {
                    frames[e].timestamp
                } else {
                    frames[n - 1].timestamp + tail
                },
            }
        })
        .collect()
}

/// Hypothesizes a cut between adjacent frames whose similarity is below the cut threshold.
pub fn detect_cuts(frames: &[FrameDescriptor], config: &ShotConfig) -> Result<Vec<Shot>> {
    check_stream(frames)?;
    let sims = adjacent_similarities(frames)?;
    Ok(cuts_from_similarities(frames, &sims, config.cut_threshold))
}

pub fn cuts_from_similarities(
    frames: &[FrameDescriptor],
    sims: &[f64],
    threshold: f64,
) -> Vec<Shot> {
    let cuts: Vec<usize> = sims
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < threshold)
        .map(|(i, _)| i + 1)
        .collect();
    shots_from_cuts(frames, &cuts)
}

fn shot_positions(shots: &[Shot], frames: &[FrameDescriptor]) -> Result<Vec<(usize, usize)>> {
    let position = |index: u64| {
        frames
            .binary_search_by_key(&index, |f| f.frame_index)
            .map_err(|_| Error::InconsistentShots(format!("frame {index} not in stream")))
    };
    let mut expected = 0;
    let mut out = Vec::with_capacity(shots.len());
    for shot in shots {
        let (s, e) = (position(shot.start_frame)?, position(shot.end_frame)?);
        if s != expected || e < s {
            return Err(Error::InconsistentShots(format!(
                "shot {} does not continue the partition at frame position {expected}",
                shot.id
            )));
        }
        expected = e + 1;
        out.push((s, e));
    }
    if expected != frames.len() {
        return Err(Error::InconsistentShots(format!(
            "shots cover {expected} of {} frames",
            frames.len()
        )));
    }
    Ok(out)
}

/// Pairs `(earlier, later)` of shots whose boundary frames are similar.
pub fn similar_shot_pairs(
    shots: &[Shot],
    frames: &[FrameDescriptor],
    config: &ShotConfig,
) -> Result<Vec<(usize, usize)>> {
    config.validate()?;
    let positions = shot_positions(shots, frames)?;
    let per_shot: Vec<Vec<(usize, usize)>> = (0..shots.len())
        .into_par_iter()
        .map(|j| {
            let first = &frames[positions[j].0];
            let from = config.lookback_shots.map_or(0, |w| j.saturating_sub(w));
            (from..j)
                .filter_map(|i| {
                    let last = &frames[positions[i].1];
                    match frame_similarity(first, last) {
                        Ok(c) if c >= config.similarity_threshold => Some(Ok((i, j))),
                        Ok(_) => None,
                        Err(e) => Some(Err(e)),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_shot.into_iter().flatten().collect())
}

/// Labels shots by the connected components of the pairwise similarity graph.
pub fn detect_similar_shots(
    shots: &[Shot],
    frames: &[FrameDescriptor],
    config: &ShotConfig,
) -> Result<ShotLabeling> {
    let pairs = similar_shot_pairs(shots, frames, config)?;
    Ok(labels_from_pairs(shots.len(), &pairs))
}

pub fn labels_from_pairs(num_shots: usize, pairs: &[(usize, usize)]) -> ShotLabeling {
    let mut uf = UnionFind::new(num_shots);
    for &(a, b) in pairs {
        uf.union(a, b);
    }
    ShotLabeling {
        labels: uf.components().into_iter().map(|c| c as u32).collect(),
    }
}

/// Reads `NNNNNN.ppm` frames from a directory in file-name order.
pub fn load_frame_dir(dir: &Path, fps: f64, config: &ShotConfig) -> Result<Vec<FrameDescriptor>> {
    if !(fps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "fps must be positive, got {fps}"
        )));
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("ppm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput("no .ppm frames in directory"));
    }
    paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let image = ppm::read_ppm(path)?;
            Ok(FrameDescriptor {
                frame_index: i as u64,
                timestamp: i as f64 / fps,
                histogram: compute_block_histograms(&image, config)?,
            })
        })
        .collect()
}
