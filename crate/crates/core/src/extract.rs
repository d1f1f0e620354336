//! Decoding regression heatmaps into triplets.
//!
//! Peaks are found per row with a 1D non-maximum suppression: a column is a
//! peak when it reaches `min_peak_value`, is not exceeded anywhere within
//! `nms_radius` columns, and is strictly greater than every column to its
//! left inside that window. The last condition keeps only the leftmost
//! column of a plateau and guarantees that peaks are more than
//! `nms_radius` apart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Heatmap, Triplet, TripletMode};

/// Non-maximum suppression parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    pub nms_radius: usize,
    /// Pixels for the 1-channel map, probability for the 3-channel one.
    pub min_peak_value: f64,
}

impl PeakConfig {
    pub fn one_channel() -> Self {
        Self {
            nms_radius: 2,
            min_peak_value: 1.0,
        }
    }

    pub fn three_channel() -> Self {
        Self {
            nms_radius: 2,
            min_peak_value: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nms_radius == 0 {
            return Err(Error::InvalidConfig("nms_radius must be >= 1".into()));
        }
        if !(self.min_peak_value >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "min_peak_value must be >= 0, got {}",
                self.min_peak_value
            )));
        }
        Ok(())
    }
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self::one_channel()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub y: usize,
    pub x: usize,
    pub value: f32,
}

fn row_peaks(row: &[f32], cfg: &PeakConfig, mut emit: impl FnMut(usize, f32)) {
    let r = cfg.nms_radius;
    let w = row.len();
    for x in 0..w {
        let v = row[x];
        if (v as f64) < cfg.min_peak_value {
            continue;
        }
        let lo = x.saturating_sub(r);
        let hi = (x + r).min(w - 1);
        if row[lo..x].iter().all(|&u| u < v) && row[x + 1..=hi].iter().all(|&u| u <= v) {
            emit(x, v);
        }
    }
}

/// Peaks of row `y`, sorted by column.
pub fn detect_row_peaks(hm: &Heatmap, y: usize, cfg: &PeakConfig) -> Vec<Peak> {
    let mut out = Vec::new();
    row_peaks(hm.row(y), cfg, |x, value| out.push(Peak { y, x, value }));
    out
}

fn clamp_triplet(mut t: Triplet, width: usize) -> Triplet {
    let max_x = (width - 1) as f64;
    if t.x_left < 0.0 {
        t.x_left = 0.0;
        t.clamped = true;
    }
    if t.x_right > max_x {
        t.x_right = max_x;
        t.clamped = true;
    }
    t
}

/// Triplets of the 1-channel design: each peak `(x, v)` becomes
/// `(x - v, x, x + v)`. Output is ordered by row, then column.
pub fn extract_triplets_1ch(center_hm: &Heatmap, cfg: &PeakConfig) -> Vec<Triplet> {
    let width = center_hm.width();
    let mut out = Vec::new();
    for y in 0..center_hm.height() {
        row_peaks(center_hm.row(y), cfg, |x, v| {
            let (xf, v) = (x as f64, v as f64);
            let t = Triplet::new(y, xf - v, xf, xf + v, TripletMode::OneChannel);
            out.push(clamp_triplet(t, width));
        });
    }
    out
}

/// Triplets of the 3-channel design: probability peaks, with rail offsets
/// read from the distance maps at the peak.
pub fn extract_triplets_3ch(
    prob: &Heatmap,
    dist_left: &Heatmap,
    dist_right: &Heatmap,
    cfg: &PeakConfig,
) -> Result<Vec<Triplet>> {
    let dims = prob.dims();
    dims.ensure_same(dist_left.dims())?;
    dims.ensure_same(dist_right.dims())?;
    let mut out = Vec::new();
    for y in 0..dims.height {
        row_peaks(prob.row(y), cfg, |x, _| {
            let xf = x as f64;
            let dl = (dist_left.get(x, y) as f64).max(0.0);
            let dr = (dist_right.get(x, y) as f64).max(0.0);
            let t = Triplet::new(y, xf - dl, xf, xf + dr, TripletMode::ThreeChannel);
            out.push(clamp_triplet(t, dims.width));
        });
    }
    Ok(out)
}
