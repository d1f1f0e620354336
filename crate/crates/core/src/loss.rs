//! Training losses as plain array operations.
//!
//! Nothing here computes gradients; the functions give reference values an
//! external training harness can be checked against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Heatmap, SegMask};

/// Weight of the regression term in the 1-channel total loss.
pub const REG_WEIGHT_1CH: f64 = 0.4;
/// Weight of the distance regression term in the 3-channel total loss.
pub const DIST_WEIGHT_3CH: f64 = 0.2;
/// Weight of the probability regression term in the 3-channel total loss.
pub const PROB_WEIGHT_3CH: f64 = 20.0;

/// Probabilities are clamped here before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Parameters of the bootstrapped cross entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Per-pixel loss above which a pixel is always kept.
    pub t_k: f64,
    /// Minimum number of pixels that contribute, and the normaliser.
    pub k: usize,
    pub batch_size: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            t_k: 0.3,
            k: 8192,
            batch_size: 1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, pixel_count: usize) -> Result<()> {
        if !(self.t_k >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_K must be >= 0, got {}",
                self.t_k
            )));
        }
        if self.k == 0 || self.k > pixel_count {
            return Err(Error::InvalidConfig(format!(
                "K must lie in 1..={pixel_count}, got {}",
                self.k
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-pixel cross entropy `-ln p(true class)`.
///
/// `probs[c]` is the probability grid of class `c`; there must be one grid
/// per class and the grids must sum to 1 at every pixel (within 1e-4).
pub fn pixel_ce(probs: &[Heatmap], labels: &SegMask) -> Result<Heatmap> {
    let dims = labels.dims();
    if probs.len() < crate::geometry::SegClass::COUNT {
        return Err(Error::InvalidInput(format!(
            "expected {} class probability grids, got {}",
            crate::geometry::SegClass::COUNT,
            probs.len()
        )));
    }
    for p in probs {
        dims.ensure_same(p.dims())?;
    }
    let mut out = Vec::with_capacity(dims.len());
    for (i, class) in labels.classes().iter().enumerate() {
        let sum: f64 = probs.iter().map(|p| p.values()[i] as f64).sum();
        if (sum - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidInput(format!(
                "class probabilities at ({}, {}) sum to {sum}",
                i % dims.width,
                i / dims.width
            )));
        }
        let p = probs[class.id() as usize].values()[i] as f64;
        out.push(-(p.max(PROB_FLOOR)).ln() as f32);
    }
    Heatmap::from_vec(dims, out)
}

/// Bootstrapped (hard-pixel) cross entropy over one image.
///
/// Every pixel whose loss exceeds `t_k` is kept. When fewer than `k` pixels
/// qualify, the `k` largest losses are kept instead, together with any
/// further pixels tied with the `k`-th largest. The kept losses are summed
/// and divided by `k`.
pub fn bootstrapped_ce(loss_grid: &Heatmap, cfg: &LossConfig) -> Result<f64> {
    let n = loss_grid.dims().len();
    cfg.validate(n)?;
    let values = loss_grid.values();
    if let Some(v) = values.iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidInput(format!("negative per-pixel loss {v}")));
    }

    let above: Vec<f64> = values
        .iter()
        .map(|&v| v as f64)
        .filter(|&v| v > cfg.t_k)
        .collect();
    let kept_sum = if above.len() >= cfg.k {
        above.iter().sum::<f64>()
    } else {
        let mut scratch: Vec<f32> = values.to_vec();
        let (_, kth, _) = scratch.select_nth_unstable_by(cfg.k - 1, |a, b| b.total_cmp(a));
        let kth = *kth;
        values
            .iter()
            .filter(|&&v| v >= kth)
            .map(|&v| v as f64)
            .sum::<f64>()
    };
    Ok(kept_sum / cfg.k as f64)
}

/// Mean absolute error between two grids.
pub fn l1_loss(est: &Heatmap, gt: &Heatmap) -> Result<f64> {
    gt.dims().ensure_same(est.dims())?;
    let sum: f64 = est
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&e, &g)| (g as f64 - e as f64).abs())
        .sum();
    Ok(sum / gt.dims().len() as f64)
}

/// Batch loss of the 1-channel design from `(regression, segmentation)` pairs.
pub fn total_loss_1ch(per_image: &[(f64, f64)]) -> Result<f64> {
    if per_image.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sum: f64 = per_image
        .iter()
        .map(|&(reg, seg)| REG_WEIGHT_1CH * reg + seg)
        .sum();
    Ok(sum / per_image.len() as f64)
}

/// Batch loss of the 3-channel design from `(distances, probability, segmentation)`.
pub fn total_loss_3ch(per_image: &[(f64, f64, f64)]) -> Result<f64> {
    if per_image.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sum: f64 = per_image
        .iter()
        .map(|&(dist, prob, seg)| DIST_WEIGHT_3CH * dist + PROB_WEIGHT_3CH * prob + seg)
        .sum();
    Ok(sum / per_image.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridDims;

    fn grid(rows: &[&[f32]]) -> Heatmap {
        Heatmap::from_rows(rows).unwrap()
    }

    fn cfg(t_k: f64, k: usize) -> LossConfig {
        LossConfig {
            t_k,
            k,
            batch_size: 1,
        }
    }

    #[test]
    fn bootstrapped_hand_examples() {
        let g = grid(&[&[0.9, 0.5], &[0.2, 0.1]]);
        let v = bootstrapped_ce(&g, &cfg(0.3, 2)).unwrap();
        assert!((v - 0.7).abs() < 1e-6);

        let g = grid(&[&[0.25, 0.2], &[0.1, 0.05]]);
        let v = bootstrapped_ce(&g, &cfg(0.3, 2)).unwrap();
        assert!((v - 0.225).abs() < 1e-6);

        let g = grid(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(bootstrapped_ce(&g, &cfg(0.3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn bootstrapped_keeps_ties_at_kth_value() {
        let g = grid(&[&[0.2, 0.2, 0.2, 0.1]]);
        let v = bootstrapped_ce(&g, &cfg(0.3, 2)).unwrap();
        assert!((v - 0.6 / 2.0).abs() < 1e-6);
    }

    #[test]
    fn bootstrapped_normalises_by_k_when_more_pixels_qualify() {
        let g = grid(&[&[1.0, 1.0, 1.0, 1.0]]);
        assert_eq!(bootstrapped_ce(&g, &cfg(0.3, 2)).unwrap(), 2.0);
    }

    #[test]
    fn bootstrapped_rejects_k_above_pixel_count() {
        let g = grid(&[&[1.0, 1.0]]);
        assert!(bootstrapped_ce(&g, &cfg(0.3, 3)).is_err());
        assert!(bootstrapped_ce(&g, &cfg(0.3, 0)).is_err());
    }

    #[test]
    fn pixel_ce_examples() {
        let d = GridDims::new(2, 1).unwrap();
        let labels = SegMask::from_ids(d, &[1, 2]).unwrap();
        let e_inv = (-1.0f64).exp() as f32;
        let p0 = Heatmap::from_vec(d, vec![0.0, 0.0]).unwrap();
        let p1 = Heatmap::from_vec(d, vec![1.0, 1.0 - e_inv]).unwrap();
        let p2 = Heatmap::from_vec(d, vec![0.0, e_inv]).unwrap();
        let ce = pixel_ce(&[p0, p1, p2], &labels).unwrap();
        assert_eq!(ce.get(0, 0), 0.0);
        assert!((ce.get(1, 0) - 1.0).abs() < 1e-6);

        let labels = SegMask::from_ids(d, &[0, 0]).unwrap();
        let zero = Heatmap::from_vec(d, vec![0.0, 0.0]).unwrap();
        let one = Heatmap::from_vec(d, vec![1.0, 1.0]).unwrap();
        let ce = pixel_ce(&[zero.clone(), one, zero], &labels).unwrap();
        assert!((ce.get(0, 0) as f64 - 27.631021).abs() < 1e-4);
    }

    #[test]
    fn pixel_ce_rejects_mismatched_dims() {
        let d = GridDims::new(2, 1).unwrap();
        let labels = SegMask::from_ids(d, &[0, 0]).unwrap();
        let wrong = Heatmap::zeros(GridDims::new(1, 2).unwrap());
        assert!(matches!(
            pixel_ce(&[wrong.clone(), wrong.clone(), wrong], &labels),
            Err(Error::DimsMismatch { .. })
        ));
    }

    #[test]
    fn l1_examples() {
        let gt = grid(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let est = grid(&[&[1.0, 1.0], &[5.0, 4.0]]);
        assert_eq!(l1_loss(&est, &gt).unwrap(), 0.75);
        assert_eq!(l1_loss(&gt, &gt).unwrap(), 0.0);
        let zeros = grid(&[&[0.0, 0.0]]);
        let cs = grid(&[&[2.5, 2.5]]);
        assert_eq!(l1_loss(&cs, &zeros).unwrap(), 2.5);
        assert!(l1_loss(&zeros, &gt).is_err());
    }

    #[test]
    fn total_loss_weights() {
        assert!((total_loss_1ch(&[(1.0, 0.5)]).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(total_loss_1ch(&[(0.0, 0.0), (0.0, 0.0)]).unwrap(), 0.0);
        assert!((total_loss_1ch(&[(1.0, 0.0), (0.0, 1.0)]).unwrap() - 0.7).abs() < 1e-12);
        assert!(total_loss_1ch(&[]).is_err());

        assert!((total_loss_3ch(&[(1.0, 0.1, 0.5)]).unwrap() - 2.7).abs() < 1e-12);
        assert_eq!(total_loss_3ch(&[(0.0, 0.0, 0.0)]).unwrap(), 0.0);
        assert!((total_loss_3ch(&[(1.0, 0.0, 0.0), (0.0, 0.0, 1.0)]).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(total_loss_3ch(&[]), Err(Error::EmptyBatch)));
    }
}
