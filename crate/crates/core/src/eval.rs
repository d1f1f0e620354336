//! Evaluation at three granularities plus segmentation mIoU.
//!
//! Ground-truth and estimated ego-paths are compared through their rail
//! pixels: the rounded left and right rail positions of every triplet. Two
//! pixels of the same side match when they lie within a square (Chebyshev)
//! vicinity of radius `r`, and every pixel matches at most once. Paths are
//! paired greedily by the F1 of that pixel matching.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::REFERENCE_WIDTH;
use crate::error::{Error, Result};
use crate::geometry::{GridDims, SegMask};
use crate::tree::EgoPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Pixel vicinity radius.
    pub radius: u32,
    /// Minimum F1 for two paths to be paired.
    pub m_min: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            radius: 5,
            m_min: 0.5,
        }
    }
}

impl MatchConfig {
    pub fn for_dims(dims: GridDims) -> Self {
        let s = dims.width as f64 / REFERENCE_WIDTH;
        Self {
            radius: ((5.0 * s).round() as u32).max(1),
            m_min: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.m_min) {
            return Err(Error::InvalidConfig(format!(
                "m_min must lie in [0, 1], got {}",
                self.m_min
            )));
        }
        Ok(())
    }
}

/// Detection counts with the derived ratios. `0/0` ratios count as 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchStats {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn merge(&self, other: &MatchStats) -> MatchStats {
        MatchStats::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

impl Default for MatchStats {
    fn default() -> Self {
        Self::from_counts(0, 0, 0)
    }
}

type Pixel = (i64, i64);

fn rail_pixels(path: &EgoPath) -> [Vec<Pixel>; 2] {
    let mut left = Vec::with_capacity(path.len());
    let mut right = Vec::with_capacity(path.len());
    for t in &path.triplets {
        let y = t.y as i64;
        left.push((t.x_left.round() as i64, y));
        right.push((t.x_right.round() as i64, y));
    }
    [left, right]
}

/// Number of rail pixels of a path (two per triplet).
pub fn rail_pixel_count(path: &EgoPath) -> usize {
    2 * path.len()
}

/// Maximum-cardinality matching between two pixel sets under the Chebyshev
/// radius. Returns, per estimated pixel, whether it is matched.
fn match_pixels(gt: &[Pixel], est: &[Pixel], r: i64) -> (usize, Vec<bool>) {
    let mut by_row: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, p) in est.iter().enumerate() {
        by_row.entry(p.1).or_default().push(i);
    }
    let adj: Vec<Vec<usize>> = gt
        .iter()
        .map(|g| {
            let mut c: Vec<(i64, usize)> = Vec::new();
            for y in g.1 - r..=g.1 + r {
                if let Some(idx) = by_row.get(&y) {
                    for &i in idx {
                        let e = est[i];
                        let d = (e.0 - g.0).abs().max((e.1 - g.1).abs());
                        if d <= r {
                            c.push((d, i));
                        }
                    }
                }
            }
            c.sort_unstable();
            c.into_iter().map(|(_, i)| i).collect()
        })
        .collect();

    // Kuhn's augmenting paths; candidates are tried nearest first.
    let mut owner: Vec<Option<usize>> = vec![None; est.len()];
    let mut matched = 0;
    let mut visited = vec![0usize; est.len()];
    for g in 0..gt.len() {
        if try_augment(g, &adj, &mut owner, &mut visited, g + 1) {
            matched += 1;
        }
    }
    (matched, owner.iter().map(Option::is_some).collect())
}

fn try_augment(
    g: usize,
    adj: &[Vec<usize>],
    owner: &mut [Option<usize>],
    visited: &mut [usize],
    stamp: usize,
) -> bool {
    for &e in &adj[g] {
        if visited[e] == stamp {
            continue;
        }
        visited[e] = stamp;
        let free = match owner[e] {
            None => true,
            Some(other) => try_augment(other, adj, owner, visited, stamp),
        };
        if free {
            owner[e] = Some(g);
            return true;
        }
    }
    false
}

/// Per-pixel outcome of comparing two paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RailPixelMatch {
    pub stats: MatchStats,
    /// Whether each estimated left rail pixel found a partner, in triplet order.
    pub est_left_matched: Vec<bool>,
    pub est_right_matched: Vec<bool>,
}

pub fn rail_pixel_match(gt: &EgoPath, est: &EgoPath, r: u32) -> RailPixelMatch {
    let [gl, gr] = rail_pixels(gt);
    let [el, er] = rail_pixels(est);
    let (ml, left) = match_pixels(&gl, &el, r as i64);
    let (mr, right) = match_pixels(&gr, &er, r as i64);
    let tp = ml + mr;
    let stats = MatchStats::from_counts(tp, el.len() + er.len() - tp, gl.len() + gr.len() - tp);
    RailPixelMatch {
        stats,
        est_left_matched: left,
        est_right_matched: right,
    }
}

/// Rail-pixel precision, recall and F1 of `est` against `gt`.
pub fn rail_pixel_f1(gt: &EgoPath, est: &EgoPath, r: u32) -> MatchStats {
    rail_pixel_match(gt, est, r).stats
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt: usize,
    pub est: usize,
    pub stats: MatchStats,
}

/// One-to-one pairing of ground-truth and estimated paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathMatching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_est: Vec<usize>,
    /// Rail pixels of every ground-truth path, by index.
    pub gt_pixels: Vec<usize>,
    pub est_pixels: Vec<usize>,
}

/// Greedy pairing on an F1 grid `f1[gt][est]`: repeatedly take the highest
/// remaining entry with F1 >= `m_min` (ties: lower gt index, then lower est
/// index) among unpaired paths.
pub fn greedy_pairs(f1: &[Vec<f64>], m_min: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = f1
        .iter()
        .enumerate()
        .flat_map(|(g, row)| row.iter().enumerate().map(move |(e, &v)| (v, g, e)))
        .filter(|&(v, _, _)| v >= m_min)
        .collect();
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n_est = f1.first().map_or(0, Vec::len);
    let mut gt_used = vec![false; f1.len()];
    let mut est_used = vec![false; n_est];
    let mut out = Vec::new();
    for (_, g, e) in cand {
        if !gt_used[g] && !est_used[e] {
            gt_used[g] = true;
            est_used[e] = true;
            out.push((g, e));
        }
    }
    out
}

pub fn match_paths(gt: &[EgoPath], est: &[EgoPath], cfg: &MatchConfig) -> PathMatching {
    let stats: Vec<Vec<MatchStats>> = gt
        .iter()
        .map(|g| est.iter().map(|e| rail_pixel_f1(g, e, cfg.radius)).collect())
        .collect();
    let f1: Vec<Vec<f64>> = stats
        .iter()
        .map(|row| row.iter().map(|s| s.f1).collect())
        .collect();
    let pairs = greedy_pairs(&f1, cfg.m_min);
    let mut gt_used = vec![false; gt.len()];
    let mut est_used = vec![false; est.len()];
    let pairs: Vec<MatchedPair> = pairs
        .into_iter()
        .map(|(g, e)| {
            gt_used[g] = true;
            est_used[e] = true;
            MatchedPair {
                gt: g,
                est: e,
                stats: stats[g][e],
            }
        })
        .collect();
    PathMatching {
        pairs,
        unmatched_gt: (0..gt.len()).filter(|&i| !gt_used[i]).collect(),
        unmatched_est: (0..est.len()).filter(|&i| !est_used[i]).collect(),
        gt_pixels: gt.iter().map(rail_pixel_count).collect(),
        est_pixels: est.iter().map(rail_pixel_count).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelLevel {
    /// Matched pairs only.
    TpPixel,
    /// Matched pairs plus every rail pixel of unmatched paths.
    AllPixel,
}

pub fn pixel_level_metrics(matching: &PathMatching, mode: PixelLevel) -> MatchStats {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for p in &matching.pairs {
        tp += p.stats.tp;
        fp += p.stats.fp;
        fn_ += p.stats.fn_;
    }
    if mode == PixelLevel::AllPixel {
        fn_ += matching
            .unmatched_gt
            .iter()
            .map(|&i| matching.gt_pixels[i])
            .sum::<usize>();
        fp += matching
            .unmatched_est
            .iter()
            .map(|&i| matching.est_pixels[i])
            .sum::<usize>();
    }
    MatchStats::from_counts(tp, fp, fn_)
}

pub fn path_level_metrics(matching: &PathMatching) -> MatchStats {
    MatchStats::from_counts(
        matching.pairs.len(),
        matching.unmatched_est.len(),
        matching.unmatched_gt.len(),
    )
}

/// Mean IoU over the classes present in either mask.
pub fn miou(pred: &SegMask, gt: &SegMask, n_classes: usize) -> Result<f64> {
    gt.dims().ensure_same(pred.dims())?;
    let mut inter = vec![0usize; n_classes];
    let mut union = vec![0usize; n_classes];
    for (&p, &g) in pred.classes().iter().zip(gt.classes()) {
        let (p, g) = (p.id() as usize, g.id() as usize);
        if p >= n_classes || g >= n_classes {
            return Err(Error::InvalidInput(format!(
                "class id {} exceeds n_classes {n_classes}",
                p.max(g)
            )));
        }
        if p == g {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[g] += 1;
        }
    }
    let ious: Vec<f64> = (0..n_classes)
        .filter(|&c| union[c] > 0)
        .map(|c| inter[c] as f64 / union[c] as f64)
        .collect();
    if ious.is_empty() {
        return Ok(1.0);
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Precision/recall at every evaluation level for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation {
    pub tp_pixel: MatchStats,
    pub all_pixel: MatchStats,
    pub path_level: MatchStats,
    pub matched_pairs: usize,
    pub gt_paths: usize,
    pub est_paths: usize,
}

pub fn evaluate_paths(gt: &[EgoPath], est: &[EgoPath], cfg: &MatchConfig) -> (ImageEvaluation, PathMatching) {
    let m = match_paths(gt, est, cfg);
    let eval = ImageEvaluation {
        tp_pixel: pixel_level_metrics(&m, PixelLevel::TpPixel),
        all_pixel: pixel_level_metrics(&m, PixelLevel::AllPixel),
        path_level: path_level_metrics(&m),
        matched_pairs: m.pairs.len(),
        gt_paths: gt.len(),
        est_paths: est.len(),
    };
    (eval, m)
}

/// Mean per-image precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanRatios {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MeanRatios {
    fn of<'a>(stats: impl Iterator<Item = &'a MatchStats>) -> Self {
        let (mut p, mut r, mut f, mut n) = (0.0, 0.0, 0.0, 0usize);
        for s in stats {
            p += s.precision;
            r += s.recall;
            f += s.f1;
            n += 1;
        }
        if n == 0 {
            return Self {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let n = n as f64;
        Self {
            precision: p / n,
            recall: r / n,
            f1: f / n,
        }
    }
}

/// Summed counts with ratios recomputed from the sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroLevels {
    pub tp_pixel: MatchStats,
    pub all_pixel: MatchStats,
    pub path_level: MatchStats,
}

/// Per-image ratios averaged over images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroLevels {
    pub tp_pixel: MeanRatios,
    pub all_pixel: MeanRatios,
    pub path_level: MeanRatios,
}

/// Micro and macro averages over many images.
pub fn aggregate_evaluations(images: &[ImageEvaluation]) -> (MicroLevels, MacroLevels) {
    let sum = |f: fn(&ImageEvaluation) -> &MatchStats| {
        images
            .iter()
            .map(f)
            .fold(MatchStats::default(), |a, b| a.merge(b))
    };
    let micro = MicroLevels {
        tp_pixel: sum(|e| &e.tp_pixel),
        all_pixel: sum(|e| &e.all_pixel),
        path_level: sum(|e| &e.path_level),
    };
    let macro_ = MacroLevels {
        tp_pixel: MeanRatios::of(images.iter().map(|e| &e.tp_pixel)),
        all_pixel: MeanRatios::of(images.iter().map(|e| &e.all_pixel)),
        path_level: MeanRatios::of(images.iter().map(|e| &e.path_level)),
    };
    (micro, macro_)
}
