//! Grouping track points into track segments inside horizontal sub-regions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridDims, Triplet};

/// Reference width the default pixel parameters are tuned for.
pub(crate) const REFERENCE_WIDTH: f64 = 960.0;

/// A full-width band of image rows, `y_top..=y_bottom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubregionSpec {
    /// 0 is the bottom-most band.
    pub index: usize,
    pub y_top: usize,
    pub y_bottom: usize,
}

impl SubregionSpec {
    pub fn contains(&self, y: usize) -> bool {
        self.y_top <= y && y <= self.y_bottom
    }

    pub fn height(&self) -> usize {
        self.y_bottom - self.y_top + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Sub-region height in rows.
    pub h: usize,
    /// Largest horizontal centre step between consecutive points of a segment.
    pub tau_point: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            h: 10,
            tau_point: 8.0,
        }
    }
}

impl ClusterConfig {
    /// Defaults scaled to an image width, with floors that keep small
    /// images workable.
    pub fn for_dims(dims: GridDims) -> Self {
        let s = dims.width as f64 / REFERENCE_WIDTH;
        Self {
            h: ((10.0 * s).round() as usize).max(4).min(dims.height),
            tau_point: (8.0 * s).max(2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(Error::InvalidConfig("sub-region height h must be >= 1".into()));
        }
        if !(self.tau_point > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tau_point must be > 0, got {}",
                self.tau_point
            )));
        }
        Ok(())
    }
}

/// Chain of track points inside one sub-region, ordered bottom-up with at
/// most one point per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSegment {
    pub subregion: usize,
    pub triplets: Vec<Triplet>,
}

impl TrackSegment {
    pub fn bottom(&self) -> &Triplet {
        &self.triplets[0]
    }

    pub fn top(&self) -> &Triplet {
        self.triplets.last().expect("segments are never empty")
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Splits `0..H` into `ceil(H / h)` bands, bottom-most first. The top band
/// takes the remainder.
pub fn partition_rows(dims: GridDims, h: usize) -> Result<Vec<SubregionSpec>> {
    if h == 0 {
        return Err(Error::InvalidConfig("sub-region height h must be >= 1".into()));
    }
    let height = dims.height;
    let n = height.div_ceil(h);
    Ok((0..n)
        .map(|i| {
            let y_bottom = height - 1 - i * h;
            let y_top = (y_bottom + 1).saturating_sub(h);
            SubregionSpec {
                index: i,
                y_top,
                y_bottom,
            }
        })
        .collect())
}

fn cluster_band(band: SubregionSpec, points: &[Triplet], tau: f64) -> Vec<TrackSegment> {
    let mut segments: Vec<TrackSegment> = Vec::new();
    let mut start = 0;
    while start < points.len() {
        let y = points[start].y;
        let end = start + points[start..].iter().take_while(|t| t.y == y).count();
        let row = &points[start..end];
        start = end;

        // Each point proposes to its nearest segment (ties: earliest created).
        let existing = segments.len();
        let proposals: Vec<Option<(usize, f64)>> = row
            .iter()
            .map(|p| {
                let mut best: Option<(usize, f64)> = None;
                for (i, s) in segments[..existing].iter().enumerate() {
                    let d = (p.x_center - s.top().x_center).abs();
                    if d <= tau && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((i, d));
                    }
                }
                best
            })
            .collect();

        // The closest proposer wins a contested segment (ties: leftmost point).
        let mut winner: Vec<Option<usize>> = vec![None; existing];
        for (pi, prop) in proposals.iter().enumerate() {
            if let Some((si, d)) = *prop {
                match winner[si] {
                    Some(w) if proposals[w].unwrap().1 <= d => {}
                    _ => winner[si] = Some(pi),
                }
            }
        }
        for (pi, p) in row.iter().enumerate() {
            match proposals[pi] {
                Some((si, _)) if winner[si] == Some(pi) => segments[si].triplets.push(*p),
                _ => segments.push(TrackSegment {
                    subregion: band.index,
                    triplets: vec![*p],
                }),
            }
        }
    }
    segments
}

/// Clusters track points into segments per sub-region, bottom-most
/// sub-region first.
///
/// Rows are scanned bottom-up. A point joins the segment whose most recent
/// point is horizontally nearest (within `tau_point`); when several points of
/// one row pick the same segment only the nearest joins and the others
/// start segments of their own.
pub fn cluster_into_segments(
    triplets: &[Triplet],
    cfg: &ClusterConfig,
    dims: GridDims,
) -> Result<Vec<Vec<TrackSegment>>> {
    cfg.validate()?;
    let bands = partition_rows(dims, cfg.h)?;
    let mut sorted: Vec<Triplet> = triplets.iter().filter(|t| t.y < dims.height).copied().collect();
    sorted.sort_by(|a, b| b.y.cmp(&a.y).then(a.x_center.total_cmp(&b.x_center)));

    let slices: Vec<(SubregionSpec, &[Triplet])> = bands
        .iter()
        .map(|band| {
            let lo = sorted.partition_point(|t| t.y > band.y_bottom);
            let hi = sorted.partition_point(|t| t.y >= band.y_top);
            (*band, &sorted[lo..hi])
        })
        .collect();

    Ok(slices
        .into_par_iter()
        .map(|(band, pts)| cluster_band(band, pts, cfg.tau_point))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TripletMode;

    fn pt(y: usize, x: f64) -> Triplet {
        Triplet::new(y, x - 2.0, x, x + 2.0, TripletMode::OneChannel)
    }

    fn dims8() -> GridDims {
        GridDims::new(16, 8).unwrap()
    }

    fn centers(seg: &TrackSegment) -> Vec<(usize, f64)> {
        seg.triplets.iter().map(|t| (t.y, t.x_center)).collect()
    }

    #[test]
    fn partition_examples() {
        let rows = |h| -> Vec<(usize, usize)> {
            partition_rows(dims8(), h)
                .unwrap()
                .iter()
                .map(|s| (s.y_top, s.y_bottom))
                .collect()
        };
        assert_eq!(rows(4), vec![(4, 7), (0, 3)]);
        assert_eq!(rows(3), vec![(5, 7), (2, 4), (0, 1)]);
        assert_eq!(rows(8), vec![(0, 7)]);
        assert_eq!(rows(20), vec![(0, 7)]);
        assert!(partition_rows(dims8(), 0).is_err());
    }

    fn cfg(tau: f64) -> ClusterConfig {
        ClusterConfig { h: 8, tau_point: tau }
    }

    #[test]
    fn straight_chain_forms_one_segment() {
        let segs = cluster_into_segments(&[pt(7, 4.0), pt(6, 4.0), pt(5, 5.0)], &cfg(2.0), dims8()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 1);
        assert_eq!(centers(&segs[0][0]), vec![(7, 4.0), (6, 4.0), (5, 5.0)]);
    }

    #[test]
    fn far_point_starts_a_new_segment() {
        let segs = cluster_into_segments(
            &[pt(7, 4.0), pt(6, 4.0), pt(5, 5.0), pt(5, 9.0)],
            &cfg(2.0),
            dims8(),
        )
        .unwrap();
        assert_eq!(segs[0].len(), 2);
        assert_eq!(centers(&segs[0][1]), vec![(5, 9.0)]);
    }

    #[test]
    fn diverging_pair_splits_leftmost_first() {
        let segs = cluster_into_segments(&[pt(7, 4.0), pt(6, 5.0), pt(6, 3.0)], &cfg(2.0), dims8()).unwrap();
        let band = &segs[0];
        assert_eq!(band.len(), 2);
        assert_eq!(centers(&band[0]), vec![(7, 4.0), (6, 3.0)]);
        assert_eq!(centers(&band[1]), vec![(6, 5.0)]);
    }

    #[test]
    fn nearer_point_wins_a_contested_segment() {
        let segs = cluster_into_segments(&[pt(7, 4.0), pt(6, 2.5), pt(6, 5.0)], &cfg(2.0), dims8()).unwrap();
        assert_eq!(centers(&segs[0][0]), vec![(7, 4.0), (6, 5.0)]);
        assert_eq!(centers(&segs[0][1]), vec![(6, 2.5)]);
    }

    #[test]
    fn equidistant_point_joins_earliest_segment() {
        let segs = cluster_into_segments(
            &[pt(7, 2.0), pt(7, 6.0), pt(6, 4.0)],
            &ClusterConfig { h: 8, tau_point: 3.0 },
            dims8(),
        )
        .unwrap();
        assert_eq!(centers(&segs[0][0]), vec![(7, 2.0), (6, 4.0)]);
        assert_eq!(centers(&segs[0][1]), vec![(7, 6.0)]);
    }

    #[test]
    fn segments_do_not_cross_subregions() {
        let c = ClusterConfig { h: 4, tau_point: 2.0 };
        let pts: Vec<_> = (0..8).map(|y| pt(y, 4.0)).collect();
        let segs = cluster_into_segments(&pts, &c, dims8()).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(
            segs[0][0].triplets.iter().map(|t| t.y).collect::<Vec<_>>(),
            [7, 6, 5, 4]
        );
        assert_eq!(segs[1][0].subregion, 1);
        assert_eq!(
            segs[1][0].triplets.iter().map(|t| t.y).collect::<Vec<_>>(),
            [3, 2, 1, 0]
        );
    }

    #[test]
    fn input_order_does_not_matter() {
        let a = [pt(7, 4.0), pt(6, 3.0), pt(6, 5.0), pt(5, 6.0), pt(5, 2.0)];
        let mut b = a;
        b.reverse();
        assert_eq!(
            cluster_into_segments(&a, &cfg(2.0), dims8()).unwrap(),
            cluster_into_segments(&b, &cfg(2.0), dims8()).unwrap()
        );
    }
}
