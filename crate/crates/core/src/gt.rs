//! Ground-truth synthesis: regression heatmaps and segmentation masks built
//! from a [`Scene`].
//!
//! The 1-channel map stores, for every pixel inside a rail area, the smaller
//! of its horizontal distances to that track's two rails; where rail areas
//! overlap the largest such value wins. Each row of a track therefore holds
//! a tent whose apex sits on the track centre and whose height is half the
//! rail-area width, and the apices of different tracks never merge.

use crate::geometry::{Heatmap, Scene, SegClass, SegMask};

/// Default horizontal half-width of the rail-track class, in pixels.
pub const DEFAULT_RAIL_HALFWIDTH: f64 = 1.0;

/// All ground-truth grids of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GtBundle {
    pub center: Heatmap,
    pub prob3: Heatmap,
    pub dist_left: Heatmap,
    pub dist_right: Heatmap,
    pub seg: SegMask,
}

/// Integer columns `x` with `xl <= x <= xr`, clipped to the row.
fn covered_columns(xl: f64, xr: f64, width: usize) -> std::ops::RangeInclusive<usize> {
    let lo = xl.ceil().max(0.0);
    let hi = xr.floor().min(width as f64 - 1.0);
    if lo > hi {
        #[allow(clippy::reversed_empty_ranges)]
        return 1..=0;
    }
    lo as usize..=hi as usize
}

/// Centre/half-width heatmap of the 1-channel design.
pub fn build_center_heatmap(scene: &Scene) -> Heatmap {
    let dims = scene.dims();
    let mut hm = Heatmap::zeros(dims);
    for track in scene.raster_tracks() {
        for y in track.rows() {
            let (xl, xr) = track.span(y).expect("row inside shared range");
            let row = hm.row_mut(y);
            for x in covered_columns(xl, xr, dims.width) {
                let xf = x as f64;
                let v = (xf - xl).min(xr - xf) as f32;
                if v > row[x] {
                    row[x] = v;
                }
            }
        }
    }
    hm
}

/// Probability, left-distance and right-distance maps of the 3-channel design.
///
/// Probabilities ramp linearly from 0 on each rail to 1 on the centre and
/// take the maximum over overlapping tracks. Distances have no such rule:
/// tracks are written in ascending id order, so in a shared rail area the
/// largest id overwrites the others. That ambiguity is inherent to the
/// design and is what the 1-channel map avoids.
pub fn build_3ch_heatmaps(scene: &Scene) -> (Heatmap, Heatmap, Heatmap) {
    let dims = scene.dims();
    let mut prob = Heatmap::zeros(dims);
    let mut dist_left = Heatmap::zeros(dims);
    let mut dist_right = Heatmap::zeros(dims);

    let mut tracks = scene.raster_tracks();
    tracks.sort_by_key(|t| t.id);
    for track in &tracks {
        for y in track.rows() {
            let (xl, xr) = track.span(y).expect("row inside shared range");
            let half = (xr - xl) / 2.0;
            for x in covered_columns(xl, xr, dims.width) {
                let xf = x as f64;
                let p = ((xf - xl).min(xr - xf) / half) as f32;
                if p > prob.get(x, y) {
                    prob.set(x, y, p);
                }
                dist_left.set(x, y, (xf - xl) as f32);
                dist_right.set(x, y, (xr - xf) as f32);
            }
        }
    }
    (prob, dist_left, dist_right)
}

/// Three-class segmentation mask.
///
/// Pixels within `rail_halfwidth` columns of a rail's nearest integer column
/// are rail-track; other pixels strictly between a track's rails are
/// rail-area; everything else is background. Rail-track takes precedence
/// over another track's rail area.
pub fn build_seg_mask(scene: &Scene, rail_halfwidth: f64) -> SegMask {
    let dims = scene.dims();
    let mut mask = SegMask::background(dims);
    let tracks = scene.raster_tracks();

    for track in &tracks {
        for y in track.rows() {
            let (xl, xr) = track.span(y).expect("row inside shared range");
            for x in covered_columns(xl, xr, dims.width) {
                let xf = x as f64;
                if xf > xl && xf < xr {
                    mask.set(x, y, SegClass::RailArea);
                }
            }
        }
    }

    let hw = rail_halfwidth.max(0.0);
    for track in &tracks {
        for rail in [&track.left, &track.right] {
            for (y, x) in rail.iter() {
                let c = x.round();
                for col in covered_columns(c - hw, c + hw, dims.width) {
                    mask.set(col, y, SegClass::RailTrack);
                }
            }
        }
    }
    mask
}

pub fn build_gt_bundle(scene: &Scene, rail_halfwidth: f64) -> GtBundle {
    let center = build_center_heatmap(scene);
    let (prob3, dist_left, dist_right) = build_3ch_heatmaps(scene);
    let seg = build_seg_mask(scene, rail_halfwidth);
    GtBundle {
        center,
        prob3,
        dist_left,
        dist_right,
        seg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridDims, RailPolyline, Track};

    fn vertical_track(id: u32, xl: f64, xr: f64, h: usize) -> Track {
        let y1 = (h - 1) as f64;
        Track::new(
            id,
            RailPolyline::new(vec![[xl, 0.0], [xl, y1]]).unwrap(),
            RailPolyline::new(vec![[xr, 0.0], [xr, y1]]).unwrap(),
        )
    }

    fn scene(w: usize, h: usize, tracks: Vec<Track>) -> Scene {
        Scene::new(GridDims::new(w, h).unwrap(), tracks).unwrap()
    }

    #[test]
    fn center_heatmap_is_a_symmetric_ramp() {
        let s = scene(8, 8, vec![vertical_track(0, 2.0, 6.0, 8)]);
        let hm = build_center_heatmap(&s);
        for y in 0..8 {
            assert_eq!(hm.row(y), &[0.0, 0.0, 0.0, 1.0, 2.0, 1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn center_heatmap_overlap_takes_max_of_min() {
        let s = scene(
            16,
            4,
            vec![vertical_track(0, 2.0, 6.0, 4), vertical_track(1, 4.0, 12.0, 4)],
        );
        let hm = build_center_heatmap(&s);
        assert_eq!(hm.get(5, 1), 1.0);
        assert_eq!(hm.get(8, 1), 4.0);
        assert_eq!(hm.get(4, 1), 2.0);
        assert_eq!(hm.get(13, 1), 0.0);
    }

    #[test]
    fn three_channel_maps_for_single_track() {
        let s = scene(8, 8, vec![vertical_track(0, 2.0, 6.0, 8)]);
        let (p, dl, dr) = build_3ch_heatmaps(&s);
        assert_eq!(&p.row(3)[2..7], &[0.0, 0.5, 1.0, 0.5, 0.0]);
        assert_eq!(&dl.row(3)[2..7], &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&dr.row(3)[2..7], &[4.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(p.get(0, 3), 0.0);
        assert_eq!(dl.get(7, 3), 0.0);
    }

    #[test]
    fn three_channel_disjoint_tracks_fill_independently() {
        let s = scene(
            16,
            2,
            vec![vertical_track(0, 1.0, 5.0, 2), vertical_track(1, 9.0, 13.0, 2)],
        );
        let (p, dl, _) = build_3ch_heatmaps(&s);
        assert_eq!(&p.row(0)[1..6], &[0.0, 0.5, 1.0, 0.5, 0.0]);
        assert_eq!(&p.row(0)[9..14], &[0.0, 0.5, 1.0, 0.5, 0.0]);
        assert_eq!(&dl.row(0)[9..14], &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.get(7, 0), 0.0);
    }

    #[test]
    fn three_channel_shared_area_keeps_largest_id_distances() {
        // Insert in reverse order to show the id order, not list order, decides.
        let s = scene(
            16,
            2,
            vec![vertical_track(7, 4.0, 12.0, 2), vertical_track(3, 2.0, 6.0, 2)],
        );
        let (p, dl, dr) = build_3ch_heatmaps(&s);
        assert_eq!(dl.get(5, 0), 1.0);
        assert_eq!(dr.get(5, 0), 7.0);
        // probability: max(1/2, 1/4)
        assert_eq!(p.get(5, 0), 0.5);
    }

    #[test]
    fn seg_mask_examples() {
        let s = scene(8, 2, vec![vertical_track(0, 2.0, 6.0, 2)]);
        let m0 = build_seg_mask(&s, 0.0);
        let ids: Vec<u8> = (0..8).map(|x| m0.get(x, 1).id()).collect();
        assert_eq!(ids, [0, 0, 1, 2, 2, 2, 1, 0]);
        let m1 = build_seg_mask(&s, 1.0);
        let ids: Vec<u8> = (0..8).map(|x| m1.get(x, 1).id()).collect();
        assert_eq!(ids, [0, 1, 1, 1, 2, 1, 1, 1]);

        let empty = scene(8, 2, vec![]);
        assert_eq!(build_seg_mask(&empty, 1.0).count(SegClass::Background), 16);
    }

    #[test]
    fn even_width_area_keeps_a_plateau() {
        let s = scene(10, 2, vec![vertical_track(0, 2.0, 7.0, 2)]);
        let hm = build_center_heatmap(&s);
        assert_eq!(&hm.row(0)[2..8], &[0.0, 1.0, 2.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn fractional_rails_are_sampled_at_pixel_centres() {
        let s = scene(10, 2, vec![vertical_track(0, 1.5, 6.5, 2)]);
        let hm = build_center_heatmap(&s);
        assert_eq!(&hm.row(0)[1..8], &[0.0, 0.5, 1.5, 2.5, 1.5, 0.5, 0.0]);
    }
}
