//! Segmentation-guided correction of rail positions and polynomial rail
//! models for extracted paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Heatmap, SegClass, SegMask, Triplet};
use crate::tree::EgoPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapConfig {
    /// Horizontal search window on each side of a rail position, in pixels.
    pub w_snap: f64,
    /// Reject moves that make the rail area wider than on the row below.
    pub enforce_monotone_width: bool,
}

impl Default for SnapConfig {
    fn default() -> Self {
        Self {
            w_snap: 10.0,
            enforce_monotone_width: true,
        }
    }
}

pub const DEFAULT_FIT_DEGREE: usize = 3;

/// Nearest rail-track column to `x` within `w`; ties go to the higher
/// rail-track probability when given, then to the left column.
fn nearest_rail_column(seg: &SegMask, prob: Option<&Heatmap>, y: usize, x: f64, w: f64) -> Option<f64> {
    let width = seg.dims().width;
    let lo = (x - w).ceil().max(0.0);
    let hi = (x + w).floor().min(width as f64 - 1.0);
    if lo > hi {
        return None;
    }
    let mut best: Option<(f64, f32, usize)> = None;
    for col in lo as usize..=hi as usize {
        if seg.get(col, y) != SegClass::RailTrack {
            continue;
        }
        let d = (col as f64 - x).abs();
        let p = prob.map_or(0.0, |p| p.get(col, y));
        let better = match best {
            None => true,
            Some((bd, bp, _)) => d < bd || (d == bd && p > bp),
        };
        if better {
            best = Some((d, p, col));
        }
    }
    best.map(|(_, _, col)| col as f64)
}

/// Moves each rail of each triplet onto the nearest rail-track pixel of the
/// mask within `w_snap`.
///
/// Paths are processed bottom-up. A move is rejected when it would put the
/// left rail right of the right rail or, with `enforce_monotone_width`, make
/// the rail area wider than on the previous (closer) row of the path.
/// `rail_prob`, the rail-track class probability, only breaks distance ties.
pub fn snap_to_segmentation(
    path: &EgoPath,
    seg: &SegMask,
    cfg: &SnapConfig,
    rail_prob: Option<&Heatmap>,
) -> Result<EgoPath> {
    if let Some(p) = rail_prob {
        seg.dims().ensure_same(p.dims())?;
    }
    if !(cfg.w_snap >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "w_snap must be >= 0, got {}",
            cfg.w_snap
        )));
    }
    let dims = seg.dims();
    let mut out: Vec<Triplet> = Vec::with_capacity(path.triplets.len());
    for t in &path.triplets {
        let mut t = *t;
        if t.y < dims.height {
            let limit = if cfg.enforce_monotone_width {
                out.last().map(|below| below.width())
            } else {
                None
            };
            let accept = |xl: f64, xr: f64| xl <= xr && limit.is_none_or(|w| xr - xl <= w);

            if let Some(xl) = nearest_rail_column(seg, rail_prob, t.y, t.x_left, cfg.w_snap) {
                if accept(xl, t.x_right) {
                    t.x_left = xl;
                }
            }
            if let Some(xr) = nearest_rail_column(seg, rail_prob, t.y, t.x_right, cfg.w_snap) {
                if accept(t.x_left, xr) {
                    t.x_right = xr;
                }
            }
            t.x_center = 0.5 * (t.x_left + t.x_right);
        }
        out.push(t);
    }
    Ok(EgoPath {
        triplets: out,
        edges: path.edges.clone(),
    })
}

/// Fills rows skipped inside a path with linearly interpolated triplets.
/// Gaps wider than `max_gap` missing rows are left open.
pub fn interpolate_row_gaps(path: &EgoPath, max_gap: usize) -> EgoPath {
    let mut out: Vec<Triplet> = Vec::with_capacity(path.triplets.len());
    for t in &path.triplets {
        if let Some(&below) = out.last() {
            let missing = below.y.saturating_sub(t.y).saturating_sub(1);
            if missing > 0 && missing <= max_gap {
                let span = (below.y - t.y) as f64;
                for y in (t.y + 1..below.y).rev() {
                    let f = (below.y - y) as f64 / span;
                    let lerp = |a: f64, b: f64| a + f * (b - a);
                    out.push(Triplet::new(
                        y,
                        lerp(below.x_left, t.x_left),
                        lerp(below.x_center, t.x_center),
                        lerp(below.x_right, t.x_right),
                        t.mode,
                    ));
                }
            }
        }
        out.push(*t);
    }
    EgoPath {
        triplets: out,
        edges: path.edges.clone(),
    }
}

/// Left and right rail of a path modelled as polynomials `x = p(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPath {
    /// Highest power first.
    pub left_coeffs: Vec<f64>,
    pub right_coeffs: Vec<f64>,
    pub degree: usize,
    /// `[y_min, y_max]` of the support points.
    pub y_range: [f64; 2],
}

impl FittedPath {
    pub fn left_at(&self, y: f64) -> f64 {
        eval_poly(&self.left_coeffs, y)
    }

    pub fn right_at(&self, y: f64) -> f64 {
        eval_poly(&self.right_coeffs, y)
    }
}

/// Horner evaluation, highest power first.
pub fn eval_poly(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * y + c)
}

/// Least-squares polynomial of `degree` through `(y, x)`, reducing the
/// degree while the design matrix is numerically rank deficient. Returns
/// coefficients with the highest power first and the degree actually used.
///
/// Solved by Householder QR on a centred and scaled abscissa; the result is
/// expanded back to powers of `y`.
pub fn polyfit(ys: &[f64], xs: &[f64], degree: usize) -> Result<(Vec<f64>, usize)> {
    if ys.len() != xs.len() {
        return Err(Error::InvalidInput("polyfit: ys and xs differ in length".into()));
    }
    if ys.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "polyfit needs at least 2 points, got {}",
            ys.len()
        )));
    }
    let n = ys.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let scale = ys.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let ts: Vec<f64> = ys.iter().map(|y| (y - mean) / scale).collect();

    let mut d = degree.min(n - 1);
    loop {
        if let Some(a) = qr_solve(&ts, xs, d) {
            return Ok((expand_scaled(&a, mean, scale), d));
        }
        if d == 0 {
            return Err(Error::InvalidInput("polyfit: degenerate design matrix".into()));
        }
        d -= 1;
    }
}

/// Least squares for `sum_j a_j t^j ~ x` via Householder QR. `None` when
/// the triangular factor is numerically singular.
fn qr_solve(ts: &[f64], xs: &[f64], degree: usize) -> Option<Vec<f64>> {
    let n = ts.len();
    let m = degree + 1;
    // Column-major design matrix.
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|j| ts.iter().map(|t| t.powi(j as i32)).collect())
        .collect();
    let mut b = xs.to_vec();

    let mut diag = vec![0.0; m];
    for k in 0..m {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k) {
                let dot: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col[k..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in b[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        diag[k] = a[k][k];
    }
    let rmax = diag.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = rmax * (n.max(m) as f64) * f64::EPSILON * 1e3;
    if diag.iter().any(|v| v.abs() <= tol) {
        return None;
    }
    let mut coef = vec![0.0; m];
    for k in (0..m).rev() {
        let mut s = b[k];
        for j in k + 1..m {
            s -= a[j][k] * coef[j];
        }
        coef[k] = s / a[k][k];
    }
    Some(coef)
}

/// Rewrites `sum_j a_j ((y - mean) / scale)^j` in powers of `y`, highest first.
fn expand_scaled(a: &[f64], mean: f64, scale: f64) -> Vec<f64> {
    let m = a.len();
    let mut asc = vec![0.0; m];
    for (j, &aj) in a.iter().enumerate() {
        let c = aj / scale.powi(j as i32);
        let mut binom = 1.0;
        for k in 0..=j {
            // binom = C(j, k)
            asc[k] += c * binom * (-mean).powi((j - k) as i32);
            binom = binom * (j - k) as f64 / (k + 1) as f64;
        }
    }
    asc.reverse();
    asc
}

/// Fits both rails of a path. The two rails share one degree: the lower of
/// what each rail supports after rank reduction.
pub fn fit_rail_polynomials(path: &EgoPath, degree: usize) -> Result<FittedPath> {
    if path.triplets.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "fitting needs at least 2 triplets, got {}",
            path.triplets.len()
        )));
    }
    if degree == 0 {
        return Err(Error::InvalidConfig("fit degree must be >= 1".into()));
    }
    let ys: Vec<f64> = path.triplets.iter().map(|t| t.y as f64).collect();
    let left: Vec<f64> = path.triplets.iter().map(|t| t.x_left).collect();
    let right: Vec<f64> = path.triplets.iter().map(|t| t.x_right).collect();

    let (_, dl) = polyfit(&ys, &left, degree)?;
    let (_, dr) = polyfit(&ys, &right, degree)?;
    let d = dl.min(dr);
    let (left_coeffs, _) = polyfit(&ys, &left, d)?;
    let (right_coeffs, _) = polyfit(&ys, &right, d)?;
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FittedPath {
        left_coeffs,
        right_coeffs,
        degree: d,
        y_range: [y_min, y_max],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridDims, TripletMode};

    fn t(y: usize, l: f64, r: f64) -> Triplet {
        Triplet::new(y, l, 0.5 * (l + r), r, TripletMode::OneChannel)
    }

    fn mask_with_rails(w: usize, h: usize, cols: &[(usize, usize)]) -> SegMask {
        let mut m = SegMask::background(GridDims::new(w, h).unwrap());
        for &(y, x) in cols {
            m.set(x, y, SegClass::RailTrack);
        }
        m
    }

    #[test]
    fn row_gaps_are_interpolated() {
        let p = EgoPath::from_triplets(vec![t(9, 2.0, 6.0), t(6, 5.0, 9.0), t(1, 0.0, 4.0)]);
        let out = interpolate_row_gaps(&p, 2);
        let rows: Vec<usize> = out.triplets.iter().map(|t| t.y).collect();
        assert_eq!(rows, vec![9, 8, 7, 6, 1]);
        assert_eq!((out.triplets[1].x_left, out.triplets[1].x_right), (3.0, 7.0));
        assert_eq!(out.triplets[2].x_center, 6.0);
    }

    #[test]
    fn snaps_to_nearest_rail_pixel() {
        let m = mask_with_rails(16, 2, &[(1, 3), (1, 10)]);
        let p = EgoPath::from_triplets(vec![t(1, 3.6, 10.0)]);
        let out = snap_to_segmentation(&p, &m, &SnapConfig::default(), None).unwrap();
        assert_eq!(out.triplets[0].x_left, 3.0);
        assert_eq!(out.triplets[0].x_right, 10.0);
        assert_eq!(out.triplets[0].x_center, 6.5);
    }

    #[test]
    fn no_rail_pixel_in_window_leaves_triplet_unchanged() {
        let m = mask_with_rails(40, 2, &[(1, 30)]);
        let p = EgoPath::from_triplets(vec![t(1, 3.6, 9.0)]);
        let cfg = SnapConfig {
            w_snap: 5.0,
            ..Default::default()
        };
        let out = snap_to_segmentation(&p, &m, &cfg, None).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn widening_snap_is_rejected() {
        // Row 5 has width 6; on row 4 the right rail could snap from 8 to 10,
        // which would make the area 8 wide.
        let m = mask_with_rails(16, 6, &[(5, 2), (5, 8), (4, 2), (4, 10)]);
        let p = EgoPath::from_triplets(vec![t(5, 2.0, 8.0), t(4, 2.0, 8.0)]);
        let out = snap_to_segmentation(&p, &m, &SnapConfig::default(), None).unwrap();
        assert_eq!(out.triplets[1].x_right, 8.0);

        let free = SnapConfig {
            enforce_monotone_width: false,
            ..Default::default()
        };
        let out = snap_to_segmentation(&p, &m, &free, None).unwrap();
        assert_eq!(out.triplets[1].x_right, 10.0);
    }

    #[test]
    fn crossing_snap_is_rejected() {
        let m = mask_with_rails(16, 1, &[(0, 9)]);
        let p = EgoPath::from_triplets(vec![t(0, 6.0, 8.0)]);
        let cfg = SnapConfig {
            w_snap: 4.0,
            enforce_monotone_width: false,
        };
        let out = snap_to_segmentation(&p, &m, &cfg, None).unwrap();
        assert_eq!(out.triplets[0].x_left, 6.0);
        assert_eq!(out.triplets[0].x_right, 9.0);
    }

    #[test]
    fn probability_breaks_distance_ties() {
        let m = mask_with_rails(16, 1, &[(0, 4), (0, 6)]);
        let p = EgoPath::from_triplets(vec![t(0, 5.0, 12.0)]);
        let cfg = SnapConfig {
            w_snap: 3.0,
            enforce_monotone_width: false,
        };
        let out = snap_to_segmentation(&p, &m, &cfg, None).unwrap();
        assert_eq!(out.triplets[0].x_left, 4.0);

        let mut prob = Heatmap::zeros(m.dims());
        prob.set(4, 0, 0.4);
        prob.set(6, 0, 0.9);
        let out = snap_to_segmentation(&p, &m, &cfg, Some(&prob)).unwrap();
        assert_eq!(out.triplets[0].x_left, 6.0);
    }

    fn path_from(f: impl Fn(f64) -> f64, rows: std::ops::Range<usize>) -> EgoPath {
        EgoPath::from_triplets(
            rows.rev()
                .map(|y| {
                    let x = f(y as f64);
                    t(y, x, x + 10.0)
                })
                .collect(),
        )
    }

    #[test]
    fn recovers_exact_quadratic() {
        let p = path_from(|y| 0.1 * y * y + 2.0, 0..20);
        let fit = fit_rail_polynomials(&p, 2).unwrap();
        assert_eq!(fit.degree, 2);
        let want = [0.1, 0.0, 2.0];
        for (c, w) in fit.left_coeffs.iter().zip(want) {
            assert!((c - w).abs() < 1e-6, "{:?}", fit.left_coeffs);
        }
        for tr in &p.triplets {
            assert!((fit.left_at(tr.y as f64) - tr.x_left).abs() < 1e-9);
        }
        assert_eq!(fit.y_range, [0.0, 19.0]);
    }

    #[test]
    fn vertical_rail_with_cubic_reduces_to_constant() {
        let p = path_from(|_| 4.0, 0..50);
        let fit = fit_rail_polynomials(&p, 3).unwrap();
        let c = &fit.left_coeffs;
        assert!((c[3] - 4.0).abs() < 1e-9);
        assert!(c[..3].iter().all(|v| v.abs() < 1e-9), "{c:?}");
    }

    #[test]
    fn degree_is_capped_by_support() {
        let p = path_from(|y| 2.0 * y, 0..2);
        let fit = fit_rail_polynomials(&p, 3).unwrap();
        assert_eq!(fit.degree, 1);
        assert!((fit.left_coeffs[0] - 2.0).abs() < 1e-12);
        assert!(fit_rail_polynomials(&path_from(|y| y, 0..1), 1).is_err());
    }

    #[test]
    fn rank_deficiency_reduces_degree() {
        // Two distinct abscissae cannot support a quadratic.
        let (c, d) = polyfit(&[1.0, 1.0, 2.0, 2.0], &[0.0, 2.0, 3.0, 3.0], 2).unwrap();
        assert_eq!(d, 1);
        assert!((c[0] - 2.0).abs() < 1e-9 && (c[1] + 1.0).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn horner_matches_expansion() {
        assert_eq!(eval_poly(&[1.0, -2.0, 3.0], 2.0), 3.0);
        assert_eq!(eval_poly(&[], 2.0), 0.0);
    }
}
