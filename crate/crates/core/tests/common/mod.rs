//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use railpath::{GridDims, Heatmap, RailPolyline, Scene, Track};

/// Rewrites every rail of `scene` as one integer-column point per row.
pub fn integer_rail_scene(scene: &Scene) -> Scene {
    let dims = scene.dims();
    let tracks = scene
        .tracks()
        .iter()
        .map(|t| {
            let left = railpath::rasterize_polyline(&t.left, dims);
            let right = railpath::rasterize_polyline(&t.right, dims);
            let rows: Vec<(usize, f64, f64)> = (0..dims.height)
                .rev()
                .filter_map(|y| Some((y, left.get(y)?, right.get(y)?)))
                .collect();
            let l = rows.iter().map(|&(y, xl, _)| [xl.floor(), y as f64]).collect();
            let r = rows.iter().map(|&(y, _, xr)| [xr.ceil(), y as f64]).collect();
            Track::new(t.id, RailPolyline::new(l).unwrap(), RailPolyline::new(r).unwrap())
        })
        .collect();
    Scene::new(dims, tracks).unwrap()
}

/// Per-pixel maximum over tracks of the distance to the nearer rail, read
/// straight from polylines that carry one point per row.
pub fn brute_center_heatmap(scene: &Scene) -> Heatmap {
    let dims = scene.dims();
    let per_row = |p: &RailPolyline| {
        let mut xs = vec![None; dims.height];
        for q in p.points() {
            xs[q[1] as usize] = Some(q[0]);
        }
        xs
    };
    let rails: Vec<(Vec<Option<f64>>, Vec<Option<f64>>)> = scene
        .tracks()
        .iter()
        .map(|t| (per_row(&t.left), per_row(&t.right)))
        .collect();
    let mut hm = Heatmap::zeros(dims);
    for y in 0..dims.height {
        for x in 0..dims.width {
            let xf = x as f64;
            let mut best = 0.0f64;
            for (left, right) in &rails {
                if let (Some(xl), Some(xr)) = (left[y], right[y]) {
                    if xl <= xf && xf <= xr {
                        best = best.max((xf - xl).min(xr - xf));
                    }
                }
            }
            hm.set(x, y, best as f32);
        }
    }
    hm
}

/// Sort descending, keep losses above `t_k` or, if fewer than `k`, the `k`
/// largest plus ties, and divide the sum by `k`.
pub fn sort_select_bce(losses: &[f32], t_k: f64, k: usize) -> f64 {
    let mut v: Vec<f64> = losses.iter().map(|&x| x as f64).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let above = v.iter().filter(|&&x| x > t_k).count();
    let kept = if above >= k {
        above
    } else {
        let kth = v[k - 1];
        v.iter().filter(|&&x| x >= kth).count()
    };
    v[..kept].iter().sum::<f64>() / k as f64
}

/// Every partial matching over pairs with `f1 >= m_min`; returns the one
/// with the largest total F1 and whether it is the only one reaching it.
pub fn best_matching(f1: &[Vec<f64>], m_min: f64) -> (Vec<(usize, usize)>, bool) {
    fn rec(
        g: usize,
        f1: &[Vec<f64>],
        m_min: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        score: f64,
        out: &mut Vec<(f64, Vec<(usize, usize)>)>,
    ) {
        if g == f1.len() {
            out.push((score, cur.clone()));
            return;
        }
        rec(g + 1, f1, m_min, used, cur, score, out);
        for e in 0..f1[g].len() {
            if !used[e] && f1[g][e] >= m_min {
                used[e] = true;
                cur.push((g, e));
                rec(g + 1, f1, m_min, used, cur, score + f1[g][e], out);
                cur.pop();
                used[e] = false;
            }
        }
    }
    let n_est = f1.first().map_or(0, Vec::len);
    let mut all = Vec::new();
    rec(
        0,
        f1,
        m_min,
        &mut vec![false; n_est],
        &mut Vec::new(),
        0.0,
        &mut all,
    );
    let best = all.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<_> = all.iter().filter(|a| (a.0 - best).abs() < 1e-12).collect();
    (winners[0].1.clone(), winners.len() == 1)
}

pub fn dims(w: usize, h: usize) -> GridDims {
    GridDims::new(w, h).unwrap()
}
