//! Parametric rail scenes with exactly known ego-paths, and heatmap
//! perturbation for robustness tests.
//!
//! Randomness comes from [`ChaCha8Rng`] seeded through
//! `SeedableRng::seed_from_u64`, and Gaussian draws from `rand_distr::Normal`.
//! Both are specified bit-for-bit by their crates, so a `(spec, seed)` pair
//! gives the same scene on every platform.
//!
//! # Geometry
//!
//! The rail-area width (gauge) narrows linearly from `gauge_bottom` on the
//! last row to `gauge_top` on the first, a stand-in for perspective. The ego
//! track starts at the bottom centre and bends as `W/2 + k·u²` with
//! `u = (H-1-y)/(H-1)` and `k` drawn from `[-curvature, curvature]`.
//! A branch leaves its parent at a switch row in the middle 60 % of the
//! image and drifts sideways by `a·d + c·d²/H`, `d` being the number of
//! rows above the switch. Distractor tracks run beside the ego track at a
//! lateral offset that shrinks with the gauge and starts at least `0.3·W`
//! from the bottom centre. Scenes whose tracks collide, leave the image too
//! early, or put switches too close together are redrawn.

use rand::seq::index::sample;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    rasterize_polyline, GridDims, Heatmap, RailPolyline, Scene, Track, Triplet, TripletMode,
};
use crate::tree::EgoPath;

const MAX_ATTEMPTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub dims: GridDims,
    pub n_switches: usize,
    /// Largest lateral bend of the ego track at the top row, in pixels.
    pub curvature: f64,
    /// Rail-area width on the bottom row.
    pub gauge_bottom: f64,
    /// Rail-area width on the top row.
    pub gauge_top: f64,
    pub distractor_tracks: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gauge_top >= 2.0) {
            return Err(Error::InvalidConfig(format!(
                "gauge_top must be >= 2, got {}",
                self.gauge_top
            )));
        }
        if !(self.gauge_top <= self.gauge_bottom) {
            return Err(Error::InvalidConfig(format!(
                "gauge_top {} exceeds gauge_bottom {}",
                self.gauge_top, self.gauge_bottom
            )));
        }
        if !(self.curvature >= 0.0 && self.curvature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "curvature must be >= 0, got {}",
                self.curvature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of additive Gaussian noise on every pixel.
    pub value_sigma: f64,
    /// Standard deviation of the per-row horizontal shift, in pixels.
    pub jitter_sigma: f64,
    /// Fraction of rows set to zero.
    pub dropout_rows: f64,
}

/// Rows `y_top..=y_bottom` of one track along a route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePiece {
    pub track: u32,
    pub y_top: usize,
    pub y_bottom: usize,
}

/// A generated scene and everything known about its topology.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    /// One route per ego-path, pieces ordered bottom-up.
    pub routes: Vec<Vec<RoutePiece>>,
    pub distractor_ids: Vec<u32>,
    /// Switch rows, one per branch.
    pub switch_rows: Vec<usize>,
}

impl GeneratedScene {
    /// Ground-truth ego-paths, one triplet per covered row.
    pub fn known_ego_paths(&self) -> Vec<EgoPath> {
        let dims = self.scene.dims();
        self.routes
            .iter()
            .map(|route| {
                let mut triplets = Vec::new();
                for piece in route {
                    let track = self.scene.track(piece.track).expect("route tracks exist");
                    let left = rasterize_polyline(&track.left, dims);
                    let right = rasterize_polyline(&track.right, dims);
                    for y in (piece.y_top..=piece.y_bottom).rev() {
                        if let (Some(xl), Some(xr)) = (left.get(y), right.get(y)) {
                            triplets.push(Triplet::new(y, xl, 0.5 * (xl + xr), xr, TripletMode::OneChannel));
                        }
                    }
                }
                EgoPath::from_triplets(triplets)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ego {
        k: f64,
    },
    Branch {
        parent: usize,
        switch_row: f64,
        dir: f64,
        slope: f64,
        quad: f64,
    },
    Distractor {
        offset: f64,
    },
}

#[derive(Debug, Clone)]
struct Draft {
    shape: Shape,
    /// Lowest row (largest y) the track covers.
    start_row: usize,
    /// Centre per row, from `start_row` upward while inside the image.
    centers: Vec<f64>,
}

impl Draft {
    fn top_row(&self) -> usize {
        self.start_row + 1 - self.centers.len()
    }

    fn center(&self, y: usize) -> Option<f64> {
        if y > self.start_row {
            return None;
        }
        self.centers.get(self.start_row - y).copied()
    }
}

struct Geometry {
    dims: GridDims,
    gauge_top: f64,
    gauge_bottom: f64,
}

impl Geometry {
    fn gauge(&self, y: usize) -> f64 {
        if self.dims.height == 1 {
            return self.gauge_bottom;
        }
        let f = y as f64 / (self.dims.height - 1) as f64;
        self.gauge_top + (self.gauge_bottom - self.gauge_top) * f
    }

    fn center(&self, drafts: &[Draft], shape: Shape, y: usize) -> f64 {
        let w = self.dims.width as f64;
        let h = self.dims.height as f64;
        match shape {
            Shape::Ego { k } => {
                let u = if self.dims.height > 1 {
                    (h - 1.0 - y as f64) / (h - 1.0)
                } else {
                    0.0
                };
                w / 2.0 + k * u * u
            }
            Shape::Branch {
                parent,
                switch_row,
                dir,
                slope,
                quad,
            } => {
                let d = (switch_row - y as f64).max(0.0);
                let base = self.center(drafts, drafts[parent].shape, y);
                base + dir * (slope * d + quad * d * d / h)
            }
            Shape::Distractor { offset } => self.center(drafts, drafts[0].shape, y) + offset,
        }
    }

    /// Traces a track upward from `start_row` until a rail leaves the image
    /// or the track comes too close to one of the `avoid` tracks.
    fn trace(&self, drafts: &[Draft], shape: Shape, start_row: usize, avoid: &[usize]) -> Draft {
        let max_x = (self.dims.width - 1) as f64;
        let mut centers = Vec::new();
        for y in (0..=start_row).rev() {
            let c = self.center(drafts, shape, y);
            let g = self.gauge(y);
            if c - g / 2.0 < 0.0 || c + g / 2.0 > max_x {
                break;
            }
            let crowded = avoid
                .iter()
                .filter_map(|&i| drafts[i].center(y))
                .any(|o| (o - c).abs() < self.min_separation(y));
            if crowded {
                break;
            }
            centers.push(c);
        }
        Draft {
            shape,
            start_row,
            centers,
        }
    }

    /// Smallest centre distance between unrelated tracks: one gauge plus a
    /// gap of half a gauge.
    fn min_separation(&self, y: usize) -> f64 {
        let g = self.gauge(y);
        g + (0.5 * g).max(2.0)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Tracks of one layout in creation order: the ego track, the distractors,
/// then the branches.
struct Layout {
    drafts: Vec<Draft>,
    /// Indices of the ego track and its branches.
    ego_family: Vec<usize>,
    distractors: Vec<usize>,
}

fn attempt(
    spec: &SceneSpec,
    geo: &Geometry,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Layout, &'static str> {
    let (w, h) = (spec.dims.width as f64, spec.dims.height);
    let hf = h as f64;
    let bottom = h - 1;
    let min_branch_rows = ((0.15 * hf).ceil() as usize).max(2);
    let min_switch_gap = ((0.1 * hf).ceil() as usize).max(1);

    let k = uniform(rng, -spec.curvature, spec.curvature);
    let mut drafts = vec![geo.trace(&[], Shape::Ego { k }, bottom, &[])];
    if drafts[0].centers.len() < ((0.5 * hf).ceil() as usize).max(1) {
        return Err("ego track leaves the image before mid-height");
    }
    let mut ego_family = vec![0];

    let max_offset = w / 2.0 - spec.gauge_bottom / 2.0 - 2.0;
    let mut distractors = Vec::new();
    let mut last_side = 1.0;
    for i in 0..spec.distractor_tracks {
        let side = if i % 2 == 0 {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        } else {
            -last_side
        };
        last_side = side;
        let offset = side * uniform(rng, 0.3 * w, (0.42 * w).min(max_offset));
        let draft = geo.trace(&drafts, Shape::Distractor { offset }, bottom, &[]);
        if draft.centers.len() < 2 {
            return Err("distractor does not fit");
        }
        distractors.push(drafts.len());
        drafts.push(draft);
    }

    let lo_row = (0.2 * (hf - 1.0)).round() as usize;
    let hi_row = (0.8 * (hf - 1.0)).round() as usize;
    let mut switch_rows: Vec<(usize, usize)> = Vec::new();
    for _ in 0..spec.n_switches {
        let parent = ego_family[rng.random_range(0..ego_family.len())];
        let p = &drafts[parent];
        let row_hi = hi_row.min(p.start_row.saturating_sub(min_switch_gap));
        let row_lo = lo_row.max(p.top_row() + min_switch_gap);
        if row_lo > row_hi {
            return Err("no room for a switch on the chosen parent");
        }
        let switch_row = rng.random_range(row_lo..=row_hi);
        if switch_rows
            .iter()
            .any(|&(pp, r)| pp == parent && r.abs_diff(switch_row) < min_switch_gap)
        {
            return Err("switches too close on one parent");
        }
        let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let slope = uniform(rng, 0.5, 0.9);
        let quad = uniform(rng, 0.0, 1.0);
        let shape = Shape::Branch {
            parent,
            switch_row: switch_row as f64,
            dir,
            slope,
            quad,
        };
        let avoid: Vec<usize> = (0..drafts.len()).filter(|&i| i != parent).collect();
        let draft = geo.trace(&drafts, shape, switch_row, &avoid);
        if draft.centers.len() < min_branch_rows {
            return Err("branch too short");
        }
        switch_rows.push((parent, switch_row));
        ego_family.push(drafts.len());
        drafts.push(draft);
    }

    // Branches already avoid everything traced before them; this also
    // covers distractors against each other and the ego track.
    for a in 0..drafts.len() {
        for b in a + 1..drafts.len() {
            if is_child_of(&drafts, b, a) {
                continue;
            }
            let lo = drafts[a].top_row().max(drafts[b].top_row());
            let hi = drafts[a].start_row.min(drafts[b].start_row);
            for y in lo..=hi.max(lo) {
                if let (Some(ca), Some(cb)) = (drafts[a].center(y), drafts[b].center(y)) {
                    if (ca - cb).abs() < geo.min_separation(y) {
                        return Err("tracks too close");
                    }
                }
            }
        }
    }
    Ok(Layout {
        drafts,
        ego_family,
        distractors,
    })
}

fn is_child_of(drafts: &[Draft], child: usize, parent: usize) -> bool {
    matches!(drafts[child].shape, Shape::Branch { parent: p, .. } if p == parent)
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn polyline(draft: &Draft, geo: &Geometry, side: f64) -> Result<RailPolyline> {
    let n = draft.centers.len();
    let step = (geo.dims.height / 64).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(step).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    let max_x = (geo.dims.width - 1) as f64;
    let points = idx
        .into_iter()
        .map(|i| {
            let y = draft.start_row - i;
            let x = draft.centers[i] + side * geo.gauge(y) / 2.0;
            [round3(x).clamp(0.0, max_x), y as f64]
        })
        .collect();
    RailPolyline::new(points)
}

/// Draws a scene from `spec`. Deterministic in `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<GeneratedScene> {
    spec.validate()?;
    let geo = Geometry {
        dims: spec.dims,
        gauge_top: spec.gauge_top,
        gauge_bottom: spec.gauge_bottom,
    };
    if spec.gauge_bottom > (spec.dims.width - 1) as f64 {
        return Err(Error::GenerationInfeasible(format!(
            "gauge {} does not fit a {}-pixel-wide image",
            spec.gauge_bottom, spec.dims.width
        )));
    }
    if spec.distractor_tracks > 0 {
        let w = spec.dims.width as f64;
        if w / 2.0 - spec.gauge_bottom / 2.0 - 2.0 < 0.3 * w {
            return Err(Error::GenerationInfeasible(
                "no room for a distractor 0.3 W from the bottom centre".into(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_reason = "";
    let mut found = None;
    for _ in 0..MAX_ATTEMPTS {
        match attempt(spec, &geo, &mut rng) {
            Ok(d) => {
                found = Some(d);
                break;
            }
            Err(reason) => last_reason = reason,
        }
    }
    let layout = found.ok_or_else(|| {
        Error::GenerationInfeasible(format!(
            "no valid layout after {MAX_ATTEMPTS} attempts (last: {last_reason})"
        ))
    })?;
    let drafts = &layout.drafts;

    // Ids: the ego track 0, branches in creation order, then distractors.
    let order: Vec<usize> = layout
        .ego_family
        .iter()
        .chain(&layout.distractors)
        .copied()
        .collect();
    let mut id_of = vec![0u32; drafts.len()];
    for (id, &i) in order.iter().enumerate() {
        id_of[i] = id as u32;
    }
    let tracks = order
        .iter()
        .map(|&i| {
            Ok(Track::new(
                id_of[i],
                polyline(&drafts[i], &geo, -1.0)?,
                polyline(&drafts[i], &geo, 1.0)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let scene = Scene::new(spec.dims, tracks)?;

    let routes = layout
        .ego_family
        .iter()
        .map(|&leaf| {
            let mut chain = vec![leaf];
            while let Shape::Branch { parent, .. } = drafts[*chain.last().unwrap()].shape {
                chain.push(parent);
            }
            chain.reverse();
            chain
                .iter()
                .enumerate()
                .map(|(j, &t)| RoutePiece {
                    track: id_of[t],
                    y_top: match chain.get(j + 1) {
                        Some(&next) => drafts[next].start_row + 1,
                        None => drafts[t].top_row(),
                    },
                    y_bottom: drafts[t].start_row,
                })
                .collect()
        })
        .collect();

    Ok(GeneratedScene {
        scene,
        routes,
        distractor_ids: layout.distractors.iter().map(|&i| id_of[i]).collect(),
        switch_rows: layout.ego_family[1..]
            .iter()
            .map(|&i| drafts[i].start_row)
            .collect(),
    })
}

/// Curvature settings of the standard fixture grid, in pixels at 960x540.
pub const FIXTURE_CURVATURES: [f64; 3] = [0.0, 80.0, 240.0];

/// The 27 standard fixtures: switches 0..=2 x three curvatures x
/// distractors 0..=2, all at 960x540.
pub fn fixture_grid() -> Vec<SceneSpec> {
    let dims = GridDims {
        width: 960,
        height: 540,
    };
    let mut out = Vec::with_capacity(27);
    for n_switches in 0..3 {
        for (ci, &curvature) in FIXTURE_CURVATURES.iter().enumerate() {
            for distractor_tracks in 0..3 {
                let seed = 1000 + (n_switches * 9 + ci * 3 + distractor_tracks) as u64;
                out.push(SceneSpec {
                    dims,
                    n_switches,
                    curvature,
                    gauge_bottom: 140.0,
                    gauge_top: 16.0,
                    distractor_tracks,
                    seed,
                });
            }
        }
    }
    out
}

/// Adds jitter, Gaussian value noise and row dropout to a heatmap.
/// Deterministic in `seed`; an all-zero `noise` returns the input unchanged.
pub fn perturb_heatmap(hm: &Heatmap, noise: &NoiseSpec, seed: u64) -> Result<Heatmap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (hm.width(), hm.height());
    let mut out = hm.clone();

    if noise.jitter_sigma > 0.0 {
        let jitter = Normal::new(0.0, noise.jitter_sigma)
            .map_err(|e| Error::InvalidConfig(format!("jitter_sigma: {e}")))?;
        for y in 0..h {
            let shift = jitter.sample(&mut rng).round() as i64;
            if shift == 0 {
                continue;
            }
            let src = hm.row(y);
            let dst = out.row_mut(y);
            for (x, v) in dst.iter_mut().enumerate() {
                let sx = x as i64 - shift;
                *v = if (0..w as i64).contains(&sx) {
                    src[sx as usize]
                } else {
                    0.0
                };
            }
        }
    }

    if noise.value_sigma > 0.0 {
        let dist = Normal::new(0.0, noise.value_sigma)
            .map_err(|e| Error::InvalidConfig(format!("value_sigma: {e}")))?;
        for y in 0..h {
            for v in out.row_mut(y) {
                *v = (*v as f64 + dist.sample(&mut rng)).max(0.0) as f32;
            }
        }
    }

    if noise.dropout_rows > 0.0 {
        if !(noise.dropout_rows <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rows must lie in [0, 1], got {}",
                noise.dropout_rows
            )));
        }
        let n = ((noise.dropout_rows * h as f64).round() as usize).min(h);
        for y in sample(&mut rng, h, n) {
            out.row_mut(y).fill(0.0);
        }
    }
    Ok(out)
}
