//! The full post-processing chain from heatmaps to fitted ego-paths.

use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_into_segments, ClusterConfig};
use crate::error::Result;
use crate::eval::MatchConfig;
use crate::extract::{extract_triplets_1ch, extract_triplets_3ch, PeakConfig};
use crate::geometry::{GridDims, Heatmap, Scene, SegMask, Triplet, TripletMode};
use crate::gt::build_center_heatmap;
use crate::refine::{
    fit_rail_polynomials, interpolate_row_gaps, snap_to_segmentation, FittedPath, SnapConfig,
    DEFAULT_FIT_DEGREE,
};
use crate::tree::{build_path_tree, enumerate_ego_paths, filter_paths, EgoPath, PathTree, TreeConfig};

/// Every stage's parameters in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: TripletMode,
    pub peak: PeakConfig,
    pub cluster: ClusterConfig,
    pub tree: TreeConfig,
    pub snap: SnapConfig,
    pub matching: MatchConfig,
    pub fit_degree: usize,
    /// Interpolate rows missing inside a path, up to the tree's row-gap
    /// tolerance.
    pub fill_row_gaps: bool,
}

impl PipelineConfig {
    /// Defaults for an image size, pixel parameters scaled by `W / 960`.
    pub fn for_dims(dims: GridDims, mode: TripletMode) -> Self {
        Self {
            mode,
            peak: match mode {
                TripletMode::OneChannel => PeakConfig::one_channel(),
                TripletMode::ThreeChannel => PeakConfig::three_channel(),
            },
            cluster: ClusterConfig::for_dims(dims),
            tree: TreeConfig::for_dims(dims),
            snap: SnapConfig::default(),
            matching: MatchConfig::for_dims(dims),
            fit_degree: DEFAULT_FIT_DEGREE,
            fill_row_gaps: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.peak.validate()?;
        self.cluster.validate()?;
        self.tree.validate()?;
        self.matching.validate()
    }
}

/// Heatmaps of one image in either regression design.
#[derive(Debug, Clone, Copy)]
pub enum HeatmapInput<'a> {
    OneChannel(&'a Heatmap),
    ThreeChannel {
        prob: &'a Heatmap,
        dist_left: &'a Heatmap,
        dist_right: &'a Heatmap,
    },
}

impl HeatmapInput<'_> {
    pub fn dims(&self) -> GridDims {
        match self {
            HeatmapInput::OneChannel(h) => h.dims(),
            HeatmapInput::ThreeChannel { prob, .. } => prob.dims(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub tree: PathTree,
    pub paths: Vec<EgoPath>,
    /// Rail polynomials per path; `None` when a path has too few rows.
    pub fits: Vec<Option<FittedPath>>,
}

/// Track points of one image.
pub fn extract_triplets(input: HeatmapInput<'_>, cfg: &PipelineConfig) -> Result<Vec<Triplet>> {
    match input {
        HeatmapInput::OneChannel(h) => {
            cfg.peak.validate()?;
            Ok(extract_triplets_1ch(h, &cfg.peak))
        }
        HeatmapInput::ThreeChannel {
            prob,
            dist_left,
            dist_right,
        } => extract_triplets_3ch(prob, dist_left, dist_right, &cfg.peak),
    }
}

/// Extracts, clusters, builds the path tree, enumerates and filters
/// ego-paths, fills row gaps, snaps them to `seg` when given, and fits rail
/// polynomials.
pub fn run_pipeline(
    input: HeatmapInput<'_>,
    seg: Option<(&SegMask, Option<&Heatmap>)>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let dims = input.dims();
    let triplets = extract_triplets(input, cfg)?;
    let segments = cluster_into_segments(&triplets, &cfg.cluster, dims)?;
    let tree = build_path_tree(&segments, &cfg.tree, dims)?;
    let mut paths = filter_paths(enumerate_ego_paths(&tree), &cfg.tree, dims);
    if cfg.fill_row_gaps {
        paths = paths
            .iter()
            .map(|p| interpolate_row_gaps(p, cfg.tree.max_row_gap))
            .collect();
    }
    if let Some((mask, prob)) = seg {
        paths = paths
            .iter()
            .map(|p| snap_to_segmentation(p, mask, &cfg.snap, prob))
            .collect::<Result<_>>()?;
    }
    let fits = paths
        .iter()
        .map(|p| fit_rail_polynomials(p, cfg.fit_degree).ok())
        .collect();
    Ok(PipelineOutput { tree, paths, fits })
}

/// Ground-truth ego-paths of an annotated scene: the pipeline applied to
/// the scene's noiseless centre heatmap.
pub fn gt_ego_paths(scene: &Scene, cfg: &PipelineConfig) -> Result<Vec<EgoPath>> {
    let hm = build_center_heatmap(scene);
    let mut gt_cfg = *cfg;
    gt_cfg.mode = TripletMode::OneChannel;
    gt_cfg.peak = PeakConfig::one_channel();
    Ok(run_pipeline(HeatmapInput::OneChannel(&hm), None, &gt_cfg)?.paths)
}
