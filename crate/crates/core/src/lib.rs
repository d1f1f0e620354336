//! Rail ego-path extraction from track-point regression heatmaps.
//!
//! The pipeline turns per-pixel regression outputs into the routes a train
//! can take from its current position:
//!
//! 1. [`extract`] decodes each image row into triplets (left rail, centre,
//!    right rail).
//! 2. [`cluster`] groups triplets into short track segments inside
//!    horizontal sub-regions.
//! 3. [`tree`] links segments into a path tree rooted at the bottom centre
//!    of the image and enumerates its root-to-leaf ego-paths.
//! 4. [`refine`] snaps rails onto a segmentation mask and fits polynomials.
//!
//! [`gt`] and [`loss`] cover the training side: ground-truth heatmaps from
//! annotated scenes and the loss terms. [`eval`] scores extracted paths,
//! [`synth`] generates scenes with known answers and [`io`] handles file
//! formats.
//!
//! ```
//! use railpath::{build_center_heatmap, run_pipeline, GridDims, HeatmapInput,
//!     PipelineConfig, RailPolyline, Scene, Track, TripletMode};
//!
//! let dims = GridDims::new(96, 54)?;
//! let rail = |x| RailPolyline::new(vec![[x, 53.0], [x, 0.0]]);
//! let scene = Scene::new(dims, vec![Track::new(0, rail(40.0)?, rail(56.0)?)])?;
//! let heatmap = build_center_heatmap(&scene);
//!
//! let cfg = PipelineConfig::for_dims(dims, TripletMode::OneChannel);
//! let out = run_pipeline(HeatmapInput::OneChannel(&heatmap), None, &cfg)?;
//! assert_eq!(out.paths.len(), 1);
//! assert_eq!(out.paths[0].triplets[0].x_center, 48.0);
//! # Ok::<(), railpath::Error>(())
//! ```

pub mod cluster;
pub mod error;
pub mod eval;
pub mod extract;
pub mod geometry;
pub mod gt;
pub mod io;
pub mod loss;
pub mod pipeline;
pub mod refine;
pub mod synth;
pub mod tree;

pub use cluster::{cluster_into_segments, partition_rows, ClusterConfig, SubregionSpec, TrackSegment};
pub use error::{Error, Result};
pub use eval::{
    aggregate_evaluations, evaluate_paths, greedy_pairs, match_paths, miou, path_level_metrics,
    pixel_level_metrics, rail_pixel_f1, rail_pixel_match, ImageEvaluation, MatchConfig, MatchStats,
    PathMatching, PixelLevel,
};
pub use extract::{detect_row_peaks, extract_triplets_1ch, extract_triplets_3ch, Peak, PeakConfig};
pub use geometry::{
    rail_row_span, rasterize_polyline, GridDims, Heatmap, RailPolyline, RowMap, Scene, SegClass, SegMask,
    Track, Triplet, TripletMode,
};
pub use gt::{build_3ch_heatmaps, build_center_heatmap, build_gt_bundle, build_seg_mask, GtBundle};
pub use loss::{bootstrapped_ce, l1_loss, pixel_ce, total_loss_1ch, total_loss_3ch, LossConfig};
pub use pipeline::{gt_ego_paths, run_pipeline, HeatmapInput, PipelineConfig, PipelineOutput};
pub use refine::{
    fit_rail_polynomials, interpolate_row_gaps, polyfit, snap_to_segmentation, FittedPath, SnapConfig,
};
pub use synth::{generate_scene, perturb_heatmap, GeneratedScene, NoiseSpec, SceneSpec};
pub use tree::{build_path_tree, enumerate_ego_paths, filter_paths, EgoPath, NodeKind, PathTree, TreeConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ground-truth.md")]
    mod ground_truth {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/path-tree.md")]
    mod path_tree {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/synthetic-scenes.md")]
    mod synthetic_scenes {}
    #[doc = include_str!("../../../book/src/files-and-cli.md")]
    mod files_and_cli {}
}
