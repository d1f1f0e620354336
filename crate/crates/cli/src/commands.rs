//! The subcommands. Each processes its images in the ambient thread pool
//! and writes every output file atomically.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use railpath::io::{
    decode_png_rgb, load_heatmap, load_mask, load_paths, load_scene, render_overlay, save_heatmap, save_mask,
    save_paths, save_scene, write_atomic, ImageMetrics, MetricsReport, PathsDocument,
};
use railpath::{
    build_gt_bundle, build_seg_mask, evaluate_paths, generate_scene, gt_ego_paths, match_paths, miou,
    perturb_heatmap, run_pipeline, GridDims, Heatmap, HeatmapInput, NoiseSpec, SceneSpec, SegMask,
    TripletMode,
};
use rayon::prelude::*;

use crate::config::ConfigArgs;
use crate::{stem_in, with_suffix, CliError};

const SCENE: &str = ".scene.json";
const CENTER: &str = ".center.tpeh";
const PROB: &str = ".prob.tpeh";
const DIST_LEFT: &str = ".dist_left.tpeh";
const DIST_RIGHT: &str = ".dist_right.tpeh";
const SEG: &str = ".seg.tpeh";
const PATHS: &str = ".paths.json";

/// Seed offset of the heatmap noise relative to the scene seed.
const NOISE_SEED_XOR: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Centre/half-width map in `STEM.center.tpeh`.
    OneChannel,
    /// Probability and distance maps in `STEM.prob.tpeh`,
    /// `STEM.dist_left.tpeh` and `STEM.dist_right.tpeh`.
    ThreeChannel,
}

impl From<Mode> for TripletMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::OneChannel => TripletMode::OneChannel,
            Mode::ThreeChannel => TripletMode::ThreeChannel,
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn base_name(stem: &Path) -> String {
    stem.file_name().map_or_else(
        || stem.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

/// Runs `f` on every item in parallel. Every item is attempted; failures
/// after the first are reported on stderr and the first, in input order, is
/// returned.
fn for_each_item<T: Sync, R: Send>(
    items: &[T],
    name: impl Fn(&T) -> String + Sync,
    f: impl Fn(&T) -> Result<R, CliError> + Sync,
) -> Result<Vec<R>, CliError> {
    let results: Vec<Result<R, CliError>> = items
        .par_iter()
        .map(|i| f(i).map_err(|e| e.context(&name(i))))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(e) => eprintln!("error: {e}"),
        }
    }
    first_err.map_or(Ok(out), Err)
}

// ------------------------------------------------------------------- synth

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving the generated files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// File name prefix; image `i` gets the stem `PREFIX` + `i` in four digits.
    #[arg(long, default_value = "scene")]
    pub prefix: String,
    /// Number of scenes; scene `i` uses seed `SEED + i`.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long, default_value_t = 960)]
    pub width: usize,
    #[arg(long, default_value_t = 540)]
    pub height: usize,
    /// Switches along the ego track.
    #[arg(long, default_value_t = 1)]
    pub switches: usize,
    /// Horizontal bend of the ego track over the image height, in pixels.
    #[arg(long, default_value_t = 80.0)]
    pub curvature: f64,
    /// Rail-area width on the bottom row.
    #[arg(long, default_value_t = 140.0)]
    pub gauge_bottom: f64,
    /// Rail-area width on the top row.
    #[arg(long, default_value_t = 16.0)]
    pub gauge_top: f64,
    /// Parallel tracks that are not reachable from the ego track.
    #[arg(long, default_value_t = 0)]
    pub distractors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian noise added to every heatmap value.
    #[arg(long, default_value_t = 0.0)]
    pub value_sigma: f64,
    /// Standard deviation of the per-row horizontal shift, in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub jitter_sigma: f64,
    /// Fraction of rows zeroed in every heatmap.
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Half-width of the rail-track class in the mask, in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub rail_halfwidth: f64,
}

/// Writes the scene plus heatmaps perturbed by `noise`; the mask stays clean.
fn write_bundle(
    stem: &Path,
    scene: &railpath::Scene,
    halfwidth: f64,
    noise: Option<(&NoiseSpec, u64)>,
) -> Result<(), CliError> {
    let gt = build_gt_bundle(scene, halfwidth);
    let maps: [(&Heatmap, &str); 4] = [
        (&gt.center, CENTER),
        (&gt.prob3, PROB),
        (&gt.dist_left, DIST_LEFT),
        (&gt.dist_right, DIST_RIGHT),
    ];
    for (hm, suffix) in maps {
        let out = match noise {
            Some((n, seed)) => perturb_heatmap(hm, n, seed)?,
            None => hm.clone(),
        };
        save_heatmap(&out, &with_suffix(stem, suffix))?;
    }
    save_mask(&gt.seg, &with_suffix(stem, SEG))?;
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    create_dir(&a.out_dir)?;
    let dims = GridDims::new(a.width, a.height)?;
    let noise = NoiseSpec {
        value_sigma: a.value_sigma,
        jitter_sigma: a.jitter_sigma,
        dropout_rows: a.dropout,
    };
    let indices: Vec<u64> = (0..a.count).collect();
    let stems = for_each_item(
        &indices,
        |i| format!("{}{i:04}", a.prefix),
        |&i| {
            let seed = a.seed.wrapping_add(i);
            let spec = SceneSpec {
                dims,
                n_switches: a.switches,
                curvature: a.curvature,
                gauge_bottom: a.gauge_bottom,
                gauge_top: a.gauge_top,
                distractor_tracks: a.distractors,
                seed,
            };
            let generated = generate_scene(&spec)?;
            let stem = a.out_dir.join(format!("{}{i:04}", a.prefix));
            save_scene(&generated.scene, &with_suffix(&stem, SCENE))?;
            let noisy = noise != NoiseSpec::default();
            write_bundle(
                &stem,
                &generated.scene,
                a.rail_halfwidth,
                noisy.then_some((&noise, seed ^ NOISE_SEED_XOR)),
            )?;
            Ok(stem)
        },
    )?;
    for s in stems {
        println!("{}", s.display());
    }
    Ok(())
}

// ------------------------------------------------------------------- gtgen

#[derive(Debug, Args)]
pub struct GtgenArgs {
    /// Scene files (`*.scene.json` or any other JSON name).
    #[arg(required = true)]
    pub scenes: Vec<PathBuf>,
    /// Output directory; defaults to each scene's own directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Half-width of the rail-track class in the mask, in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub rail_halfwidth: f64,
}

/// `a/b.scene.json` and `a/b.json` both give the stem `a/b`.
fn scene_stem(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    let trimmed = s
        .strip_suffix(SCENE)
        .or_else(|| s.strip_suffix(".json"))
        .unwrap_or(&s);
    PathBuf::from(trimmed)
}

pub fn gtgen(a: &GtgenArgs) -> Result<(), CliError> {
    if let Some(d) = &a.out_dir {
        create_dir(d)?;
    }
    if !(a.rail_halfwidth >= 0.0) {
        return Err(CliError::Validation(format!(
            "rail halfwidth must be >= 0, got {}",
            a.rail_halfwidth
        )));
    }
    for_each_item(
        &a.scenes,
        |p| p.display().to_string(),
        |path| {
            let scene = load_scene(path)?;
            let stem = stem_in(a.out_dir.as_deref(), &scene_stem(path));
            write_bundle(&stem, &scene, a.rail_halfwidth, None)
        },
    )?;
    Ok(())
}

// ----------------------------------------------------------------- extract

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Image stems.
    #[arg(required = true)]
    pub stems: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::OneChannel)]
    pub mode: Mode,
    /// Snap rails to the mask in `STEM.seg.tpeh`.
    #[arg(long)]
    pub seg: bool,
    /// Output directory for `STEM.paths.json`; defaults to the stem's own.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

struct LoadedImage {
    maps: Vec<Heatmap>,
    seg: Option<SegMask>,
}

impl LoadedImage {
    fn load(stem: &Path, mode: Mode, seg: bool) -> Result<Self, CliError> {
        let suffixes: &[&str] = match mode {
            Mode::OneChannel => &[CENTER],
            Mode::ThreeChannel => &[PROB, DIST_LEFT, DIST_RIGHT],
        };
        let maps = suffixes
            .iter()
            .map(|s| load_heatmap(&with_suffix(stem, s)))
            .collect::<railpath::Result<Vec<_>>>()?;
        let seg = seg.then(|| load_mask(&with_suffix(stem, SEG))).transpose()?;
        Ok(Self { maps, seg })
    }

    fn input(&self) -> HeatmapInput<'_> {
        match self.maps.as_slice() {
            [c] => HeatmapInput::OneChannel(c),
            [p, l, r] => HeatmapInput::ThreeChannel {
                prob: p,
                dist_left: l,
                dist_right: r,
            },
            _ => unreachable!("one or three maps are loaded"),
        }
    }
}

pub fn extract(a: &ExtractArgs) -> Result<(), CliError> {
    if let Some(d) = &a.out_dir {
        create_dir(d)?;
    }
    let lines = for_each_item(
        &a.stems,
        |s| s.display().to_string(),
        |stem| {
            let img = LoadedImage::load(stem, a.mode, a.seg)?;
            let input = img.input();
            let dims = input.dims();
            let cfg = a.config.resolve(dims, a.mode.into())?;
            let out = run_pipeline(input, img.seg.as_ref().map(|m| (m, None)), &cfg)?;
            let doc = PathsDocument::new(dims.width, dims.height, cfg, out);
            let target = with_suffix(&stem_in(a.out_dir.as_deref(), stem), PATHS);
            save_paths(&doc, &target)?;
            Ok(format!("{}: {} paths", target.display(), doc.paths.len()))
        },
    )?;
    lines.iter().for_each(|l| println!("{l}"));
    Ok(())
}

// -------------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Image stems; the scene is read from `STEM.scene.json`.
    #[arg(required = true)]
    pub stems: Vec<PathBuf>,
    /// Directory holding `STEM.paths.json`; defaults to the stem's own.
    #[arg(long)]
    pub paths_dir: Option<PathBuf>,
    /// Directory holding predicted masks `STEM.seg.tpeh`, for mIoU.
    #[arg(long)]
    pub seg_dir: Option<PathBuf>,
    /// Half-width of the rail-track class in the ground-truth mask.
    #[arg(long, default_value_t = 1.0)]
    pub rail_halfwidth: f64,
    /// Metrics file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides applied to the configuration stored in each paths file.
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let rows = for_each_item(
        &a.stems,
        |s| s.display().to_string(),
        |stem| {
            let scene = load_scene(&with_suffix(stem, SCENE))?;
            let doc = load_paths(&with_suffix(&stem_in(a.paths_dir.as_deref(), stem), PATHS))?;
            let dims = scene.dims();
            if (doc.width, doc.height) != (dims.width, dims.height) {
                return Err(CliError::Validation(format!(
                    "paths are for {}x{} but the scene is {dims}",
                    doc.width, doc.height
                )));
            }
            let cfg = a.config.apply(doc.config)?;
            let gt = gt_ego_paths(&scene, &cfg)?;
            let (eval, _) = evaluate_paths(&gt, &doc.ego_paths(), &cfg.matching);
            let miou = match &a.seg_dir {
                Some(dir) => {
                    let pred = load_mask(&with_suffix(&stem_in(Some(dir), stem), SEG))?;
                    Some(miou(&pred, &build_seg_mask(&scene, a.rail_halfwidth), 3)?)
                }
                None => None,
            };
            Ok((
                cfg,
                ImageMetrics {
                    name: base_name(stem),
                    eval,
                    miou,
                },
            ))
        },
    )?;
    let config = rows[0].0;
    let report = MetricsReport::new(config, rows.into_iter().map(|(_, m)| m).collect());
    let json = report.to_json()?;
    match &a.out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

// ------------------------------------------------------------------ render

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Image stems.
    #[arg(required = true)]
    pub stems: Vec<PathBuf>,
    /// Directory holding `STEM.paths.json`; defaults to the stem's own.
    #[arg(long)]
    pub paths_dir: Option<PathBuf>,
    /// Score against `STEM.scene.json` and colour pixels by outcome.
    #[arg(long)]
    pub score: bool,
    /// Directory of `STEM.png` images to draw on instead of black.
    #[arg(long)]
    pub background_dir: Option<PathBuf>,
    /// Output directory for `STEM.overview.png` and `STEM.path<i>.png`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    create_dir(&a.out_dir)?;
    for_each_item(
        &a.stems,
        |s| s.display().to_string(),
        |stem| {
            let doc = load_paths(&with_suffix(&stem_in(a.paths_dir.as_deref(), stem), PATHS))?;
            let dims = GridDims::new(doc.width, doc.height)?;
            let cfg = a.config.apply(doc.config)?;
            let est = doc.ego_paths();
            let background = match &a.background_dir {
                Some(dir) => {
                    let path = with_suffix(&stem_in(Some(dir), stem), ".png");
                    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
                    Some(decode_png_rgb(&bytes)?)
                }
                None => None,
            };
            let gt = if a.score {
                let scene = load_scene(&with_suffix(stem, SCENE))?;
                let gt = gt_ego_paths(&scene, &cfg)?;
                let m = match_paths(&gt, &est, &cfg.matching);
                Some((gt, m))
            } else {
                None
            };
            let pngs = render_overlay(
                background.as_ref(),
                dims,
                &est,
                gt.as_ref().map(|(g, m)| (g.as_slice(), m)),
                cfg.matching.radius,
            )?;
            let out = stem_in(Some(&a.out_dir), stem);
            for (i, png) in pngs.iter().enumerate() {
                let suffix = if i == 0 {
                    ".overview.png".to_string()
                } else {
                    format!(".path{}.png", i - 1)
                };
                write_atomic(&with_suffix(&out, &suffix), png)?;
            }
            Ok(())
        },
    )?;
    Ok(())
}

// ------------------------------------------------------------------- bench

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Image stem.
    pub stem: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::OneChannel)]
    pub mode: Mode,
    /// Snap rails to the mask in `STEM.seg.tpeh`.
    #[arg(long)]
    pub seg: bool,
    /// Timed runs.
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Untimed runs before measuring.
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn bench(a: &BenchArgs) -> Result<(), CliError> {
    if a.runs == 0 {
        return Err(CliError::Validation("runs must be >= 1".into()));
    }
    let img =
        LoadedImage::load(&a.stem, a.mode, a.seg).map_err(|e| e.context(&a.stem.display().to_string()))?;
    let input = img.input();
    let cfg = a.config.resolve(input.dims(), a.mode.into())?;
    let seg = img.seg.as_ref().map(|m| (m, None));
    let mut paths = 0;
    for _ in 0..a.warmup {
        paths = run_pipeline(input, seg, &cfg)?.paths.len();
    }
    let mut ms: Vec<f64> = (0..a.runs)
        .map(|_| {
            let start = Instant::now();
            let out = run_pipeline(input, seg, &cfg)?;
            paths = out.paths.len();
            Ok(start.elapsed().as_secs_f64() * 1e3)
        })
        .collect::<Result<_, CliError>>()?;
    ms.sort_by(f64::total_cmp);
    let n = ms.len();
    let median = if n % 2 == 1 {
        ms[n / 2]
    } else {
        0.5 * (ms[n / 2 - 1] + ms[n / 2])
    };
    let report = serde_json::json!({
        "stem": a.stem.display().to_string(),
        "runs": n,
        "threads": rayon::current_num_threads(),
        "paths": paths,
        "median_ms": median,
        "min_ms": ms[0],
        "max_ms": ms[n - 1],
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}
