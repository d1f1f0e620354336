use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{ImageEvaluation, MacroLevels, MicroLevels};
use crate::geometry::Triplet;
use crate::pipeline::{PipelineConfig, PipelineOutput};
use crate::refine::FittedPath;
use crate::tree::{EgoPath, PathTree};

use super::{read_file, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub edges: Vec<usize>,
    pub triplets: Vec<Triplet>,
    pub fit: Option<FittedPath>,
}

impl PathEntry {
    pub fn ego_path(&self) -> EgoPath {
        EgoPath {
            triplets: self.triplets.clone(),
            edges: self.edges.clone(),
        }
    }
}

/// Everything extracted from one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsDocument {
    pub width: usize,
    pub height: usize,
    pub config: PipelineConfig,
    pub tree: PathTree,
    pub paths: Vec<PathEntry>,
}

impl PathsDocument {
    pub fn new(width: usize, height: usize, config: PipelineConfig, out: PipelineOutput) -> Self {
        let paths = out
            .paths
            .into_iter()
            .zip(out.fits)
            .map(|(p, fit)| PathEntry {
                edges: p.edges,
                triplets: p.triplets,
                fit,
            })
            .collect();
        Self {
            width,
            height,
            config,
            tree: out.tree,
            paths,
        }
    }

    pub fn ego_paths(&self) -> Vec<EgoPath> {
        self.paths.iter().map(PathEntry::ego_path).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_paths(doc: &PathsDocument, path: &Path) -> Result<()> {
    write_atomic(path, doc.to_json()?.as_bytes())
}

pub fn load_paths(path: &Path) -> Result<PathsDocument> {
    PathsDocument::from_json(&String::from_utf8_lossy(&read_file(path)?))
}

/// Evaluation of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    #[serde(flatten)]
    pub eval: ImageEvaluation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
}

/// Metrics over a set of images with micro and macro averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: PipelineConfig,
    pub images: Vec<ImageMetrics>,
    pub micro: MicroLevels,
    #[serde(rename = "macro")]
    pub macro_: MacroLevels,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_miou: Option<f64>,
}

impl MetricsReport {
    pub fn new(config: PipelineConfig, images: Vec<ImageMetrics>) -> Self {
        let evals: Vec<ImageEvaluation> = images.iter().map(|m| m.eval.clone()).collect();
        let (micro, macro_) = crate::eval::aggregate_evaluations(&evals);
        let mious: Vec<f64> = images.iter().filter_map(|m| m.miou).collect();
        let mean_miou = (!mious.is_empty()).then(|| mious.iter().sum::<f64>() / mious.len() as f64);
        Self {
            config,
            images,
            micro,
            macro_,
            mean_miou,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
