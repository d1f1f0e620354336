//! Pipeline configuration layered from defaults, a JSON file and flags.

use std::path::{Path, PathBuf};

use clap::Args;
use railpath::{GridDims, PipelineConfig, TripletMode};
use serde_json::Value;

use crate::CliError;

/// Flags that override single configuration fields.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON file merged over the defaults; only the fields it names change.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Non-maximum suppression radius in pixels.
    #[arg(long)]
    pub nms_radius: Option<usize>,
    /// Smallest accepted peak value.
    #[arg(long)]
    pub min_peak: Option<f64>,
    /// Sub-region height in rows.
    #[arg(long)]
    pub subregion_height: Option<usize>,
    /// Largest centre step between points of one segment.
    #[arg(long)]
    pub tau_point: Option<f64>,
    /// Largest centre distance between a segment and an edge tip.
    #[arg(long)]
    pub tau_seg: Option<f64>,
    /// Largest distance of the first segment from the bottom centre.
    #[arg(long)]
    pub tau_start: Option<f64>,
    /// Snapping window in pixels.
    #[arg(long)]
    pub w_snap: Option<f64>,
    /// Rail polynomial degree.
    #[arg(long)]
    pub fit_degree: Option<usize>,
    /// Pixel vicinity radius for evaluation.
    #[arg(long)]
    pub radius: Option<u32>,
    /// Minimum F1 for pairing paths during evaluation.
    #[arg(long)]
    pub m_min: Option<f64>,
}

/// Recursively overwrites `base` with the entries of `patch`. Keys missing
/// from `base` are rejected, since the defaults name every field.
fn merge(base: &mut Value, patch: Value, at: &str) -> Result<(), String> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if at.is_empty() {
                    k.clone()
                } else {
                    format!("{at}.{k}")
                };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(format!("unknown configuration field `{here}`")),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn read_patch(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

impl ConfigArgs {
    /// Applies the file and the flags, in that order, to `base`.
    pub fn apply(&self, base: PipelineConfig) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let mut value = serde_json::to_value(base).expect("config serializes");
                merge(&mut value, read_patch(path)?, "")
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
                serde_json::from_value(value)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
            }
            None => base,
        };
        if let Some(v) = self.nms_radius {
            cfg.peak.nms_radius = v;
        }
        if let Some(v) = self.min_peak {
            cfg.peak.min_peak_value = v;
        }
        if let Some(v) = self.subregion_height {
            cfg.cluster.h = v;
        }
        if let Some(v) = self.tau_point {
            cfg.cluster.tau_point = v;
        }
        if let Some(v) = self.tau_seg {
            cfg.tree.tau_seg = v;
        }
        if let Some(v) = self.tau_start {
            cfg.tree.tau_start = v;
        }
        if let Some(v) = self.w_snap {
            cfg.snap.w_snap = v;
        }
        if let Some(v) = self.fit_degree {
            cfg.fit_degree = v;
        }
        if let Some(v) = self.radius {
            cfg.matching.radius = v;
        }
        if let Some(v) = self.m_min {
            cfg.matching.m_min = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults for `dims` and `mode` with the overrides applied.
    pub fn resolve(&self, dims: GridDims, mode: TripletMode) -> Result<PipelineConfig, CliError> {
        self.apply(PipelineConfig::for_dims(dims, mode))
    }
}
