//! File formats: annotation JSON, the `TPEH` heatmap binary, path and
//! metrics documents, and PNG overlays.

mod document;
mod heatmap;
mod render;
mod scene;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use document::{load_paths, save_paths, ImageMetrics, MetricsReport, PathEntry, PathsDocument};
pub use heatmap::{
    decode_heatmap, decode_mask, encode_heatmap, encode_mask, load_heatmap, load_mask, save_heatmap,
    save_mask, TPEH_MAGIC, TPEH_VERSION,
};
pub use render::{decode_png_rgb, encode_png, render_overlay, Canvas, Colors};
pub use scene::{decode_scene, encode_scene, load_scene, save_scene, SceneDocument};

/// Writes `bytes` to a temporary sibling of `path` and renames it into place,
/// so readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
