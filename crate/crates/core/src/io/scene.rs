use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{GridDims, Scene, Track};

use super::{read_file, write_atomic};

/// On-disk form of a [`Scene`]:
/// `{"width", "height", "tracks": [{"id", "left": [[x, y], ...], "right": [...]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub width: usize,
    pub height: usize,
    pub tracks: Vec<Track>,
}

impl From<&Scene> for SceneDocument {
    fn from(scene: &Scene) -> Self {
        Self {
            width: scene.dims().width,
            height: scene.dims().height,
            tracks: scene.tracks().to_vec(),
        }
    }
}

impl SceneDocument {
    pub fn into_scene(self) -> Result<Scene> {
        Scene::new(GridDims::new(self.width, self.height)?, self.tracks)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn encode_scene(scene: &Scene) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&SceneDocument::from(scene))?;
    s.push('\n');
    Ok(s)
}

/// Parses and validates an annotation document.
pub fn decode_scene(text: &str) -> Result<Scene> {
    serde_json::from_str::<SceneDocument>(text)?.into_scene()
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let bytes = read_file(path)?;
    decode_scene(&String::from_utf8_lossy(&bytes))
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    write_atomic(path, encode_scene(scene)?.as_bytes())
}
