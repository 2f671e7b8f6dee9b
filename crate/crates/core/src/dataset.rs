//! Dataset manifest: the list of episode directories a dataset-level
//! command operates on. Paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recorder::{load_episode, Episode, RecorderError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("episode {id}: {source}")]
    Episode { id: String, source: RecorderError },
    #[error("manifest lists {0:?} more than once")]
    DuplicateId(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub episodes: Vec<ManifestEntry>,
}

impl Manifest {
    /// Reads a manifest file, or `manifest.json` inside a directory.
    pub fn load(path: &Path) -> Result<(Manifest, PathBuf), DatasetError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let err = |message: String| DatasetError::Manifest { path: file.clone(), message };
        let text = std::fs::read_to_string(&file).map_err(|e| err(e.to_string()))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let mut ids: Vec<&str> = manifest.episodes.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(DatasetError::DuplicateId(w[0].to_string()));
        }
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, root))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, file: &Path) -> std::io::Result<()> {
        std::fs::write(file, self.to_json())
    }

    /// Entries whose id is in `ids`, in manifest order.
    pub fn restricted_to(&self, ids: &[String]) -> Manifest {
        Manifest { episodes: self.episodes.iter().filter(|e| ids.contains(&e.id)).cloned().collect() }
    }

    /// Loads every episode, in manifest order.
    pub fn load_episodes(&self, root: &Path) -> Result<Vec<(String, Episode)>, DatasetError> {
        self.episodes
            .iter()
            .map(|entry| {
                load_episode(&root.join(&entry.path))
                    .map(|ep| (entry.id.clone(), ep))
                    .map_err(|source| DatasetError::Episode { id: entry.id.clone(), source })
            })
            .collect()
    }
}
