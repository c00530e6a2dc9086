//! Standard corpus layout:
//!
//! ```text
//! <root>/trainS/  <root>/trainT/  <root>/testS/  <root>/testT/
//! <root>/masks/<same-filename>.png   (optional, nonzero = background)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const TRAIN_SOURCE: &str = "trainS";
pub const TRAIN_TARGET: &str = "trainT";
pub const TEST_SOURCE: &str = "testS";
pub const TEST_TARGET: &str = "testT";
pub const MASKS: &str = "masks";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout { root: root.into() }
    }

    pub fn train_source(&self) -> PathBuf {
        self.root.join(TRAIN_SOURCE)
    }

    pub fn train_target(&self) -> PathBuf {
        self.root.join(TRAIN_TARGET)
    }

    pub fn test_source(&self) -> PathBuf {
        self.root.join(TEST_SOURCE)
    }

    pub fn test_target(&self) -> PathBuf {
        self.root.join(TEST_TARGET)
    }

    pub fn masks(&self) -> PathBuf {
        self.root.join(MASKS)
    }
}

/// PNG files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(out)
}

/// Like [`list_images`] but fails when the directory holds no images.
pub fn list_images_nonempty(dir: &Path) -> Result<Vec<PathBuf>> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no PNG images in {}", dir.display())));
    }
    Ok(files)
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
