use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation case on disk. Relative paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub ref_features: PathBuf,
    pub ref_mask: PathBuf,
    pub target_features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_image: Option<PathBuf>,
    pub target_mask: PathBuf,
}

impl ManifestEntry {
    fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.ref_features);
        fix(&mut self.ref_mask);
        fix(&mut self.target_features);
        fix(&mut self.target_mask);
        if let Some(p) = self.target_image.as_mut() {
            fix(p);
        }
        self
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(entries.into_iter().map(|e| e.resolved(base)).collect())
}

pub fn save_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(entries)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
