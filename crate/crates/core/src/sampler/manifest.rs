use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SamplerError;

/// One line of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

/// Reads a JSON-lines manifest. Relative paths resolve against the manifest's
/// directory; blank lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, SamplerError> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut e: ManifestEntry = serde_json::from_str(l)
                .map_err(|err| SamplerError::Manifest(format!("{}:{}: {err}", path.display(), i + 1)))?;
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            Ok(e)
        })
        .collect()
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), SamplerError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for e in entries {
        let line = serde_json::to_string(e).map_err(|err| SamplerError::Manifest(err.to_string()))?;
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}
