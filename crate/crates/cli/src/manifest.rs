//! Ingestion manifests: a JSON list of `{"url", "media", "file"}` entries.
//! Relative file paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mcl_core::types::{ContentId, MediaType};
use mcl_core::warehouse::Warehouse;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub url: String,
    pub media: MediaType,
    pub file: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Ingests every entry in order. Stops at the first failure; entries before
/// it stay ingested.
pub fn ingest_manifest(
    warehouse: &mut Warehouse,
    manifest: &Path,
) -> Result<Vec<(String, ContentId)>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut ids = Vec::new();
    for entry in read_manifest(manifest)? {
        let path = base.join(&entry.file);
        let payload =
            std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let id = warehouse
            .ingest(&entry.url, entry.media, payload)
            .with_context(|| format!("ingesting {}", entry.url))?;
        ids.push((entry.url, id));
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingests_relative_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "1\t2\n").unwrap();
        std::fs::write(dir.path().join("b.bin"), [0u8, 1, 2]).unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(
            &m,
            r#"[{"url": "pts", "media": "graph", "file": "a.txt"},
                {"url": "pic", "media": "image", "file": "b.bin"}]"#,
        )
        .unwrap();
        let mut w = Warehouse::with_seed(1);
        let ids = ingest_manifest(&mut w, &m).unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(w.lookup("pic").unwrap().payload, vec![0, 1, 2]);
        assert_eq!(w.lookup("pts").unwrap().media, MediaType::Graph);
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(&m, r#"[{"url": "x", "media": "voice", "file": "nope"}]"#).unwrap();
        let err = ingest_manifest(&mut Warehouse::with_seed(1), &m).unwrap_err();
        assert!(format!("{err:#}").contains("nope"));
    }
}
