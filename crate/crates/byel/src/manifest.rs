//! JSON-lines manifests: one `{"image": ..., "label": 0-5, "domain": ...}`
//! object per line.

use std::fs;
use std::path::Path;

use byel_core::data::{DatasetManifest, ManifestEntry};
use byel_core::{Domain, EmotionLabel};
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result, RunError};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    image: String,
    label: i64,
    domain: String,
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| RunError::Parse { what: "manifest", line, message };
        let rec: Line = serde_json::from_str(raw).map_err(|e| parse_err(e.to_string()))?;
        let label = EmotionLabel::new(rec.label)
            .map_err(|_| parse_err(format!("invalid label {} at line {line}", rec.label)))?;
        let domain: Domain = rec.domain.parse().map_err(|e: byel_core::Error| parse_err(e.to_string()))?;
        entries.push(ManifestEntry { image: rec.image, label, domain });
    }
    Ok(DatasetManifest::new(entries)?)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(RunError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?;
    parse_manifest(&text)
}

pub fn render_manifest(manifest: &DatasetManifest) -> String {
    let mut out = String::new();
    for e in manifest.entries() {
        let line = Line { image: e.image.clone(), label: e.label.index() as i64, domain: e.domain.to_string() };
        out.push_str(&serde_json::to_string(&line).expect("plain struct"));
        out.push('\n');
    }
    out
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, render_manifest(manifest)).ctx(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_entry_per_class() {
        let text: String = (0..6)
            .map(|k| format!("{{\"image\": \"source/{k}/0.png\", \"label\": {k}, \"domain\": \"source\"}}\n"))
            .collect();
        let m = parse_manifest(&text).unwrap();
        assert_eq!(m.counts(), [1; 6]);
    }

    #[test]
    fn bad_label_reports_line() {
        let text = "{\"image\": \"a\", \"label\": 1, \"domain\": \"source\"}\n{\"image\": \"b\", \"label\": 7, \"domain\": \"source\"}\n";
        let err = parse_manifest(text).unwrap_err();
        assert!(err.to_string().contains("invalid label 7 at line 2"), "{err}");
    }

    #[test]
    fn unknown_domain_and_garbage() {
        let err = parse_manifest("{\"image\": \"a\", \"label\": 1, \"domain\": \"real\"}").unwrap_err();
        assert!(matches!(err, RunError::Parse { line: 1, .. }));
        let err = parse_manifest("{\"image\": \"a\"}\nnot json").unwrap_err();
        assert!(matches!(err, RunError::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_manifest_rejected() {
        assert!(parse_manifest("\n\n").is_err());
    }
}
