//! Corpus directories: one `.md` file per document plus `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExtractionRecord, IngestError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    /// File name relative to the corpus directory.
    pub path: String,
    #[serde(default)]
    pub stratum: String,
    /// Optional gold annotation file (JSONL of extraction records).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub documents: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDoc {
    pub doc_id: String,
    pub stratum: String,
    pub markdown: String,
    pub gold: Option<Vec<ExtractionRecord>>,
}

fn io(e: impl std::fmt::Display) -> IngestError {
    IngestError::Io(e.to_string())
}

/// Reads a corpus directory in manifest order. `strata`, when non-empty,
/// keeps only documents of the listed strata.
pub fn load_corpus(dir: &Path, strata: &[String]) -> Result<Vec<CorpusDoc>, IngestError> {
    let text = fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| IngestError::Io(format!("{}: {e}", dir.join("manifest.json").display())))?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| IngestError::Format(format!("manifest.json: {e}")))?;
    let mut out = Vec::new();
    for entry in manifest.documents {
        if !strata.is_empty() && !strata.contains(&entry.stratum) {
            continue;
        }
        let markdown = fs::read_to_string(dir.join(&entry.path))
            .map_err(|e| IngestError::Io(format!("{}: {e}", entry.path)))?;
        let gold = match &entry.gold {
            None => None,
            Some(p) => {
                let text = fs::read_to_string(dir.join(p)).map_err(io)?;
                let records = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| serde_json::from_str(l).map_err(|e| IngestError::Format(format!("{p}: {e}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(records)
            }
        };
        out.push(CorpusDoc { doc_id: entry.doc_id, stratum: entry.stratum, markdown, gold });
    }
    Ok(out)
}

/// Writes documents (and gold files where present) plus the manifest.
pub fn write_corpus(dir: &Path, docs: &[CorpusDoc]) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(io)?;
    let mut manifest = CorpusManifest::default();
    for d in docs {
        let path = format!("{}.md", d.doc_id);
        fs::write(dir.join(&path), &d.markdown).map_err(io)?;
        let gold = match &d.gold {
            None => None,
            Some(records) => {
                let p = format!("{}.gold.jsonl", d.doc_id);
                let mut text = String::new();
                for r in records {
                    text.push_str(&serde_json::to_string(r).map_err(io)?);
                    text.push('\n');
                }
                fs::write(dir.join(&p), text).map_err(io)?;
                Some(p)
            }
        };
        manifest.documents.push(ManifestEntry {
            doc_id: d.doc_id.clone(),
            path,
            stratum: d.stratum.clone(),
            gold,
        });
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(io)?;
    fs::write(dir.join("manifest.json"), json).map_err(io)
}
