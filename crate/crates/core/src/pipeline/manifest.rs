//! Batch manifest: line-delimited JSON, one scan per line.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::PageScan;
use crate::{Error, Result};

/// Where the model boundaries find their inputs for one scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRefs {
    pub detections: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scan_id: String,
    pub lccn: String,
    pub date: String,
    pub edition: u32,
    pub page_number: u32,
    pub width_px: u32,
    pub height_px: u32,
    pub inputs: InputRefs,
}

impl ManifestEntry {
    /// An empty page scan carrying this entry's metadata.
    pub fn page(&self) -> PageScan {
        PageScan {
            scan_id: self.scan_id.clone(),
            lccn: self.lccn.clone(),
            date: self.date.clone(),
            edition: self.edition,
            page_number: self.page_number,
            width_px: self.width_px,
            height_px: self.height_px,
            regions: Vec::new(),
        }
    }
}

pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format { what: "manifest", msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| Error::Format { what: "manifest", msg: format!("line {}: {e}", n + 1) })?;
        out.push(entry);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(std::io::BufReader::new(f))
}
