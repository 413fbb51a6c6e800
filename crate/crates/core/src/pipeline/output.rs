//! Line-delimited JSON writers and readers for the two published record
//! shapes. Keys appear in struct declaration order; coordinates are written
//! with one decimal.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::association::ArticleRecord;
use crate::domain::PageScan;
use crate::{Error, Result};

/// Bumped whenever a field of the article or scan record changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Scan-level record: page metadata plus every detected region.
pub type ScanOutputRecord = PageScan;

pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Format { what: "jsonl", msg: e.to_string() })?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn write_file<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_jsonl(records, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(std::io::BufReader::new(f))
}

pub fn serialize_article_level(records: &[ArticleRecord], path: &Path) -> Result<()> {
    write_file(records, path)
}

pub fn serialize_scan_level(records: &[ScanOutputRecord], path: &Path) -> Result<()> {
    write_file(records, path)
}

pub fn load_article_level(path: &Path) -> Result<Vec<ArticleRecord>> {
    read_file(path)
}

pub fn load_scan_level(path: &Path) -> Result<Vec<ScanOutputRecord>> {
    read_file(path)
}
