//! Retrieval-based text recognition.
//!
//! Word crops are embedded by an [`Encoder`] and matched against an offline
//! [`ExemplarIndex`] of rendered dictionary words. When the best word match is
//! below [`RecognitionConfig::word_sim_threshold`], the word is re-read one
//! character at a time against a character index instead.

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, ContentRegion, CropRef};
use crate::geometry::{self, Detection, GeometryConfig};
use crate::{BoundaryError, Error, Result};

/// Tolerance on the L2 norm of stored embeddings.
pub const UNIT_NORM_TOL: f64 = 1e-6;

const INDEX_MAGIC: &[u8; 6] = b"EXIDX1";
const FIXTURE_MAGIC: &[u8; 6] = b"EMBFX1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Unit-length copy. Fails for zero or non-finite vectors.
    pub fn normalized(&self) -> Option<Embedding> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return None;
        }
        Some(Embedding(self.0.iter().map(|&v| (v as f64 / n) as f32).collect()))
    }

    pub fn dot(&self, other: &[f32]) -> f32 {
        dot(&self.0, other)
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Dot product accumulated in double precision and reported in single.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum::<f64>() as f32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Word,
    Character,
}

impl IndexKind {
    fn code(self) -> u8 {
        match self {
            IndexKind::Word => 0,
            IndexKind::Character => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(IndexKind::Word),
            1 => Some(IndexKind::Character),
            _ => None,
        }
    }
}

/// A retrieval hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match<'a> {
    pub row: usize,
    pub label: &'a str,
    pub similarity: f32,
}

/// Immutable store of unit-norm exemplar embeddings, one labeled row each.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarIndex {
    kind: IndexKind,
    dim: usize,
    labels: Vec<String>,
    data: Vec<f32>,
}

impl ExemplarIndex {
    /// Normalizes and stores `entries` in order.
    pub fn build(entries: Vec<(String, Embedding)>, kind: IndexKind) -> Result<Self> {
        let dim = match entries.first() {
            Some((_, e)) => e.dim(),
            None => return Err(Error::EmptyIndex),
        };
        if dim == 0 {
            return Err(Error::Format { what: "exemplar index", msg: "zero embedding dimension".into() });
        }
        let mut labels = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        for (label, emb) in entries {
            if emb.dim() != dim {
                return Err(Error::DimensionMismatch { label, expected: dim, got: emb.dim() });
            }
            let Some(unit) = emb.normalized() else {
                return Err(Error::CannotNormalize { label });
            };
            data.extend_from_slice(&unit.0);
            labels.push(label);
        }
        Ok(ExemplarIndex { kind, dim, labels, data })
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> &str {
        &self.labels[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn embedding(&self, row: usize) -> Embedding {
        Embedding(self.row(row).to_vec())
    }

    fn check_query(&self, query: &Embedding) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch { label: "<query>".into(), expected: self.dim, got: query.dim() });
        }
        Ok(())
    }

    /// Exact cosine nearest neighbour; ties go to the lowest row.
    pub fn nearest(&self, query: &Embedding) -> Result<Match<'_>> {
        self.check_query(query)?;
        let mut best_row = 0;
        let mut best = f32::NEG_INFINITY;
        for row in 0..self.len() {
            let s = query.dot(self.row(row));
            if s > best {
                best = s;
                best_row = row;
            }
        }
        Ok(Match { row: best_row, label: &self.labels[best_row], similarity: best })
    }

    /// The `k` most similar rows, similarity descending then row ascending.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<(usize, f32)>> {
        self.check_query(query)?;
        let mut scored: Vec<(usize, f32)> = (0..self.len()).map(|r| (r, query.dot(self.row(r)))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }

    /// Checks the word-index layout: consecutive triples holding the
    /// lowercase, uppercase and capitalized renderings of one word.
    pub fn verify_case_forms(&self) -> Result<()> {
        if !self.len().is_multiple_of(3) {
            return Err(Error::Format { what: "word index", msg: format!("{} rows is not a multiple of 3", self.len()) });
        }
        for chunk in self.labels.chunks(3) {
            let expected = case_forms(&chunk[0]);
            if chunk != expected.as_slice() {
                return Err(Error::Format { what: "word index", msg: format!("case forms out of order near {:?}", chunk[0]) });
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&[self.kind.code()])?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (i, label) in self.labels.iter().enumerate() {
            write_record(&mut w, label, self.row(i))?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let what = "exemplar index";
        let mut magic = [0u8; 6];
        read_exact(&mut r, &mut magic, what)?;
        if &magic != INDEX_MAGIC {
            return Err(Error::Format { what, msg: "bad magic".into() });
        }
        let mut kind = [0u8; 1];
        read_exact(&mut r, &mut kind, what)?;
        let kind = IndexKind::from_code(kind[0]).ok_or(Error::Format { what, msg: format!("unknown kind {}", kind[0]) })?;
        let dim = read_u32(&mut r, what)? as usize;
        let count = read_u32(&mut r, what)? as usize;
        if count == 0 {
            return Err(Error::EmptyIndex);
        }
        let mut labels = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count {
            let (label, values) = read_record(&mut r, dim, what)?;
            let n = norm(&values);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Format { what, msg: format!("row {label:?} has norm {n}") });
            }
            data.extend_from_slice(&values);
            labels.push(label);
        }
        expect_eof(&mut r, what)?;
        Ok(ExemplarIndex { kind, dim, labels, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn write_record<W: Write>(w: &mut W, label: &str, values: &[f32]) -> std::io::Result<()> {
    w.write_all(&(label.len() as u32).to_le_bytes())?;
    w.write_all(label.as_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Format { what, msg: e.to_string() })
}

fn read_u32<R: Read>(r: &mut R, what: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_record<R: Read>(r: &mut R, dim: usize, what: &'static str) -> Result<(String, Vec<f32>)> {
    let len = read_u32(r, what)? as usize;
    let mut bytes = vec![0u8; len];
    read_exact(r, &mut bytes, what)?;
    let label = String::from_utf8(bytes).map_err(|e| Error::Format { what, msg: e.to_string() })?;
    let mut raw = vec![0u8; dim * 4];
    read_exact(r, &mut raw, what)?;
    let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((label, values))
}

fn expect_eof<R: Read>(r: &mut R, what: &'static str) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::Format { what, msg: "trailing bytes".into() }),
        Err(e) => Err(Error::Format { what, msg: e.to_string() }),
    }
}

/// Lowercase, uppercase and capitalized renderings of a word, in that order.
pub fn case_forms(word: &str) -> [String; 3] {
    let lower = word.to_lowercase();
    let upper = word.to_uppercase();
    let mut chars = lower.chars();
    let capitalized = match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    };
    [lower, upper, capitalized]
}

/// Expands dictionary words into the label list of a word index.
pub fn expand_case_forms<S: AsRef<str>>(words: &[S]) -> Vec<String> {
    words.iter().flat_map(|w| case_forms(w.as_ref())).collect()
}

/// Crop id to raw vector table; the file-backed stand-in for a vision encoder.
/// Word crops are keyed by their crop id and character crops by
/// [`char_key`], since a one-letter word and its letter share a box.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: IndexMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, entries: IndexMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, crop_id: impl Into<String>, values: Vec<f32>) -> Result<()> {
        let crop_id = crop_id.into();
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch { label: crop_id, expected: self.dim, got: values.len() });
        }
        self.entries.insert(crop_id, values);
        Ok(())
    }

    pub fn get(&self, crop_id: &str) -> Option<&[f32]> {
        self.entries.get(crop_id).map(Vec::as_slice)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(FIXTURE_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (id, v) in &self.entries {
            write_record(&mut w, id, v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let what = "embedding fixture";
        let mut magic = [0u8; 6];
        read_exact(&mut r, &mut magic, what)?;
        if &magic != FIXTURE_MAGIC {
            return Err(Error::Format { what, msg: "bad magic".into() });
        }
        let dim = read_u32(&mut r, what)? as usize;
        let count = read_u32(&mut r, what)? as usize;
        let mut table = EmbeddingTable::new(dim);
        for _ in 0..count {
            let (id, v) = read_record(&mut r, dim, what)?;
            table.entries.insert(id, v);
        }
        expect_eof(&mut r, what)?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Vision encoder boundary. Implementations must be deterministic and
/// return unit-norm embeddings.
pub trait Encoder: Send + Sync {
    fn embed_word(&self, crop: &CropRef) -> Result<Embedding, BoundaryError>;
    fn embed_char(&self, crop: &CropRef) -> Result<Embedding, BoundaryError>;
}

/// Word and character localization boundary. Returned boxes are relative to
/// the top-left corner of the crop passed in.
pub trait WordDetector: Send + Sync {
    fn detect_words(&self, line: &CropRef) -> Result<Vec<Detection>, BoundaryError>;
    fn detect_chars(&self, word: &CropRef) -> Result<Vec<Detection>, BoundaryError>;
}

pub fn char_key(crop: &CropRef) -> String {
    format!("char:{}", crop.id())
}

impl EmbeddingTable {
    fn lookup(&self, key: String) -> Result<Embedding, BoundaryError> {
        self.get(&key).map(|v| Embedding(v.to_vec())).ok_or_else(|| BoundaryError::new(format!("no embedding for crop {key}")))
    }
}

impl Encoder for EmbeddingTable {
    fn embed_word(&self, crop: &CropRef) -> Result<Embedding, BoundaryError> {
        self.lookup(crop.id())
    }

    fn embed_char(&self, crop: &CropRef) -> Result<Embedding, BoundaryError> {
        self.lookup(char_key(crop))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognitionConfig {
    /// Word matches at or above this cosine similarity are accepted as-is.
    /// Compared in single precision, like the similarities themselves.
    pub word_sim_threshold: f64,
    pub embedding_dim: usize,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        RecognitionConfig { word_sim_threshold: 0.82, embedding_dim: 128 }
    }
}

impl RecognitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.word_sim_threshold > 0.0 && self.word_sim_threshold < 1.0) {
            return Err(Error::Config(format!("word_sim_threshold must be in (0, 1), got {}", self.word_sim_threshold)));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodePath {
    Word,
    Characters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedWord {
    pub text: String,
    pub path: DecodePath,
    /// Similarity of the best word-index match.
    pub word_similarity: f32,
}

/// Counters collected while decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStats {
    pub lines: usize,
    pub words: usize,
    pub word_path: usize,
    pub char_path: usize,
    /// Words that fell back to characters but had no character crops.
    pub empty_char_words: usize,
}

impl std::ops::AddAssign for DecodeStats {
    fn add_assign(&mut self, o: Self) {
        self.lines += o.lines;
        self.words += o.words;
        self.word_path += o.word_path;
        self.char_path += o.char_path;
        self.empty_char_words += o.empty_char_words;
    }
}

impl DecodeStats {
    fn of_word(w: &DecodedWord) -> Self {
        let mut s = DecodeStats { words: 1, ..Default::default() };
        match w.path {
            DecodePath::Word => s.word_path = 1,
            DecodePath::Characters => {
                s.char_path = 1;
                if w.text.is_empty() {
                    s.empty_char_words = 1;
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedText {
    pub text: String,
    pub stats: DecodeStats,
}

/// Decoder bound to a pair of exemplar indexes and the model boundaries.
#[derive(Clone, Copy)]
pub struct Recognizer<'a> {
    pub words: &'a ExemplarIndex,
    pub chars: &'a ExemplarIndex,
    pub encoder: &'a dyn Encoder,
    pub detector: &'a dyn WordDetector,
    pub cfg: &'a RecognitionConfig,
    pub geometry: &'a GeometryConfig,
}

impl<'a> Recognizer<'a> {
    fn nearest_word(&self, emb: &Embedding) -> Result<Match<'a>> {
        self.words.nearest(emb)
    }

    /// Reads one word crop, falling back to characters below the threshold.
    pub fn decode_word(&self, crop: &CropRef) -> Result<DecodedWord> {
        let emb = self.encoder.embed_word(crop)?;
        let hit = self.nearest_word(&emb)?;
        if hit.similarity >= self.cfg.word_sim_threshold as f32 {
            return Ok(DecodedWord { text: hit.label.to_string(), path: DecodePath::Word, word_similarity: hit.similarity });
        }
        let mut chars = self.detector.detect_chars(crop)?;
        chars.sort_by(|a, b| a.bbox.x0.total_cmp(&b.bbox.x0).then(a.bbox.y0.total_cmp(&b.bbox.y0)));
        let mut text = String::new();
        for c in &chars {
            let char_crop = CropRef::new(crop.scan_id.clone(), c.bbox.translate(crop.bbox.x0, crop.bbox.y0));
            let e = self.encoder.embed_char(&char_crop)?;
            text.push_str(self.chars.nearest(&e)?.label);
        }
        Ok(DecodedWord { text, path: DecodePath::Characters, word_similarity: hit.similarity })
    }

    /// Decodes the words of a line (boxes relative to the line) and joins
    /// them left to right with single spaces.
    pub fn decode_line(&self, scan_id: &str, line: &BoundingBox, words: &[Detection]) -> Result<DecodedText> {
        let mut order: Vec<&Detection> = words.iter().collect();
        order.sort_by(|a, b| a.bbox.x0.total_cmp(&b.bbox.x0).then(a.bbox.y0.total_cmp(&b.bbox.y0)));
        let decoded: Vec<DecodedWord> = order
            .par_iter()
            .map(|d| self.decode_word(&CropRef::new(scan_id, d.bbox.translate(line.x0, line.y0))))
            .collect::<Result<_>>()?;
        let mut stats = DecodeStats { lines: 1, ..Default::default() };
        for w in &decoded {
            stats += DecodeStats::of_word(w);
        }
        let text = decoded.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
        Ok(DecodedText { text, stats })
    }

    /// Word detections for a page-space line, in line-local coordinates.
    /// Over-wide lines are cut into segments and the results merged.
    pub fn line_words(&self, scan_id: &str, line: &BoundingBox) -> Result<Vec<Detection>> {
        let segments = geometry::split_wide_line(line, self.geometry);
        if segments.len() == 1 {
            return Ok(self.detector.detect_words(&CropRef::new(scan_id, *line))?);
        }
        let mut per_segment = Vec::with_capacity(segments.len());
        for seg in segments {
            let dets = self.detector.detect_words(&CropRef::new(scan_id, seg))?;
            per_segment.push((seg.translate(-line.x0, -line.y0), dets));
        }
        Ok(geometry::merge_split_words(&per_segment, self.geometry))
    }

    /// Decodes all lines of a region top to bottom, joined with newlines.
    pub fn decode_region(&self, scan_id: &str, region: &ContentRegion) -> Result<DecodedText> {
        let mut lines = region.lines.clone();
        lines.sort_by(|a, b| a.y0.total_cmp(&b.y0).then(a.x0.total_cmp(&b.x0)));
        let mut stats = DecodeStats::default();
        let mut out = Vec::with_capacity(lines.len());
        for line in &lines {
            let words = self.line_words(scan_id, line)?;
            let d = self.decode_line(scan_id, line, &words)?;
            stats += d.stats;
            out.push(d.text);
        }
        Ok(DecodedText { text: out.join("\n"), stats })
    }
}
