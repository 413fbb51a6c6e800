//! Model boundaries used by the pipeline and the file-backed stub backend.
//!
//! The stub backend answers every model call from a per-scan fixture: a JSON
//! file with page-level region, line, word and character boxes, and an
//! `EMBFX1` embedding table keyed by crop id. Detection calls return the
//! fixture boxes whose centre falls inside the requested crop, clipped to it
//! and expressed relative to its top-left corner; partially visible boxes
//! score lower so duplicates from overlapping crops lose NMS.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, ContentClass, CropRef};
use crate::geometry::{iou, Detection, Label};
use crate::legibility::LegibilityModel;
use crate::pipeline::manifest::ManifestEntry;
use crate::recognition::{Embedding, EmbeddingTable, Encoder, WordDetector};
use crate::BoundaryError;

/// Region and line localization.
pub trait LayoutDetector: Send + Sync {
    /// Region detections in page coordinates, in detector output order.
    fn detect_regions(&self, scan_id: &str) -> Result<Vec<Detection>, BoundaryError>;
    /// Line detections relative to the crop.
    fn detect_lines(&self, crop: &CropRef) -> Result<Vec<Detection>, BoundaryError>;
}

/// The four model handles one scan is processed with.
#[derive(Clone)]
pub struct ScanBoundaries {
    pub layout: Arc<dyn LayoutDetector>,
    pub words: Arc<dyn WordDetector>,
    pub encoder: Arc<dyn Encoder>,
    pub legibility: Arc<dyn LegibilityModel>,
}

impl ScanBoundaries {
    pub fn from_single<T>(model: Arc<T>) -> Self
    where
        T: LayoutDetector + WordDetector + Encoder + LegibilityModel + 'static,
    {
        ScanBoundaries { layout: model.clone(), words: model.clone(), encoder: model.clone(), legibility: model }
    }
}

/// Opens the model handles for a manifest entry.
pub trait BoundaryProvider: Send + Sync {
    fn open(&self, entry: &ManifestEntry) -> Result<ScanBoundaries, BoundaryError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryConfig {
    pub backend: BackendKind,
}

/// A region as the stub detector reports it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubRegion {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub class: ContentClass,
    pub score: f64,
    /// Classifier output; absent means the classifier fails on this crop.
    #[serde(default)]
    pub legibility: Option<[f64; 3]>,
}

/// Per-scan stub fixture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StubScanFixture {
    pub regions: Vec<StubRegion>,
    #[serde(default)]
    pub lines: Vec<BoundingBox>,
    #[serde(default)]
    pub words: Vec<BoundingBox>,
    #[serde(default)]
    pub chars: Vec<BoundingBox>,
}

/// In-memory stub models for one scan.
#[derive(Debug, Clone)]
pub struct StubScan {
    pub fixture: StubScanFixture,
    pub embeddings: EmbeddingTable,
}

fn visible_in(crop: &BoundingBox, items: &[BoundingBox], label: Label) -> Vec<Detection> {
    items
        .iter()
        .filter(|b| {
            let (cx, cy) = b.center();
            cx >= crop.x0 && cx < crop.x1 && cy >= crop.y0 && cy < crop.y1
        })
        .filter_map(|b| {
            let clip = b.intersection(crop)?;
            let score = 0.5 + 0.5 * clip.area() / b.area();
            Some(Detection::new(clip.translate(-crop.x0, -crop.y0), label, score))
        })
        .collect()
}

impl LayoutDetector for StubScan {
    fn detect_regions(&self, _scan_id: &str) -> Result<Vec<Detection>, BoundaryError> {
        Ok(self.fixture.regions.iter().map(|r| Detection::new(r.bbox, Label::Region(r.class), r.score)).collect())
    }

    fn detect_lines(&self, crop: &CropRef) -> Result<Vec<Detection>, BoundaryError> {
        Ok(visible_in(&crop.bbox, &self.fixture.lines, Label::Line))
    }
}

impl WordDetector for StubScan {
    fn detect_words(&self, line: &CropRef) -> Result<Vec<Detection>, BoundaryError> {
        Ok(visible_in(&line.bbox, &self.fixture.words, Label::Word))
    }

    fn detect_chars(&self, word: &CropRef) -> Result<Vec<Detection>, BoundaryError> {
        Ok(visible_in(&word.bbox, &self.fixture.chars, Label::Char))
    }
}

impl Encoder for StubScan {
    fn embed_word(&self, crop: &CropRef) -> Result<Embedding, BoundaryError> {
        self.embeddings.embed_word(crop)
    }

    fn embed_char(&self, crop: &CropRef) -> Result<Embedding, BoundaryError> {
        self.embeddings.embed_char(crop)
    }
}

impl LegibilityModel for StubScan {
    fn classify(&self, crop: &CropRef) -> Result<[f64; 3], BoundaryError> {
        let best = self
            .fixture
            .regions
            .iter()
            .map(|r| (iou(&r.bbox, &crop.bbox), r))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .filter(|(o, _)| *o >= 0.5)
            .ok_or_else(|| BoundaryError::new(format!("no fixture region for crop {}", crop.id())))?;
        best.1.legibility.ok_or_else(|| BoundaryError::new(format!("classifier failed on crop {}", crop.id())))
    }
}

/// Resolves manifest input refs relative to `base_dir` and loads stub fixtures.
#[derive(Debug, Clone)]
pub struct StubProvider {
    pub base_dir: PathBuf,
}

impl StubProvider {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        StubProvider { base_dir: base_dir.into() }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

impl BoundaryProvider for StubProvider {
    fn open(&self, entry: &ManifestEntry) -> Result<ScanBoundaries, BoundaryError> {
        let det_path = self.resolve(&entry.inputs.detections);
        let text = std::fs::read_to_string(&det_path).map_err(|e| BoundaryError::new(format!("{}: {e}", det_path.display())))?;
        let fixture: StubScanFixture =
            serde_json::from_str(&text).map_err(|e| BoundaryError::new(format!("{}: {e}", det_path.display())))?;
        let embeddings = match &entry.inputs.embeddings {
            Some(p) => {
                let p = self.resolve(p);
                EmbeddingTable::load(&p).map_err(|e| BoundaryError::new(e.to_string()))?
            }
            None => EmbeddingTable::default(),
        };
        Ok(ScanBoundaries::from_single(Arc::new(StubScan { fixture, embeddings })))
    }
}
