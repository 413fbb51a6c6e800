//! End-to-end orchestration: region detection, legibility gating, line
//! detection with tall-region splitting, retrieval decoding, optional spell
//! correction and content association, run over a manifest of scans with a
//! bounded worker pool.

pub mod boundary;
pub mod eval;
pub mod manifest;
pub mod output;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{self, ArticleRecord, AssociationConfig};
use crate::domain::{validate_scan, ContentClass, ContentRegion, CropRef, PageScan};
use crate::geometry::{self, GeometryConfig, Label};
use crate::legibility::{self, GateDiagnostic, LegibilityConfig};
use crate::lexicon::{Lexicon, Provenance, SpellIndex};
use crate::recognition::{DecodeStats, ExemplarIndex, IndexKind, RecognitionConfig, Recognizer};
use crate::{Error, Result};

use boundary::{BoundaryConfig, BoundaryProvider, ScanBoundaries};
use manifest::ManifestEntry;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputLevel {
    Article,
    Scan,
    #[default]
    Both,
}

impl OutputLevel {
    pub fn articles(self) -> bool {
        matches!(self, OutputLevel::Article | OutputLevel::Both)
    }

    pub fn scans(self) -> bool {
        matches!(self, OutputLevel::Scan | OutputLevel::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconConfig {
    /// Word list the spell corrector draws from.
    pub spell_lexicon: Option<PathBuf>,
    pub max_edit: usize,
    /// Headlines are exempt from correction unless this is set.
    pub spellcheck_headlines: bool,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig { spell_lexicon: None, max_edit: 2, spellcheck_headlines: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub word_index: PathBuf,
    pub char_index: PathBuf,
    pub workers: usize,
    pub output_dir: Option<PathBuf>,
    pub level: OutputLevel,
    pub spellcheck: bool,
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub recognition: RecognitionConfig,
    pub association: AssociationConfig,
    pub legibility: LegibilityConfig,
    pub lexicon: LexiconConfig,
    pub boundary: BoundaryConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            word_index: PathBuf::from("words.exidx"),
            char_index: PathBuf::from("chars.exidx"),
            workers: 1,
            output_dir: None,
            level: OutputLevel::Both,
            spellcheck: false,
            seed: 0,
            geometry: GeometryConfig::default(),
            recognition: RecognitionConfig::default(),
            association: AssociationConfig::default(),
            legibility: LegibilityConfig::default(),
            lexicon: LexiconConfig::default(),
            boundary: BoundaryConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.word_index);
        resolve(&mut cfg.char_index);
        if let Some(p) = cfg.output_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.lexicon.spell_lexicon.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.recognition.validate()?;
        self.association.validate()?;
        self.legibility.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.spellcheck && self.lexicon.spell_lexicon.is_none() {
            return Err(Error::Config("spellcheck requires lexicon.spell_lexicon".into()));
        }
        Ok(())
    }
}

/// Processing stage a scan failed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Open,
    Validate,
    DetectRegions,
    Legibility,
    DetectLines,
    Decode,
}

/// One error-ledger line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub scan_id: String,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl StageError {
    fn new(stage: Stage, e: impl std::fmt::Display) -> Self {
        StageError { stage, message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub scan: PageScan,
    pub articles: Vec<ArticleRecord>,
    pub decode: DecodeStats,
    pub diagnostics: Vec<GateDiagnostic>,
}

/// Loaded, validated resources shared read-only by every worker.
#[derive(Debug)]
pub struct Engine {
    cfg: PipelineConfig,
    words: ExemplarIndex,
    chars: ExemplarIndex,
    spell: Option<SpellIndex>,
}

impl Engine {
    /// Loads every referenced file and runs the startup self-test.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let words = ExemplarIndex::load(&cfg.word_index)?;
        let chars = ExemplarIndex::load(&cfg.char_index)?;
        let spell = match (&cfg.lexicon.spell_lexicon, cfg.spellcheck) {
            (Some(p), true) => Some(SpellIndex::build(&Lexicon::load(p, Provenance::Modern)?, cfg.lexicon.max_edit)?),
            _ => None,
        };
        Self::from_parts(cfg, words, chars, spell)
    }

    pub fn from_parts(cfg: PipelineConfig, words: ExemplarIndex, chars: ExemplarIndex, spell: Option<SpellIndex>) -> Result<Self> {
        cfg.validate()?;
        if words.kind() != IndexKind::Word || chars.kind() != IndexKind::Character {
            return Err(Error::Config("word_index must be a word index and char_index a character index".into()));
        }
        if words.dim() != cfg.recognition.embedding_dim || chars.dim() != cfg.recognition.embedding_dim {
            return Err(Error::Config(format!(
                "index dimensions ({}, {}) do not match recognition.embedding_dim {}",
                words.dim(),
                chars.dim(),
                cfg.recognition.embedding_dim
            )));
        }
        let engine = Engine { cfg, words, chars, spell };
        engine.self_test()?;
        Ok(engine)
    }

    /// Retrieves the first exemplar of each index and checks it reads back as itself.
    fn self_test(&self) -> Result<()> {
        for idx in [&self.words, &self.chars] {
            let probe = idx.embedding(0);
            let hit = idx.nearest(&probe)?;
            if idx.label(hit.row) != idx.label(0) || hit.similarity < self.cfg.recognition.word_sim_threshold as f32 {
                return Err(Error::Config(format!("self-test failed: probe {:?} decoded as {:?}", idx.label(0), hit.label)));
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn word_index(&self) -> &ExemplarIndex {
        &self.words
    }

    pub fn char_index(&self) -> &ExemplarIndex {
        &self.chars
    }

    fn spellcheck_applies(&self, class: ContentClass) -> bool {
        match class {
            ContentClass::Article | ContentClass::Caption => true,
            ContentClass::Headline => self.cfg.lexicon.spellcheck_headlines,
            _ => false,
        }
    }

    /// Runs every stage on one scan.
    pub fn run_scan(&self, entry: &ManifestEntry, b: &ScanBoundaries) -> std::result::Result<ScanResult, StageError> {
        let mut page = entry.page();
        let violations = validate_scan(&page);
        if let Some(v) = violations.first() {
            return Err(StageError::new(Stage::Validate, v));
        }
        let scan_id = page.scan_id.clone();
        let geo = &self.cfg.geometry;

        let page_box = page.page_box();
        let dets: Vec<_> = b
            .layout
            .detect_regions(&scan_id)
            .map_err(|e| StageError::new(Stage::DetectRegions, e))?
            .into_iter()
            .filter_map(|d| match d.label {
                Label::Region(_) => d.bbox.intersection(&page_box).map(|bbox| geometry::Detection { bbox, ..d }),
                _ => None,
            })
            .collect();
        let mut ordinals: HashMap<ContentClass, usize> = HashMap::new();
        for i in geometry::filter_region_detections(&dets, geo) {
            let d = &dets[i];
            let Label::Region(class) = d.label else { unreachable!() };
            let n = ordinals.entry(class).or_insert(0);
            page.regions.push(ContentRegion {
                id: ContentRegion::make_id(&scan_id, class, *n),
                bbox: d.bbox,
                class,
                confidence: d.score,
                legibility: None,
                lines: Vec::new(),
                text: None,
            });
            *n += 1;
        }

        let text_regions: Vec<ContentRegion> = page.regions.iter().filter(|r| r.class.is_text()).cloned().collect();
        let gated = legibility::gate(text_regions, &scan_id, b.legibility.as_ref(), &self.cfg.legibility)
            .map_err(|e| StageError::new(Stage::Legibility, e))?;

        let rec = Recognizer {
            words: &self.words,
            chars: &self.chars,
            encoder: b.encoder.as_ref(),
            detector: b.words.as_ref(),
            cfg: &self.cfg.recognition,
            geometry: geo,
        };
        let decoded: Vec<std::result::Result<(ContentRegion, DecodeStats), StageError>> = gated
            .to_ocr
            .into_par_iter()
            .map(|mut region| {
                let mut per_window = Vec::new();
                for w in geometry::split_tall_region(&region.bbox, geo) {
                    let lines = b.layout.detect_lines(&CropRef::new(&scan_id, w)).map_err(|e| StageError::new(Stage::DetectLines, e))?;
                    per_window.push((w, lines));
                }
                region.lines = geometry::merge_split_lines(&per_window, geo).into_iter().map(|d| d.bbox).collect();
                let out = rec.decode_region(&scan_id, &region).map_err(|e| StageError::new(Stage::Decode, e))?;
                let text = match &self.spell {
                    Some(s) if self.spellcheck_applies(region.class) => s.correct_text(&out.text),
                    _ => out.text,
                };
                region.text = Some(text);
                Ok((region, out.stats))
            })
            .collect();

        let mut stats = DecodeStats::default();
        let mut updated: HashMap<String, ContentRegion> = HashMap::new();
        for r in decoded {
            let (region, s) = r?;
            stats += s;
            updated.insert(region.id.clone(), region);
        }
        for r in gated.skipped {
            updated.insert(r.id.clone(), r);
        }
        for r in page.regions.iter_mut() {
            if let Some(u) = updated.remove(&r.id) {
                *r = u;
            }
        }

        let assoc = association::associate(&page, &self.cfg.association);
        Ok(ScanResult { scan: page, articles: assoc.articles, decode: stats, diagnostics: gated.diagnostics })
    }

    /// Runs a manifest with `workers` threads. Results are gathered in
    /// manifest order, so output does not depend on scheduling.
    pub fn run_batch(&self, entries: &[ManifestEntry], provider: &dyn BoundaryProvider, workers: usize) -> Result<BatchOutcome> {
        let start = Instant::now();
        let mut seen = HashSet::new();
        let duplicate: Vec<bool> =
            entries.iter().map(|e| !seen.insert((e.lccn.clone(), e.date.clone(), e.edition, e.page_number))).collect();

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        let results: Vec<std::result::Result<ScanResult, StageError>> = pool.install(|| {
            entries
                .par_iter()
                .zip(duplicate.par_iter())
                .map(|(entry, dup)| {
                    if *dup {
                        return Err(StageError::new(Stage::Validate, "duplicate (lccn, date, edition, page_number)"));
                    }
                    let b = provider.open(entry).map_err(|e| StageError::new(Stage::Open, e))?;
                    self.run_scan(entry, &b)
                })
                .collect()
        });

        let mut outcome = BatchOutcome::default();
        let s = &mut outcome.summary;
        s.schema_version = output::SCHEMA_VERSION;
        s.scans_total = entries.len();
        s.workers = workers.max(1);
        s.seed = self.cfg.seed;
        let mut decode = DecodeStats::default();
        for (entry, r) in entries.iter().zip(results) {
            match r {
                Ok(res) => {
                    s.scans_processed += 1;
                    for region in &res.scan.regions {
                        *s.regions_by_class.entry(region.class.to_string()).or_default() += 1;
                        if region.class.is_text() {
                            let key = region.legibility.map_or("unclassified".to_string(), |l| l.to_string());
                            *s.legibility.entry(key).or_default() += 1;
                        }
                    }
                    for d in &res.diagnostics {
                        s.diagnostics.push(LedgerEntry {
                            scan_id: entry.scan_id.clone(),
                            stage: Stage::Legibility,
                            message: format!("{}: {}", d.region_id, d.message),
                        });
                    }
                    decode += res.decode;
                    s.articles += res.articles.len();
                    outcome.articles.extend(res.articles);
                    outcome.scans.push(res.scan);
                }
                Err(e) => {
                    s.scans_failed += 1;
                    s.errors.push(LedgerEntry { scan_id: entry.scan_id.clone(), stage: e.stage, message: e.message });
                }
            }
        }
        s.decode = decode;
        s.elapsed_secs = start.elapsed().as_secs_f64();
        if s.elapsed_secs > 0.0 {
            s.scans_per_sec = s.scans_processed as f64 / s.elapsed_secs;
            s.lines_per_sec = decode.lines as f64 / s.elapsed_secs;
        }
        Ok(outcome)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    /// Version of the record shapes in the output files.
    pub schema_version: u32,
    pub scans_total: usize,
    pub scans_processed: usize,
    pub scans_failed: usize,
    pub articles: usize,
    pub regions_by_class: BTreeMap<String, usize>,
    pub legibility: BTreeMap<String, usize>,
    pub decode: DecodeStats,
    pub errors: Vec<LedgerEntry>,
    pub diagnostics: Vec<LedgerEntry>,
    pub workers: usize,
    pub seed: u64,
    pub elapsed_secs: f64,
    pub scans_per_sec: f64,
    pub lines_per_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutcome {
    pub scans: Vec<PageScan>,
    pub articles: Vec<ArticleRecord>,
    pub summary: BatchSummary,
}

pub const ARTICLES_FILE: &str = "articles.jsonl";
pub const SCANS_FILE: &str = "scans.jsonl";
pub const ERRORS_FILE: &str = "errors.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

impl BatchOutcome {
    /// Writes the requested record shapes plus the error ledger and summary.
    pub fn write(&self, out_dir: &Path, level: OutputLevel) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        if level.articles() {
            output::serialize_article_level(&self.articles, &out_dir.join(ARTICLES_FILE))?;
        }
        if level.scans() {
            output::serialize_scan_level(&self.scans, &out_dir.join(SCANS_FILE))?;
        }
        let errors = out_dir.join(ERRORS_FILE);
        let f = std::fs::File::create(&errors).map_err(|e| Error::io(&errors, e))?;
        output::write_jsonl(&self.summary.errors, std::io::BufWriter::new(f))?;
        let summary = out_dir.join(SUMMARY_FILE);
        let text = serde_json::to_string_pretty(&self.summary)?;
        std::fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))
    }
}

/// Convenience wrapper: manifest path in, files out. Stub inputs are
/// resolved relative to the manifest's directory.
pub fn run_batch(manifest: &Path, cfg: PipelineConfig, out_dir: &Path) -> Result<BatchSummary> {
    let entries = manifest::read_manifest(manifest)?;
    let workers = cfg.workers;
    let level = cfg.level;
    let engine = Engine::new(cfg)?;
    let provider = boundary::StubProvider::new(manifest.parent().unwrap_or(Path::new(".")));
    let outcome = engine.run_batch(&entries, &provider, workers)?;
    outcome.write(out_dir, level)?;
    Ok(outcome.summary)
}
