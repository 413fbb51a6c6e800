//! Synthetic page builder for tests, benchmarks and demos.
//!
//! Text is laid out on a fixed grid: every character is 10 px wide and 20 px
//! tall, words are separated by one blank character and lines are 25 px
//! apart. Every vocabulary word and every printable ASCII character gets a
//! random unit embedding; words outside the vocabulary get an embedding far
//! from every vocabulary word, so they decode through the character path.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{crop_id, BoundingBox, ContentClass, ContentRegion, CropRef, PageScan};
use crate::legibility::argmax_class;
use crate::pipeline::boundary::{StubRegion, StubScanFixture};
use crate::pipeline::manifest::{InputRefs, ManifestEntry};
use crate::pipeline::{output, PipelineConfig};
use crate::recognition::{char_key, Embedding, EmbeddingTable, ExemplarIndex, IndexKind};
use crate::{Error, LegibilityClass, Result};

pub const CHAR_W: f64 = 10.0;
pub const LINE_H: f64 = 20.0;
pub const LINE_PITCH: f64 = 25.0;
pub const PAD: f64 = 5.0;

/// Vocabulary and alphabet embeddings never exceed this similarity with
/// each other or with out-of-vocabulary words.
const MAX_CROSS_SIM: f32 = 0.5;

pub fn alphabet() -> impl Iterator<Item = char> {
    (33u8..=126).map(char::from)
}

/// A block of text (or a non-text region) placed at a fixed position.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub class: ContentClass,
    pub x0: f64,
    pub y0: f64,
    pub lines: Vec<String>,
    /// Classifier output for the block; `None` makes the classifier fail.
    pub legibility: Option<[f64; 3]>,
    pub score: f64,
    /// Minimum box size, for non-text regions or padding.
    pub min_size: (f64, f64),
}

impl BlockSpec {
    pub fn text(class: ContentClass, x0: f64, y0: f64, lines: &[&str]) -> Self {
        BlockSpec {
            class,
            x0,
            y0,
            lines: lines.iter().map(|s| s.to_string()).collect(),
            legibility: Some([0.9, 0.05, 0.05]),
            score: 0.9,
            min_size: (0.0, 0.0),
        }
    }

    pub fn figure(class: ContentClass, x0: f64, y0: f64, w: f64, h: f64) -> Self {
        BlockSpec { class, x0, y0, lines: Vec::new(), legibility: None, score: 0.8, min_size: (w, h) }
    }

    pub fn with_legibility(mut self, p: [f64; 3]) -> Self {
        self.legibility = Some(p);
        self
    }

    pub fn line_box(&self, i: usize) -> BoundingBox {
        let y = self.y0 + PAD + i as f64 * LINE_PITCH;
        let w = self.lines[i].chars().count() as f64 * CHAR_W;
        BoundingBox { x0: self.x0 + PAD, y0: y, x1: self.x0 + PAD + w, y1: y + LINE_H }
    }

    pub fn bbox(&self) -> BoundingBox {
        let widest = self.lines.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64 * CHAR_W;
        let w = (widest + 2.0 * PAD).max(self.min_size.0);
        let h = (self.lines.len() as f64 * LINE_PITCH + PAD).max(self.min_size.1);
        BoundingBox { x0: self.x0, y0: self.y0, x1: self.x0 + w, y1: self.y0 + h }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageSpec {
    pub scan_id: String,
    pub lccn: String,
    pub date: String,
    pub edition: u32,
    pub page_number: u32,
    pub width_px: u32,
    pub height_px: u32,
    pub blocks: Vec<BlockSpec>,
}

impl PageSpec {
    pub fn new(scan_id: &str, page_number: u32, blocks: Vec<BlockSpec>) -> Self {
        PageSpec {
            scan_id: scan_id.into(),
            lccn: "sn00000001".into(),
            date: "1925-06-01".into(),
            edition: 1,
            page_number,
            width_px: 2000,
            height_px: 3000,
            blocks,
        }
    }
}

/// A page rendered to stub fixtures plus the output the pipeline is expected
/// to produce for it.
#[derive(Debug, Clone)]
pub struct RenderedScan {
    pub fixture: StubScanFixture,
    pub embeddings: EmbeddingTable,
    pub expected: PageScan,
}

/// Embedding universe shared by every page of a corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    dim: usize,
    vocab: Vec<String>,
    word_vecs: HashMap<String, Vec<f32>>,
    char_vecs: HashMap<char, Vec<f32>>,
    rng: ChaCha8Rng,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

fn far_from<'a>(v: &[f32], others: impl Iterator<Item = &'a Vec<f32>>) -> bool {
    others.into_iter().all(|o| crate::recognition::dot(v, o) < MAX_CROSS_SIM)
}

impl Corpus {
    /// Duplicate vocabulary entries are ignored.
    pub fn new<S: AsRef<str>>(vocab: &[S], dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut word_vecs: HashMap<String, Vec<f32>> = HashMap::new();
        let mut order = Vec::new();
        for w in vocab {
            let w = w.as_ref().to_string();
            if word_vecs.contains_key(&w) {
                continue;
            }
            let v = loop {
                let v = random_unit(&mut rng, dim);
                if far_from(&v, word_vecs.values()) {
                    break v;
                }
            };
            word_vecs.insert(w.clone(), v);
            order.push(w);
        }
        let mut char_vecs: HashMap<char, Vec<f32>> = HashMap::new();
        for c in alphabet() {
            let v = loop {
                let v = random_unit(&mut rng, dim);
                if far_from(&v, char_vecs.values()) {
                    break v;
                }
            };
            char_vecs.insert(c, v);
        }
        Corpus { dim, vocab: order, word_vecs, char_vecs, rng }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn word_index(&self) -> ExemplarIndex {
        let entries = self.vocab.iter().map(|w| (w.clone(), Embedding(self.word_vecs[w].clone()))).collect();
        ExemplarIndex::build(entries, IndexKind::Word).expect("vocabulary vectors are unit norm")
    }

    pub fn char_index(&self) -> ExemplarIndex {
        let entries = alphabet().map(|c| (c.to_string(), Embedding(self.char_vecs[&c].clone()))).collect();
        ExemplarIndex::build(entries, IndexKind::Character).expect("alphabet vectors are unit norm")
    }

    pub fn char_vector(&self, c: char) -> Option<&[f32]> {
        self.char_vecs.get(&c).map(Vec::as_slice)
    }

    /// Vocabulary words map to their exemplar; anything else to a fresh
    /// vector dissimilar to the whole vocabulary.
    pub fn word_vector(&mut self, word: &str) -> Vec<f32> {
        if let Some(v) = self.word_vecs.get(word) {
            return v.clone();
        }
        loop {
            let v = random_unit(&mut self.rng, self.dim);
            if far_from(&v, self.word_vecs.values()) {
                return v;
            }
        }
    }

    /// Embedding whose cosine similarity with the vocabulary word `word` is
    /// exactly `sim` in f32 arithmetic, or `None` if no such vector was found.
    pub fn vector_at_similarity(&mut self, word: &str, sim: f32) -> Option<Vec<f32>> {
        let target = self.word_vecs.get(word)?.clone();
        for _ in 0..1000 {
            let noise = random_unit(&mut self.rng, self.dim);
            let along = crate::recognition::dot(&noise, &target) as f64;
            let ortho: Vec<f64> = noise.iter().zip(&target).map(|(n, t)| *n as f64 - along * *t as f64).collect();
            let on = ortho.iter().map(|x| x * x).sum::<f64>().sqrt();
            if on < 1e-3 {
                continue;
            }
            let s = sim as f64;
            let c = (1.0 - s * s).sqrt();
            let v: Vec<f32> = target.iter().zip(&ortho).map(|(t, o)| (s * *t as f64 + c * o / on) as f32).collect();
            let emb = Embedding(v);
            if let Some(unit) = emb.normalized() {
                if crate::recognition::dot(&unit.0, &target) == sim && (unit.norm() - 1.0).abs() < 1e-6 {
                    return Some(unit.0);
                }
            }
        }
        None
    }

    /// Lays out a page and records the embeddings its crops resolve to.
    pub fn render(&mut self, page: &PageSpec) -> Result<RenderedScan> {
        let mut fixture = StubScanFixture::default();
        let mut emb = EmbeddingTable::new(self.dim);
        let mut expected = PageScan {
            scan_id: page.scan_id.clone(),
            lccn: page.lccn.clone(),
            date: page.date.clone(),
            edition: page.edition,
            page_number: page.page_number,
            width_px: page.width_px,
            height_px: page.height_px,
            regions: Vec::new(),
        };
        let mut ordinals: HashMap<ContentClass, usize> = HashMap::new();
        for block in &page.blocks {
            let bbox = block.bbox();
            fixture.regions.push(StubRegion { bbox, class: block.class, score: block.score, legibility: block.legibility });
            let n = ordinals.entry(block.class).or_insert(0);
            let id = ContentRegion::make_id(&page.scan_id, block.class, *n);
            *n += 1;

            let legibility = if block.class.is_text() { block.legibility.map(|p| argmax_class(&p)) } else { None };
            let transcribed = matches!(legibility, Some(LegibilityClass::Legible | LegibilityClass::Borderline));
            let mut lines = Vec::new();
            for (i, line) in block.lines.iter().enumerate() {
                let lb = block.line_box(i);
                fixture.lines.push(lb);
                if transcribed {
                    lines.push(lb);
                }
                let mut col = 0usize;
                for word in line.split(' ') {
                    let len = word.chars().count();
                    if len == 0 {
                        col += 1;
                        continue;
                    }
                    let wx = lb.x0 + col as f64 * CHAR_W;
                    let wb = BoundingBox { x0: wx, y0: lb.y0, x1: wx + len as f64 * CHAR_W, y1: lb.y1 };
                    fixture.words.push(wb);
                    let v = self.word_vector(word);
                    emb.insert(crop_id(&page.scan_id, &wb), v)?;
                    for (k, c) in word.chars().enumerate() {
                        let cb = BoundingBox { x0: wx + k as f64 * CHAR_W, y0: lb.y0, x1: wx + (k + 1) as f64 * CHAR_W, y1: lb.y1 };
                        fixture.chars.push(cb);
                        let cv = self
                            .char_vecs
                            .get(&c)
                            .ok_or_else(|| Error::Config(format!("character {c:?} is outside the synthetic alphabet")))?;
                        emb.insert(char_key(&CropRef::new(&page.scan_id, cb)), cv.clone())?;
                    }
                    col += len + 1;
                }
            }
            expected.regions.push(ContentRegion {
                id,
                bbox,
                class: block.class,
                confidence: block.score,
                legibility,
                lines,
                text: transcribed.then(|| block.lines.join("\n")),
            });
        }
        Ok(RenderedScan { fixture, embeddings: emb, expected })
    }

    /// Writes a complete run directory: indexes, config, per-scan fixtures,
    /// manifest and the expected scan-level output.
    pub fn write(&mut self, dir: &Path, pages: &[PageSpec]) -> Result<CorpusPaths> {
        let scans_dir = dir.join("scans");
        std::fs::create_dir_all(&scans_dir).map_err(|e| Error::io(&scans_dir, e))?;
        let paths = CorpusPaths {
            manifest: dir.join("manifest.jsonl"),
            config: dir.join("config.toml"),
            expected: dir.join("expected.jsonl"),
            word_index: dir.join("words.exidx"),
            char_index: dir.join("chars.exidx"),
        };
        self.word_index().save(&paths.word_index)?;
        self.char_index().save(&paths.char_index)?;
        std::fs::write(&paths.config, self.config().to_toml()).map_err(|e| Error::io(&paths.config, e))?;

        let mut entries = Vec::new();
        let mut expected = Vec::new();
        for page in pages {
            let r = self.render(page)?;
            let det = PathBuf::from("scans").join(format!("{}.json", page.scan_id));
            let embp = PathBuf::from("scans").join(format!("{}.emb", page.scan_id));
            let text = serde_json::to_string(&r.fixture)?;
            std::fs::write(dir.join(&det), text).map_err(|e| Error::io(dir.join(&det), e))?;
            r.embeddings.save(&dir.join(&embp))?;
            entries.push(ManifestEntry {
                scan_id: page.scan_id.clone(),
                lccn: page.lccn.clone(),
                date: page.date.clone(),
                edition: page.edition,
                page_number: page.page_number,
                width_px: page.width_px,
                height_px: page.height_px,
                inputs: InputRefs { detections: det, embeddings: Some(embp) },
            });
            expected.push(r.expected);
        }
        let f = std::fs::File::create(&paths.manifest).map_err(|e| Error::io(&paths.manifest, e))?;
        output::write_jsonl(&entries, std::io::BufWriter::new(f))?;
        output::serialize_scan_level(&expected, &paths.expected)?;
        Ok(paths)
    }

    /// Config with relative index paths, as written next to a corpus.
    pub fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.recognition.embedding_dim = self.dim;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPaths {
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub expected: PathBuf,
    pub word_index: PathBuf,
    pub char_index: PathBuf,
}

/// A three-page newspaper: headlines, bylines, articles, a caption, an ad,
/// one illegible article and one out-of-vocabulary word.
pub fn sample_pages() -> Vec<PageSpec> {
    use ContentClass::*;
    vec![
        PageSpec::new(
            "scan-a",
            1,
            vec![
                BlockSpec::text(Headline, 100.0, 100.0, &["MAYOR OPENS BRIDGE"]),
                BlockSpec::text(Byline, 100.0, 140.0, &["By John Smith"]),
                BlockSpec::text(Article, 100.0, 180.0, &["the new bridge was opened", "by the mayor on monday", "before a large crowd"]),
                BlockSpec::text(Headline, 1000.0, 100.0, &["FLOOD WARNING"]),
                BlockSpec::text(Article, 1000.0, 140.0, &["the river rose again", "farmers moved cattle"]),
                BlockSpec::figure(Ad, 100.0, 1000.0, 600.0, 400.0),
            ],
        ),
        PageSpec::new(
            "scan-b",
            2,
            vec![
                BlockSpec::text(Headline, 100.0, 100.0, &["COUNCIL MEETS"]),
                BlockSpec::text(Article, 100.0, 140.0, &["the council met on tuesday", "and approved the zanzibarish plan"]),
                BlockSpec::text(Caption, 1000.0, 600.0, &["the mayor at the bridge"]),
                BlockSpec::figure(Image, 1000.0, 100.0, 500.0, 480.0),
            ],
        ),
        PageSpec::new(
            "scan-c",
            3,
            vec![
                BlockSpec::text(Headline, 100.0, 100.0, &["SMUDGED NEWS"]),
                BlockSpec::text(Article, 100.0, 140.0, &["the text is lost"]).with_legibility([0.05, 0.15, 0.8]),
                BlockSpec::text(Article, 1000.0, 140.0, &["a borderline report", "on the weather"]).with_legibility([0.3, 0.6, 0.1]),
            ],
        ),
    ]
}

/// Vocabulary of [`sample_pages`], minus the deliberate out-of-vocabulary word.
pub fn sample_vocab() -> Vec<String> {
    let mut v: Vec<String> = Vec::new();
    for page in sample_pages() {
        for b in page.blocks {
            for line in b.lines {
                for w in line.split(' ') {
                    if !w.is_empty() && w != "zanzibarish" && !v.iter().any(|x| x == w) {
                        v.push(w.to_string());
                    }
                }
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_grid() {
        let b = BlockSpec::text(ContentClass::Article, 10.0, 20.0, &["ab cd", "e"]);
        assert_eq!(b.line_box(0), BoundingBox { x0: 15.0, y0: 25.0, x1: 65.0, y1: 45.0 });
        assert_eq!(b.line_box(1).y0, 50.0);
        assert_eq!(b.bbox(), BoundingBox { x0: 10.0, y0: 20.0, x1: 70.0, y1: 75.0 });
    }

    #[test]
    fn oov_words_are_far_from_vocabulary() {
        let mut c = Corpus::new(&["alpha", "beta"], 32, 7);
        let idx = c.word_index();
        let v = c.word_vector("gamma");
        assert!(idx.nearest(&Embedding(v)).unwrap().similarity < MAX_CROSS_SIM);
        assert_eq!(c.word_vector("beta"), idx.row(1).to_vec());
    }

    #[test]
    fn exact_similarity_vectors() {
        let mut c = Corpus::new(&["alpha", "beta"], 32, 7);
        for sim in [0.81f32, 0.82, 0.9] {
            let v = c.vector_at_similarity("alpha", sim).unwrap();
            assert_eq!(crate::recognition::dot(&v, c.word_index().row(0)), sim);
        }
    }

    #[test]
    fn render_expected_output() {
        let mut c = Corpus::new(&sample_vocab(), 32, 1);
        let r = c.render(&sample_pages()[2]).unwrap();
        let regions = &r.expected.regions;
        assert_eq!(regions[1].legibility, Some(LegibilityClass::Illegible));
        assert_eq!(regions[1].text, None);
        assert!(regions[1].lines.is_empty());
        assert_eq!(regions[2].legibility, Some(LegibilityClass::Borderline));
        assert_eq!(regions[2].text.as_deref(), Some("a borderline report\non the weather"));
        assert!(crate::domain::validate_scan(&r.expected).is_empty());
    }
}
