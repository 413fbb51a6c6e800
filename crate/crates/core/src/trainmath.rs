//! Contrastive-training math for the word recognizer: the supervised
//! contrastive ("outside") loss and its gradient, the m-per-class batch
//! sampler, and hard-negative set construction and batching.
//!
//! Nothing here updates weights; these are the numeric procedures an
//! external trainer consumes.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::recognition::{Embedding, ExemplarIndex, IndexKind};
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-6;

/// N labeled embeddings, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    labels: Vec<String>,
}

impl EmbeddingBatch {
    /// Checked constructor: at least two rows, all unit length.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let b = Self::from_rows(rows, labels)?;
        for i in 0..b.n {
            let norm = b.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::Batch(format!("row {i} has norm {norm}")));
            }
        }
        Ok(b)
    }

    /// Skips the unit-norm check; the loss and gradient are defined for any
    /// vectors, which is what finite-difference checks need.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch { left: rows.len(), right: labels.len() });
        }
        if rows.len() < 2 {
            return Err(Error::Batch("need at least two samples".into()));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Batch("rows must share a positive dimension".into()));
        }
        Ok(EmbeddingBatch { n: rows.len(), dim, data: rows.concat(), labels })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn positives(&self) -> Result<Vec<Vec<usize>>> {
        (0..self.n)
            .map(|i| {
                let p: Vec<usize> = (0..self.n).filter(|&j| j != i && self.labels[j] == self.labels[i]).collect();
                if p.is_empty() {
                    Err(Error::SingletonClass(self.labels[i].clone()))
                } else {
                    Ok(p)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupConConfig {
    pub temperature: f64,
}

impl Default for SupConConfig {
    fn default() -> Self {
        SupConConfig { temperature: 0.1 }
    }
}

impl SupConConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-anchor logits `z_i . z_j / tau` and log-sum-exp over `j != i`.
fn logits(batch: &EmbeddingBatch, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let n = batch.n;
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s[i * n + j] = dot(batch.row(i), batch.row(j)) / tau;
            }
        }
    }
    let lse = (0..n)
        .map(|i| {
            let m = (0..n).filter(|&j| j != i).map(|j| s[i * n + j]).fold(f64::NEG_INFINITY, f64::max);
            m + (0..n).filter(|&j| j != i).map(|j| (s[i * n + j] - m).exp()).sum::<f64>().ln()
        })
        .collect();
    (s, lse)
}

/// Supervised contrastive loss, "outside" form, summed over anchors:
///
/// `sum_i -1/|P(i)| sum_{p in P(i)} log( exp(z_i.z_p/tau) / sum_{a != i} exp(z_i.z_a/tau) )`
pub fn supcon_loss(batch: &EmbeddingBatch, cfg: &SupConConfig) -> Result<f64> {
    cfg.validate()?;
    let pos = batch.positives()?;
    let n = batch.n;
    let (s, lse) = logits(batch, cfg.temperature);
    let mut total = 0.0;
    for i in 0..n {
        let sum: f64 = pos[i].iter().map(|&p| s[i * n + p] - lse[i]).sum();
        total -= sum / pos[i].len() as f64;
    }
    Ok(total)
}

/// Gradient of [`supcon_loss`] with respect to each row, rows treated as free vectors.
pub fn supcon_gradient(batch: &EmbeddingBatch, cfg: &SupConConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let pos = batch.positives()?;
    let (n, d, tau) = (batch.n, batch.dim, cfg.temperature);
    let (s, lse) = logits(batch, tau);
    let mut grad = vec![vec![0.0; d]; n];
    for i in 0..n {
        let inv_p = 1.0 / pos[i].len() as f64;
        for j in 0..n {
            if j == i {
                continue;
            }
            // dL_i / ds_ij
            let mut g = (s[i * n + j] - lse[i]).exp();
            if batch.labels[j] == batch.labels[i] {
                g -= inv_p;
            }
            let g = g / tau;
            let (zi, zj) = (batch.row(i), batch.row(j));
            for k in 0..d {
                grad[i][k] += g * zj[k];
                grad[j][k] += g * zi[k];
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub m: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { m: 4, batch_size: 1024, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.batch_size == 0 || !self.batch_size.is_multiple_of(self.m) {
            return Err(Error::Config(format!("batch_size {} must be a positive multiple of m {}", self.batch_size, self.m)));
        }
        Ok(())
    }

    pub fn classes_per_batch(&self) -> usize {
        self.batch_size / self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSource {
    Synthetic,
    Target,
}

/// One draw: a view of a class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub class: String,
    pub variant: String,
    pub source: ViewSource,
}

pub type Batch = Vec<BatchItem>;

/// Draws without replacement from a fixed pool, reshuffling only once every
/// element has been used.
#[derive(Debug, Clone)]
struct CyclingPool {
    items: Vec<String>,
    cursor: usize,
}

impl CyclingPool {
    fn new(items: Vec<String>) -> Self {
        let cursor = items.len();
        CyclingPool { items, cursor }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> Option<String> {
        if self.items.is_empty() {
            return None;
        }
        if self.cursor == self.items.len() {
            self.items.shuffle(rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        Some(self.items[self.cursor - 1].clone())
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

/// m-per-class sampler. Each epoch shows every class exactly `m` times;
/// variant pools persist across epochs so no variant repeats before its
/// pool is exhausted.
#[derive(Debug, Clone)]
pub struct MPerClassSampler {
    cfg: SamplerConfig,
    classes: Vec<String>,
    pools: Vec<CyclingPool>,
    rng: ChaCha8Rng,
}

impl MPerClassSampler {
    pub fn new(class_variants: &BTreeMap<String, Vec<String>>, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some((c, _)) = class_variants.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Batch(format!("class {c:?} has no variants")));
        }
        Ok(MPerClassSampler {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            classes: class_variants.keys().cloned().collect(),
            pools: class_variants.values().map(|v| CyclingPool::new(v.clone())).collect(),
            cfg,
        })
    }

    pub fn next_epoch(&mut self) -> Vec<Batch> {
        let mut order: Vec<usize> = (0..self.classes.len()).collect();
        order.shuffle(&mut self.rng);
        order
            .chunks(self.cfg.classes_per_batch())
            .map(|chunk| {
                let mut batch = Vec::with_capacity(chunk.len() * self.cfg.m);
                for &c in chunk {
                    for _ in 0..self.cfg.m {
                        let variant = self.pools[c].draw(&mut self.rng).expect("pools are nonempty");
                        batch.push(BatchItem { class: self.classes[c].clone(), variant, source: ViewSource::Synthetic });
                    }
                }
                batch
            })
            .collect()
    }
}

/// One epoch of m-per-class batches. The last batch may hold fewer classes.
pub fn sample_epoch(class_variants: &BTreeMap<String, Vec<String>>, cfg: &SamplerConfig) -> Result<Vec<Batch>> {
    Ok(MPerClassSampler::new(class_variants, cfg.clone())?.next_epoch())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardNegativeConfig {
    pub k: usize,
    pub sets_per_batch: usize,
    pub m: usize,
}

impl Default for HardNegativeConfig {
    fn default() -> Self {
        HardNegativeConfig { k: 8, sets_per_batch: 32, m: 4 }
    }
}

impl HardNegativeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.sets_per_batch == 0 || self.m == 0 {
            return Err(Error::Config("k, sets_per_batch and m must be positive".into()));
        }
        Ok(())
    }

    pub fn batch_items(&self) -> usize {
        self.sets_per_batch * self.k * self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetOrigin {
    Reference,
    Crop,
}

/// k visually similar words, anchored on one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardNegativeSet {
    pub anchor: String,
    pub origin: SetOrigin,
    pub labels: Vec<String>,
}

/// One set per reference word (the word itself plus its k-1 nearest others)
/// and one per extra crop (its k nearest reference words).
pub fn build_hard_negative_sets(
    reference: &[(String, Embedding)],
    extra_crops: &[(String, Embedding)],
    k: usize,
) -> Result<Vec<HardNegativeSet>> {
    if reference.len() < k || k == 0 {
        return Err(Error::TooFewLabels { needed: k.max(1), got: reference.len() });
    }
    let index = ExemplarIndex::build(reference.to_vec(), IndexKind::Word)?;
    let mut out = Vec::with_capacity(reference.len() + extra_crops.len());
    for row in 0..index.len() {
        let q = index.embedding(row);
        let mut labels = vec![index.label(row).to_string()];
        labels.extend(index.top_k(&q, k)?.into_iter().filter(|(r, _)| *r != row).take(k - 1).map(|(r, _)| index.label(r).to_string()));
        out.push(HardNegativeSet { anchor: index.label(row).to_string(), origin: SetOrigin::Reference, labels });
    }
    for (label, emb) in extra_crops {
        let labels = index.top_k(emb, k)?.into_iter().map(|(r, _)| index.label(r).to_string()).collect();
        out.push(HardNegativeSet { anchor: label.clone(), origin: SetOrigin::Crop, labels });
    }
    Ok(out)
}

/// Synthetic renders and real newspaper crops available per class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewPools {
    pub synthetic: BTreeMap<String, Vec<String>>,
    pub target: BTreeMap<String, Vec<String>>,
}

/// Packs hard-negative sets into batches of `sets_per_batch` sets, each word
/// contributing `m` views. When a word has target crops, up to `m/2` of its
/// views are target crops and the rest synthetic. Every set appears once per
/// epoch; the final batch holds the remainder.
pub fn batch_hard_negatives(sets: &[HardNegativeSet], views: &ViewPools, cfg: &HardNegativeConfig, seed: u64) -> Result<Vec<Batch>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut synth: BTreeMap<&str, CyclingPool> = BTreeMap::new();
    let mut target: BTreeMap<&str, CyclingPool> = BTreeMap::new();
    for set in sets {
        for w in &set.labels {
            if synth.contains_key(w.as_str()) {
                continue;
            }
            let s = views.synthetic.get(w).filter(|v| !v.is_empty()).ok_or_else(|| Error::NoSyntheticViews(w.clone()))?;
            synth.insert(w, CyclingPool::new(s.clone()));
            target.insert(w, CyclingPool::new(views.target.get(w).cloned().unwrap_or_default()));
        }
    }
    let mut order: Vec<usize> = (0..sets.len()).collect();
    order.shuffle(&mut rng);
    let half = cfg.m / 2;
    let mut batches = Vec::new();
    for chunk in order.chunks(cfg.sets_per_batch) {
        let mut batch = Vec::with_capacity(chunk.len() * cfg.k * cfg.m);
        for &s in chunk {
            for w in &sets[s].labels {
                let tp = target.get_mut(w.as_str()).expect("registered above");
                let n_target = tp.len().min(half);
                for _ in 0..n_target {
                    let variant = tp.draw(&mut rng).expect("nonempty");
                    batch.push(BatchItem { class: w.clone(), variant, source: ViewSource::Target });
                }
                let sp = synth.get_mut(w.as_str()).expect("registered above");
                for _ in n_target..cfg.m {
                    let variant = sp.draw(&mut rng).expect("nonempty");
                    batch.push(BatchItem { class: w.clone(), variant, source: ViewSource::Synthetic });
                }
            }
        }
        batches.push(batch);
    }
    Ok(batches)
}

#[derive(Serialize)]
struct ManifestLine<'a> {
    batch: usize,
    class: &'a str,
    variant: &'a str,
    source: ViewSource,
}

/// Line-delimited JSON, one draw per line, for an external trainer.
pub fn write_batch_manifest<W: Write>(batches: &[Batch], mut w: W) -> Result<()> {
    for (i, b) in batches.iter().enumerate() {
        for item in b {
            let line = ManifestLine { batch: i, class: &item.class, variant: &item.variant, source: item.source };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n").map_err(|e| Error::io("<batch manifest>", e))?;
        }
    }
    Ok(())
}
