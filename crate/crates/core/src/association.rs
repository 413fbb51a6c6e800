//! Rule-based linking of headlines and bylines to the article box they
//! introduce, and pairwise F1 for evaluating the links.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, ContentClass, ContentRegion, PageScan};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    /// Minimum shared x-extent, as a fraction of page width (strict).
    pub v_overlap_min_frac_of_width: f64,
    /// How far the headline bottom may sit above the article top, as a fraction of page height.
    pub headline_above_max_frac_of_height: f64,
    /// How far the headline bottom may sit below the article top, as a fraction of page height.
    pub headline_below_max_frac_of_height: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            v_overlap_min_frac_of_width: 0.01,
            headline_above_max_frac_of_height: 0.10,
            headline_below_max_frac_of_height: 0.02,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_overlap_min_frac_of_width", self.v_overlap_min_frac_of_width),
            ("headline_above_max_frac_of_height", self.headline_above_max_frac_of_height),
            ("headline_below_max_frac_of_height", self.headline_below_max_frac_of_height),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// One article as published: metadata, optional headline and byline, body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub lccn: String,
    pub date: String,
    pub edition: u32,
    pub page_number: u32,
    pub headline: Option<String>,
    pub byline: Option<String>,
    pub article_text: String,
    pub scan_id: String,
    pub article_id: String,
    pub headline_ids: Vec<String>,
    pub byline_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    pub articles: Vec<ArticleRecord>,
    /// Every (headline id, article id) link made.
    pub headline_links: BTreeSet<(String, String)>,
    pub byline_links: BTreeSet<(String, String)>,
    pub unmatched_headlines: Vec<String>,
    pub unmatched_bylines: Vec<String>,
}

/// Whether `upper` (headline or byline) may introduce `article`.
pub fn satisfies(upper: &BoundingBox, article: &BoundingBox, page_w: f64, page_h: f64, cfg: &AssociationConfig) -> bool {
    let shared_x = upper.x1.min(article.x1) - upper.x0.max(article.x0);
    let gap = article.y0 - upper.y1;
    shared_x > cfg.v_overlap_min_frac_of_width * page_w
        && gap <= cfg.headline_above_max_frac_of_height * page_h
        && gap >= -cfg.headline_below_max_frac_of_height * page_h
}

fn reading_order(a: &ContentRegion, b: &ContentRegion) -> Ordering {
    a.bbox.y0.total_cmp(&b.bbox.y0).then(a.bbox.x0.total_cmp(&b.bbox.x0)).then_with(|| a.id.cmp(&b.id))
}

fn transcribed(page: &PageScan, class: ContentClass) -> Vec<&ContentRegion> {
    let mut v: Vec<&ContentRegion> = page.regions.iter().filter(|r| r.class == class && r.text.is_some()).collect();
    v.sort_by(|a, b| reading_order(a, b));
    v
}

/// Index (into `articles`, already in reading order) of the highest article
/// that satisfies every predicate.
fn pick(upper: &ContentRegion, articles: &[&ContentRegion], page: &PageScan, cfg: &AssociationConfig) -> Option<usize> {
    let (w, h) = (page.width_px as f64, page.height_px as f64);
    articles.iter().position(|a| satisfies(&upper.bbox, &a.bbox, w, h, cfg))
}

/// All (upper id, article id) pairs that satisfy the predicates, regardless of choice.
pub fn candidate_pairs(page: &PageScan, cfg: &AssociationConfig) -> BTreeSet<(String, String)> {
    let (w, h) = (page.width_px as f64, page.height_px as f64);
    let articles = transcribed(page, ContentClass::Article);
    let mut out = BTreeSet::new();
    for class in [ContentClass::Headline, ContentClass::Byline] {
        for u in transcribed(page, class) {
            for a in &articles {
                if satisfies(&u.bbox, &a.bbox, w, h, cfg) {
                    out.insert((u.id.clone(), a.id.clone()));
                }
            }
        }
    }
    out
}

/// Builds article records for one page. Only transcribed regions take part.
pub fn associate(page: &PageScan, cfg: &AssociationConfig) -> Association {
    let articles = transcribed(page, ContentClass::Article);
    let mut heads: BTreeMap<usize, Vec<&ContentRegion>> = BTreeMap::new();
    let mut bylines: BTreeMap<usize, Vec<&ContentRegion>> = BTreeMap::new();
    let mut out = Association::default();

    for h in transcribed(page, ContentClass::Headline) {
        match pick(h, &articles, page, cfg) {
            Some(i) => {
                out.headline_links.insert((h.id.clone(), articles[i].id.clone()));
                heads.entry(i).or_default().push(h);
            }
            None => out.unmatched_headlines.push(h.id.clone()),
        }
    }
    for b in transcribed(page, ContentClass::Byline) {
        match pick(b, &articles, page, cfg) {
            Some(i) => {
                out.byline_links.insert((b.id.clone(), articles[i].id.clone()));
                bylines.entry(i).or_default().push(b);
            }
            None => out.unmatched_bylines.push(b.id.clone()),
        }
    }

    let join = |rs: Option<&Vec<&ContentRegion>>| -> (Option<String>, Vec<String>) {
        match rs {
            Some(rs) if !rs.is_empty() => (
                Some(rs.iter().map(|r| r.text.as_deref().unwrap_or_default()).collect::<Vec<_>>().join(" ")),
                rs.iter().map(|r| r.id.clone()).collect(),
            ),
            _ => (None, Vec::new()),
        }
    };
    for (i, a) in articles.iter().enumerate() {
        let (headline, headline_ids) = join(heads.get(&i));
        let (byline, byline_ids) = join(bylines.get(&i));
        out.articles.push(ArticleRecord {
            lccn: page.lccn.clone(),
            date: page.date.clone(),
            edition: page.edition,
            page_number: page.page_number,
            headline,
            byline,
            article_text: a.text.clone().unwrap_or_default(),
            scan_id: page.scan_id.clone(),
            article_id: a.id.clone(),
            headline_ids,
            byline_ids,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set-based precision, recall and F1 over exact pair matches. Two empty
/// sets score a perfect 1.0.
pub fn association_f1(predicted: &BTreeSet<(String, String)>, gold: &BTreeSet<(String, String)>) -> F1Score {
    if predicted.is_empty() && gold.is_empty() {
        return F1Score { precision: 1.0, recall: 1.0, f1: 1.0 };
    }
    let tp = predicted.intersection(gold).count() as f64;
    let precision = if predicted.is_empty() { 0.0 } else { tp / predicted.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { tp / gold.len() as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    F1Score { precision, recall, f1 }
}
