//! Core data model: page scans, content regions, boxes and legibility states.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::Error;

/// Rounds a pixel coordinate to one decimal place, the precision used on disk.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn ser_round1<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round1(*v))
}

fn ser_round3<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((*v * 1000.0).round() / 1000.0)
}

/// Axis-aligned pixel rectangle. Origin is the top-left corner, y grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    #[serde(serialize_with = "ser_round1")]
    pub x0: f64,
    #[serde(serialize_with = "ser_round1")]
    pub y0: f64,
    #[serde(serialize_with = "ser_round1")]
    pub x1: f64,
    #[serde(serialize_with = "ser_round1")]
    pub y1: f64,
}

impl BoundingBox {
    /// Checked constructor: finite, non-negative, strictly positive extent.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, Error> {
        let b = BoundingBox { x0, y0, x1, y1 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox(b))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.x0 >= 0.0 && self.y0 >= 0.0 && self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn is_finite(&self) -> bool {
        self.x0.is_finite() && self.y0.is_finite() && self.x1.is_finite() && self.y1.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox { x0: self.x0 + dx, y0: self.y0 + dy, x1: self.x1 + dx, y1: self.y1 + dy }
    }

    /// Intersection rectangle, or `None` when the boxes do not share area.
    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let b = BoundingBox { x0: self.x0.max(other.x0), y0: self.y0.max(other.y0), x1: self.x1.min(other.x1), y1: self.y1.min(other.y1) };
        (b.x0 < b.x1 && b.y0 < b.y1).then_some(b)
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    /// Same box rounded to the serialized precision.
    pub fn rounded(&self) -> BoundingBox {
        BoundingBox { x0: round1(self.x0), y0: round1(self.y0), x1: round1(self.x1), y1: round1(self.y1) }
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1},{:.1},{:.1},{:.1}", self.x0, self.y0, self.x1, self.y1)
    }
}

/// Layout classes emitted by the region detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentClass {
    Article,
    Headline,
    Caption,
    Byline,
    Image,
    Ad,
    Table,
    Header,
    PageNumber,
    Masthead,
}

impl ContentClass {
    pub const ALL: [ContentClass; 10] = [
        ContentClass::Article,
        ContentClass::Headline,
        ContentClass::Caption,
        ContentClass::Byline,
        ContentClass::Image,
        ContentClass::Ad,
        ContentClass::Table,
        ContentClass::Header,
        ContentClass::PageNumber,
        ContentClass::Masthead,
    ];

    /// Classes that go through legibility gating and OCR.
    pub fn is_text(self) -> bool {
        matches!(self, ContentClass::Article | ContentClass::Headline | ContentClass::Caption | ContentClass::Byline)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContentClass::Article => "article",
            ContentClass::Headline => "headline",
            ContentClass::Caption => "caption",
            ContentClass::Byline => "byline",
            ContentClass::Image => "image",
            ContentClass::Ad => "ad",
            ContentClass::Table => "table",
            ContentClass::Header => "header",
            ContentClass::PageNumber => "page_number",
            ContentClass::Masthead => "masthead",
        }
    }
}

impl fmt::Display for ContentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContentClass::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Readability of a text region. Declaration order runs from most to least legible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegibilityClass {
    Legible,
    Borderline,
    Illegible,
}

impl LegibilityClass {
    pub const ALL: [LegibilityClass; 3] = [LegibilityClass::Legible, LegibilityClass::Borderline, LegibilityClass::Illegible];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LegibilityClass::Legible => "legible",
            LegibilityClass::Borderline => "borderline",
            LegibilityClass::Illegible => "illegible",
        }
    }
}

impl fmt::Display for LegibilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified area of a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentRegion {
    pub id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub class: ContentClass,
    #[serde(serialize_with = "ser_round3")]
    pub confidence: f64,
    pub legibility: Option<LegibilityClass>,
    #[serde(default)]
    pub lines: Vec<BoundingBox>,
    pub text: Option<String>,
}

impl ContentRegion {
    /// Region id in the `{scan_id}-{class}-{ordinal}` form.
    pub fn make_id(scan_id: &str, class: ContentClass, ordinal: usize) -> String {
        format!("{scan_id}-{class}-{ordinal}")
    }
}

/// One newspaper page and the regions detected on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageScan {
    pub scan_id: String,
    pub lccn: String,
    pub date: String,
    pub edition: u32,
    pub page_number: u32,
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default)]
    pub regions: Vec<ContentRegion>,
}

impl PageScan {
    /// The key that identifies a physical page within a run.
    pub fn page_key(&self) -> (String, String, u32, u32) {
        (self.lccn.clone(), self.date.clone(), self.edition, self.page_number)
    }

    pub fn page_box(&self) -> BoundingBox {
        BoundingBox { x0: 0.0, y0: 0.0, x1: self.width_px as f64, y1: self.height_px as f64 }
    }
}

/// Reference to a crop of a page scan. Boundaries resolve it to pixels; the
/// engine itself only ever passes coordinates around.
#[derive(Debug, Clone, PartialEq)]
pub struct CropRef {
    pub scan_id: String,
    /// Page coordinates of the crop.
    pub bbox: BoundingBox,
}

impl CropRef {
    pub fn new(scan_id: impl Into<String>, bbox: BoundingBox) -> Self {
        CropRef { scan_id: scan_id.into(), bbox }
    }

    /// Stable textual key, `{scan_id}:{x0},{y0},{x1},{y1}` at one decimal.
    pub fn id(&self) -> String {
        crop_id(&self.scan_id, &self.bbox)
    }
}

pub fn crop_id(scan_id: &str, bbox: &BoundingBox) -> String {
    format!("{scan_id}:{}", bbox.rounded())
}

/// A single broken invariant found by [`validate_scan`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub region_id: Option<String>,
    pub message: String,
}

impl Violation {
    fn scan(field: &str, message: impl Into<String>) -> Self {
        Violation { field: field.to_string(), region_id: None, message: message.into() }
    }

    fn region(region: &ContentRegion, field: &str, message: impl Into<String>) -> Self {
        Violation { field: field.to_string(), region_id: Some(region.id.clone()), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.region_id {
            Some(id) => write!(f, "{} (region {}): {}", self.field, id, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

fn check_box(b: &BoundingBox) -> Option<&'static str> {
    if !b.is_finite() {
        Some("non-finite coordinate")
    } else if b.x0 < 0.0 || b.y0 < 0.0 {
        Some("negative coordinate")
    } else if b.x0 >= b.x1 || b.y0 >= b.y1 {
        Some("degenerate box")
    } else {
        None
    }
}

/// Lists every invariant the scan breaks. An empty list means the scan is valid.
pub fn validate_scan(scan: &PageScan) -> Vec<Violation> {
    let mut out = Vec::new();
    if scan.edition < 1 {
        out.push(Violation::scan("edition", "edition must be >= 1"));
    }
    if scan.page_number < 1 {
        out.push(Violation::scan("page_number", "page number must be >= 1"));
    }
    if scan.width_px == 0 || scan.height_px == 0 {
        out.push(Violation::scan("width_px/height_px", "page dimensions must be positive"));
    }
    if chrono::NaiveDate::parse_from_str(&scan.date, "%Y-%m-%d").is_err() {
        out.push(Violation::scan("date", format!("not an ISO date: {:?}", scan.date)));
    }

    let page = scan.page_box();
    let mut seen = std::collections::HashSet::new();
    for region in &scan.regions {
        if !seen.insert(region.id.as_str()) {
            out.push(Violation::region(region, "id", "duplicate region id"));
        }
        if let Some(msg) = check_box(&region.bbox) {
            out.push(Violation::region(region, "box", msg));
        } else if !page.contains(&region.bbox) {
            out.push(Violation::region(region, "box", format!("box {} exceeds page bounds", region.bbox)));
        }
        if !(0.0..=1.0).contains(&region.confidence) {
            out.push(Violation::region(region, "confidence", "confidence outside [0,1]"));
        }
        for line in &region.lines {
            if let Some(msg) = check_box(line) {
                out.push(Violation::region(region, "lines", format!("line {line}: {msg}")));
            } else if !region.bbox.contains(line) {
                out.push(Violation::region(region, "lines", format!("line {line} outside region box")));
            }
        }
        if region.text.is_some() {
            if !region.class.is_text() {
                out.push(Violation::region(region, "text", format!("{} regions are never transcribed", region.class)));
            } else if region.legibility == Some(LegibilityClass::Illegible) {
                out.push(Violation::region(region, "text", "illegible region carries text"));
            }
        }
    }
    out
}
